// Pure HTML-string renderers.  Everything here is a function of plain
// data so the markup can be asserted in node tests; the page glue only
// assigns the results to innerHTML.

import type { Layout, Glyph, RoomTile } from "./layout.js";
import type { CheckReportDoc, GoalReportDoc, OutcomeDoc } from "./schema.js";
import type { EditPreview } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const CATEGORY_ICONS: Record<string, string> = {
  agent: "@",
  key: "~",
  note: "=",
  box: "#",
  door: "+",
  lamp: "*",
  tv: "*",
};

function icon(category: string): string {
  return CATEGORY_ICONS[category] ?? "·";
}

function stateBadges(states: Record<string, boolean>): string {
  const parts: string[] = [];
  for (const key of Object.keys(states).sort()) {
    parts.push(`<span class="state ${states[key] ? "on" : "off"}">${escapeHtml(key)}${states[key] ? "" : ":no"}</span>`);
  }
  return parts.join("");
}

function renderGlyph(glyph: Glyph): string {
  const cls = glyph.kind === "agent" ? "glyph agent" : `glyph ${escapeHtml(glyph.category)}`;
  let badge = "";
  if (glyph.hiddenCount !== null && glyph.hiddenCount > 0) {
    badge = `<span class="hidden-count" title="concealed contents">${glyph.hiddenCount}</span>`;
  }
  let children = "";
  if (glyph.children.length > 0) {
    children = `<ul class="contents">${glyph.children.map((c) => `<li>${renderGlyph(c)}</li>`).join("")}</ul>`;
  }
  return (
    `<span class="${cls}" data-id="${escapeHtml(glyph.id)}">` +
    `${icon(glyph.category)} ${escapeHtml(glyph.label)}${stateBadges(glyph.states)}${badge}` +
    `</span>${children}`
  );
}

function renderTile(tile: RoomTile): string {
  const doors = tile.doors
    .map((d) => {
      const flags = [d.open ? "open" : "closed", d.locked ? "locked" : null].filter(Boolean).join(", ");
      return `<li class="door${d.open ? " open" : ""}${d.locked ? " locked" : ""}" data-id="${escapeHtml(d.id)}">+ ${escapeHtml(d.label)} &rarr; ${escapeHtml(d.to)} <em>(${flags})</em></li>`;
    })
    .join("");
  const glyphs = tile.glyphs.map((g) => `<li>${renderGlyph(g)}</li>`).join("");
  return (
    `<section class="room" data-id="${escapeHtml(tile.id)}" style="grid-column:${tile.col + 1};grid-row:${tile.row + 1}">` +
    `<h3>${escapeHtml(tile.name)}</h3>` +
    `<ul class="doors">${doors}</ul>` +
    `<ul class="things">${glyphs}</ul>` +
    `</section>`
  );
}

export function renderScene(layout: Layout | null): string {
  if (layout === null) return `<p class="empty">no session</p>`;
  if (layout.tiles.length === 0) return `<p class="empty">empty scene — add rooms via edits</p>`;
  const tiles = layout.tiles.map(renderTile).join("");
  return `<div class="grid" style="grid-template-columns:repeat(${layout.cols},minmax(14rem,1fr))">${tiles}</div>`;
}

export function renderGoalPanel(goal: GoalReportDoc | null): string {
  if (goal === null) return `<p class="empty">no goal attached</p>`;
  const rows = goal.conjuncts
    .map((c) => {
      const mark = c.passed ? "&#10003;" : "&#10007;";
      return `<li class="${c.passed ? "pass" : "fail"}">${mark} ${escapeHtml(c.description)}</li>`;
    })
    .join("");
  const verdict = goal.passed
    ? `<p class="verdict pass">PASS</p>`
    : `<p class="verdict fail">${Math.round(goal.pass_fraction * 100)}% of conjuncts met</p>`;
  return `<ul class="conjuncts">${rows}</ul>${verdict}`;
}

export function renderCheckReport(report: CheckReportDoc | null): string {
  if (report === null) return `<p class="empty">no edits submitted yet</p>`;
  const verdicts = report.verdicts
    .map((v) => {
      const status = v.applied ? "ok" : `FAILED (${escapeHtml(v.reason ?? "?")})`;
      return `<li class="${v.applied ? "pass" : "fail"}">[${v.index}] ${escapeHtml(v.op)} — ${status}</li>`;
    })
    .join("");
  const mismatches = report.mismatches
    .map(
      (m) =>
        `<li class="fail">${escapeHtml(m.source)}/${escapeHtml(m.predicate)}: expected ${escapeHtml(m.expected)}, observed ${escapeHtml(m.observed)}</li>`,
    )
    .join("");
  const verdict = `<p class="verdict ${report.passed ? "pass" : "fail"}">${report.passed ? "passed" : "failed"}</p>`;
  return `<ul class="verdicts">${verdicts}</ul><ul class="mismatches">${mismatches}</ul>${verdict}`;
}

export function renderPreview(preview: EditPreview | null): string {
  if (preview === null) return `<p class="empty">paste an edit list to stage it</p>`;
  if (!preview.ok) {
    return `<p class="preview fail">rejected at <code>${escapeHtml(preview.path)}</code>: ${escapeHtml(preview.message)}</p>`;
  }
  const items = preview.edits
    .map((e) => `<li><code>${escapeHtml(JSON.stringify(e))}</code></li>`)
    .join("");
  return `<p class="preview pass">${preview.edits.length} edit(s) staged</p><ol class="staged">${items}</ol>`;
}

export function renderOutcomes(outcomes: OutcomeDoc[]): string {
  if (outcomes.length === 0) return "";
  return outcomes
    .map((o) =>
      o.ok
        ? `<p class="toast ok">${escapeHtml(o.detail)}</p>`
        : `<p class="toast rejected">rejected (${escapeHtml(o.error ?? "?")}): ${escapeHtml(o.detail)}</p>`,
    )
    .join("");
}

export function renderEvents(events: string[]): string {
  return `<ul class="feed">${events
    .slice()
    .reverse()
    .map((e) => `<li>${escapeHtml(e)}</li>`)
    .join("")}</ul>`;
}
