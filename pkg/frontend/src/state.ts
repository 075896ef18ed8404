// View-model and controller for one console session.  All methods are
// DOM-free; the page glue reads the view-model and re-renders after each
// await.  Polling is revision-gated: a refresh that sees the revision it
// already rendered does no work, so an idle page costs one GET per tick
// and zero layout rebuilds.

import { ApiClient } from "./api.js";
import { buildLayout, type Layout } from "./layout.js";
import {
  parseEditText,
  type CheckReportDoc,
  type EditDoc,
  type GoalReportDoc,
  type OutcomeDoc,
  type SceneGraphDoc,
} from "./schema.js";

export type EditPreview =
  | { ok: true; edits: EditDoc[] }
  | { ok: false; path: string; message: string };

export interface ViewModel {
  sessionId: string | null;
  scene: SceneGraphDoc | null;
  /** Revision of the scene currently held (last rendered). */
  revision: number;
  omniscient: boolean;
  goal: GoalReportDoc | null;
  lastReport: CheckReportDoc | null;
  lastOutcomes: OutcomeDoc[];
  preview: EditPreview | null;
  events: string[];
  /** How many times the scene layout had to be rebuilt; polling that
   *  short-circuits on an unchanged revision must not bump this. */
  rebuilds: number;
}

const EVENT_LIMIT = 60;

export class SessionController {
  readonly vm: ViewModel = {
    sessionId: null,
    scene: null,
    revision: -1,
    omniscient: false,
    goal: null,
    lastReport: null,
    lastOutcomes: [],
    preview: null,
    events: [],
    rebuilds: 0,
  };

  constructor(private readonly api: ApiClient) {}

  private log(line: string): void {
    this.vm.events.push(line);
    if (this.vm.events.length > EVENT_LIMIT) {
      this.vm.events.splice(0, this.vm.events.length - EVENT_LIMIT);
    }
  }

  private adopt(scene: SceneGraphDoc): void {
    this.vm.scene = scene;
    this.vm.revision = scene.revision;
    this.vm.rebuilds += 1;
  }

  async createSession(source: unknown): Promise<void> {
    const created = await this.api.createSession(source);
    this.vm.sessionId = created.id;
    this.vm.goal = null;
    this.vm.lastReport = null;
    this.vm.lastOutcomes = [];
    this.vm.preview = null;
    this.adopt(created.scene_graph);
    this.log(`session ${created.id.slice(0, 8)}… created (revision ${created.revision})`);
    if (created.goal !== null) {
      this.vm.goal = await this.api.goalCheck(created.id);
    }
  }

  /** One polling tick.  Returns true when the scene was refreshed. */
  async pollOnce(): Promise<boolean> {
    const sid = this.vm.sessionId;
    if (sid === null) return false;
    const scene = await this.api.sceneGraph(sid);
    if (scene.revision === this.vm.revision) return false;
    this.adopt(scene);
    this.vm.goal = await this.api.goalCheck(sid);
    this.log(`scene refreshed at revision ${scene.revision}`);
    return true;
  }

  setOmniscient(on: boolean): void {
    if (this.vm.omniscient !== on) {
      this.vm.omniscient = on;
      this.vm.rebuilds += 1;
    }
  }

  layout(): Layout | null {
    if (this.vm.scene === null) return null;
    return buildLayout(this.vm.scene, this.vm.omniscient);
  }

  /** Post one agent move; the actions response carries revision and goal
   *  so no extra poll round-trip is needed unless the scene changed. */
  async stepAgent(agent: string, action: Record<string, unknown>): Promise<OutcomeDoc> {
    const sid = this.vm.sessionId;
    if (sid === null) throw new Error("no session");
    const resp = await this.api.postActions(sid, [{ agent, action }]);
    const outcome = resp.outcomes[0];
    this.vm.lastOutcomes = resp.outcomes;
    if (resp.goal_check !== null) this.vm.goal = resp.goal_check;
    this.log(
      outcome.ok
        ? `${agent}: ${outcome.detail}`
        : `${agent}: rejected (${outcome.error}) ${outcome.detail}`,
    );
    if (resp.revision !== this.vm.revision) {
      this.adopt(await this.api.sceneGraph(sid));
    }
    return outcome;
  }

  /** Validate textarea content without touching the wire. */
  previewEditText(text: string): EditPreview {
    const result = parseEditText(text);
    this.vm.preview = result;
    return result;
  }

  /** Run an already-validated preview against the server. */
  async applyPreview(viewpoint?: string): Promise<CheckReportDoc | null> {
    if (this.vm.preview === null || !this.vm.preview.ok) return null;
    return this.submitEdits(this.vm.preview.edits, viewpoint);
  }

  async submitEdits(edits: EditDoc[], viewpoint?: string): Promise<CheckReportDoc> {
    const sid = this.vm.sessionId;
    if (sid === null) throw new Error("no session");
    const resp = await this.api.postEdits(sid, edits, viewpoint);
    this.vm.lastReport = resp.report;
    this.vm.preview = null;
    const failed = resp.report.verdicts.filter((v) => !v.applied).length;
    this.log(
      `edits: ${resp.report.verdicts.length - failed} applied, ${failed} failed, ` +
        `${resp.report.mismatches.length} mismatch(es) — ${resp.report.passed ? "passed" : "failed"}`,
    );
    if (resp.revision !== this.vm.revision) {
      this.adopt(await this.api.sceneGraph(sid));
      this.vm.goal = await this.api.goalCheck(sid);
    }
    return resp.report;
  }

  /** Hand free text to a caller-supplied translator (e.g. a remote model)
   *  and stage whatever comes back as a preview — never auto-apply.  The
   *  translator must return JSON text holding an edit list. */
  async draftFromText(
    text: string,
    translate: (text: string, scene: SceneGraphDoc) => Promise<string>,
  ): Promise<EditPreview> {
    if (this.vm.scene === null) throw new Error("no session");
    const reply = await translate(text, this.vm.scene);
    const result = parseEditText(reply);
    this.vm.preview = result;
    this.log(result.ok ? `drafted ${result.edits.length} edit(s) from text` : `draft rejected: ${result.path} ${result.message}`);
    return result;
  }
}
