// Page glue: owns the DOM, the polling timer, and nothing else.  All
// behaviour lives in the pure modules so it can be tested headlessly.

import { ApiClient, ApiError } from "./api.js";
import { chatTranslator } from "./nl.js";
import { SessionController } from "./state.js";
import {
  renderCheckReport,
  renderEvents,
  renderGoalPanel,
  renderOutcomes,
  renderPreview,
  renderScene,
} from "./render.js";

const POLL_MS = 1500;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element #${id}`);
  return el as T;
};

const api = new ApiClient("");
const controller = new SessionController(api);

function paint(): void {
  $("scene").innerHTML = renderScene(controller.layout());
  $("goal").innerHTML = renderGoalPanel(controller.vm.goal);
  $("report").innerHTML = renderCheckReport(controller.vm.lastReport);
  $("preview").innerHTML = renderPreview(controller.vm.preview);
  $("toast").innerHTML = renderOutcomes(controller.vm.lastOutcomes);
  $("events").innerHTML = renderEvents(controller.vm.events);
  const sid = controller.vm.sessionId;
  $("session-label").textContent =
    sid === null ? "no session" : `${sid.slice(0, 12)}…  revision ${controller.vm.revision}`;
  refreshAgentOptions();
}

function refreshAgentOptions(): void {
  const select = $<HTMLSelectElement>("agent");
  const agents = controller.vm.scene?.agents.map((a) => a.id) ?? [];
  if (agents.join(",") === [...select.options].map((o) => o.value).join(",")) return;
  select.innerHTML = agents.map((a) => `<option value="${a}">${a}</option>`).join("");
}

function showError(err: unknown): void {
  const box = $("error");
  box.textContent = err instanceof ApiError ? `HTTP ${err.status}: ${err.detail}` : String(err);
  box.classList.remove("hidden");
  setTimeout(() => box.classList.add("hidden"), 6000);
}

async function guard(work: () => Promise<void>): Promise<void> {
  try {
    await work();
  } catch (err) {
    showError(err);
  }
  paint();
}

function wireSessionForm(): void {
  $("create").addEventListener("click", () =>
    guard(async () => {
      const level = Number($<HTMLSelectElement>("level").value);
      const seed = Number($<HTMLInputElement>("seed").value || "0");
      await controller.createSession({ level, seed });
    }),
  );
}

function actionFromForm(): Record<string, unknown> {
  const type = $<HTMLSelectElement>("action-type").value;
  const object = $<HTMLInputElement>("action-object").value.trim();
  const extra = $<HTMLInputElement>("action-extra").value.trim();
  switch (type) {
    case "go_to":
      return { type, room: object };
    case "place":
      return { type, object, target: extra, relation: "on_top" };
    case "unlock":
      return extra.match(/^\d+$/) ? { type, object, code: extra } : { type, object, key: extra };
    case "arrange":
      return { type, target: object, objects: extra.split(/\s*,\s*/).filter(Boolean) };
    case "wait":
      return { type };
    default:
      return { type, object };
  }
}

function wireActionForm(): void {
  $("step").addEventListener("click", () =>
    guard(async () => {
      const agent = $<HTMLSelectElement>("agent").value;
      await controller.stepAgent(agent, actionFromForm());
    }),
  );
}

function wireEditForm(): void {
  const text = $<HTMLTextAreaElement>("edit-text");
  $("preview-btn").addEventListener("click", () => {
    controller.previewEditText(text.value);
    paint();
  });
  $("apply-btn").addEventListener("click", () =>
    guard(async () => {
      const report = await controller.applyPreview(
        $<HTMLInputElement>("viewpoint").value.trim() || undefined,
      );
      if (report === null) controller.previewEditText(text.value);
    }),
  );
}

function wireDraftForm(): void {
  $("draft-btn").addEventListener("click", () =>
    guard(async () => {
      const endpoint = $<HTMLInputElement>("nl-endpoint").value.trim();
      const model = $<HTMLInputElement>("nl-model").value.trim();
      const text = $<HTMLInputElement>("nl-text").value.trim();
      if (endpoint === "" || text === "") {
        throw new Error("a model endpoint and a request are both needed to draft edits");
      }
      await controller.draftFromText(text, chatTranslator(endpoint, model));
    }),
  );
}

function wireRecheck(): void {
  $("recheck").addEventListener("click", () =>
    guard(async () => {
      const sid = controller.vm.sessionId;
      if (sid === null) return;
      const result = await api.recheckSolvable(sid);
      const line =
        result.status === "solvable"
          ? `still solvable in ${result.certificate.optimal_length} moves`
          : result.status === "unsolvable"
            ? `UNSOLVABLE: ${result.reason}`
            : `solver budget exceeded after ${result.expanded} states`;
      $("solvable").textContent = line;
    }),
  );
}

function wireOmniscient(): void {
  $<HTMLInputElement>("omniscient").addEventListener("change", (ev) => {
    controller.setOmniscient((ev.target as HTMLInputElement).checked);
    paint();
  });
}

function startPolling(): void {
  setInterval(() => {
    void controller
      .pollOnce()
      .then((changed) => {
        if (changed) paint();
      })
      .catch(() => {
        /* transient poll errors are not worth a toast */
      });
  }, POLL_MS);
}

document.addEventListener("DOMContentLoaded", () => {
  wireSessionForm();
  wireActionForm();
  wireEditForm();
  wireDraftForm();
  wireRecheck();
  wireOmniscient();
  startPolling();
  paint();
});
