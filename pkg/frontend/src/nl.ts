// Optional pass-through: hand a natural-language scene request to an
// OpenAI-compatible chat endpoint and get back edit-list JSON text.  The
// result is only ever staged as a preview — the operator applies it.

import type { SceneGraphDoc } from "./schema.js";

export function editAuthoringPrompt(request: string, scene: SceneGraphDoc): string {
  return [
    "Convert the request into a JSON list of scene edits.",
    "",
    `Request: ${request}`,
    `Current scene graph: ${JSON.stringify(scene)}`,
    "",
    "Reply with a JSON list; each element is one of",
    '{"op": "add", "node": {...}, "relation": "in_room|inside|on_top", "target": "<id>"}',
    '{"op": "remove", "id": "<id>"}',
    '{"op": "replace", "id": "<id>", "node": {...}}',
    '{"op": "move", "id": "<id>", "relation": "...", "target": "<id>"}',
    '{"op": "set_state", "id": "<id>", "key": "<state>", "value": true|false}',
    "",
    "Node documents need id, category, name, affordances, states.",
    "Reference only ids present in the scene graph (plus ids you add).",
    "Reply with the JSON list only, no prose.",
  ].join("\n");
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

/** Build a translator suitable for SessionController.draftFromText. */
export function chatTranslator(
  endpoint: string,
  model: string,
  fetchImpl: FetchLike = (input, init) => fetch(input, init),
): (request: string, scene: SceneGraphDoc) => Promise<string> {
  return async (request, scene) => {
    const resp = await fetchImpl(endpoint, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({
        model,
        messages: [{ role: "user", content: editAuthoringPrompt(request, scene) }],
      }),
    });
    if (!resp.ok) {
      throw new Error(`translator endpoint returned ${resp.status}`);
    }
    const doc = (await resp.json()) as { choices?: { message?: { content?: string } }[] };
    const content = doc.choices?.[0]?.message?.content;
    if (typeof content !== "string") {
      throw new Error("translator reply had no message content");
    }
    return content;
  };
}
