// Wire document types for the session service, plus a client-side edit
// validator so the console can reject malformed edit lists before POSTing.
// The validator mirrors the server's shape checks and reports the same
// JSON-pointer style paths ("/edits/0/op", ...).

export interface RoomDoc {
  id: string;
  name: string;
}

export interface ClueDoc {
  text: string;
  referent?: string | null;
  payload?: string | null;
  veracity?: string;
}

export interface LockDoc {
  mechanism: string;
  key_id?: string | null;
  code?: string | null;
}

export interface ObjectDoc {
  id: string;
  category: string;
  name: string;
  affordances: string[];
  states: Record<string, boolean>;
  clue?: ClueDoc | null;
  lock?: LockDoc | null;
  color?: string | null;
  arrangement?: { order: string[]; reveals: string } | null;
}

export interface AgentDoc {
  id: string;
  capacity: number;
  holding: string[];
  read_clues: [string, ClueDoc][];
}

export interface RelationDoc {
  kind: string;
  src: string;
  dst: string;
}

export interface SceneGraphDoc {
  rooms: RoomDoc[];
  objects: ObjectDoc[];
  agents: AgentDoc[];
  relations: RelationDoc[];
  revision: number;
}

export interface OutcomeDoc {
  ok: boolean;
  error: string | null;
  detail: string;
  events: unknown[];
}

export interface VerdictDoc {
  index: number;
  op: string;
  applied: boolean;
  reason: string | null;
}

export interface MismatchDoc {
  predicate: string;
  expected: string;
  observed: string;
  source: string;
}

export interface CheckReportDoc {
  verdicts: VerdictDoc[];
  mismatches: MismatchDoc[];
  occlusions: unknown[];
  passed: boolean;
}

export interface ConjunctReportDoc {
  description: string;
  satisfied: boolean;
  passed: boolean;
  [k: string]: unknown;
}

export interface GoalReportDoc {
  conjuncts: ConjunctReportDoc[];
  passed: boolean;
  pass_fraction: number;
}

export interface SessionCreated {
  id: string;
  revision: number;
  scene_graph: SceneGraphDoc;
  goal: unknown | null;
}

export interface ActionsResponse {
  outcomes: OutcomeDoc[];
  revision: number;
  goal_check: GoalReportDoc | null;
}

export interface EditsResponse {
  report: CheckReportDoc;
  revision: number;
}

export type RecheckResponse =
  | { status: "solvable"; certificate: { plan: { agent: string; action: unknown }[]; optimal_length: number } }
  | { status: "unsolvable"; reason: string }
  | { status: "budget_exceeded"; expanded: number };

export type EditDoc = { op: string } & Record<string, unknown>;

export type EditValidation =
  | { ok: true; edits: EditDoc[] }
  | { ok: false; path: string; message: string };

const AFFORDANCES = new Set([
  "openable",
  "lockable",
  "graspable",
  "movable",
  "readable",
  "toggleable",
  "container",
  "surface",
]);

const STATE_KEYS = new Set(["open", "locked", "on", "revealed"]);

const PARENT_KINDS = new Set(["in_room", "inside", "on_top", "held_by"]);

const EDIT_KEYS: Record<string, Set<string>> = {
  add: new Set(["op", "node", "relation", "target"]),
  remove: new Set(["op", "id"]),
  replace: new Set(["op", "id", "node"]),
  move: new Set(["op", "id", "relation", "target"]),
  set_state: new Set(["op", "id", "key", "value"]),
};

const NODE_KEYS = new Set([
  "id",
  "category",
  "name",
  "affordances",
  "states",
  "clue",
  "lock",
  "color",
  "arrangement",
]);

interface Failure {
  path: string;
  message: string;
}

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function checkNode(doc: unknown, path: string): Failure | null {
  if (!isRecord(doc)) {
    return { path, message: "object entry must be an object" };
  }
  for (const key of Object.keys(doc).sort()) {
    if (!NODE_KEYS.has(key)) {
      return { path: `${path}/${key}`, message: "unknown key" };
    }
  }
  for (const key of ["id", "category", "name"]) {
    if (!(key in doc)) {
      return { path: `${path}/${key}`, message: "missing required key" };
    }
    if (typeof doc[key] !== "string") {
      return { path: `${path}/${key}`, message: "expected string" };
    }
  }
  if (!("affordances" in doc)) {
    return { path: `${path}/affordances`, message: "missing required key" };
  }
  const aff = doc["affordances"];
  if (!Array.isArray(aff)) {
    return { path: `${path}/affordances`, message: "expected array" };
  }
  for (let i = 0; i < aff.length; i++) {
    if (typeof aff[i] !== "string" || !AFFORDANCES.has(aff[i])) {
      return { path: `${path}/affordances/${i}`, message: `unknown affordance ${JSON.stringify(aff[i])}` };
    }
  }
  if (!("states" in doc)) {
    return { path: `${path}/states`, message: "missing required key" };
  }
  const states = doc["states"];
  if (!isRecord(states)) {
    return { path: `${path}/states`, message: "expected object" };
  }
  for (const key of Object.keys(states).sort()) {
    if (!STATE_KEYS.has(key)) {
      return { path: `${path}/states/${key}`, message: "unknown state key" };
    }
    if (typeof states[key] !== "boolean") {
      return { path: `${path}/states/${key}`, message: "state value must be boolean" };
    }
  }
  return null;
}

function checkEdit(doc: unknown, path: string): Failure | null {
  if (!isRecord(doc)) {
    return { path, message: "edit must be an object" };
  }
  const op = doc["op"];
  if (typeof op !== "string" || !(op in EDIT_KEYS)) {
    return { path: `${path}/op`, message: `unknown edit op ${JSON.stringify(op)}` };
  }
  const allowed = EDIT_KEYS[op];
  for (const key of Object.keys(doc).sort()) {
    if (!allowed.has(key)) {
      return { path: `${path}/${key}`, message: "unknown key" };
    }
  }
  for (const key of [...allowed].sort()) {
    if (!(key in doc)) {
      return { path: `${path}/${key}`, message: "missing required key" };
    }
  }
  if (op === "add" || op === "replace") {
    const bad = checkNode(doc["node"], `${path}/node`);
    if (bad) return bad;
  }
  if (op === "add" || op === "move") {
    if (typeof doc["relation"] !== "string" || !PARENT_KINDS.has(doc["relation"])) {
      return { path: `${path}/relation`, message: `bad relation ${JSON.stringify(doc["relation"])}` };
    }
    if (typeof doc["target"] !== "string") {
      return { path: `${path}/target`, message: "expected string" };
    }
  }
  if (op === "remove" || op === "replace" || op === "move" || op === "set_state") {
    if (typeof doc["id"] !== "string") {
      return { path: `${path}/id`, message: "expected string" };
    }
  }
  if (op === "set_state") {
    if (typeof doc["key"] !== "string") {
      return { path: `${path}/key`, message: "expected string" };
    }
    if (typeof doc["value"] !== "boolean") {
      return { path: `${path}/value`, message: "state value must be boolean" };
    }
  }
  return null;
}

/** Validate a wire edit list (a bare edit object is accepted as a list of
 *  one).  Returns the normalized list, or the first failing path. */
export function validateEditList(value: unknown): EditValidation {
  let items: unknown[];
  if (isRecord(value)) {
    items = [value];
  } else if (Array.isArray(value)) {
    items = value;
  } else {
    return { ok: false, path: "/edits", message: "expected an edit object or a list of edits" };
  }
  for (let i = 0; i < items.length; i++) {
    const bad = checkEdit(items[i], `/edits/${i}`);
    if (bad) return { ok: false, ...bad };
  }
  return { ok: true, edits: items as EditDoc[] };
}

/** Parse textarea text into a validated edit list. */
export function parseEditText(text: string): EditValidation {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch (err) {
    return { ok: false, path: "/edits", message: `not JSON: ${(err as Error).message}` };
  }
  return validateEditList(value);
}
