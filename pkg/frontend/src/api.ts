// Thin HTTP client for the session service.  fetch is injectable so unit
// tests can stub the wire without a server.

import type {
  ActionsResponse,
  EditDoc,
  EditsResponse,
  GoalReportDoc,
  RecheckResponse,
  SceneGraphDoc,
  SessionCreated,
} from "./schema.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { "content-type": "application/json" } };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    const text = await resp.text();
    let doc: unknown = null;
    if (text !== "") {
      try {
        doc = JSON.parse(text);
      } catch {
        doc = null;
      }
    }
    if (!resp.ok) {
      const detail =
        doc !== null && typeof doc === "object" && "detail" in doc
          ? JSON.stringify((doc as { detail: unknown }).detail)
          : text;
      throw new ApiError(resp.status, detail);
    }
    return doc as T;
  }

  healthz(): Promise<{ ok: boolean; sessions: number }> {
    return this.request("GET", "/healthz");
  }

  createSession(source: unknown): Promise<SessionCreated> {
    return this.request("POST", "/sessions", source);
  }

  sceneGraph(sid: string): Promise<SceneGraphDoc> {
    return this.request("GET", `/sessions/${sid}/scene-graph`);
  }

  observation(sid: string, agent: string): Promise<unknown> {
    return this.request("GET", `/sessions/${sid}/agents/${encodeURIComponent(agent)}/observation`);
  }

  goalCheck(sid: string): Promise<GoalReportDoc> {
    return this.request("GET", `/sessions/${sid}/goal-check`);
  }

  postActions(sid: string, moves: { agent: string; action: unknown }[]): Promise<ActionsResponse> {
    return this.request("POST", `/sessions/${sid}/actions`, { moves });
  }

  postEdits(sid: string, edits: EditDoc[], viewpoint?: string): Promise<EditsResponse> {
    const body: Record<string, unknown> = { edits };
    if (viewpoint !== undefined) body.viewpoint = viewpoint;
    return this.request("POST", `/sessions/${sid}/edits`, body);
  }

  recheckSolvable(sid: string, budget?: number): Promise<RecheckResponse> {
    const body = budget === undefined ? {} : { budget };
    return this.request("POST", `/sessions/${sid}/recheck-solvable`, body);
  }
}
