"""Session-oriented HTTP/JSON service over the simulator.

Many sessions live side by side in memory; each one serializes its
writers (actions, edits) behind a non-blocking lock so a second writer
arriving mid-flight gets 409 instead of a torn graph.  Reads never
touch the lock and never bump the revision.  Response bodies are the
module-level documents verbatim, so a wire client and an in-process
caller see byte-identical JSON.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from typing import Any

from fastapi import Body, FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .actions import action_from_wire, apply
from .edits import (
    UnknownViewpoint,
    apply_edits,
    interpretation_check,
    merge_reports,
)
from .harness import _update_history, goal_check
from .puzzles import GenerationFailure, LevelConfig, generate
from .scene_graph import (
    SceneGraph,
    SchemaError,
    UnknownAgent,
    deserialize,
    observe,
    serialize,
)
from .solver import BudgetExceeded, SolutionCertificate, Unsolvable, solve
from .tasks import (
    CycleError,
    GoalSpec,
    InstantiationError,
    goal_from_document,
    instantiate,
    validate_task_spec,
)

DEFAULT_SOLVE_BUDGET = 50_000


@dataclass
class Session:
    id: str
    graph: SceneGraph
    goal: GoalSpec | None
    history: list = field(default_factory=list)
    tick: int = 0
    created: float = 0.0
    touched: float = 0.0
    events: list[dict] = field(default_factory=list)
    writer: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    """In-memory session store; `ttl` (seconds) drops sessions idle
    longer than that, checked lazily on create/lookup."""

    def __init__(self, ttl: float | None = None):
        self.ttl = ttl
        self._lock = threading.Lock()
        self._sessions: dict[str, Session] = {}

    def _prune(self, now: float):
        if self.ttl is None:
            return
        dead = [sid for sid, s in self._sessions.items()
                if now - s.touched > self.ttl]
        for sid in dead:
            del self._sessions[sid]

    def create(self, graph: SceneGraph, goal: GoalSpec | None) -> Session:
        now = time.time()
        session = Session(
            id=secrets.token_urlsafe(32),
            graph=graph,
            goal=goal,
            created=now,
            touched=now,
        )
        if goal is not None:
            session.history = [None] * len(goal.conjuncts)
            _update_history(graph, goal, session.history, 0, None)
        with self._lock:
            self._prune(now)
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        now = time.time()
        with self._lock:
            self._prune(now)
            session = self._sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        session.touched = now
        return session

    def count(self) -> int:
        with self._lock:
            return len(self._sessions)

    def snapshot(self, directory: str):
        os.makedirs(directory, exist_ok=True)
        with self._lock:
            sessions = list(self._sessions.values())
        for s in sessions:
            doc = {
                "id": s.id,
                "scene_graph": serialize(s.graph),
                "goal": s.goal.to_document() if s.goal else None,
                "tick": s.tick,
                "events": s.events,
            }
            path = os.path.join(directory, f"{s.id}.json")
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)


# ── session sources ──────────────────────────────────────────────────────────

_GENERATE_KEYS = {"level", "seed", "room_count", "decoy_objects", "code_length"}


def _source_from_body(doc) -> tuple[SceneGraph, GoalSpec | None]:
    if not isinstance(doc, dict):
        raise SchemaError("/", "session source must be an object")
    if "level" in doc:
        unknown = sorted(set(doc) - _GENERATE_KEYS)
        if unknown:
            raise SchemaError(f"/{unknown[0]}", "unknown key")
        kwargs = {}
        for key in _GENERATE_KEYS:
            if key not in doc:
                continue
            value = doc[key]
            if not isinstance(value, int) or isinstance(value, bool):
                raise SchemaError(f"/{key}", "expected integer")
            kwargs[key] = value
        kwargs.setdefault("seed", 0)
        try:
            config = LevelConfig(**kwargs)
        except ValueError as exc:
            raise SchemaError("/level", str(exc))
        room = generate(config)
        return room.graph, room.goal
    if "task" in doc:
        if "base" not in doc:
            raise SchemaError("/base", "missing (task specs need a base scene)")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise SchemaError("/seed", "expected integer")
        spec = validate_task_spec(doc["task"])
        base = deserialize(doc["base"])
        return instantiate(spec, base, seed)
    if "scene_graph" in doc:
        graph = deserialize(doc["scene_graph"])
        goal = None
        if doc.get("goal") is not None:
            goal = goal_from_document(doc["goal"])
        return graph, goal
    raise SchemaError(
        "/", "expected one of: level+seed, task+base, or scene_graph"
    )


# ── app ──────────────────────────────────────────────────────────────────────


def create_app(
    static_dir: str | None = None,
    session_ttl: float | None = None,
    snapshot_dir: str | None = None,
) -> FastAPI:
    app = FastAPI(title="roomworld")
    registry = SessionRegistry(ttl=session_ttl)
    app.state.registry = registry

    @app.exception_handler(SchemaError)
    def _schema_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(CycleError)
    def _cycle_error(request, exc):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(UnknownViewpoint)
    def _viewpoint_error(request, exc):
        return JSONResponse(
            status_code=400, content={"detail": f"unknown viewpoint {exc}"}
        )

    @app.exception_handler(GenerationFailure)
    def _generation_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(InstantiationError)
    def _instantiation_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(RequestValidationError)
    def _body_error(request, exc):
        return JSONResponse(
            status_code=400, content={"detail": "body must be a JSON document"}
        )

    @app.get("/healthz")
    def healthz():
        return {"ok": True, "sessions": registry.count()}

    @app.post("/sessions", status_code=201)
    def create_session(payload: Any = Body(None)):
        graph, goal = _source_from_body(payload)
        session = registry.create(graph, goal)
        return {
            "id": session.id,
            "revision": session.graph.revision,
            "scene_graph": serialize(session.graph),
            "goal": goal.to_document() if goal else None,
        }

    @app.get("/sessions/{session_id}/scene-graph")
    def get_scene_graph(session_id: str):
        session = registry.get(session_id)
        return serialize(session.graph)

    @app.get("/sessions/{session_id}/agents/{agent_id}/observation")
    def get_observation(session_id: str, agent_id: str):
        session = registry.get(session_id)
        try:
            return observe(session.graph, agent_id).to_document()
        except UnknownAgent:
            raise HTTPException(404, f"unknown agent {agent_id!r}")

    @app.get("/sessions/{session_id}/goal-check")
    def get_goal_check(session_id: str):
        session = registry.get(session_id)
        goal = session.goal or GoalSpec(conjuncts=())
        return goal_check(session.graph, goal, session.history).to_document()

    @app.post("/sessions/{session_id}/actions")
    def post_actions(session_id: str, payload: Any = Body(None)):
        session = registry.get(session_id)
        if not isinstance(payload, dict) or not isinstance(
            payload.get("moves"), list
        ):
            raise SchemaError("/moves", "expected a list of moves")
        moves = []
        for i, move in enumerate(payload["moves"]):
            if not isinstance(move, dict):
                raise SchemaError(f"/moves/{i}", "expected an object")
            agent_id = move.get("agent")
            if not isinstance(agent_id, str):
                raise SchemaError(f"/moves/{i}/agent", "expected agent id")
            if agent_id not in session.graph.agents:
                raise HTTPException(404, f"unknown agent {agent_id!r}")
            moves.append((agent_id, action_from_wire(move.get("action"))))
        if not session.writer.acquire(blocking=False):
            raise HTTPException(409, "another writer is in flight")
        try:
            # step_multi semantics inline so each move can be credited
            # against the goal history as it lands
            seen = set()
            for agent_id, _ in moves:
                if agent_id in seen:
                    raise HTTPException(
                        400, f"duplicate agent {agent_id!r} in one tick"
                    )
                seen.add(agent_id)
            g = session.graph
            tick = session.tick + 1
            outcomes = []
            for agent_id, action in moves:
                g, outcome = apply(g, agent_id, action)
                outcomes.append(outcome)
                if session.goal is not None:
                    _update_history(
                        g, session.goal, session.history, tick, agent_id
                    )
            session.graph = g
            session.tick = tick
            session.events.append(
                {
                    "kind": "actions",
                    "tick": tick,
                    "moves": payload["moves"],
                    "ok": [o.ok for o in outcomes],
                }
            )
        finally:
            session.writer.release()
        goal = session.goal or GoalSpec(conjuncts=())
        report = goal_check(session.graph, goal, session.history)
        return {
            "outcomes": [o.to_document() for o in outcomes],
            "revision": session.graph.revision,
            "goal_check": report.to_document(),
        }

    @app.post("/sessions/{session_id}/edits")
    def post_edits(session_id: str, payload: Any = Body(None)):
        session = registry.get(session_id)
        if not isinstance(payload, dict) or not isinstance(
            payload.get("edits"), list
        ):
            raise SchemaError("/edits", "expected a list of edits")
        edits = payload["edits"]
        viewpoint = payload.get("viewpoint")
        if viewpoint is None:
            agents = sorted(session.graph.agents)
            rooms = sorted(session.graph.rooms)
            viewpoint = agents[0] if agents else rooms[0] if rooms else ""
        elif not isinstance(viewpoint, str):
            raise SchemaError("/viewpoint", "expected agent or room id")
        if not session.writer.acquire(blocking=False):
            raise HTTPException(409, "another writer is in flight")
        try:
            new_graph, applied = apply_edits(session.graph, edits)
            interpreted = interpretation_check(new_graph, edits, viewpoint)
            report = merge_reports(applied, interpreted)
            session.graph = new_graph
            if session.goal is not None:
                _update_history(
                    new_graph, session.goal, session.history,
                    session.tick, None,
                )
            session.events.append(
                {
                    "kind": "edits",
                    "tick": session.tick,
                    "count": len(edits),
                    "passed": report.passed,
                }
            )
        finally:
            session.writer.release()
        return {
            "report": report.to_document(),
            "revision": session.graph.revision,
        }

    @app.post("/sessions/{session_id}/recheck-solvable")
    def recheck_solvable(session_id: str, payload: Any = Body(None)):
        session = registry.get(session_id)
        if session.goal is None:
            raise HTTPException(400, "session has no goal to check")
        budget = DEFAULT_SOLVE_BUDGET
        if isinstance(payload, dict) and "budget" in payload:
            budget = payload["budget"]
            if not isinstance(budget, int) or isinstance(budget, bool) \
                    or budget < 1:
                raise SchemaError("/budget", "expected positive integer")
        result = solve(session.graph, session.goal, budget)
        if isinstance(result, SolutionCertificate):
            return {"status": "solvable", "certificate": result.to_document()}
        if isinstance(result, Unsolvable):
            return {"status": "unsolvable", "reason": result.reason}
        assert isinstance(result, BudgetExceeded)
        return {"status": "budget_exceeded", "expanded": result.expanded}

    if snapshot_dir is not None:
        app.router.on_shutdown.append(
            lambda: registry.snapshot(snapshot_dir)
        )

    if static_dir is not None:
        app.mount(
            "/", StaticFiles(directory=static_dir, html=True), name="ui"
        )

    return app
