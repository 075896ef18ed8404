"""High-level action engine.

Agents act through a small closed set of parameterized actions.  Every
action is validated against the live graph before it mutates anything;
a rejected action returns the input graph unchanged together with an
Outcome naming one precondition error from the closed enum below.
Failure analysis depends on that enum staying closed: downstream
classifiers key on the error codes, so new codes must be added here and
there together.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum

from .scene_graph import (
    Relation,
    SceneGraph,
    SchemaError,
    UnknownAgent,
)


class PreconditionError(str, Enum):
    UNKNOWN_OBJECT = "unknown_object"
    WRONG_ROOM = "wrong_room"
    LOCKED = "locked"
    CLOSED_CONTAINER = "closed_container"
    NOT_HELD = "not_held"
    HANDS_FULL = "hands_full"
    NOT_AFFORDANT = "not_affordant"
    WRONG_KEY = "wrong_key"
    WRONG_CODE = "wrong_code"
    INVALID_TARGET = "invalid_target"


# ── actions ──────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class GoTo:
    room: str


@dataclass(frozen=True)
class Open:
    obj: str


@dataclass(frozen=True)
class Close:
    obj: str


@dataclass(frozen=True)
class PickUp:
    obj: str


@dataclass(frozen=True)
class Place:
    obj: str
    target: str  # container, surface, or room id (floor)
    relation: str | None = None  # explicit inside/on_top/in_room, or infer


@dataclass(frozen=True)
class Unlock:
    obj: str
    key: str | None = None
    code: str | None = None


@dataclass(frozen=True)
class Read:
    obj: str


@dataclass(frozen=True)
class Toggle:
    obj: str


@dataclass(frozen=True)
class Arrange:
    target: str
    order: tuple[str, ...]


@dataclass(frozen=True)
class Wait:
    """No-op; always succeeds.  Lets policies yield a turn instead of
    emitting an invalid action."""


Action = GoTo | Open | Close | PickUp | Place | Unlock | Read | Toggle | Arrange | Wait


@dataclass(frozen=True)
class Outcome:
    ok: bool
    error: PreconditionError | None = None
    detail: str = ""
    events: tuple[tuple[str, str], ...] = ()

    def to_document(self) -> dict:
        return {
            "ok": self.ok,
            "error": self.error.value if self.error else None,
            "detail": self.detail,
            "events": [list(e) for e in self.events],
        }


def _ok(*events) -> Outcome:
    return Outcome(ok=True, events=tuple(events))


def _fail(error: PreconditionError, detail: str) -> Outcome:
    return Outcome(ok=False, error=error, detail=detail)


# ── wire format ──────────────────────────────────────────────────────────────
#
# {"type":"pick_up","object":"key_1"}
# {"type":"place","object":"key_1","relation":"inside","target":"box_1"}
# {"type":"unlock","object":"door_1","key":"key_1"} / {...,"code":"4217"}
# {"type":"arrange","objects":[...],"target":"pedestal_row"}
# {"type":"go_to","room":"room_2"}

_OBJ_ACTIONS = {
    "open": Open,
    "close": Close,
    "pick_up": PickUp,
    "read": Read,
    "toggle": Toggle,
}


def action_to_wire(action: Action) -> dict:
    for name, cls in _OBJ_ACTIONS.items():
        if isinstance(action, cls):
            return {"type": name, "object": action.obj}
    if isinstance(action, GoTo):
        return {"type": "go_to", "room": action.room}
    if isinstance(action, Place):
        doc = {"type": "place", "object": action.obj, "target": action.target}
        if action.relation is not None:
            doc["relation"] = action.relation
        return doc
    if isinstance(action, Unlock):
        doc = {"type": "unlock", "object": action.obj}
        if action.key is not None:
            doc["key"] = action.key
        if action.code is not None:
            doc["code"] = action.code
        return doc
    if isinstance(action, Arrange):
        return {"type": "arrange", "objects": list(action.order),
                "target": action.target}
    if isinstance(action, Wait):
        return {"type": "wait"}
    raise TypeError(f"not an action: {action!r}")


def _want_str(doc: dict, key: str) -> str:
    value = doc.get(key)
    if not isinstance(value, str):
        raise SchemaError(f"/action/{key}", "missing or non-string field")
    return value


def action_from_wire(doc) -> Action:
    if not isinstance(doc, dict):
        raise SchemaError("/action", "action must be an object")
    kind = doc.get("type")
    allowed = {
        "go_to": {"type", "room"},
        "open": {"type", "object"},
        "close": {"type", "object"},
        "pick_up": {"type", "object"},
        "place": {"type", "object", "target", "relation"},
        "unlock": {"type", "object", "key", "code"},
        "read": {"type", "object"},
        "toggle": {"type", "object"},
        "arrange": {"type", "objects", "target"},
        "wait": {"type"},
    }
    if kind not in allowed:
        raise SchemaError("/action/type", f"unknown action type {kind!r}")
    unknown = sorted(set(doc) - allowed[kind])
    if unknown:
        raise SchemaError(f"/action/{unknown[0]}", "unknown key")
    if kind == "go_to":
        return GoTo(_want_str(doc, "room"))
    if kind in _OBJ_ACTIONS:
        return _OBJ_ACTIONS[kind](_want_str(doc, "object"))
    if kind == "place":
        relation = doc.get("relation")
        if relation is not None and not isinstance(relation, str):
            raise SchemaError("/action/relation", "expected string")
        return Place(_want_str(doc, "object"), _want_str(doc, "target"), relation)
    if kind == "unlock":
        key, code = doc.get("key"), doc.get("code")
        for label, value in (("key", key), ("code", code)):
            if value is not None and not isinstance(value, str):
                raise SchemaError(f"/action/{label}", "expected string")
        return Unlock(_want_str(doc, "object"), key=key, code=code)
    if kind == "arrange":
        order = doc.get("objects")
        if not isinstance(order, list) or not all(isinstance(o, str) for o in order):
            raise SchemaError("/action/objects", "expected list of object ids")
        return Arrange(_want_str(doc, "target"), tuple(order))
    return Wait()


# ── target reachability ──────────────────────────────────────────────────────


def _locate(graph: SceneGraph, agent_id: str, obj_id: str):
    """Classify how reachable `obj_id` is for the agent: None when it
    can be acted on, otherwise the precondition error to report.

    Hidden objects do not exist as far as agents are concerned; objects
    in other rooms are wrong_room; objects sealed behind a closed
    container in the same room report closed_container (acting on stale
    memory of the container's contents)."""
    if obj_id not in graph.objects:
        return _fail(PreconditionError.UNKNOWN_OBJECT, f"no object {obj_id!r}")
    agent_room = graph.parent_relation(agent_id).dst
    if graph.objects[obj_id].category == "door":
        if agent_room in graph.door_destinations(obj_id):
            return None
        return _fail(PreconditionError.WRONG_ROOM, f"{obj_id} is in another room")
    hidden = False
    current = obj_id
    while current in graph.objects:
        if graph.is_hidden(current):
            hidden = True
            break
        current = (graph.parent_relation(current) or Relation("", "", "")).dst
        if current == "":
            break
    if hidden:
        return _fail(PreconditionError.UNKNOWN_OBJECT, f"no object {obj_id!r}")
    room = graph.room_of(obj_id)
    if room != agent_room:
        return _fail(PreconditionError.WRONG_ROOM, f"{obj_id} is in another room")
    if not graph.chain_visible(obj_id):
        return _fail(
            PreconditionError.CLOSED_CONTAINER,
            f"{obj_id} is sealed inside a closed container",
        )
    return None


def _holder_of(graph: SceneGraph, obj_id: str) -> str | None:
    rel = graph.parent_relation(obj_id)
    if rel is not None and rel.kind == "held_by":
        return rel.dst
    return None


# ── validation ───────────────────────────────────────────────────────────────


def validate(graph: SceneGraph, agent_id: str, action: Action) -> Outcome:
    """Check preconditions without mutating; Outcome.ok mirrors what
    apply() would do."""
    if agent_id not in graph.agents:
        raise UnknownAgent(agent_id)
    agent = graph.agents[agent_id]
    agent_room = graph.parent_relation(agent_id).dst

    if isinstance(action, Wait):
        return _ok()

    if isinstance(action, GoTo):
        if action.room not in graph.rooms:
            return _fail(PreconditionError.UNKNOWN_OBJECT, f"no room {action.room!r}")
        if action.room == agent_room:
            return _fail(PreconditionError.INVALID_TARGET, "already in that room")
        for door_id in graph.doors_touching(agent_room):
            if action.room in graph.door_destinations(door_id):
                door = graph.objects[door_id]
                if door.states.get("locked", False):
                    return _fail(PreconditionError.LOCKED, f"{door_id} is locked")
                if not door.states.get("open", True):
                    return _fail(
                        PreconditionError.INVALID_TARGET, f"{door_id} is closed"
                    )
                return _ok()
        return _fail(
            PreconditionError.WRONG_ROOM, f"no door from {agent_room} to {action.room}"
        )

    if isinstance(action, (Open, Close)):
        err = _locate(graph, agent_id, action.obj)
        if err:
            return err
        obj = graph.objects[action.obj]
        if "openable" not in obj.affordances:
            return _fail(PreconditionError.NOT_AFFORDANT, f"{action.obj} cannot open")
        is_open = obj.states.get("open", False)
        if isinstance(action, Open):
            if is_open:
                return _fail(PreconditionError.INVALID_TARGET, "already open")
            if obj.states.get("locked", False):
                return _fail(PreconditionError.LOCKED, f"{action.obj} is locked")
        else:
            if not is_open:
                return _fail(PreconditionError.INVALID_TARGET, "already closed")
        return _ok()

    if isinstance(action, PickUp):
        err = _locate(graph, agent_id, action.obj)
        if err:
            return err
        obj = graph.objects[action.obj]
        if "graspable" not in obj.affordances:
            return _fail(
                PreconditionError.NOT_AFFORDANT, f"{action.obj} is not graspable"
            )
        holder = _holder_of(graph, action.obj)
        if holder == agent_id:
            return _fail(PreconditionError.INVALID_TARGET, "already holding it")
        if holder is not None:
            return _fail(
                PreconditionError.INVALID_TARGET, f"{holder} is holding it"
            )
        if len(agent.holding) >= agent.capacity:
            return _fail(PreconditionError.HANDS_FULL, "hands are full")
        return _ok()

    if isinstance(action, Place):
        if action.obj not in agent.holding:
            return _fail(PreconditionError.NOT_HELD, f"not holding {action.obj}")
        if action.target in graph.rooms:
            if action.target != agent_room:
                return _fail(
                    PreconditionError.WRONG_ROOM, "can only drop in the current room"
                )
            if action.relation not in (None, "in_room"):
                return _fail(
                    PreconditionError.INVALID_TARGET,
                    f"rooms take in_room, not {action.relation}",
                )
            return _ok()
        err = _locate(graph, agent_id, action.target)
        if err:
            return err
        target = graph.objects[action.target]
        if action.target == action.obj:
            return _fail(PreconditionError.INVALID_TARGET, "cannot place onto itself")
        if "container" in target.affordances:
            if action.relation not in (None, "inside"):
                return _fail(
                    PreconditionError.INVALID_TARGET,
                    f"{action.target} takes inside, not {action.relation}",
                )
            if not graph.is_open(action.target):
                return _fail(
                    PreconditionError.CLOSED_CONTAINER, f"{action.target} is closed"
                )
            return _ok()
        if "surface" in target.affordances:
            if action.relation not in (None, "on_top"):
                return _fail(
                    PreconditionError.INVALID_TARGET,
                    f"{action.target} takes on_top, not {action.relation}",
                )
            return _ok()
        return _fail(
            PreconditionError.NOT_AFFORDANT,
            f"{action.target} is neither container nor surface",
        )

    if isinstance(action, Unlock):
        err = _locate(graph, agent_id, action.obj)
        if err:
            return err
        obj = graph.objects[action.obj]
        if "lockable" not in obj.affordances:
            return _fail(
                PreconditionError.NOT_AFFORDANT, f"{action.obj} has no lock"
            )
        if not obj.states.get("locked", False):
            return _fail(PreconditionError.INVALID_TARGET, "not locked")
        lock = obj.lock
        if lock is None:
            return _fail(PreconditionError.INVALID_TARGET, "lock has no mechanism")
        if lock.mechanism == "key":
            if action.key is None:
                return _fail(
                    PreconditionError.WRONG_KEY, "this lock takes a key"
                )
            if action.key not in agent.holding:
                return _fail(
                    PreconditionError.NOT_HELD, f"not holding {action.key}"
                )
            if action.key != lock.key_id:
                return _fail(
                    PreconditionError.WRONG_KEY, f"{action.key} does not fit"
                )
            return _ok()
        # code lock
        if action.code is None:
            return _fail(PreconditionError.WRONG_CODE, "this lock takes a code")
        if action.code != lock.code:
            return _fail(PreconditionError.WRONG_CODE, "code rejected")
        return _ok()

    if isinstance(action, Read):
        err = _locate(graph, agent_id, action.obj)
        if err:
            return err
        obj = graph.objects[action.obj]
        if "readable" not in obj.affordances:
            return _fail(
                PreconditionError.NOT_AFFORDANT, f"{action.obj} is not readable"
            )
        if obj.clue is None:
            return _fail(PreconditionError.INVALID_TARGET, "nothing written on it")
        return _ok()

    if isinstance(action, Toggle):
        err = _locate(graph, agent_id, action.obj)
        if err:
            return err
        obj = graph.objects[action.obj]
        if "toggleable" not in obj.affordances:
            return _fail(
                PreconditionError.NOT_AFFORDANT, f"{action.obj} has no switch"
            )
        return _ok()

    if isinstance(action, Arrange):
        err = _locate(graph, agent_id, action.target)
        if err:
            return err
        target = graph.objects[action.target]
        if "surface" not in target.affordances:
            return _fail(
                PreconditionError.NOT_AFFORDANT, f"{action.target} is not a surface"
            )
        # Arrange is the pattern-puzzle action: it only applies to
        # surfaces that expect a color pattern, and the attempt must
        # use exactly that many distinct colored objects.  Free-form
        # placement goes through Place.
        spec = target.arrangement
        if spec is None:
            return _fail(
                PreconditionError.NOT_AFFORDANT,
                f"{action.target} expects no arrangement",
            )
        if len(action.order) != len(spec.order):
            return _fail(
                PreconditionError.INVALID_TARGET,
                f"arrangement wants {len(spec.order)} objects",
            )
        if len(set(action.order)) != len(action.order):
            return _fail(PreconditionError.INVALID_TARGET, "repeated object")
        for obj_id in action.order:
            if obj_id == action.target:
                return _fail(
                    PreconditionError.INVALID_TARGET, "surface cannot go on itself"
                )
            err = _locate(graph, agent_id, obj_id)
            if err:
                return err
            obj = graph.objects[obj_id]
            if "movable" not in obj.affordances:
                return _fail(
                    PreconditionError.NOT_AFFORDANT, f"{obj_id} cannot be moved"
                )
            if obj.color is None:
                return _fail(
                    PreconditionError.NOT_AFFORDANT, f"{obj_id} has no color"
                )
            holder = _holder_of(graph, obj_id)
            if holder is not None and holder != agent_id:
                return _fail(
                    PreconditionError.INVALID_TARGET, f"{holder} is holding {obj_id}"
                )
        return _ok()

    raise TypeError(f"not an action: {action!r}")


# ── application ──────────────────────────────────────────────────────────────


def apply(graph: SceneGraph, agent_id: str, action: Action) -> tuple[SceneGraph, Outcome]:
    """Validate, then mutate a clone.  On rejection the original graph
    comes back untouched (same object), so callers can branch on the
    outcome without defensive copying."""
    outcome = validate(graph, agent_id, action)
    if not outcome.ok:
        return graph, outcome
    if isinstance(action, Wait):
        return graph, outcome  # true no-op: no revision bump

    g = graph.clone()
    agent = g.agents[agent_id]
    agent_room = g.parent_relation(agent_id).dst
    events: list[tuple[str, str]] = []

    if isinstance(action, GoTo):
        g.relations.discard(Relation("in_room", agent_id, agent_room))
        g.relations.add(Relation("in_room", agent_id, action.room))

    elif isinstance(action, Open):
        g.objects[action.obj].states["open"] = True

    elif isinstance(action, Close):
        g.objects[action.obj].states["open"] = False

    elif isinstance(action, PickUp):
        g.relations.discard(g.parent_relation(action.obj))
        g.relations.add(Relation("held_by", action.obj, agent_id))
        agent.holding.append(action.obj)

    elif isinstance(action, Place):
        g.relations.discard(g.parent_relation(action.obj))
        agent.holding.remove(action.obj)
        if action.target in g.rooms:
            g.relations.add(Relation("in_room", action.obj, action.target))
        elif "container" in g.objects[action.target].affordances:
            g.relations.add(Relation("inside", action.obj, action.target))
        else:
            g.relations.add(Relation("on_top", action.obj, action.target))

    elif isinstance(action, Unlock):
        g.objects[action.obj].states["locked"] = False
        events.append(("unlocked", action.obj))

    elif isinstance(action, Read):
        obj = g.objects[action.obj]
        if all(oid != action.obj for oid, _ in agent.read_clues):
            agent.read_clues.append((action.obj, obj.clue))
        events.append(("clue_read", action.obj))

    elif isinstance(action, Toggle):
        obj = g.objects[action.obj]
        obj.states["on"] = not obj.states.get("on", False)

    elif isinstance(action, Arrange):
        for obj_id in action.order:
            rel = g.parent_relation(obj_id)
            if rel.kind == "held_by":
                g.agents[rel.dst].holding.remove(obj_id)
            g.relations.discard(rel)
            g.relations.add(Relation("on_top", obj_id, action.target))
        spec = g.objects[action.target].arrangement
        if spec is not None:
            colors = [g.objects[o].color for o in action.order]
            if list(colors) == list(spec.order) and spec.reveals in g.objects:
                hidden = g.objects[spec.reveals]
                if hidden.states.get("revealed", True) is False:
                    hidden.states["revealed"] = True
                    events.append(("revealed", spec.reveals))

    g.bump()
    return g, Outcome(ok=True, events=tuple(events))


class DuplicateAgent(Exception):
    pass


def step_multi(
    graph: SceneGraph, moves: list[tuple[str, Action]]
) -> tuple[SceneGraph, list[Outcome]]:
    """One synchronized tick: moves apply sequentially in list order
    against the evolving graph, so a later move can be rejected because
    an earlier one consumed its target.  Outcomes align index-wise."""
    seen = set()
    for agent_id, _ in moves:
        if agent_id in seen:
            raise DuplicateAgent(agent_id)
        seen.add(agent_id)
    outcomes: list[Outcome] = []
    g = graph
    for agent_id, action in moves:
        g, outcome = apply(g, agent_id, action)
        outcomes.append(outcome)
    return g, outcomes


# ── enumeration ──────────────────────────────────────────────────────────────

ARRANGE_ENUM_CAP = 120  # permutations per surface; generator rooms stay far below


def legal_actions(graph: SceneGraph, agent_id: str) -> list[Action]:
    """All actions that would validate OK for the agent right now,
    in a deterministic order.  Code unlocks are excluded: codes are
    knowledge, not world state, so enumerating the true code here would
    leak the puzzle answer to knowledge-free policies.  Wait is also
    omitted (it is always legal)."""
    agent = graph.agents[agent_id]
    agent_room = graph.parent_relation(agent_id).dst
    out: list[Action] = []

    for door_id in graph.doors_touching(agent_room):
        door = graph.objects[door_id]
        for dest in graph.door_destinations(door_id):
            if dest != agent_room and door.states.get("open", False):
                out.append(GoTo(dest))

    visible = [
        oid
        for oid in sorted(graph.objects)
        if _locate(graph, agent_id, oid) is None
    ]

    for oid in visible:
        obj = graph.objects[oid]
        if "openable" in obj.affordances:
            if obj.states.get("open", False):
                out.append(Close(oid))
            elif not obj.states.get("locked", False):
                out.append(Open(oid))
        if (
            "graspable" in obj.affordances
            and _holder_of(graph, oid) is None
            and len(agent.holding) < agent.capacity
        ):
            out.append(PickUp(oid))
        if "readable" in obj.affordances and obj.clue is not None:
            out.append(Read(oid))
        if "toggleable" in obj.affordances:
            out.append(Toggle(oid))
        if (
            obj.states.get("locked", False)
            and obj.lock is not None
            and obj.lock.mechanism == "key"
            and obj.lock.key_id in agent.holding
        ):
            out.append(Unlock(oid, key=obj.lock.key_id))

    for held in sorted(agent.holding):
        out.append(Place(held, agent_room))
        for oid in visible:
            obj = graph.objects[oid]
            if oid == held:
                continue
            if "container" in obj.affordances and graph.is_open(oid):
                out.append(Place(held, oid))
            elif "surface" in obj.affordances:
                out.append(Place(held, oid))

    for oid in visible:
        spec = graph.objects[oid].arrangement
        if spec is None:
            continue
        movable = [
            m
            for m in visible
            if "movable" in graph.objects[m].affordances
            and graph.objects[m].color is not None
            and _holder_of(graph, m) is None
            and m != oid
        ]
        count = 0
        for perm in itertools.permutations(movable, len(spec.order)):
            out.append(Arrange(oid, tuple(perm)))
            count += 1
            if count >= ARRANGE_ENUM_CAP:
                break

    return out
