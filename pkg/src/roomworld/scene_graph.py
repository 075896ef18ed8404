"""Hierarchical symbolic world state.

A scene graph holds rooms, objects, and agents plus a set of typed
relations between them.  Object placement forms a forest: every object
has exactly one parent relation (in_room / inside / on_top / held_by)
and following parents always ends at a room or an agent.  Doors are
ordinary objects that carry `connects` relations to the two rooms they
join.

Graphs are values: every mutating operation clones first and returns a
new graph, so a rejected operation can never leave a half-applied
state behind.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace

# ── identifiers and vocabularies ─────────────────────────────────────────────

ID_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_:.\-]*$")

AFFORDANCES = frozenset(
    {
        "openable",
        "lockable",
        "graspable",
        "movable",
        "readable",
        "toggleable",
        "container",
        "surface",
    }
)

# Controlled category vocabulary.  Keys are the categories accepted in
# scene documents and task specs; values are the affordances minted
# objects get when a spec does not say otherwise.
CATEGORY_AFFORDANCES: dict[str, frozenset[str]] = {
    "box": frozenset({"container", "openable"}),
    "key": frozenset({"graspable", "movable"}),
    "note": frozenset({"readable"}),
    "door": frozenset({"openable", "lockable"}),
    "pedestal": frozenset({"surface"}),
    "table": frozenset({"surface"}),
    "tv": frozenset({"toggleable"}),
    "lamp": frozenset({"toggleable"}),
    "stove": frozenset({"toggleable"}),
    "bin": frozenset({"container"}),  # open-top: no open state, never hides
    "remote": frozenset({"graspable", "movable"}),
    "pan": frozenset({"graspable", "movable"}),
    "cloth": frozenset({"graspable", "movable"}),
    "trash": frozenset({"graspable", "movable"}),
    "statue": frozenset({"movable"}),
    "vase": frozenset({"movable"}),
    "plant": frozenset({"movable"}),
}

CATEGORIES = frozenset(CATEGORY_AFFORDANCES)

# State key -> affordance that licenses it.  `revealed` marks objects
# (hidden clue notes) that stay invisible until an arrangement puzzle
# flips them on.
STATE_AFFORDANCE = {
    "open": "openable",
    "locked": "lockable",
    "on": "toggleable",
    "revealed": "readable",
}

PARENT_KINDS = ("in_room", "inside", "on_top", "held_by")
RELATION_KINDS = PARENT_KINDS + ("connects",)


# ── errors ───────────────────────────────────────────────────────────────────


class RoomWorldError(Exception):
    """Base for all package errors."""


class DuplicateId(RoomWorldError):
    pass


class DanglingReference(RoomWorldError):
    pass


class InvariantViolation(RoomWorldError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


class UnknownId(RoomWorldError):
    pass


class RoomOccupied(RoomWorldError):
    pass


class UnknownAgent(RoomWorldError):
    pass


class SchemaError(RoomWorldError):
    """Document does not conform to a wire schema; `path` points at the
    offending field (JSON-pointer style)."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# ── node and relation types ──────────────────────────────────────────────────


@dataclass(frozen=True)
class LockSpec:
    mechanism: str  # "key" | "code"
    key_id: str | None = None
    code: str | None = None


@dataclass(frozen=True)
class ClueText:
    text: str
    referent: str | None = None
    payload: str | None = None
    veracity: str = "accurate"  # "accurate" | "deceptive"


@dataclass(frozen=True)
class ArrangementSpec:
    """Ordered color pattern a pedestal row expects; a correct Arrange
    sets revealed=true on `reveals`."""

    order: tuple[str, ...]
    reveals: str


@dataclass
class RoomNode:
    id: str
    name: str


@dataclass
class ObjectNode:
    id: str
    category: str
    display_name: str
    affordances: frozenset[str] = frozenset()
    states: dict[str, bool] = field(default_factory=dict)
    clue: ClueText | None = None
    lock: LockSpec | None = None
    color: str | None = None
    arrangement: ArrangementSpec | None = None


@dataclass
class AgentNode:
    id: str
    capacity: int = 1
    holding: list[str] = field(default_factory=list)
    # ordered clue memory: (object id, clue) pairs in read order
    read_clues: list[tuple[str, ClueText]] = field(default_factory=list)


class Relation(tuple):
    """(kind, src, dst) triple; tuple subclass so relations sort and
    hash naturally."""

    __slots__ = ()

    def __new__(cls, kind: str, src: str, dst: str):
        return super().__new__(cls, (kind, src, dst))

    @property
    def kind(self) -> str:
        return self[0]

    @property
    def src(self) -> str:
        return self[1]

    @property
    def dst(self) -> str:
        return self[2]

    def __repr__(self):
        return f"Relation({self[0]!r}, {self[1]!r}, {self[2]!r})"


@dataclass(frozen=True)
class Violation:
    code: str
    ids: tuple[str, ...]
    detail: str

    def __str__(self):
        return f"{self.code}({', '.join(self.ids)}): {self.detail}"


# ── the graph ────────────────────────────────────────────────────────────────


class SceneGraph:
    """Rooms, objects, agents, relations, and a revision counter that
    increments on every content mutation."""

    __slots__ = ("rooms", "objects", "agents", "relations", "revision")

    def __init__(self):
        self.rooms: dict[str, RoomNode] = {}
        self.objects: dict[str, ObjectNode] = {}
        self.agents: dict[str, AgentNode] = {}
        self.relations: set[Relation] = set()
        self.revision: int = 0

    # -- cheap value-copy; node statics (category, affordances, lock,
    #    clue, arrangement) are immutable and shared between clones.
    def clone(self) -> "SceneGraph":
        g = SceneGraph()
        g.rooms = dict(self.rooms)
        g.objects = {
            oid: replace(obj, states=dict(obj.states))
            for oid, obj in self.objects.items()
        }
        g.agents = {
            aid: AgentNode(
                id=a.id,
                capacity=a.capacity,
                holding=list(a.holding),
                read_clues=list(a.read_clues),
            )
            for aid, a in self.agents.items()
        }
        g.relations = set(self.relations)
        g.revision = self.revision
        return g

    # -- id helpers ----------------------------------------------------------

    def has_id(self, node_id: str) -> bool:
        return (
            node_id in self.rooms or node_id in self.objects or node_id in self.agents
        )

    def parent_relation(self, obj_id: str) -> Relation | None:
        for rel in self.relations:
            if rel.kind in PARENT_KINDS and rel.src == obj_id:
                return rel
        return None

    def room_of(self, node_id: str) -> str | None:
        """Hoisted room: follow parent relations until a room (or the
        room of the holding agent).  None for rooms themselves or on a
        broken chain."""
        seen = set()
        current = node_id
        while True:
            if current in self.rooms:
                return current
            if current in self.agents:
                rel = self.parent_relation(current)
                return rel.dst if rel else None
            if current in seen:
                return None  # cycle
            seen.add(current)
            rel = self.parent_relation(current)
            if rel is None:
                return None
            current = rel.dst

    def contents_of(self, node_id: str) -> list[str]:
        """Objects whose parent is `node_id` (inside/on_top), sorted."""
        out = [
            rel.src
            for rel in self.relations
            if rel.kind in ("inside", "on_top") and rel.dst == node_id
        ]
        return sorted(out)

    def in_room_objects(self, room_id: str) -> list[str]:
        out = [
            rel.src
            for rel in self.relations
            if rel.kind == "in_room" and rel.dst == room_id and rel.src in self.objects
        ]
        return sorted(out)

    def agents_in_room(self, room_id: str) -> list[str]:
        out = [
            rel.src
            for rel in self.relations
            if rel.kind == "in_room" and rel.dst == room_id and rel.src in self.agents
        ]
        return sorted(out)

    def doors_touching(self, room_id: str) -> list[str]:
        out = {
            rel.src
            for rel in self.relations
            if rel.kind == "connects" and rel.dst == room_id
        }
        return sorted(out)

    def door_destinations(self, door_id: str) -> list[str]:
        return sorted(
            rel.dst
            for rel in self.relations
            if rel.kind == "connects" and rel.src == door_id
        )

    def is_open(self, obj_id: str) -> bool:
        """Containers without an `open` state (open-top bins) never hide."""
        return self.objects[obj_id].states.get("open", True)

    def is_hidden(self, obj_id: str) -> bool:
        return self.objects[obj_id].states.get("revealed", True) is False

    def chain_visible(self, obj_id: str) -> bool:
        """True when no closed container and no hidden object sits on
        the parent path from `obj_id` (inclusive) up to its room/agent."""
        current = obj_id
        seen = set()
        while current in self.objects:
            if current in seen:
                return False
            seen.add(current)
            if self.is_hidden(current):
                return False
            rel = self.parent_relation(current)
            if rel is None:
                return False
            if rel.kind == "inside" and not self.is_open(rel.dst):
                return False
            current = rel.dst
        return True

    def bump(self):
        self.revision += 1


# ── invariant checking ───────────────────────────────────────────────────────


def check_invariants(graph: SceneGraph) -> list[Violation]:
    """Total function: empty list iff every structural invariant holds."""
    out: list[Violation] = []

    # unique ids across node classes
    all_ids: dict[str, str] = {}
    for kind, table in (
        ("room", graph.rooms),
        ("object", graph.objects),
        ("agent", graph.agents),
    ):
        for node_id in table:
            if node_id in all_ids:
                out.append(
                    Violation(
                        "duplicate_id",
                        (node_id,),
                        f"id used as both {all_ids[node_id]} and {kind}",
                    )
                )
            else:
                all_ids[node_id] = kind
            if not ID_RE.match(node_id):
                out.append(Violation("bad_id", (node_id,), "malformed identifier"))

    for room in graph.rooms.values():
        if not room.name:
            out.append(Violation("empty_name", (room.id,), "room name is empty"))

    for obj in graph.objects.values():
        unknown = obj.affordances - AFFORDANCES
        if unknown:
            out.append(
                Violation(
                    "unknown_affordance", (obj.id,), f"unknown: {sorted(unknown)}"
                )
            )
        if obj.category not in CATEGORIES:
            out.append(
                Violation("unknown_category", (obj.id,), f"category {obj.category!r}")
            )
        if "container" in obj.affordances and "surface" in obj.affordances:
            out.append(
                Violation(
                    "container_surface_conflict",
                    (obj.id,),
                    "container and surface are mutually exclusive",
                )
            )
        for key in obj.states:
            needs = STATE_AFFORDANCE.get(key)
            if needs is None:
                out.append(Violation("unknown_state", (obj.id,), f"state {key!r}"))
            elif needs not in obj.affordances:
                out.append(
                    Violation(
                        "state_without_affordance",
                        (obj.id,),
                        f"state {key!r} requires affordance {needs!r}",
                    )
                )
        if obj.lock is not None:
            if "lockable" not in obj.affordances:
                out.append(
                    Violation(
                        "lock_without_lockable", (obj.id,), "lock on unlockable object"
                    )
                )
            out.extend(_check_lock(graph, obj))
        if obj.clue is not None:
            if "readable" not in obj.affordances:
                out.append(
                    Violation(
                        "clue_without_readable", (obj.id,), "clue on unreadable object"
                    )
                )
            if (
                obj.clue.veracity == "accurate"
                and obj.clue.referent is not None
                and not graph.has_id(obj.clue.referent)
            ):
                out.append(
                    Violation(
                        "clue_referent_missing",
                        (obj.id, obj.clue.referent),
                        "accurate clue points at a missing object",
                    )
                )
        if obj.arrangement is not None:
            if "surface" not in obj.affordances:
                out.append(
                    Violation(
                        "arrangement_without_surface",
                        (obj.id,),
                        "arrangement spec on a non-surface",
                    )
                )
            if obj.arrangement.reveals not in graph.objects:
                out.append(
                    Violation(
                        "arrangement_reveals_missing",
                        (obj.id, obj.arrangement.reveals),
                        "arrangement reveals a missing object",
                    )
                )

    # relation endpoint classes
    for rel in sorted(graph.relations):
        out.extend(_check_relation(graph, rel))

    # location forest: exactly one parent per object; chains terminate
    for obj_id in graph.objects:
        parents = [
            rel
            for rel in graph.relations
            if rel.kind in PARENT_KINDS and rel.src == obj_id
        ]
        if len(parents) != 1:
            out.append(
                Violation(
                    "parent_count",
                    (obj_id,),
                    f"object has {len(parents)} parent relations, wants 1",
                )
            )
    cycles = _find_cycles(graph)
    for cycle in cycles:
        out.append(
            Violation("containment_cycle", tuple(cycle), "containment chain loops")
        )
    if not cycles:
        for obj_id in graph.objects:
            if graph.parent_relation(obj_id) is not None and graph.room_of(obj_id) is None:
                out.append(
                    Violation(
                        "chain_broken",
                        (obj_id,),
                        "parent chain does not reach a room or agent",
                    )
                )

    # agents: exactly one in_room; holding matches held_by; capacity
    for agent in graph.agents.values():
        rooms = [
            rel
            for rel in graph.relations
            if rel.kind == "in_room" and rel.src == agent.id
        ]
        if len(rooms) != 1:
            out.append(
                Violation(
                    "agent_location",
                    (agent.id,),
                    f"agent has {len(rooms)} in_room relations, wants 1",
                )
            )
        held = {
            rel.src
            for rel in graph.relations
            if rel.kind == "held_by" and rel.dst == agent.id
        }
        if held != set(agent.holding):
            out.append(
                Violation(
                    "holding_mismatch",
                    (agent.id,),
                    f"holding list {sorted(agent.holding)} != held_by relations {sorted(held)}",
                )
            )
        if len(agent.holding) > agent.capacity:
            out.append(
                Violation(
                    "over_capacity",
                    (agent.id,),
                    f"holding {len(agent.holding)} > capacity {agent.capacity}",
                )
            )

    # doors carry exactly two connects to distinct rooms
    door_links: dict[str, list[Relation]] = {}
    for rel in graph.relations:
        if rel.kind == "connects":
            door_links.setdefault(rel.src, []).append(rel)
    for door_id, rels in sorted(door_links.items()):
        rooms = sorted({r.dst for r in rels})
        if len(rels) != 2 or len(rooms) != 2:
            out.append(
                Violation(
                    "connects_pair",
                    (door_id,),
                    "door must connect exactly two distinct rooms",
                )
            )

    return out


def _check_lock(graph: SceneGraph, obj: ObjectNode) -> list[Violation]:
    lock = obj.lock
    out = []
    if lock.mechanism == "key":
        if lock.key_id is None or lock.code is not None:
            out.append(
                Violation(
                    "lock_spec", (obj.id,), "key lock needs key_id and no code"
                )
            )
        elif lock.key_id not in graph.objects:
            out.append(
                Violation(
                    "lock_key_missing",
                    (obj.id, lock.key_id),
                    "lock key_id references a missing object",
                )
            )
    elif lock.mechanism == "code":
        if lock.code is None or lock.key_id is not None:
            out.append(
                Violation(
                    "lock_spec", (obj.id,), "code lock needs code and no key_id"
                )
            )
        elif not (2 <= len(lock.code) <= 8 and lock.code.isdigit()):
            out.append(
                Violation("lock_code", (obj.id,), "code must be 2-8 decimal digits")
            )
    else:
        out.append(
            Violation("lock_mechanism", (obj.id,), f"unknown {lock.mechanism!r}")
        )
    return out


def _check_relation(graph: SceneGraph, rel: Relation) -> list[Violation]:
    kind, src, dst = rel
    if kind not in RELATION_KINDS:
        return [Violation("relation_kind", (src, dst), f"unknown kind {kind!r}")]
    missing = [i for i in (src, dst) if not graph.has_id(i)]
    if missing:
        return [
            Violation(
                "dangling_relation",
                tuple(missing),
                f"{kind} references missing node(s)",
            )
        ]
    bad = None
    if kind == "in_room":
        if dst not in graph.rooms or src in graph.rooms:
            bad = "in_room wants object/agent -> room"
    elif kind == "inside":
        if src not in graph.objects or dst not in graph.objects:
            bad = "inside wants object -> object"
        elif "container" not in graph.objects[dst].affordances:
            bad = f"{dst} is not a container"
    elif kind == "on_top":
        if src not in graph.objects or dst not in graph.objects:
            bad = "on_top wants object -> object"
        elif "surface" not in graph.objects[dst].affordances:
            bad = f"{dst} is not a surface"
    elif kind == "held_by":
        if src not in graph.objects or dst not in graph.agents:
            bad = "held_by wants object -> agent"
        elif "graspable" not in graph.objects[src].affordances:
            bad = f"{src} is not graspable"
    elif kind == "connects":
        if src not in graph.objects or graph.objects[src].category != "door":
            bad = "connects must be carried by a door object"
        elif dst not in graph.rooms:
            bad = "connects wants door -> room"
    if bad:
        return [Violation("relation_endpoint", (src, dst), bad)]
    return []


def _find_cycles(graph: SceneGraph) -> list[list[str]]:
    cycles = []
    visited: set[str] = set()
    for start in sorted(graph.objects):
        if start in visited:
            continue
        path: list[str] = []
        on_path: set[str] = set()
        current = start
        while current in graph.objects and current not in visited:
            if current in on_path:
                cycles.append(path[path.index(current):])
                break
            on_path.add(current)
            path.append(current)
            rel = graph.parent_relation(current)
            if rel is None:
                break
            current = rel.dst
        visited.update(on_path)
    return cycles


# ── mutation operations ──────────────────────────────────────────────────────


def add_node(
    graph: SceneGraph,
    node: RoomNode | ObjectNode | AgentNode,
    placement: Relation | None = None,
) -> SceneGraph:
    """Insert a node (and its placement relation); rejects anything
    that would break an invariant, leaving the input graph untouched."""
    if graph.has_id(node.id):
        raise DuplicateId(node.id)
    if placement is not None:
        for endpoint in (placement.src, placement.dst):
            if endpoint != node.id and not graph.has_id(endpoint):
                raise DanglingReference(endpoint)
    g = graph.clone()
    if isinstance(node, RoomNode):
        g.rooms[node.id] = replace(node)
    elif isinstance(node, ObjectNode):
        g.objects[node.id] = replace(node, states=dict(node.states))
    elif isinstance(node, AgentNode):
        g.agents[node.id] = AgentNode(
            id=node.id,
            capacity=node.capacity,
            holding=list(node.holding),
            read_clues=list(node.read_clues),
        )
    else:
        raise TypeError(f"not a node: {node!r}")
    if placement is not None:
        g.relations.add(placement)
        if placement.kind == "held_by" and placement.dst in g.agents:
            holder = g.agents[placement.dst]
            if placement.src not in holder.holding:
                holder.holding.append(placement.src)
    violations = check_invariants(g)
    if violations:
        raise InvariantViolation(violations)
    g.bump()
    return g


def remove_node(graph: SceneGraph, node_id: str) -> SceneGraph:
    """Remove a node and its incident relations.  Objects that sat
    inside/on the removed node hoist to its enclosing room; removing a
    room cascades to the objects directly in it (doors to the removed
    room are deleted outright)."""
    if not graph.has_id(node_id):
        raise UnknownId(node_id)
    if node_id in graph.rooms and graph.agents_in_room(node_id):
        raise RoomOccupied(node_id)
    g = graph.clone()

    if node_id in graph.rooms:
        for door_id in g.doors_touching(node_id):
            _drop_node(g, door_id, hoist_to=None)
        for obj_id in list(g.in_room_objects(node_id)):
            if obj_id in g.objects:
                _drop_node(g, obj_id, hoist_to=None)
        del g.rooms[node_id]
        g.relations = {r for r in g.relations if node_id not in (r.src, r.dst)}
    else:
        hoist_to = g.room_of(node_id)
        _drop_node(g, node_id, hoist_to=hoist_to)

    g.bump()
    violations = check_invariants(g)
    if violations:
        raise InvariantViolation(violations)
    return g


def _drop_node(g: SceneGraph, node_id: str, hoist_to: str | None):
    """Delete one object/agent in place; direct children re-parent to
    `hoist_to` (or are deleted when there is nowhere to go)."""
    children = [
        rel.src
        for rel in g.relations
        if rel.kind in ("inside", "on_top", "held_by") and rel.dst == node_id
    ]
    g.relations = {r for r in g.relations if node_id not in (r.src, r.dst)}
    for child in sorted(children):
        if hoist_to is not None:
            g.relations.add(Relation("in_room", child, hoist_to))
        else:
            _drop_node(g, child, hoist_to=None)
    if node_id in g.objects:
        del g.objects[node_id]
    elif node_id in g.agents:
        del g.agents[node_id]
    # strip the object out of any holder's list
    for agent in g.agents.values():
        if node_id in agent.holding:
            agent.holding = [h for h in agent.holding if h != node_id]


# ── observation ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class DoorView:
    id: str
    open: bool
    locked: bool
    mechanism: str | None
    to_room: str


@dataclass(frozen=True)
class VisibleObject:
    id: str
    category: str
    display_name: str
    states: tuple[tuple[str, bool], ...]
    relations: tuple[Relation, ...]
    color: str | None = None
    arrangement_size: int | None = None  # visible slot count, never the order


@dataclass(frozen=True)
class Observation:
    agent_id: str
    room_id: str
    visible_objects: tuple[VisibleObject, ...]
    held: tuple[str, ...]
    doors: tuple[DoorView, ...]
    read_clues: tuple[tuple[str, ClueText], ...]
    co_located_agents: tuple[str, ...]

    def visible_ids(self) -> list[str]:
        return [v.id for v in self.visible_objects]

    def to_document(self) -> dict:
        return {
            "agent": self.agent_id,
            "room": self.room_id,
            "objects": [
                {
                    "id": v.id,
                    "category": v.category,
                    "name": v.display_name,
                    "states": dict(v.states),
                    "relations": [
                        {"kind": r.kind, "src": r.src, "dst": r.dst}
                        for r in v.relations
                    ],
                    "color": v.color,
                    "arrangement_size": v.arrangement_size,
                }
                for v in self.visible_objects
            ],
            "held": list(self.held),
            "doors": [
                {
                    "id": d.id,
                    "open": d.open,
                    "locked": d.locked,
                    "mechanism": d.mechanism,
                    "to": d.to_room,
                }
                for d in self.doors
            ],
            "read_clues": [
                [oid, _clue_doc(clue)] for oid, clue in self.read_clues
            ],
            "agents": list(self.co_located_agents),
        }

    def digest(self) -> dict:
        """Compact per-step record stored in episode traces: room,
        visible ids, and a hash of the full document."""
        doc = canonical_json(self.to_document())
        return {
            "room": self.room_id,
            "visible": self.visible_ids(),
            "sha256": hashlib.sha256(doc.encode()).hexdigest()[:16],
        }


def observe(graph: SceneGraph, agent_id: str) -> Observation:
    """Partial view from one agent: the current room's contents outside
    closed containers, the agent's own held items, doors touching the
    room, and the agent's clue memory.  Deterministic for a given
    (revision, agent)."""
    if agent_id not in graph.agents:
        raise UnknownAgent(agent_id)
    agent = graph.agents[agent_id]
    room_rel = graph.parent_relation(agent_id)
    room_id = room_rel.dst if room_rel else None
    if room_id is None:
        raise InvariantViolation(
            [Violation("agent_location", (agent_id,), "agent has no room")]
        )

    door_ids = set(graph.doors_touching(room_id))
    visible: set[str] = set(door_ids)
    for obj_id in graph.objects:
        if obj_id in visible:
            continue
        if graph.room_of(obj_id) == room_id and graph.chain_visible(obj_id):
            visible.add(obj_id)

    vis_objects = []
    for obj_id in sorted(visible):
        obj = graph.objects[obj_id]
        rel = graph.parent_relation(obj_id)
        rels: list[Relation] = []
        if rel is not None and (rel.dst in visible or rel.dst == room_id or rel.dst in graph.agents):
            rels.append(rel)
        vis_objects.append(
            VisibleObject(
                id=obj.id,
                category=obj.category,
                display_name=obj.display_name,
                states=tuple(sorted(obj.states.items())),
                relations=tuple(sorted(rels)),
                color=obj.color,
                arrangement_size=(
                    len(obj.arrangement.order) if obj.arrangement else None
                ),
            )
        )

    doors = []
    for door_id in sorted(door_ids):
        door = graph.objects[door_id]
        others = [d for d in graph.door_destinations(door_id) if d != room_id]
        doors.append(
            DoorView(
                id=door_id,
                open=door.states.get("open", False),
                locked=door.states.get("locked", False),
                mechanism=door.lock.mechanism if door.lock else None,
                to_room=others[0] if others else room_id,
            )
        )

    return Observation(
        agent_id=agent_id,
        room_id=room_id,
        visible_objects=tuple(vis_objects),
        held=tuple(agent.holding),
        doors=tuple(doors),
        read_clues=tuple(agent.read_clues),
        co_located_agents=tuple(
            a for a in graph.agents_in_room(room_id) if a != agent_id
        ),
    )


# ── serialization ────────────────────────────────────────────────────────────

_OBJECT_KEYS = {
    "id",
    "category",
    "name",
    "affordances",
    "states",
    "clue",
    "lock",
    "color",
    "arrangement",
}
_CLUE_KEYS = {"text", "referent", "payload", "veracity"}
_LOCK_KEYS = {"mechanism", "key_id", "code"}


def _clue_doc(clue: ClueText) -> dict:
    doc: dict = {"text": clue.text, "veracity": clue.veracity}
    if clue.referent is not None:
        doc["referent"] = clue.referent
    if clue.payload is not None:
        doc["payload"] = clue.payload
    return doc


def serialize(graph: SceneGraph) -> dict:
    """Canonical interchange document (sorted lists throughout, so the
    same graph always yields the same bytes via canonical_json)."""
    objects = []
    for obj in (graph.objects[k] for k in sorted(graph.objects)):
        doc: dict = {
            "id": obj.id,
            "category": obj.category,
            "name": obj.display_name,
            "affordances": sorted(obj.affordances),
            "states": {k: obj.states[k] for k in sorted(obj.states)},
        }
        if obj.clue is not None:
            doc["clue"] = _clue_doc(obj.clue)
        if obj.lock is not None:
            lock: dict = {"mechanism": obj.lock.mechanism}
            if obj.lock.key_id is not None:
                lock["key_id"] = obj.lock.key_id
            if obj.lock.code is not None:
                lock["code"] = obj.lock.code
            doc["lock"] = lock
        if obj.color is not None:
            doc["color"] = obj.color
        if obj.arrangement is not None:
            doc["arrangement"] = {
                "order": list(obj.arrangement.order),
                "reveals": obj.arrangement.reveals,
            }
        objects.append(doc)
    return {
        "rooms": [
            {"id": r.id, "name": r.name} for r in (graph.rooms[k] for k in sorted(graph.rooms))
        ],
        "objects": objects,
        "agents": [
            {
                "id": a.id,
                "capacity": a.capacity,
                "holding": list(a.holding),
                "read_clues": [[oid, _clue_doc(c)] for oid, c in a.read_clues],
            }
            for a in (graph.agents[k] for k in sorted(graph.agents))
        ],
        "relations": [
            {"kind": r.kind, "src": r.src, "dst": r.dst}
            for r in sorted(graph.relations)
        ],
        "revision": graph.revision,
    }


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def _require(doc: dict, key: str, path: str, kind, *, optional=False):
    if key not in doc:
        if optional:
            return None
        raise SchemaError(f"{path}/{key}", "missing required key")
    value = doc[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise SchemaError(f"{path}/{key}", "expected a boolean")
    elif kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise SchemaError(f"{path}/{key}", "expected an integer")
    elif not isinstance(value, kind):
        raise SchemaError(f"{path}/{key}", f"expected {kind.__name__}")
    return value


def _reject_unknown(doc: dict, allowed: set[str], path: str):
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"{path}/{unknown[0]}", "unknown key")


def parse_clue(doc, path: str) -> ClueText:
    if not isinstance(doc, dict):
        raise SchemaError(path, "clue must be an object")
    _reject_unknown(doc, _CLUE_KEYS, path)
    text = _require(doc, "text", path, str)
    veracity = doc.get("veracity", "accurate")
    if veracity not in ("accurate", "deceptive"):
        raise SchemaError(f"{path}/veracity", "must be accurate|deceptive")
    referent = doc.get("referent")
    if referent is not None and not isinstance(referent, str):
        raise SchemaError(f"{path}/referent", "expected string")
    payload = doc.get("payload")
    if payload is not None and not isinstance(payload, str):
        raise SchemaError(f"{path}/payload", "expected string")
    return ClueText(text=text, referent=referent, payload=payload, veracity=veracity)


def parse_object(doc, path: str) -> ObjectNode:
    if not isinstance(doc, dict):
        raise SchemaError(path, "object entry must be an object")
    _reject_unknown(doc, _OBJECT_KEYS, path)
    obj_id = _require(doc, "id", path, str)
    category = _require(doc, "category", path, str)
    name = _require(doc, "name", path, str)
    aff_doc = _require(doc, "affordances", path, list)
    for i, a in enumerate(aff_doc):
        if not isinstance(a, str) or a not in AFFORDANCES:
            raise SchemaError(f"{path}/affordances/{i}", f"unknown affordance {a!r}")
    states_doc = _require(doc, "states", path, dict)
    states = {}
    for key, value in states_doc.items():
        if key not in STATE_AFFORDANCE:
            raise SchemaError(f"{path}/states/{key}", "unknown state key")
        if not isinstance(value, bool):
            raise SchemaError(f"{path}/states/{key}", "state value must be boolean")
        states[key] = value
    clue = parse_clue(doc["clue"], f"{path}/clue") if "clue" in doc else None
    lock = None
    if "lock" in doc:
        lock_doc = doc["lock"]
        if not isinstance(lock_doc, dict):
            raise SchemaError(f"{path}/lock", "lock must be an object")
        _reject_unknown(lock_doc, _LOCK_KEYS, f"{path}/lock")
        mechanism = _require(lock_doc, "mechanism", f"{path}/lock", str)
        lock = LockSpec(
            mechanism=mechanism,
            key_id=lock_doc.get("key_id"),
            code=lock_doc.get("code"),
        )
    color = doc.get("color")
    if color is not None and not isinstance(color, str):
        raise SchemaError(f"{path}/color", "expected string")
    arrangement = None
    if "arrangement" in doc:
        arr = doc["arrangement"]
        if not isinstance(arr, dict):
            raise SchemaError(f"{path}/arrangement", "must be an object")
        _reject_unknown(arr, {"order", "reveals"}, f"{path}/arrangement")
        order = _require(arr, "order", f"{path}/arrangement", list)
        if not all(isinstance(c, str) for c in order):
            raise SchemaError(f"{path}/arrangement/order", "colors must be strings")
        reveals = _require(arr, "reveals", f"{path}/arrangement", str)
        arrangement = ArrangementSpec(order=tuple(order), reveals=reveals)
    return ObjectNode(
        id=obj_id,
        category=category,
        display_name=name,
        affordances=frozenset(aff_doc),
        states=states,
        clue=clue,
        lock=lock,
        color=color,
        arrangement=arrangement,
    )


def deserialize(doc) -> SceneGraph:
    """Parse and validate a scene-graph document; raises SchemaError
    with a path on any malformed or dangling field."""
    if not isinstance(doc, dict):
        raise SchemaError("/", "document must be an object")
    _reject_unknown(doc, {"rooms", "objects", "agents", "relations", "revision"}, "")
    g = SceneGraph()

    rooms = _require(doc, "rooms", "", list)
    for i, room_doc in enumerate(rooms):
        path = f"/rooms/{i}"
        if not isinstance(room_doc, dict):
            raise SchemaError(path, "room entry must be an object")
        _reject_unknown(room_doc, {"id", "name"}, path)
        room_id = _require(room_doc, "id", path, str)
        name = _require(room_doc, "name", path, str)
        if g.has_id(room_id):
            raise SchemaError(f"{path}/id", f"duplicate id {room_id!r}")
        g.rooms[room_id] = RoomNode(id=room_id, name=name)

    for i, obj_doc in enumerate(_require(doc, "objects", "", list)):
        obj = parse_object(obj_doc, f"/objects/{i}")
        if g.has_id(obj.id):
            raise SchemaError(f"/objects/{i}/id", f"duplicate id {obj.id!r}")
        g.objects[obj.id] = obj

    for i, agent_doc in enumerate(_require(doc, "agents", "", list)):
        path = f"/agents/{i}"
        if not isinstance(agent_doc, dict):
            raise SchemaError(path, "agent entry must be an object")
        _reject_unknown(agent_doc, {"id", "capacity", "holding", "read_clues"}, path)
        agent_id = _require(agent_doc, "id", path, str)
        capacity = _require(agent_doc, "capacity", path, int, optional=True)
        holding = _require(agent_doc, "holding", path, list, optional=True) or []
        clues_doc = _require(agent_doc, "read_clues", path, list, optional=True) or []
        read_clues = []
        for j, entry in enumerate(clues_doc):
            if not (isinstance(entry, list) and len(entry) == 2 and isinstance(entry[0], str)):
                raise SchemaError(f"{path}/read_clues/{j}", "expected [object_id, clue]")
            read_clues.append((entry[0], parse_clue(entry[1], f"{path}/read_clues/{j}")))
        if g.has_id(agent_id):
            raise SchemaError(f"{path}/id", f"duplicate id {agent_id!r}")
        g.agents[agent_id] = AgentNode(
            id=agent_id,
            capacity=capacity if capacity is not None else 1,
            holding=list(holding),
            read_clues=read_clues,
        )

    for i, rel_doc in enumerate(_require(doc, "relations", "", list)):
        path = f"/relations/{i}"
        if not isinstance(rel_doc, dict):
            raise SchemaError(path, "relation entry must be an object")
        _reject_unknown(rel_doc, {"kind", "src", "dst"}, path)
        kind = _require(rel_doc, "kind", path, str)
        src = _require(rel_doc, "src", path, str)
        dst = _require(rel_doc, "dst", path, str)
        if kind not in RELATION_KINDS:
            raise SchemaError(f"{path}/kind", f"unknown relation kind {kind!r}")
        for which, endpoint in (("src", src), ("dst", dst)):
            if not g.has_id(endpoint):
                raise SchemaError(
                    f"{path}/{which}", f"dangling reference to {endpoint!r}"
                )
        g.relations.add(Relation(kind, src, dst))

    g.revision = _require(doc, "revision", "", int)

    violations = check_invariants(g)
    if violations:
        first = violations[0]
        raise SchemaError("/", f"invariant violation: {first}")
    return g


def to_json(graph: SceneGraph) -> str:
    return canonical_json(serialize(graph))


def from_json(text: str) -> SceneGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("/", f"not valid JSON: {exc}") from exc
    return deserialize(doc)


# ── equality ─────────────────────────────────────────────────────────────────


def graph_equal(a: SceneGraph, b: SceneGraph, *, include_revision: bool = False) -> bool:
    """Structural equality over node sets, relation sets, and states.
    Revision is compared only when asked (serialization round-trips
    preserve it; edit-closure comparisons ignore it)."""
    if include_revision and a.revision != b.revision:
        return False
    if a.rooms != b.rooms:
        return False
    if set(a.objects) != set(b.objects):
        return False
    for oid, obj in a.objects.items():
        if obj != b.objects[oid]:
            return False
    if set(a.agents) != set(b.agents):
        return False
    for aid, agent in a.agents.items():
        other = b.agents[aid]
        if (
            agent.capacity != other.capacity
            or sorted(agent.holding) != sorted(other.holding)
            or agent.read_clues != other.read_clues
        ):
            return False
    return a.relations == b.relations
