"""Seeded escape-room generation, four difficulty levels.

Level 1: the exit door is key-locked; the key sits in a closed
container named by a visible note.

Level 2: as level 1, but the note naming the container starts hidden;
a visible note states a color order, and arranging the colored statues
on the pedestal in that order reveals the hidden note.

Level 3: the exit door is code-locked; two independent note-to-
container chains (one per room when there are two) each end in a note
carrying half the code; the code is fragment A then fragment B.

Level 4: as level 1, plus a deceptive note pointing at a decoy
container that holds nothing (or a key that does not fit).  Exactly one
chain is consistent, which `deception_probe` checks by giving the
solver only the deceptive knowledge and expecting Unsolvable.

All levels add `decoy_objects` distractors drawn from the same
categories the puzzles use, and every instance ships a certificate from
the breadth-first oracle.  Generation is deterministic per
(level, seed): every random draw comes from one stream, and the
rejection-sampling retry counter is folded into that stream.
"""

from __future__ import annotations

from dataclasses import dataclass

from .actions import action_from_wire, action_to_wire, apply
from .rng import Rng, mix
from .scene_graph import (
    AgentNode,
    ArrangementSpec,
    ClueText,
    LockSpec,
    ObjectNode,
    Relation,
    RoomNode,
    SceneGraph,
    SchemaError,
    check_invariants,
    deserialize,
    serialize,
)
from .solver import (
    SolutionCertificate,
    _advance_flags,
    _satisfied_mask,
    solve,
)
from .tasks import Conjunct, GoalSpec, goal_from_document

MAX_ATTEMPTS = 32

ROOM_NAMES = ("Study", "Cellar", "Gallery", "Atrium")
COLORS = ("red", "green", "blue", "yellow", "purple")
DECOY_CATEGORIES = ("box", "note", "vase", "plant", "cloth")


class GenerationFailure(Exception):
    pass


@dataclass(frozen=True)
class LevelConfig:
    level: int
    seed: int
    room_count: int | None = None  # default depends on level: 1,1,2,2
    decoy_objects: int = 3
    code_length: int = 4

    def __post_init__(self):
        if self.level not in (1, 2, 3, 4):
            raise ValueError(f"level must be 1..4, got {self.level}")
        rooms = self.rooms
        if not 1 <= rooms <= 4:
            raise ValueError(f"room_count must be within [1, 4], got {rooms}")
        if self.decoy_objects < 0:
            raise ValueError("decoy_objects must be >= 0")
        if not 2 <= self.code_length <= 8:
            raise ValueError("code_length must be within [2, 8]")

    @property
    def rooms(self) -> int:
        if self.room_count is not None:
            return self.room_count
        return {1: 1, 2: 1, 3: 2, 4: 2}[self.level]


@dataclass(frozen=True)
class GeneratedRoom:
    graph: SceneGraph
    goal: GoalSpec
    certificate: SolutionCertificate
    level: int
    seed: int

    def to_document(self) -> dict:
        return {
            "schema_version": "1",
            "level": self.level,
            "seed": self.seed,
            "graph": serialize(self.graph),
            "goal": self.goal.to_document(),
            "certificate": self.certificate.to_document(),
        }


def room_from_document(doc) -> GeneratedRoom:
    if not isinstance(doc, dict):
        raise SchemaError("/", "room document must be an object")
    for key in ("level", "seed", "graph", "goal", "certificate"):
        if key not in doc:
            raise SchemaError(f"/{key}", "missing")
    cert_doc = doc["certificate"]
    plan = tuple(
        (step["agent"], action_from_wire(step["action"]))
        for step in cert_doc.get("plan", [])
    )
    return GeneratedRoom(
        graph=deserialize(doc["graph"]),
        goal=goal_from_document(doc["goal"]),
        certificate=SolutionCertificate(
            plan=plan, optimal_length=cert_doc.get("optimal_length", len(plan))
        ),
        level=doc["level"],
        seed=doc["seed"],
    )


@dataclass(frozen=True)
class CertificateMismatch:
    index: int
    detail: str


# ── construction helpers ─────────────────────────────────────────────────────


class _Builder:
    """Accumulates nodes with per-category id counters so layouts stay
    deterministic and collision-free."""

    def __init__(self, rng: Rng):
        self.g = SceneGraph()
        self.rng = rng
        self.counters: dict[str, int] = {}

    def fresh_id(self, category: str) -> str:
        n = self.counters.get(category, 0) + 1
        self.counters[category] = n
        return f"{category}_{n}"

    def room(self, name: str) -> str:
        rid = self.fresh_id("room")
        self.g.rooms[rid] = RoomNode(rid, name)
        return rid

    def obj(self, category, room, *, affordances=None, states=None, clue=None,
            lock=None, color=None, arrangement=None, relation="in_room",
            display=None) -> str:
        from .scene_graph import CATEGORY_AFFORDANCES

        oid = self.fresh_id(category)
        self.g.objects[oid] = ObjectNode(
            id=oid,
            category=category,
            display_name=display or oid.replace("_", " "),
            affordances=frozenset(affordances) if affordances
            else CATEGORY_AFFORDANCES[category],
            states=dict(states or {}),
            clue=clue,
            lock=lock,
            color=color,
            arrangement=arrangement,
        )
        self.g.relations.add(Relation(relation, oid, room))
        return oid

    def door(self, room_a: str, room_b: str, *, states=None, lock=None) -> str:
        did = self.obj("door", room_a, states=states or {"open": True}, lock=lock)
        self.g.relations.add(Relation("connects", did, room_a))
        self.g.relations.add(Relation("connects", did, room_b))
        return did

    def agent(self, room: str) -> str:
        aid = f"agent_{len(self.g.agents) + 1}"
        self.g.agents[aid] = AgentNode(aid, capacity=1)
        self.g.relations.add(Relation("in_room", aid, room))
        return aid


def _chain(b: _Builder, room: str, payload: str | None, with_key: bool):
    """A note naming a closed box; the box holds a key, a fragment
    note, or both never.  Returns (pointer note id, box id, key id)."""
    box = b.obj("box", room, states={"open": False})
    box_name = b.g.objects[box].display_name
    key_id = None
    if with_key:
        key_id = b.obj("key", box, relation="inside")
    if payload is not None:
        b.obj(
            "note", box, relation="inside",
            clue=ClueText(text=f"Scrawled digits: {payload.split(':')[-1]}.",
                          payload=payload),
        )
    pointer = b.obj(
        "note", room,
        clue=ClueText(text=f"Look inside the {box_name}.", referent=box),
    )
    return pointer, box, key_id


def _decoys(b: _Builder, rooms: list[str], count: int):
    for _ in range(count):
        category = b.rng.choice(DECOY_CATEGORIES)
        room = b.rng.choice(rooms)
        if category == "box":
            b.obj("box", room, states={"open": False})
        elif category == "note":
            b.obj("note", room, clue=ClueText(text="The page is blank."))
        else:
            b.obj(category, room)


def _build_level(config: LevelConfig, rng: Rng) -> tuple[SceneGraph, GoalSpec]:
    b = _Builder(rng)
    rooms = [b.room(ROOM_NAMES[i % len(ROOM_NAMES)]) for i in range(config.rooms)]
    for i in range(len(rooms) - 1):
        b.door(rooms[i], rooms[i + 1])
    outside = "outside"
    b.g.rooms[outside] = RoomNode(outside, "Outside")

    level = config.level
    if level in (1, 2, 4):
        exit_room = rooms[0]
        pointer, box, key_id = _chain(b, rooms[0], payload=None, with_key=True)
        exit_door = b.obj(
            "door", exit_room, states={"open": False, "locked": True},
            lock=LockSpec(mechanism="key", key_id=key_id), display="exit door",
        )
        b.g.relations.add(Relation("connects", exit_door, exit_room))
        b.g.relations.add(Relation("connects", exit_door, outside))

        if level == 2:
            # hide the pointer note; arranging statues reveals it
            note = b.g.objects[pointer]
            note.states["revealed"] = False
            colors = rng.sample(list(COLORS), 2)
            b.obj(
                "pedestal", rooms[0],
                arrangement=ArrangementSpec(order=tuple(colors), reveals=pointer),
            )
            for color in sorted(colors):
                b.obj("statue", rooms[0], color=color)
            b.obj(
                "note", rooms[0],
                clue=ClueText(
                    text="The statues belong in order: " + ", ".join(colors) + ".",
                    payload="order:" + ",".join(colors),
                ),
            )
        if level == 4:
            decoy_room = rooms[-1]
            decoy_box = b.obj("box", decoy_room, states={"open": False})
            if rng.below(2):
                # wrong key, observably mismatched against the lock
                b.obj("key", decoy_box, relation="inside")
            box_name = b.g.objects[decoy_box].display_name
            b.obj(
                "note", rooms[0],
                clue=ClueText(
                    text=f"The key waits in the {box_name}.",
                    referent=decoy_box,
                    veracity="deceptive",
                ),
            )
    else:  # level 3
        exit_room = rooms[-1]
        half = config.code_length // 2
        frag_a = rng.digits(half)
        frag_b = rng.digits(config.code_length - half)
        exit_door = b.obj(
            "door", exit_room, states={"open": False, "locked": True},
            lock=LockSpec(mechanism="code", code=frag_a + frag_b),
            display="exit door",
        )
        b.g.relations.add(Relation("connects", exit_door, exit_room))
        b.g.relations.add(Relation("connects", exit_door, outside))
        _chain(b, rooms[0], payload=f"code:A:{frag_a}", with_key=False)
        _chain(b, rooms[-1], payload=f"code:B:{frag_b}", with_key=False)

    b.agent(rooms[0])
    _decoys(b, rooms, config.decoy_objects)

    goal = GoalSpec(
        conjuncts=(Conjunct(kind="door_open", target=exit_door),),
        description="open the exit door",
    )
    return b.g, goal


def generate(config: LevelConfig, budget: int = 50_000) -> GeneratedRoom:
    """Deterministic for (level, seed); rejection-samples until the
    oracle certifies the instance, up to MAX_ATTEMPTS re-rolls."""
    for attempt in range(MAX_ATTEMPTS):
        rng = Rng(mix(config.seed, "generate", config.level, attempt))
        graph, goal = _build_level(config, rng)
        violations = check_invariants(graph)
        if violations:
            continue
        result = solve(graph, goal, budget=budget)
        if isinstance(result, SolutionCertificate):
            graph.revision = 0
            return GeneratedRoom(
                graph=graph,
                goal=goal,
                certificate=result,
                level=config.level,
                seed=config.seed,
            )
    raise GenerationFailure(
        f"no solvable level-{config.level} instance within "
        f"{MAX_ATTEMPTS} attempts for seed {config.seed}"
    )


def verify(room: GeneratedRoom):
    """Replay the certificate; ok is True iff every step applies and
    the goal (with ordering and assignment flags) holds at the end."""
    g = room.graph
    goal = room.goal
    mask = _satisfied_mask(g, goal)
    ever, order_ok, assign_ok = _advance_flags(goal, mask, 0, True, True, None)
    for index, (agent_id, action) in enumerate(room.certificate.plan):
        if agent_id not in g.agents:
            return CertificateMismatch(index, f"no agent {agent_id!r}")
        g, outcome = apply(g, agent_id, action)
        if not outcome.ok:
            return CertificateMismatch(
                index,
                f"{action_to_wire(action)} rejected: {outcome.error.value}",
            )
        mask = _satisfied_mask(g, goal)
        ever, order_ok, assign_ok = _advance_flags(
            goal, mask, ever, order_ok, assign_ok, agent_id
        )
    full = (1 << len(goal.conjuncts)) - 1
    if mask != full:
        return CertificateMismatch(
            len(room.certificate.plan), "goal unsatisfied after replay"
        )
    if not order_ok or not assign_ok:
        return CertificateMismatch(
            len(room.certificate.plan), "ordering or assignment violated"
        )
    return True


def deception_probe(room: GeneratedRoom, budget: int = 50_000):
    """Level-4 identifiability: strip the accurate pointer notes and
    pre-read the deceptive one, then ask the oracle.  A well-formed
    instance is Unsolvable on the deceptive chain alone."""
    if room.level != 4:
        raise ValueError("deception_probe only applies to level 4")
    g = room.graph.clone()
    deceptive = [
        oid
        for oid in sorted(g.objects)
        if g.objects[oid].clue is not None
        and g.objects[oid].clue.veracity == "deceptive"
    ]
    accurate = [
        oid
        for oid in sorted(g.objects)
        if g.objects[oid].clue is not None
        and g.objects[oid].clue.veracity == "accurate"
        and g.objects[oid].clue.referent is not None
    ]
    for oid in accurate:
        rel = g.parent_relation(oid)
        g.relations.discard(rel)
        del g.objects[oid]
    for agent_id in sorted(g.agents):
        for oid in deceptive:
            g.agents[agent_id].read_clues.append((oid, g.objects[oid].clue))
    g.bump()
    return solve(g, room.goal, budget=budget)
