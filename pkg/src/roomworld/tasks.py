"""Structured task interface.

A task spec is the JSON document an external language model produces
from a free-text instruction: an opaque description, an ordered list of
subgoals, and constraints (temporal order, agent assignment).  This
module owns schema validation, the object-requirement calculus, scene
instantiation (reuse existing objects first, mint the rest), and the
predicate evaluator that goal checking builds on.

Subgoal kinds and their parameters (exactly one of the id/category
forms per slot):

    object_in   object_id|object_category, target_id|target_category
    object_on   object_id|object_category, target_id|target_category
    state_is    target_id|target_category, state: token
    door_open   target_id|target_category (category defaults to door)
    clue_solved target_id|target_category
    held_by     object_id|object_category, agent_id (optional: anyone)

State tokens map to (state key, value): locked/unlocked, open/closed,
on/off, revealed/hidden.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .rng import Rng, mix
from .scene_graph import (
    CATEGORIES,
    CATEGORY_AFFORDANCES,
    ObjectNode,
    Relation,
    SceneGraph,
    SchemaError,
    check_invariants,
)

SCHEMA_VERSION = "1"


class CycleError(Exception):
    pass


class InstantiationError(Exception):
    pass


STATE_TOKENS = {
    "locked": ("locked", True),
    "unlocked": ("locked", False),
    "open": ("open", True),
    "closed": ("open", False),
    "on": ("on", True),
    "off": ("on", False),
    "revealed": ("revealed", True),
    "hidden": ("revealed", False),
}

# defaults when an object carries no such state key at all, matching
# the visibility rules (stateless containers count as open, objects
# without a revealed flag count as revealed)
_STATE_DEFAULTS = {"revealed": True, "open": True}

SUBGOAL_KINDS = (
    "object_in",
    "object_on",
    "state_is",
    "door_open",
    "clue_solved",
    "held_by",
)


@dataclass(frozen=True)
class SubGoal:
    kind: str
    object_id: str | None = None
    object_category: str | None = None
    target_id: str | None = None
    target_category: str | None = None
    state: str | None = None
    agent_id: str | None = None

    def to_document(self) -> dict:
        doc = {"kind": self.kind}
        for key in ("object_id", "object_category", "target_id",
                    "target_category", "state", "agent_id"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return doc


@dataclass(frozen=True)
class TaskSpec:
    description: str
    subgoals: tuple[SubGoal, ...]
    ordering: tuple[tuple[int, int], ...] = ()
    assignments: tuple[tuple[int, str], ...] = ()

    def to_document(self) -> dict:
        constraints: list[dict] = [
            {"order": [i, j]} for i, j in self.ordering
        ] + [
            {"assign": {"subgoal": i, "agent": a}} for i, a in self.assignments
        ]
        return {
            "schema_version": SCHEMA_VERSION,
            "description": self.description,
            "subgoals": [s.to_document() for s in self.subgoals],
            "constraints": constraints,
        }


@dataclass(frozen=True)
class ObjectRequirement:
    category: str | None  # None when pinned to an explicit id
    object_id: str | None
    count: int
    affordances: frozenset[str]
    hint: str | None = None  # room id the minted object should land in

    def to_document(self) -> dict:
        return {
            "category": self.category,
            "object_id": self.object_id,
            "count": self.count,
            "affordances": sorted(self.affordances),
            "hint": self.hint,
        }


@dataclass(frozen=True)
class Conjunct:
    """A subgoal with all references resolved to concrete ids."""

    kind: str
    object: str | None = None
    target: str | None = None
    state: str | None = None
    agent: str | None = None

    def to_document(self) -> dict:
        doc = {"kind": self.kind}
        for key in ("object", "target", "state", "agent"):
            value = getattr(self, key)
            if value is not None:
                doc[key] = value
        return doc

    def describe(self) -> str:
        if self.kind in ("object_in", "object_on"):
            rel = "inside" if self.kind == "object_in" else "on top of"
            return f"{self.object} {rel} {self.target}"
        if self.kind == "state_is":
            return f"{self.target} is {self.state}"
        if self.kind == "door_open":
            return f"{self.target} is open"
        if self.kind == "clue_solved":
            return f"{self.target} has been read"
        if self.kind == "held_by":
            holder = self.agent or "some agent"
            return f"{holder} holds {self.object}"
        return self.kind


@dataclass(frozen=True)
class GoalSpec:
    conjuncts: tuple[Conjunct, ...]
    ordering: tuple[tuple[int, int], ...] = ()
    assignments: tuple[tuple[int, str], ...] = ()
    description: str = ""

    def assignment_of(self, index: int) -> str | None:
        for i, agent in self.assignments:
            if i == index:
                return agent
        return None

    def predecessors_of(self, index: int) -> list[int]:
        return sorted(i for i, j in self.ordering if j == index)

    def to_document(self) -> dict:
        return {
            "description": self.description,
            "conjuncts": [c.to_document() for c in self.conjuncts],
            "ordering": [list(pair) for pair in self.ordering],
            "assignments": [[i, a] for i, a in self.assignments],
        }


def goal_from_document(doc) -> GoalSpec:
    if not isinstance(doc, dict):
        raise SchemaError("/goal", "goal must be an object")
    conjuncts = []
    for i, c in enumerate(doc.get("conjuncts", [])):
        if not isinstance(c, dict) or "kind" not in c:
            raise SchemaError(f"/goal/conjuncts/{i}", "malformed conjunct")
        conjuncts.append(
            Conjunct(
                kind=c["kind"],
                object=c.get("object"),
                target=c.get("target"),
                state=c.get("state"),
                agent=c.get("agent"),
            )
        )
    return GoalSpec(
        conjuncts=tuple(conjuncts),
        ordering=tuple((int(i), int(j)) for i, j in doc.get("ordering", [])),
        assignments=tuple((int(i), a) for i, a in doc.get("assignments", [])),
        description=doc.get("description", ""),
    )


# ── schema validation ────────────────────────────────────────────────────────

_SUBGOAL_SLOTS = {
    "object_in": ("object", "target"),
    "object_on": ("object", "target"),
    "state_is": ("target",),
    "door_open": ("target",),
    "clue_solved": ("target",),
    "held_by": ("object",),
}


def _parse_subgoal(doc, path: str) -> SubGoal:
    if not isinstance(doc, dict):
        raise SchemaError(path, "subgoal must be an object")
    kind = doc.get("kind")
    if kind not in SUBGOAL_KINDS:
        raise SchemaError(f"{path}/kind", f"unknown subgoal kind {kind!r}")
    slots = _SUBGOAL_SLOTS[kind]
    allowed = {"kind"}
    for slot in slots:
        allowed |= {f"{slot}_id", f"{slot}_category"}
    if kind == "state_is":
        allowed.add("state")
    if kind == "held_by":
        allowed.add("agent_id")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise SchemaError(f"{path}/{unknown[0]}", "unknown key")
    kwargs: dict = {"kind": kind}
    for slot in slots:
        id_key, cat_key = f"{slot}_id", f"{slot}_category"
        has_id, has_cat = id_key in doc, cat_key in doc
        if has_id == has_cat:
            raise SchemaError(
                path, f"subgoal needs exactly one of {id_key} or {cat_key}"
            )
        if has_id:
            if not isinstance(doc[id_key], str):
                raise SchemaError(f"{path}/{id_key}", "expected string")
            kwargs[id_key] = doc[id_key]
        else:
            if doc[cat_key] not in CATEGORIES:
                raise SchemaError(
                    f"{path}/{cat_key}", f"unknown category {doc[cat_key]!r}"
                )
            kwargs[cat_key] = doc[cat_key]
    if kind == "state_is":
        state = doc.get("state")
        if state not in STATE_TOKENS:
            raise SchemaError(f"{path}/state", f"unknown state token {state!r}")
        kwargs["state"] = state
    if kind == "held_by" and "agent_id" in doc:
        if not isinstance(doc["agent_id"], str):
            raise SchemaError(f"{path}/agent_id", "expected string")
        kwargs["agent_id"] = doc["agent_id"]
    return SubGoal(**kwargs)


def validate_task_spec(document) -> TaskSpec:
    """Strict parse; SchemaError names the offending path, CycleError
    fires on circular temporal constraints."""
    if not isinstance(document, dict):
        raise SchemaError("/", "task spec must be an object")
    allowed = {"schema_version", "description", "subgoals", "constraints"}
    unknown = sorted(set(document) - allowed)
    if unknown:
        raise SchemaError(f"/{unknown[0]}", "unknown key")
    version = document.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaError("/schema_version", f"unsupported version {version!r}")
    description = document.get("description", "")
    if not isinstance(description, str):
        raise SchemaError("/description", "expected string")
    subgoals_doc = document.get("subgoals")
    if not isinstance(subgoals_doc, list) or not subgoals_doc:
        raise SchemaError("/subgoals", "empty")
    subgoals = tuple(
        _parse_subgoal(sg, f"/subgoals/{i}") for i, sg in enumerate(subgoals_doc)
    )

    ordering: list[tuple[int, int]] = []
    assignments: list[tuple[int, str]] = []
    for i, c in enumerate(document.get("constraints", [])):
        path = f"/constraints/{i}"
        if not isinstance(c, dict) or len(c) != 1:
            raise SchemaError(path, "constraint must be a one-key object")
        if "order" in c:
            pair = c["order"]
            if (
                not isinstance(pair, list)
                or len(pair) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in pair)
            ):
                raise SchemaError(f"{path}/order", "expected [before, after]")
            for x in pair:
                if not 0 <= x < len(subgoals):
                    raise SchemaError(f"{path}/order", f"subgoal index {x} out of range")
            if pair[0] == pair[1]:
                raise CycleError(f"order constraint {pair} is self-referential")
            ordering.append((pair[0], pair[1]))
        elif "assign" in c:
            a = c["assign"]
            if (
                not isinstance(a, dict)
                or not isinstance(a.get("subgoal"), int)
                or not isinstance(a.get("agent"), str)
            ):
                raise SchemaError(f"{path}/assign", "expected {subgoal, agent}")
            if not 0 <= a["subgoal"] < len(subgoals):
                raise SchemaError(
                    f"{path}/assign", f"subgoal index {a['subgoal']} out of range"
                )
            assignments.append((a["subgoal"], a["agent"]))
        else:
            raise SchemaError(path, "constraint must be order or assign")

    _check_acyclic(ordering, len(subgoals))
    return TaskSpec(
        description=description,
        subgoals=subgoals,
        ordering=tuple(ordering),
        assignments=tuple(assignments),
    )


def _check_acyclic(ordering, n):
    adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in ordering:
        adj[i].append(j)
    state = [0] * n  # 0 unseen, 1 on stack, 2 done

    def visit(node, trail):
        if state[node] == 1:
            raise CycleError(f"temporal constraints loop through subgoal {node}")
        if state[node] == 2:
            return
        state[node] = 1
        for nxt in adj[node]:
            visit(nxt, trail + [nxt])
        state[node] = 2

    for i in range(n):
        visit(i, [i])


# ── requirement calculus ─────────────────────────────────────────────────────

_SUBJECT_AFFORDANCES = frozenset({"graspable"})

_STATE_AFF = {
    "locked": "lockable",
    "open": "openable",
    "on": "toggleable",
    "revealed": "readable",
}


def _demands(subgoal: SubGoal) -> list[tuple[str | None, str | None, frozenset[str]]]:
    """(category, object_id, affordances) demanded by one subgoal, in
    slot order (subject before target)."""
    out = []
    if subgoal.kind in ("object_in", "object_on", "held_by"):
        out.append((subgoal.object_category, subgoal.object_id, _SUBJECT_AFFORDANCES))
    if subgoal.kind == "object_in":
        out.append((subgoal.target_category, subgoal.target_id, frozenset({"container"})))
    elif subgoal.kind == "object_on":
        out.append((subgoal.target_category, subgoal.target_id, frozenset({"surface"})))
    elif subgoal.kind == "state_is":
        key, _ = STATE_TOKENS[subgoal.state]
        out.append(
            (subgoal.target_category, subgoal.target_id, frozenset({_STATE_AFF[key]}))
        )
    elif subgoal.kind == "door_open":
        out.append((subgoal.target_category, subgoal.target_id, frozenset({"openable"})))
    elif subgoal.kind == "clue_solved":
        out.append((subgoal.target_category, subgoal.target_id, frozenset({"readable"})))
    return out


def required_objects(spec: TaskSpec) -> list[ObjectRequirement]:
    """One requirement per distinct reference (category or explicit
    id), with affordances unioned across every subgoal that demands it.
    Count is the largest number of distinct instances any single
    subgoal co-requires (subject and target of the same category must
    be two objects); duplicate subgoals therefore collapse to count 1.
    Output order is first-encounter order over subgoals, which is
    deterministic for a given spec."""
    order: list[tuple] = []
    affordances: dict[tuple, set[str]] = {}
    counts: dict[tuple, int] = {}
    for subgoal in spec.subgoals:
        per_subgoal: dict[tuple, int] = {}
        for category, object_id, demanded in _demands(subgoal):
            key = (category, object_id)
            if key not in affordances:
                order.append(key)
                affordances[key] = set()
                counts[key] = 0
            affordances[key] |= demanded
            per_subgoal[key] = per_subgoal.get(key, 0) + 1
        for key, n in per_subgoal.items():
            counts[key] = max(counts[key], n)
    return [
        ObjectRequirement(
            category=category,
            object_id=object_id,
            count=counts[(category, object_id)],
            affordances=frozenset(affordances[(category, object_id)]),
        )
        for category, object_id in order
    ]


# ── instantiation ────────────────────────────────────────────────────────────


def _matching_objects(graph: SceneGraph, req: ObjectRequirement) -> list[str]:
    out = []
    for oid in sorted(graph.objects):
        obj = graph.objects[oid]
        if req.category is not None and obj.category != req.category:
            continue
        if not req.affordances <= obj.affordances:
            continue
        out.append(oid)
    return out


def _mint_id(graph: SceneGraph, category: str) -> str:
    n = 1
    while graph.has_id(f"{category}_{n}"):
        n += 1
    return f"{category}_{n}"


def instantiate(
    spec: TaskSpec, base: SceneGraph, seed: int
) -> tuple[SceneGraph, GoalSpec]:
    """Satisfy every requirement against the base scene — reuse
    matching objects first, mint and place the rest (seeded) — and
    compile the goal with concrete ids."""
    if not base.rooms:
        raise InstantiationError("base scene has no rooms")
    rng = Rng(mix(seed, "instantiate"))
    g = base.clone()
    claimed: dict[tuple, list[str]] = {}
    taken: set[str] = set()

    for req in required_objects(spec):
        key = (req.category, req.object_id)
        if req.object_id is not None:
            if req.count > 1:
                raise InstantiationError(
                    f"{req.object_id} demanded as {req.count} distinct objects"
                )
            if req.object_id not in g.objects:
                raise InstantiationError(f"no object {req.object_id!r} in base scene")
            if not req.affordances <= g.objects[req.object_id].affordances:
                raise InstantiationError(
                    f"{req.object_id} lacks {sorted(req.affordances)}"
                )
            claimed[key] = [req.object_id]
            taken.add(req.object_id)
            continue
        available = [o for o in _matching_objects(g, req) if o not in taken]
        chosen = available[: req.count]
        while len(chosen) < req.count:
            oid = _mint_id(g, req.category)
            affordances = CATEGORY_AFFORDANCES[req.category] | req.affordances
            states: dict[str, bool] = {}
            if "openable" in affordances:
                states["open"] = True
            if "toggleable" in affordances:
                states["on"] = False
            room = rng.choice(sorted(g.rooms))
            if req.hint is not None:
                if req.hint not in g.rooms:
                    raise InstantiationError(f"placement hint {req.hint!r} not in base")
                room = req.hint
            g.objects[oid] = ObjectNode(
                id=oid,
                category=req.category,
                display_name=req.category.replace("_", " "),
                affordances=affordances,
                states=states,
            )
            g.relations.add(Relation("in_room", oid, room))
            chosen.append(oid)
        claimed[key] = chosen
        taken.update(chosen)

    conjuncts = []
    for subgoal in spec.subgoals:
        # subject and target of the same reference must resolve to
        # distinct claimed instances, hence the per-subgoal cursor
        cursor: dict[tuple, int] = {}

        def resolve(category, object_id, _affordances) -> str:
            key = (category, object_id)
            i = cursor.get(key, 0)
            cursor[key] = i + 1
            return claimed[key][i]

        demands = _demands(subgoal)
        kwargs: dict = {"kind": subgoal.kind, "state": subgoal.state,
                        "agent": subgoal.agent_id}
        if subgoal.kind in ("object_in", "object_on", "held_by"):
            kwargs["object"] = resolve(*demands[0])
            if subgoal.kind != "held_by":
                kwargs["target"] = resolve(*demands[1])
        else:
            kwargs["target"] = resolve(*demands[0])
        conjuncts.append(Conjunct(**kwargs))

    violations = check_invariants(g)
    if violations:
        raise InstantiationError(str(violations[0]))
    g.bump()
    return g, GoalSpec(
        conjuncts=tuple(conjuncts),
        ordering=spec.ordering,
        assignments=spec.assignments,
        description=spec.description,
    )


# ── predicate evaluation ─────────────────────────────────────────────────────


def conjunct_holds(graph: SceneGraph, conjunct: Conjunct) -> bool:
    """Evaluate one resolved conjunct against the current graph.
    Missing referents simply make the predicate false (goals over
    deleted objects are unsatisfied, not errors)."""
    kind = conjunct.kind
    if kind in ("object_in", "object_on"):
        if conjunct.object not in graph.objects:
            return False
        rel = graph.parent_relation(conjunct.object)
        want = "inside" if kind == "object_in" else "on_top"
        return rel is not None and rel.kind == want and rel.dst == conjunct.target
    if kind in ("state_is", "door_open"):
        target = graph.objects.get(conjunct.target)
        if target is None:
            return False
        key, value = STATE_TOKENS[conjunct.state or "open"]
        default = _STATE_DEFAULTS.get(key, False)
        return target.states.get(key, default) == value
    if kind == "clue_solved":
        return any(
            oid == conjunct.target
            for agent in graph.agents.values()
            for oid, _ in agent.read_clues
        )
    if kind == "held_by":
        if conjunct.object not in graph.objects:
            return False
        rel = graph.parent_relation(conjunct.object)
        if rel is None or rel.kind != "held_by":
            return False
        return conjunct.agent is None or rel.dst == conjunct.agent
    raise ValueError(f"unknown conjunct kind {kind!r}")


def goal_satisfied(graph: SceneGraph, goal: GoalSpec) -> bool:
    """State-only check (ordering/assignment live in goal_check, which
    also consumes episode history)."""
    return all(conjunct_holds(graph, c) for c in goal.conjuncts)
