"""Breadth-first solvability oracle.

The oracle searches over canonical world states (relations + object
states + read clues) using the action engine's own legality rules, with
a knowledge gate on top: an action that would only make sense given
information the acting agent has not read yet is not expanded.
Concretely —

  * unlock-by-code is only tried once the full code has been derived
    from read clue fragments;
  * opening a container is only tried when a read clue names it or the
    goal itself references it (doors are exempt);
  * arrangements are only tried in color orders stated by a read clue.

Reading is always available, so shortest plans include the clue reads a
knowledge-free agent would actually need.  Derivation is mechanical and
ignores clue veracity — a deceptive clue derives a location like any
other; it just never leads anywhere.

Clue payload microformats: ``code:A:<digits>`` / ``code:B:<digits>``
(the code is the A fragment concatenated with the B fragment) and
``order:<color>,<color>,...``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .actions import (
    Action,
    Arrange,
    Close,
    Open,
    PickUp,
    Place,
    Toggle,
    Unlock,
    action_to_wire,
    apply,
    legal_actions,
    validate,
)
from .scene_graph import SceneGraph
from .tasks import STATE_TOKENS, GoalSpec, conjunct_holds


@dataclass(frozen=True)
class Knowledge:
    """Facts mechanically derivable from a set of read clues."""

    locations: frozenset[str] = frozenset()
    fragments: tuple[str | None, str | None] = (None, None)
    orders: frozenset[tuple[str, ...]] = frozenset()

    @property
    def code(self) -> str | None:
        a, b = self.fragments
        if a is None or b is None:
            return None
        return a + b


@dataclass(frozen=True)
class KnowledgeState:
    graph: SceneGraph
    derived: Knowledge


def derive_knowledge(read_clues) -> Knowledge:
    """Fold (object_id, ClueText) pairs into derived facts.  Order of
    reading does not matter; later fragments of the same slot win (a
    re-read is idempotent)."""
    locations: set[str] = set()
    frag_a: str | None = None
    frag_b: str | None = None
    orders: set[tuple[str, ...]] = set()
    for _oid, clue in read_clues:
        if clue is None:
            continue
        if clue.referent is not None:
            locations.add(clue.referent)
        payload = clue.payload
        if not payload:
            continue
        if payload.startswith("code:A:"):
            frag_a = payload[len("code:A:"):]
        elif payload.startswith("code:B:"):
            frag_b = payload[len("code:B:"):]
        elif payload.startswith("order:"):
            orders.add(tuple(payload[len("order:"):].split(",")))
    return Knowledge(
        locations=frozenset(locations),
        fragments=(frag_a, frag_b),
        orders=frozenset(orders),
    )


def knowledge_state(graph: SceneGraph, agent_id: str) -> KnowledgeState:
    return KnowledgeState(
        graph=graph, derived=derive_knowledge(graph.agents[agent_id].read_clues)
    )


# ── the gate ─────────────────────────────────────────────────────────────────


def _goal_refs(goal: GoalSpec) -> frozenset[str]:
    refs = set()
    for c in goal.conjuncts:
        if c.object is not None:
            refs.add(c.object)
        if c.target is not None:
            refs.add(c.target)
    return frozenset(refs)


def _wanted_states(goal: GoalSpec) -> set[tuple[str, str, bool]]:
    out = set()
    for c in goal.conjuncts:
        if c.kind == "state_is":
            key, value = STATE_TOKENS[c.state]
            out.add((c.target, key, value))
        elif c.kind == "door_open":
            out.add((c.target, "open", True))
    return out


def _place_targets(goal: GoalSpec) -> set[tuple[str, str]]:
    out = set()
    for c in goal.conjuncts:
        if c.kind in ("object_in", "object_on"):
            out.add((c.object, c.target))
    return out


def gated_moves(
    graph: SceneGraph, agent_id: str, goal: GoalSpec, knowledge: Knowledge
) -> list[Action]:
    """legal_actions filtered by the knowledge gate, plus code unlocks
    the derived knowledge licenses.  Order is deterministic: the
    legal_actions order, then injected code unlocks sorted by target."""
    refs = _goal_refs(goal)
    wanted = _wanted_states(goal)
    placements = _place_targets(goal)
    agent_room = graph.parent_relation(agent_id).dst
    out: list[Action] = []
    for action in legal_actions(graph, agent_id):
        if isinstance(action, Open):
            obj = graph.objects[action.obj]
            if obj.category != "door" and action.obj not in knowledge.locations \
                    and action.obj not in refs:
                continue
        elif isinstance(action, Close):
            if (action.obj, "open", False) not in wanted:
                continue
        elif isinstance(action, Toggle):
            obj = graph.objects[action.obj]
            current = obj.states.get("on", False)
            if (action.obj, "on", not current) not in wanted:
                continue
        elif isinstance(action, PickUp):
            if graph.objects[action.obj].category != "key" and action.obj not in refs:
                continue
        elif isinstance(action, Place):
            drop = action.target == agent_room
            if not drop and (action.obj, action.target) not in placements:
                continue
        elif isinstance(action, Arrange):
            colors = tuple(graph.objects[o].color for o in action.order)
            if colors not in knowledge.orders:
                continue
        out.append(action)

    code = knowledge.code
    if code is not None:
        for oid in sorted(graph.objects):
            obj = graph.objects[oid]
            if (
                obj.states.get("locked", False)
                and obj.lock is not None
                and obj.lock.mechanism == "code"
            ):
                attempt = Unlock(oid, code=code)
                if validate(graph, agent_id, attempt).ok:
                    out.append(attempt)
    return out


# ── search ───────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SolutionCertificate:
    plan: tuple[tuple[str, Action], ...]
    optimal_length: int

    def to_document(self) -> dict:
        return {
            "plan": [
                {"agent": agent_id, "action": action_to_wire(action)}
                for agent_id, action in self.plan
            ],
            "optimal_length": self.optimal_length,
        }


@dataclass(frozen=True)
class Unsolvable:
    reason: str = "search space exhausted without reaching the goal"


@dataclass(frozen=True)
class BudgetExceeded:
    expanded: int = 0


def _state_key(graph: SceneGraph, ever: int, order_ok: bool, assign_ok: bool):
    relations = tuple(sorted((r.kind, r.src, r.dst) for r in graph.relations))
    states = tuple(
        (oid, tuple(sorted(graph.objects[oid].states.items())))
        for oid in sorted(graph.objects)
        if graph.objects[oid].states
    )
    clues = tuple(
        (aid, tuple(sorted(oid for oid, _ in graph.agents[aid].read_clues)))
        for aid in sorted(graph.agents)
    )
    return (relations, states, clues, ever, order_ok, assign_ok)


def _satisfied_mask(graph: SceneGraph, goal: GoalSpec) -> int:
    mask = 0
    for i, c in enumerate(goal.conjuncts):
        if conjunct_holds(graph, c):
            mask |= 1 << i
    return mask


def _advance_flags(
    goal: GoalSpec, mask: int, ever: int, order_ok: bool, assign_ok: bool,
    actor: str | None,
) -> tuple[int, bool, bool]:
    """Fold a new satisfaction mask into the first-satisfaction record.
    Ordering is strict: the earlier conjunct must have been satisfied on
    a strictly earlier step.  Assignments bind the first satisfier."""
    new = mask & ~ever
    if new:
        for j in range(len(goal.conjuncts)):
            if not new & (1 << j):
                continue
            for i, j2 in goal.ordering:
                if j2 == j and not ever & (1 << i):
                    order_ok = False
            assigned = goal.assignment_of(j)
            if assigned is not None and assigned != actor:
                assign_ok = False
    return ever | new, order_ok, assign_ok


def solve(graph: SceneGraph, goal: GoalSpec, budget: int = 50_000):
    """Shortest plan to the goal, or Unsolvable / BudgetExceeded.

    Breadth-first over canonical states; each plan step is one agent
    acting (agents in sorted id order, moves in gated_moves order, so
    ties break deterministically).  The budget caps expanded states."""
    full = (1 << len(goal.conjuncts)) - 1
    mask0 = _satisfied_mask(graph, goal)
    ever, order_ok, assign_ok = _advance_flags(
        goal, mask0, 0, True, True, actor=None
    )
    if mask0 == full and order_ok and assign_ok:
        return SolutionCertificate(plan=(), optimal_length=0)

    start_key = _state_key(graph, ever, order_ok, assign_ok)
    seen = {start_key}
    frontier: deque = deque([(graph, ever, order_ok, assign_ok, ())])
    expanded = 0
    agent_ids = sorted(graph.agents)

    while frontier:
        g, ever, order_ok, assign_ok, plan = frontier.popleft()
        expanded += 1
        if expanded > budget:
            return BudgetExceeded(expanded=expanded - 1)
        for agent_id in agent_ids:
            knowledge = derive_knowledge(g.agents[agent_id].read_clues)
            for action in gated_moves(g, agent_id, goal, knowledge):
                g2, outcome = apply(g, agent_id, action)
                if not outcome.ok:  # gate and validator disagree: skip
                    continue
                mask = _satisfied_mask(g2, goal)
                ever2, ok2, aok2 = _advance_flags(
                    goal, mask, ever, order_ok, assign_ok, actor=agent_id
                )
                key = _state_key(g2, ever2, ok2, aok2)
                if key in seen:
                    continue
                seen.add(key)
                plan2 = plan + ((agent_id, action),)
                if mask == full and ok2 and aok2:
                    return SolutionCertificate(
                        plan=plan2, optimal_length=len(plan2)
                    )
                frontier.append((g2, ever2, ok2, aok2, plan2))
    return Unsolvable()
