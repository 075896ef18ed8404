"""Episode harness: the policy interface, built-in policies (oracle,
random, scripted, external-LLM client), episode execution with goal
checking, and multi-agent subgoal allocation.

A policy is asked to decide one action per tick from its observation
alone.  The harness refreshes `memory.menu` with the agent's current
legal actions before every decide call — that menu is UI-style context
(what buttons are pressable), not privileged knowledge, and the oracle
policy deliberately ignores it.

Within a tick, decisions are collected against the pre-tick state from
every agent and then applied sequentially in agent-id order, exactly
like step_multi.  Temporal goal ordering is judged at tick granularity:
conjunct i must first become satisfied on a strictly earlier tick than
its successor j.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum

import httpx

from .actions import (
    Action,
    Arrange,
    GoTo,
    Open,
    Outcome,
    Read,
    Unlock,
    Wait,
    action_from_wire,
    action_to_wire,
    apply,
    legal_actions,
)
from .rng import Rng, mix
from .scene_graph import (
    CATEGORY_AFFORDANCES,
    STATE_AFFORDANCE,
    AgentNode,
    ClueText,
    LockSpec,
    ObjectNode,
    Observation,
    Relation,
    RoomNode,
    SceneGraph,
    observe,
)
from .solver import SolutionCertificate, derive_knowledge, solve
from .tasks import STATE_TOKENS, GoalSpec, conjunct_holds


class PolicyError(Exception):
    pass


class EndpointError(Exception):
    pass


class Terminal(str, Enum):
    SUCCESS = "success"
    BUDGET_EXHAUSTED = "budget_exhausted"
    POLICY_ERROR = "policy_error"


# ── memory and the policy interface ──────────────────────────────────────────


@dataclass
class PolicyMemory:
    """Per-agent, per-episode state a policy carries between ticks.
    `menu` is written by the harness before each decide; everything
    else belongs to the policy.  Serializable via to_document."""

    visited: dict[str, int] = field(default_factory=dict)
    believed: dict[str, dict] = field(default_factory=dict)
    plan: list[Action] = field(default_factory=list)
    transcript: list[dict] = field(default_factory=list)
    menu: tuple[Action, ...] = ()
    scratch: dict = field(default_factory=dict)

    def to_document(self) -> dict:
        return {
            "visited": dict(self.visited),
            "believed": {k: dict(v) for k, v in self.believed.items()},
            "plan": [action_to_wire(a) for a in self.plan],
            "transcript": list(self.transcript),
        }


class Policy:
    def fresh_memory(self) -> PolicyMemory:
        return PolicyMemory()

    def decide(
        self, observation: Observation, goal: GoalSpec, memory: PolicyMemory
    ) -> tuple[Action, PolicyMemory]:
        raise NotImplementedError


# ── goal checking ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ConjunctReport:
    index: int
    description: str
    satisfied: bool
    first_tick: int | None
    agent: str | None
    ordering_ok: bool
    assignment_ok: bool
    # conjunct referents and the pre-assigned agent, kept so trace
    # post-mortems (failure classification) need no separate goal copy
    object: str | None = None
    target: str | None = None
    assigned: str | None = None

    @property
    def passed(self) -> bool:
        return self.satisfied and self.ordering_ok and self.assignment_ok

    def to_document(self) -> dict:
        return {
            "index": self.index,
            "description": self.description,
            "satisfied": self.satisfied,
            "first_tick": self.first_tick,
            "agent": self.agent,
            "ordering_ok": self.ordering_ok,
            "assignment_ok": self.assignment_ok,
            "object": self.object,
            "target": self.target,
            "assigned": self.assigned,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class GoalReport:
    conjuncts: tuple[ConjunctReport, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conjuncts)

    @property
    def pass_fraction(self) -> float:
        """Per-conjunct success fraction, reported alongside the binary
        verdict; 1.0 for an empty goal."""
        if not self.conjuncts:
            return 1.0
        return sum(1 for c in self.conjuncts if c.passed) / len(self.conjuncts)

    def to_document(self) -> dict:
        return {
            "passed": self.passed,
            "pass_fraction": self.pass_fraction,
            "conjuncts": [c.to_document() for c in self.conjuncts],
        }


def goal_check(graph: SceneGraph, goal: GoalSpec, history) -> GoalReport:
    """Evaluate every conjunct against the graph plus the episode
    history: `history[i]` is None or (first-satisfied tick, agent id or
    None).  Ordering needs the predecessor's first tick to be strictly
    earlier; assignments need the recorded satisfier to match."""
    rows = []
    for j, conjunct in enumerate(goal.conjuncts):
        satisfied = conjunct_holds(graph, conjunct)
        entry = history[j] if j < len(history) else None
        first_tick = entry[0] if entry else None
        agent = entry[1] if entry else None
        ordering_ok = True
        for i, j2 in goal.ordering:
            if j2 != j:
                continue
            pred = history[i] if i < len(history) else None
            if entry is not None and (pred is None or pred[0] >= entry[0]):
                ordering_ok = False
        assigned = goal.assignment_of(j)
        assignment_ok = True
        if assigned is not None and entry is not None and agent != assigned:
            assignment_ok = False
        rows.append(
            ConjunctReport(
                index=j,
                description=conjunct.describe(),
                satisfied=satisfied,
                first_tick=first_tick,
                agent=agent,
                ordering_ok=ordering_ok,
                assignment_ok=assignment_ok,
                object=conjunct.object,
                target=conjunct.target,
                assigned=assigned,
            )
        )
    return GoalReport(conjuncts=tuple(rows))


# ── episode execution ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Step:
    tick: int
    agent_id: str
    observation: dict  # Observation.digest()
    action: Action
    outcome: Outcome

    def to_document(self) -> dict:
        return {
            "tick": self.tick,
            "agent": self.agent_id,
            "observation": self.observation,
            "action": action_to_wire(self.action),
            "outcome": self.outcome.to_document(),
        }


@dataclass
class EpisodeTrace:
    task_id: str
    seed: int
    steps: list[Step]
    terminal: Terminal
    goal_report: GoalReport
    error: str | None = None
    duration: float = 0.0  # wall-clock; excluded from the canonical document

    def to_document(self) -> dict:
        return {
            "schema_version": "1",
            "task_id": self.task_id,
            "seed": self.seed,
            "terminal": self.terminal.value,
            "error": self.error,
            "steps": [s.to_document() for s in self.steps],
            "goal_report": self.goal_report.to_document(),
        }


def _update_history(graph, goal, history, tick, agent):
    for i, conjunct in enumerate(goal.conjuncts):
        if history[i] is None and conjunct_holds(graph, conjunct):
            history[i] = (tick, agent)


def run_episode(
    graph: SceneGraph,
    goal: GoalSpec,
    policies: dict[str, Policy],
    budget: int,
    seed: int,
    task_id: str = "",
) -> EpisodeTrace:
    """Run until the goal passes or the tick budget runs out.  Fully
    reproducible from the arguments: policies must be deterministic per
    their contract, and agents always act in sorted-id order."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    for agent_id in policies:
        if agent_id not in graph.agents:
            raise PolicyError(f"no agent {agent_id!r} in the scene")

    start = time.monotonic()
    g = graph.clone()
    history: list = [None] * len(goal.conjuncts)
    _update_history(g, goal, history, 0, None)
    steps: list[Step] = []
    memories = {aid: policies[aid].fresh_memory() for aid in policies}
    terminal = None
    error = None

    if goal_check(g, goal, history).passed:
        terminal = Terminal.SUCCESS
    else:
        for tick in range(1, budget + 1):
            decisions = []
            for agent_id in sorted(policies):
                obs = observe(g, agent_id)
                memory = memories[agent_id]
                memory.menu = tuple(legal_actions(g, agent_id))
                try:
                    action, memory = policies[agent_id].decide(obs, goal, memory)
                except Exception as exc:
                    terminal = Terminal.POLICY_ERROR
                    error = f"{agent_id}: {exc}"
                    break
                if not isinstance(action, Action):
                    terminal = Terminal.POLICY_ERROR
                    error = f"{agent_id}: policy returned {type(action).__name__}"
                    break
                memories[agent_id] = memory
                decisions.append((agent_id, action, obs))
            if terminal is Terminal.POLICY_ERROR:
                break
            for agent_id, action, obs in decisions:
                g, outcome = apply(g, agent_id, action)
                steps.append(
                    Step(
                        tick=tick,
                        agent_id=agent_id,
                        observation=obs.digest(),
                        action=action,
                        outcome=outcome,
                    )
                )
                _update_history(g, goal, history, tick, agent_id)
            if goal_check(g, goal, history).passed:
                terminal = Terminal.SUCCESS
                break
        if terminal is None:
            terminal = Terminal.BUDGET_EXHAUSTED

    report = goal_check(g, goal, history)
    return EpisodeTrace(
        task_id=task_id,
        seed=seed,
        steps=steps,
        terminal=terminal,
        goal_report=report,
        error=error,
        duration=time.monotonic() - start,
    )


# ── subgoal allocation ───────────────────────────────────────────────────────


def _room_distances(graph: SceneGraph, start_room: str) -> dict[str, int]:
    """Hop counts over the door graph, ignoring door state (locked
    doors still count as potential paths)."""
    dist = {start_room: 0}
    frontier = [start_room]
    while frontier:
        room = frontier.pop(0)
        for door_id in graph.doors_touching(room):
            for dest in graph.door_destinations(door_id):
                if dest not in dist:
                    dist[dest] = dist[room] + 1
                    frontier.append(dest)
    return dist


def _focus_room(graph: SceneGraph, conjunct) -> str | None:
    focus = conjunct.object or conjunct.target
    if focus is None or focus not in graph.objects:
        return None
    return graph.room_of(focus)


def allocate_subgoals(
    goal: GoalSpec, agents: list[str], graph: SceneGraph
) -> dict[int, str]:
    """Greedy balanced assignment: each conjunct goes to the agent with
    the smallest current load plus door-graph distance to the
    conjunct's focus object, ties broken by agent id.  Pre-assigned
    conjuncts are fixed points."""
    if not agents:
        raise ValueError("need at least one agent")
    dists = {
        aid: _room_distances(graph, graph.parent_relation(aid).dst)
        for aid in agents
    }

    def estimate(aid: str, j: int) -> int:
        room = _focus_room(graph, goal.conjuncts[j])
        if room is None:
            return 1
        return dists[aid].get(room, len(graph.rooms)) + 1

    out: dict[int, str] = {}
    loads = {aid: 0 for aid in agents}
    for j, aid in goal.assignments:
        out[j] = aid
        if aid in loads:
            loads[aid] += estimate(aid, j)
    for j in range(len(goal.conjuncts)):
        if j in out:
            continue
        best = min(sorted(agents), key=lambda a: (loads[a] + estimate(a, j), a))
        out[j] = best
        loads[best] += estimate(best, j)
    return out


# ── scripted and random policies ─────────────────────────────────────────────


class _ScriptedPolicy(Policy):
    def __init__(self, plan):
        if not plan:
            raise ValueError("scripted plan must be nonempty")
        self.plan = list(plan)

    def decide(self, observation, goal, memory):
        cursor = memory.scratch.get("cursor", 0)
        memory.scratch["cursor"] = cursor + 1
        if cursor < len(self.plan):
            return self.plan[cursor], memory
        return Wait(), memory


def scripted_policy(plan) -> Policy:
    """Replays a fixed list of actions, then waits forever."""
    return _ScriptedPolicy(plan)


class _RandomPolicy(Policy):
    def __init__(self, seed: int):
        self.seed = seed

    def decide(self, observation, goal, memory):
        draw = memory.scratch.get("draw", 0)
        memory.scratch["draw"] = draw + 1
        rng = Rng(mix(self.seed, "random-policy", draw))
        menu = list(memory.menu)
        action = rng.choice(menu) if menu else Wait()
        return action, memory


def random_policy(seed: int) -> Policy:
    """Uniform over the harness-provided legal menu; the draw counter
    lives in memory so each decide is a pure function of its inputs."""
    return _RandomPolicy(seed)


# ── oracle policy ────────────────────────────────────────────────────────────


class _OraclePolicy(Policy):
    """Observation-driven planner:

    1. fold the observation into believed rooms/doors/objects; infer
       rejection of the previous action from the world not changing
       (an unlock that left the target locked discredits that key);
    2. keep executing the pending plan unless belief changed;
    3. replan by building a believed SceneGraph and running the oracle
       solver over lock hypotheses (held keys, then seen keys, then a
       hypothetical key inside each clue-named container, in id order);
    4. failing that, acquire information in the current room — read
       unread notes, open clue-named containers, try derived
       arrangement orders;
    5. failing that, explore through the least-visited adjacent room;
    6. failing that, wait.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed

    def fresh_memory(self):
        memory = PolicyMemory()
        memory.scratch.update(
            rooms={}, doors={}, bad_keys=[], bad_refs=[], arranged=[],
            last_action=None, last_room=None,
        )
        return memory

    # belief maintenance

    def _update_belief(self, memory, observation) -> bool:
        s = memory.scratch
        before = (
            json.dumps(s["rooms"], sort_keys=True),
            json.dumps(s["doors"], sort_keys=True),
            json.dumps(memory.believed, sort_keys=True, default=str),
            tuple(observation.held),
        )
        s["rooms"].setdefault(observation.room_id, observation.room_id)
        door_ids = set()
        for d in observation.doors:
            door_ids.add(d.id)
            s["rooms"].setdefault(d.to_room, d.to_room)
            s["doors"][d.id] = {
                "open": d.open,
                "locked": d.locked,
                "mechanism": d.mechanism,
                "rooms": sorted({observation.room_id, d.to_room}),
            }
        for v in observation.visible_objects:
            if v.id in door_ids:
                continue
            parent = None
            if v.relations:
                parent = [v.relations[0].kind, v.relations[0].dst]
            memory.believed[v.id] = {
                "category": v.category,
                "name": v.display_name,
                "states": dict(v.states),
                "parent": parent or ["in_room", observation.room_id],
                "room": observation.room_id,
                "color": v.color,
                "arrangement_size": v.arrangement_size,
            }
        for oid in observation.held:
            if oid in memory.believed:
                memory.believed[oid]["parent"] = ["held_by", observation.agent_id]
                memory.believed[oid]["room"] = observation.room_id
        # evict beliefs the current view contradicts: anything expected
        # to be visible in this room (on the floor, on a surface, or in
        # an open container) that is not
        visible_ids = {v.id for v in observation.visible_objects}
        for oid in sorted(memory.believed):
            fact = memory.believed[oid]
            if oid in visible_ids or oid in observation.held:
                continue
            if fact["room"] != observation.room_id:
                continue
            kind, dst = fact["parent"]
            if kind == "held_by":
                if dst != observation.agent_id:
                    del memory.believed[oid]
                continue
            expected = kind in ("in_room", "on_top")
            if kind == "inside":
                parent = memory.believed.get(dst)
                expected = parent is None or parent["states"].get("open", True)
            if expected and fact["states"].get("revealed", True):
                del memory.believed[oid]
        if observation.room_id != s["last_room"]:
            memory.visited[observation.room_id] = (
                memory.visited.get(observation.room_id, 0) + 1
            )
            s["last_room"] = observation.room_id
        read_count = s.get("read_count", 0)
        s["read_count"] = len(observation.read_clues)
        after = (
            json.dumps(s["rooms"], sort_keys=True),
            json.dumps(s["doors"], sort_keys=True),
            json.dumps(memory.believed, sort_keys=True, default=str),
            tuple(observation.held),
        )
        return before != after or read_count != s["read_count"]

    def _infer_rejection(self, memory, observation) -> bool:
        """Did the previous action visibly fail?  Only inspects the
        cases that matter for progress; returns True when the pending
        plan should be dropped."""
        s = memory.scratch
        wire = s["last_action"]
        s["last_action"] = None
        if wire is None:
            return False
        kind = wire.get("type")
        if kind == "unlock":
            target = wire.get("object")
            still_locked = any(
                d.id == target and d.locked for d in observation.doors
            ) or any(
                v.id == target and dict(v.states).get("locked", False)
                for v in observation.visible_objects
            )
            if still_locked:
                key = wire.get("key")
                if key is not None and key not in s["bad_keys"]:
                    s["bad_keys"].append(key)
                return True
        elif kind == "go_to":
            if observation.room_id != wire.get("room"):
                return True
        elif kind == "pick_up":
            if wire.get("object") not in observation.held:
                return True
        elif kind == "open":
            target = wire.get("object")
            for v in observation.visible_objects:
                if v.id == target and dict(v.states).get("open") is False:
                    if target not in s["bad_refs"]:
                        s["bad_refs"].append(target)
                    return True
            for d in observation.doors:
                if d.id == target and not d.open:
                    return True
        return False

    # believed-world construction

    def _goal_affordances(self, goal) -> dict[str, set[str]]:
        """Affordances the goal forces onto its referents; observations
        carry states but not affordances, so the oracle assumes any
        object the goal names can do what the goal needs."""
        out: dict[str, set[str]] = {}
        for conjunct in goal.conjuncts:
            if conjunct.kind in ("object_in", "object_on", "held_by") \
                    and conjunct.object:
                out.setdefault(conjunct.object, set()).update(
                    {"graspable", "movable"}
                )
            if conjunct.kind == "object_in" and conjunct.target:
                out.setdefault(conjunct.target, set()).add("container")
            if conjunct.kind == "object_on" and conjunct.target:
                out.setdefault(conjunct.target, set()).add("surface")
            if conjunct.kind == "state_is" and conjunct.target:
                key, _value = STATE_TOKENS[conjunct.state or "open"]
                if key in STATE_AFFORDANCE:
                    out.setdefault(conjunct.target, set()).add(
                        STATE_AFFORDANCE[key]
                    )
        return out

    def _believed_graph(self, memory, observation, goal, key_hypothesis=None,
                        planted=(), extra_clues=()):
        s = memory.scratch
        g = SceneGraph()
        for rid, name in sorted(s["rooms"].items()):
            g.rooms[rid] = RoomNode(rid, name or rid)
        derived = derive_knowledge(observation.read_clues)
        for did, d in sorted(s["doors"].items()):
            lock = None
            if d["locked"]:
                if d["mechanism"] == "code" and derived.code is not None:
                    lock = LockSpec(mechanism="code", code=derived.code)
                elif d["mechanism"] == "key" and key_hypothesis is not None:
                    lock = LockSpec(mechanism="key", key_id=key_hypothesis)
            g.objects[did] = ObjectNode(
                id=did, category="door", display_name=did.replace("_", " "),
                affordances=frozenset({"openable", "lockable"}),
                states={"open": d["open"], "locked": d["locked"]},
                lock=lock,
            )
            g.relations.add(Relation("in_room", did, d["rooms"][0]))
            for rid in d["rooms"]:
                g.relations.add(Relation("connects", did, rid))
        forced = self._goal_affordances(goal)
        for oid, fact in sorted(memory.believed.items()):
            affordances = set(CATEGORY_AFFORDANCES.get(fact["category"], ()))
            for state_key in fact["states"]:
                if state_key in STATE_AFFORDANCE:
                    affordances.add(STATE_AFFORDANCE[state_key])
            affordances |= forced.get(oid, set())
            g.objects[oid] = ObjectNode(
                id=oid, category=fact["category"], display_name=fact["name"],
                affordances=frozenset(affordances),
                states=dict(fact["states"]),
                color=fact.get("color"),
            )
        for node, relation in planted:
            g.objects[node.id] = node
            g.relations.add(relation)
        aid = observation.agent_id
        g.agents[aid] = AgentNode(
            aid, capacity=max(1, len(observation.held)),
            holding=list(observation.held),
            read_clues=list(observation.read_clues) + list(extra_clues),
        )
        g.relations.add(Relation("in_room", aid, observation.room_id))
        for oid, fact in sorted(memory.believed.items()):
            if oid in observation.held:
                g.relations.add(Relation("held_by", oid, aid))
                continue
            kind, dst = fact["parent"]
            if dst not in g.objects and dst not in g.rooms:
                kind, dst = "in_room", fact["room"]
            if dst in g.rooms and kind != "in_room":
                kind = "in_room"
            g.relations.add(Relation(kind, oid, dst))
        return g

    def _own_goal(self, goal, agent_id) -> GoalSpec:
        """Conjuncts this agent is responsible for: its own assignments
        plus anything unassigned.  Empty when every conjunct belongs to
        someone else — then the right move is to stay out of the way."""
        mine = [
            i
            for i in range(len(goal.conjuncts))
            if goal.assignment_of(i) in (None, agent_id)
        ]
        if len(mine) == len(goal.conjuncts):
            return GoalSpec(conjuncts=goal.conjuncts, ordering=goal.ordering)
        index = {old: new for new, old in enumerate(mine)}
        return GoalSpec(
            conjuncts=tuple(goal.conjuncts[i] for i in mine),
            ordering=tuple(
                (index[i], index[j])
                for i, j in goal.ordering
                if i in index and j in index
            ),
        )

    def _replan(self, memory, observation, goal) -> list[Action] | None:
        s = memory.scratch
        derived = derive_knowledge(observation.read_clues)
        own = self._own_goal(goal, observation.agent_id)
        forced = self._goal_affordances(own)

        def closed_container(fact) -> bool:
            return (
                "container"
                in CATEGORY_AFFORDANCES.get(fact["category"], ())
                and fact["states"].get("open") is False
                and not fact["states"].get("locked", False)
            )

        held_keys = [
            oid for oid in sorted(observation.held)
            if memory.believed.get(oid, {}).get("category") == "key"
            and oid not in s["bad_keys"]
        ]
        seen_keys = [
            oid for oid, fact in sorted(memory.believed.items())
            if fact["category"] == "key"
            and oid not in observation.held
            and oid not in s["bad_keys"]
        ]
        hyp_containers = [
            ref for ref in sorted(derived.locations)
            if ref not in s["bad_refs"]
            and ref in memory.believed
            and closed_container(memory.believed[ref])
        ]
        # carryable goal objects nobody has seen yet: hypothesize them
        # inside each still-closed container in turn.  Targets and
        # state-bearing fixtures are never planted — rooms hide small
        # things in boxes, not furniture
        carryable = {
            c.object
            for c in own.conjuncts
            if c.kind in ("object_in", "object_on", "held_by") and c.object
        }
        missing = sorted(
            ref for ref in carryable
            if ref not in memory.believed
            and ref not in observation.held
            and ref not in s["doors"]
        )
        search_containers = [
            oid for oid, fact in sorted(memory.believed.items())
            if oid not in s["bad_refs"] and closed_container(fact)
        ] if missing else []

        def missing_plants(container):
            plants = []
            for ref in missing:
                category = ref.rsplit("_", 1)[0]
                affordances = (
                    set(CATEGORY_AFFORDANCES.get(category, ()))
                    | {"graspable", "movable"}
                    | forced.get(ref, set())
                )
                node = ObjectNode(
                    id=ref, category=category if category in
                    CATEGORY_AFFORDANCES else "key",
                    display_name=ref.replace("_", " "),
                    affordances=frozenset(affordances),
                )
                plants.append((node, Relation("inside", ref, container)))
            return plants

        candidates: list[tuple[str | None, tuple, tuple]] = [(None, (), ())]
        for key in held_keys + seen_keys:
            candidates.append((key, (), ()))
        for ref in hyp_containers:
            hyp = f"key_hyp_{ref}"
            node = ObjectNode(
                id=hyp, category="key", display_name="hypothesized key",
                affordances=frozenset({"graspable", "movable"}),
            )
            candidates.append(
                (hyp, ((node, Relation("inside", hyp, ref)),), ())
            )
        for container in search_containers:
            clue = ("__hypothesis__", ClueText(text="", referent=container))
            candidates.append((None, tuple(missing_plants(container)), (clue,)))

        for key_hypothesis, planted, extra_clues in candidates:
            believed = self._believed_graph(
                memory, observation, own, key_hypothesis, planted, extra_clues
            )
            result = solve(believed, own, budget=4000)
            if isinstance(result, SolutionCertificate):
                # an empty plan means this agent's share is already done
                return [action for _aid, action in result.plan]
        return None

    def _knowledge_move(self, memory, observation) -> Action | None:
        s = memory.scratch
        read_ids = {oid for oid, _ in observation.read_clues}
        derived = derive_knowledge(observation.read_clues)
        door_ids = {d.id for d in observation.doors}
        for v in observation.visible_objects:
            if v.id in door_ids:
                continue
            if "readable" in CATEGORY_AFFORDANCES.get(v.category, ()) \
                    and v.id not in read_ids:
                return Read(v.id)
        for ref in sorted(derived.locations):
            for v in observation.visible_objects:
                if v.id == ref and dict(v.states).get("open") is False \
                        and not dict(v.states).get("locked", False):
                    return Open(ref)
        for order in sorted(derived.orders):
            for v in observation.visible_objects:
                if v.arrangement_size != len(order):
                    continue
                chosen: list[str] = []
                for color in order:
                    pick = next(
                        (
                            c.id
                            for c in observation.visible_objects
                            if c.color == color and c.id not in chosen
                            and c.id != v.id
                        ),
                        None,
                    )
                    if pick is None:
                        break
                    chosen.append(pick)
                if len(chosen) != len(order):
                    continue
                attempt = [v.id, list(chosen)]
                if attempt not in s["arranged"]:
                    s["arranged"].append(attempt)
                    return Arrange(v.id, tuple(chosen))
        return None

    def _explore(self, memory, observation) -> Action | None:
        candidates = sorted(
            (memory.visited.get(d.to_room, 0), d.to_room, d)
            for d in observation.doors
            if d.to_room != observation.room_id
        )
        for _visits, to_room, door in candidates:
            if door.open:
                return GoTo(to_room)
            if not door.locked:
                return Open(door.id)
        return None

    def decide(self, observation, goal, memory):
        s = memory.scratch
        rejected = self._infer_rejection(memory, observation)
        delta = self._update_belief(memory, observation)
        if rejected or delta:
            memory.plan = []

        action: Action | None = None
        if memory.plan:
            action = memory.plan.pop(0)
            if "key_hyp_" in getattr(action, "obj", "") or (
                isinstance(action, Unlock) and "key_hyp_" in (action.key or "")
            ):
                memory.plan = []
                action = None
        if action is None:
            plan = self._replan(memory, observation, goal)
            if plan is not None and not plan:
                action = Wait()
            elif plan:
                memory.plan = plan
                action = memory.plan.pop(0)
                if "key_hyp_" in getattr(action, "obj", "") or (
                    isinstance(action, Unlock)
                    and "key_hyp_" in (action.key or "")
                ):
                    memory.plan = []
                    action = None
        if action is None:
            action = self._knowledge_move(memory, observation)
        if action is None:
            action = self._explore(memory, observation)
        if action is None:
            action = Wait()
        s["last_action"] = action_to_wire(action)
        return action, memory


def oracle_policy(seed: int = 0) -> Policy:
    return _OraclePolicy(seed)


# ── external-LLM policy ──────────────────────────────────────────────────────


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model: str
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0
    max_tokens: int = 256
    api_key_env: str = "LLM_API_KEY"

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


PROMPT_TEMPLATE = """You control one agent in a symbolic room world.
Decide the single next action.

Goal: {goal}
Observation (JSON): {observation}
Legal actions (JSON list): {menu}
Recent turns: {transcript}

Reply with exactly one JSON object from the legal list, for example
{{"type": "pick_up", "object": "key_1"}}.  You may also reply
{{"type": "unlock", "object": "door_1", "code": "1234"}} with a code
you have derived from clues, or {{"type": "wait"}}."""

TRANSCRIPT_WINDOW = 8


def _extract_action(text: str) -> Action | None:
    """First well-formed action-wire object embedded in the reply."""
    for start in range(len(text)):
        if text[start] != "{":
            continue
        depth = 0
        for end in range(start, len(text)):
            if text[end] == "{":
                depth += 1
            elif text[end] == "}":
                depth -= 1
                if depth == 0:
                    chunk = text[start : end + 1]
                    try:
                        doc = json.loads(chunk)
                    except ValueError:
                        break
                    if not isinstance(doc, dict) or "type" not in doc:
                        break
                    try:
                        return action_from_wire(doc)
                    except Exception:
                        break
    return None


class _LlmPolicy(Policy):
    def __init__(self, cfg: LlmEndpointConfig, prompt_template: str,
                 transport=None):
        self.cfg = cfg
        self.template = prompt_template
        self.transport = transport

    def _messages(self, observation, goal, memory):
        window = memory.transcript[-TRANSCRIPT_WINDOW:]
        prompt = self.template.format(
            goal=goal.description or "; ".join(
                c.describe() for c in goal.conjuncts
            ),
            observation=json.dumps(observation.to_document(), sort_keys=True),
            menu=json.dumps([action_to_wire(a) for a in memory.menu]),
            transcript=json.dumps(window),
        )
        return [{"role": "user", "content": prompt}]

    def decide(self, observation, goal, memory):
        cfg = self.cfg
        headers = {}
        api_key = os.environ.get(cfg.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        messages = self._messages(observation, goal, memory)
        endpoint_error = None
        with httpx.Client(
            transport=self.transport, timeout=cfg.timeout
        ) as client:
            for _attempt in range(cfg.max_retries + 1):
                try:
                    response = client.post(
                        cfg.base_url.rstrip("/") + "/chat/completions",
                        headers=headers,
                        json={
                            "model": cfg.model,
                            "messages": messages,
                            "temperature": cfg.temperature,
                            "max_tokens": cfg.max_tokens,
                        },
                    )
                    response.raise_for_status()
                    content = response.json()["choices"][0]["message"]["content"]
                except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                    endpoint_error = exc
                    continue
                endpoint_error = None
                action = _extract_action(content)
                memory.transcript.append(
                    {"prompt": messages[-1]["content"][:2000], "reply": content}
                )
                if action is not None:
                    return action, memory
                messages = messages + [
                    {"role": "assistant", "content": content},
                    {
                        "role": "user",
                        "content": "That was not a parseable action object. "
                        "Reply with exactly one JSON action.",
                    },
                ]
        if endpoint_error is not None:
            raise PolicyError(
                f"endpoint failed after {cfg.max_retries + 1} attempts: "
                f"{endpoint_error}"
            ) from EndpointError(str(endpoint_error))
        memory.transcript.append({"parse_failure": True})
        return Wait(), memory


def llm_policy(cfg: LlmEndpointConfig, prompt_template: str = PROMPT_TEMPLATE,
               transport=None) -> Policy:
    """Chat-completions client policy.  `transport` is injectable for
    tests (httpx.MockTransport)."""
    return _LlmPolicy(cfg, prompt_template, transport)
