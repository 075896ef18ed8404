"""Benchmark suites over household chores and escape rooms, success
aggregation in "mean ± std" form, and a rule-based classifier that
sorts failed episodes into six failure modes.

Classifier rules run in fixed priority order (most specific signal
first): exploration_loop, phantom_goal, coordination_failure,
state_assumption, impossible_sequence, object_confusion, and a final
unclassified bucket.  Thresholds are deliberately coarse — four visits
to the same room, two repeated precondition hits — and documented next
to each rule.
"""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

from .actions import (
    Arrange,
    Close,
    GoTo,
    Open,
    PickUp,
    Place,
    PreconditionError,
    Toggle,
    Unlock,
    apply,
)
from .harness import (
    EpisodeTrace,
    Policy,
    Terminal,
    allocate_subgoals,
    llm_policy,
    oracle_policy,
    random_policy,
    run_episode,
)
from .puzzles import LevelConfig, generate
from .rng import Rng, mix
from .scene_graph import (
    AgentNode,
    ObjectNode,
    Relation,
    RoomNode,
    SceneGraph,
    SchemaError,
    check_invariants,
)
from .tasks import Conjunct, GoalSpec, SubGoal, TaskSpec, instantiate

SCHEMA_VERSION = "1"


class TraceIncomplete(Exception):
    pass


class FailureCategory(str, Enum):
    EXPLORATION_LOOP = "exploration_loop"
    PHANTOM_GOAL = "phantom_goal"
    STATE_ASSUMPTION = "state_assumption"
    COORDINATION_FAILURE = "coordination_failure"
    IMPOSSIBLE_SEQUENCE = "impossible_sequence"
    OBJECT_CONFUSION = "object_confusion"
    UNCLASSIFIED = "unclassified"


# ── failure classification ───────────────────────────────────────────────────

_STATE_ERRORS = {
    PreconditionError.CLOSED_CONTAINER,
    PreconditionError.LOCKED,
    PreconditionError.WRONG_KEY,
    PreconditionError.WRONG_CODE,
}
_IMPOSSIBLE_ERRORS = {
    PreconditionError.NOT_HELD,
    PreconditionError.HANDS_FULL,
    PreconditionError.INVALID_TARGET,
    PreconditionError.NOT_AFFORDANT,
}
_MANIPULATIONS = (Open, Close, PickUp, Place, Toggle, Unlock, Arrange)


def _action_object(action) -> str | None:
    if isinstance(action, Arrange):
        return action.target
    return getattr(action, "obj", None)


def _exploration_loop(trace: EpisodeTrace) -> bool:
    """Some agent entered the same room >= 4 times with at least one
    revisit gap in which it first-sighted nothing new."""
    agents = sorted({s.agent_id for s in trace.steps})
    for agent in agents:
        steps = [s for s in trace.steps if s.agent_id == agent]
        seen: set[str] = set()
        entries: dict[str, list[int]] = {}
        discoveries: list[int] = []
        current = None
        for i, step in enumerate(steps):
            room = step.observation["room"]
            if room != current:
                entries.setdefault(room, []).append(i)
                current = room
            new = set(step.observation["visible"]) - seen
            if new:
                discoveries.append(i)
            seen |= new
        for room, marks in entries.items():
            if len(marks) < 4:
                continue
            for a, b in zip(marks, marks[1:]):
                if not any(a < d <= b for d in discoveries):
                    return True
    return False


def _coordination_failure(trace: EpisodeTrace) -> bool:
    agents = sorted({s.agent_id for s in trace.steps})
    if len(agents) < 2:
        return False
    # two agents went for the same object in the same tick, twice
    contested_ticks = 0
    by_tick: dict[int, list] = {}
    for step in trace.steps:
        by_tick.setdefault(step.tick, []).append(step)
    for steps in by_tick.values():
        targets: dict[str, set[str]] = {}
        for step in steps:
            obj = _action_object(step.action)
            if obj is not None:
                targets.setdefault(obj, set()).add(step.agent_id)
        if any(len(who) >= 2 for who in targets.values()):
            contested_ticks += 1
    if contested_ticks >= 2:
        return True
    # every agent with assigned conjuncts left all of them untouched
    # through the first half of the run
    run_length = max((s.tick for s in trace.steps), default=0)
    assigned: dict[str, list] = {}
    for row in trace.goal_report.conjuncts:
        if row.assigned is not None:
            assigned.setdefault(row.assigned, []).append(row)
    if len(assigned) >= 2 and run_length > 0:
        half = run_length / 2
        if all(
            all(r.first_tick is None or r.first_tick > half for r in rows)
            for rows in assigned.values()
        ):
            return True
    return False


def _object_confusion(trace: EpisodeTrace, final_graph: SceneGraph) -> bool:
    goal_ids = set()
    for row in trace.goal_report.conjuncts:
        for ref in (row.object, row.target):
            if ref is not None:
                goal_ids.add(ref)
    goal_categories = {
        final_graph.objects[ref].category
        for ref in goal_ids
        if ref in final_graph.objects
    }
    if not goal_categories:
        return False
    for step in trace.steps:
        if not step.outcome.ok or not isinstance(step.action, _MANIPULATIONS):
            continue
        obj = _action_object(step.action)
        if obj is None or obj in goal_ids:
            continue
        node = final_graph.objects.get(obj)
        if node is not None and node.category in goal_categories:
            return True
    return False


def classify_failure(
    trace: EpisodeTrace, final_graph: SceneGraph
) -> FailureCategory:
    """Sort a failed episode into exactly one category; rules fire in
    fixed priority order and every trace falls through to
    unclassified."""
    if trace.terminal is Terminal.SUCCESS:
        raise TraceIncomplete("trace ended in success; nothing to classify")
    errors = [s.outcome.error for s in trace.steps if not s.outcome.ok]
    if _exploration_loop(trace):
        return FailureCategory.EXPLORATION_LOOP
    if any(e is PreconditionError.UNKNOWN_OBJECT for e in errors):
        return FailureCategory.PHANTOM_GOAL
    if _coordination_failure(trace):
        return FailureCategory.COORDINATION_FAILURE
    if sum(1 for e in errors if e in _STATE_ERRORS) >= 2:
        return FailureCategory.STATE_ASSUMPTION
    if any(e in _IMPOSSIBLE_ERRORS for e in errors):
        return FailureCategory.IMPOSSIBLE_SEQUENCE
    if _object_confusion(trace, final_graph):
        return FailureCategory.OBJECT_CONFUSION
    return FailureCategory.UNCLASSIFIED


def final_graph_of(start: SceneGraph, trace: EpisodeTrace) -> SceneGraph:
    """Replay a trace over its starting graph; episodes are
    deterministic, so this recovers the end state exactly."""
    g = start.clone()
    for step in trace.steps:
        g, _ = apply(g, step.agent_id, step.action)
    return g


# ── aggregation ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SeedOutcome:
    success: bool
    ticks: int = 0
    failure: str | None = None  # FailureCategory value when failed


@dataclass(frozen=True)
class RowStats:
    n: int
    successes: int
    mean: float
    std: float
    mean_ticks: float
    failures: dict

    def to_document(self) -> dict:
        return {
            "n": self.n,
            "successes": self.successes,
            "mean": self.mean,
            "std": self.std,
            "mean_ticks": self.mean_ticks,
            "failures": dict(self.failures),
        }


def aggregate(outcomes) -> RowStats:
    """Per-seed Bernoulli aggregation: mean, sample std (n-1
    denominator, zero when n=1), mean tick count, failure histogram.
    Accepts SeedOutcome records or bare booleans/ints."""
    normalized = [
        o if isinstance(o, SeedOutcome) else SeedOutcome(success=bool(o))
        for o in outcomes
    ]
    if not normalized:
        raise ValueError("aggregate needs at least one outcome")
    values = [1.0 if o.success else 0.0 for o in normalized]
    n = len(values)
    mean = sum(values) / n
    std = statistics.stdev(values) if n > 1 else 0.0
    histogram: dict[str, int] = {}
    for o in normalized:
        if not o.success and o.failure is not None:
            histogram[o.failure] = histogram.get(o.failure, 0) + 1
    return RowStats(
        n=n,
        successes=sum(o.success for o in normalized),
        mean=mean,
        std=std,
        mean_ticks=sum(o.ticks for o in normalized) / n,
        failures=histogram,
    )


# ── scenarios ────────────────────────────────────────────────────────────────


def _household_base(agents: int) -> SceneGraph:
    g = SceneGraph()
    g.rooms["living_room"] = RoomNode("living_room", "Living room")
    g.rooms["kitchen"] = RoomNode("kitchen", "Kitchen")
    door = ObjectNode(
        id="door_1", category="door", display_name="kitchen door",
        affordances=frozenset({"openable", "lockable"}),
        states={"open": True, "locked": False},
    )
    g.objects[door.id] = door
    g.relations.add(Relation("in_room", "door_1", "living_room"))
    g.relations.add(Relation("connects", "door_1", "living_room"))
    g.relations.add(Relation("connects", "door_1", "kitchen"))
    table = ObjectNode(
        id="table_1", category="table", display_name="kitchen table",
        affordances=frozenset({"surface"}),
    )
    g.objects[table.id] = table
    g.relations.add(Relation("in_room", "table_1", "kitchen"))
    g.agents["agent_1"] = AgentNode("agent_1")
    g.relations.add(Relation("in_room", "agent_1", "living_room"))
    if agents > 1:
        g.agents["agent_2"] = AgentNode("agent_2")
        g.relations.add(Relation("in_room", "agent_2", "kitchen"))
    return g


def _scenario_clean_floor(seed: int):
    spec = TaskSpec(
        description="Pick the cloth up off the floor and put it in the bin.",
        subgoals=(
            SubGoal(kind="object_in", object_category="cloth",
                    target_category="bin"),
        ),
    )
    graph, goal = instantiate(spec, _household_base(1), seed)
    return graph, goal, 14


def _scenario_watch_tv(seed: int):
    base = _household_base(1)
    remote = ObjectNode(
        id="remote_1", category="remote", display_name="remote",
        affordances=frozenset({"graspable", "movable"}),
    )
    base.objects[remote.id] = remote
    base.relations.add(Relation("on_top", "remote_1", "table_1"))
    spec = TaskSpec(
        description="Turn the TV on.",
        subgoals=(SubGoal(kind="state_is", target_category="tv", state="on"),),
    )
    graph, goal = instantiate(spec, base, seed)
    return graph, goal, 14


def _scenario_find_object(seed: int):
    """The goal object hides inside one of three closed boxes; nothing
    announces which, so success requires searching."""
    g = _household_base(1)
    rng = Rng(mix(seed, "find-object"))
    rooms = ("living_room", "kitchen", "kitchen")
    for i, room in enumerate(rooms, start=1):
        box = ObjectNode(
            id=f"box_{i}", category="box", display_name=f"box {i}",
            affordances=frozenset({"container", "openable"}),
            states={"open": False},
        )
        g.objects[box.id] = box
        g.relations.add(Relation("in_room", box.id, room))
    remote = ObjectNode(
        id="remote_1", category="remote", display_name="remote",
        affordances=frozenset({"graspable", "movable"}),
    )
    g.objects[remote.id] = remote
    hiding = f"box_{1 + rng.below(len(rooms))}"
    g.relations.add(Relation("inside", "remote_1", hiding))
    assert check_invariants(g) == []
    goal = GoalSpec(
        conjuncts=(Conjunct("held_by", object="remote_1"),),
        description="Find the remote and hold on to it.",
    )
    return g, goal, 25


def _scenario_prepare_food(seed: int):
    spec = TaskSpec(
        description="One agent fetches the pan to the table while the "
        "other turns the stove on.",
        subgoals=(
            SubGoal(kind="object_on", object_category="pan",
                    target_id="table_1"),
            SubGoal(kind="state_is", target_category="stove", state="on"),
        ),
        assignments=((0, "agent_1"), (1, "agent_2")),
    )
    graph, goal = instantiate(spec, _household_base(2), seed)
    return graph, goal, 25


def _scenario_clean_room(seed: int):
    spec = TaskSpec(
        description="Put the trash and the cloth in the bin.",
        subgoals=(
            SubGoal(kind="object_in", object_category="trash",
                    target_category="bin"),
            SubGoal(kind="object_in", object_category="cloth",
                    target_category="bin"),
        ),
    )
    graph, goal = instantiate(spec, _household_base(2), seed)
    allocation = allocate_subgoals(goal, sorted(graph.agents), graph)
    goal = replace(goal, assignments=tuple(sorted(allocation.items())))
    return graph, goal, 25


def _escape_scenario(level: int):
    def build(seed: int):
        room = generate(LevelConfig(level=level, seed=seed))
        return room.graph, room.goal, 4 * room.certificate.optimal_length

    return build


SCENARIOS = {
    "clean_floor": _scenario_clean_floor,
    "watch_tv": _scenario_watch_tv,
    "find_object": _scenario_find_object,
    "prepare_food": _scenario_prepare_food,
    "clean_room": _scenario_clean_room,
    "escape_1": _escape_scenario(1),
    "escape_2": _escape_scenario(2),
    "escape_3": _escape_scenario(3),
    "escape_4": _escape_scenario(4),
}


# ── suites ───────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TaskDef:
    name: str
    scenario: str
    seeds: tuple[int, ...]
    agents: int = 1
    budget: int | None = None  # None: the scenario's own default

    def to_document(self) -> dict:
        return {
            "name": self.name,
            "scenario": self.scenario,
            "seeds": list(self.seeds),
            "agents": self.agents,
            "budget": self.budget,
        }


@dataclass(frozen=True)
class BenchmarkSuite:
    tasks: tuple[TaskDef, ...]

    def __post_init__(self):
        names = [t.name for t in self.tasks]
        if len(set(names)) != len(names):
            raise ValueError("duplicate task names in suite")
        for t in self.tasks:
            if not t.seeds:
                raise ValueError(f"task {t.name!r} has no seeds")
            if t.scenario not in SCENARIOS:
                raise ValueError(f"unknown scenario {t.scenario!r}")

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tasks": [t.to_document() for t in self.tasks],
        }


def suite_from_document(doc) -> BenchmarkSuite:
    if not isinstance(doc, dict):
        raise SchemaError("/", "suite document must be an object")
    tasks_doc = doc.get("tasks")
    if not isinstance(tasks_doc, list) or not tasks_doc:
        raise SchemaError("/tasks", "missing or empty task list")
    tasks = []
    for i, t in enumerate(tasks_doc):
        path = f"/tasks/{i}"
        if not isinstance(t, dict):
            raise SchemaError(path, "task must be an object")
        name = t.get("name")
        scenario = t.get("scenario")
        seeds = t.get("seeds")
        if not isinstance(name, str) or not name:
            raise SchemaError(f"{path}/name", "missing task name")
        if scenario not in SCENARIOS:
            raise SchemaError(f"{path}/scenario",
                              f"unknown scenario {scenario!r}")
        if (not isinstance(seeds, list) or not seeds
                or not all(isinstance(s, int) for s in seeds)):
            raise SchemaError(f"{path}/seeds", "need a nonempty integer list")
        budget = t.get("budget")
        if budget is not None and (not isinstance(budget, int) or budget < 1):
            raise SchemaError(f"{path}/budget", "budget must be >= 1")
        tasks.append(
            TaskDef(
                name=name,
                scenario=scenario,
                seeds=tuple(seeds),
                agents=int(t.get("agents", 1)),
                budget=budget,
            )
        )
    try:
        return BenchmarkSuite(tasks=tuple(tasks))
    except ValueError as exc:
        raise SchemaError("/tasks", str(exc)) from exc


def default_suite(seeds: int = 20, escape_seeds: int = 10) -> BenchmarkSuite:
    chore = tuple(range(seeds))
    escape = tuple(range(escape_seeds))
    return BenchmarkSuite(
        tasks=(
            TaskDef("Clean Floor (S)", "clean_floor", chore),
            TaskDef("Watch TV (S)", "watch_tv", chore),
            TaskDef("Find Object (S)", "find_object", chore),
            TaskDef("Prepare Food (M)", "prepare_food", chore, agents=2),
            TaskDef("Clean Room (M)", "clean_room", chore, agents=2),
            TaskDef("Escape L1", "escape_1", escape),
            TaskDef("Escape L2", "escape_2", escape),
            TaskDef("Escape L3", "escape_3", escape),
            TaskDef("Escape L4", "escape_4", escape),
        )
    )


# ── benchmark runner ─────────────────────────────────────────────────────────


def oracle_factory(seed: int, agent_id: str) -> Policy:
    return oracle_policy()


def random_factory(seed: int, agent_id: str) -> Policy:
    return random_policy(mix(seed, agent_id))


def llm_factory(cfg, prompt_template=None, transport=None):
    from .harness import PROMPT_TEMPLATE

    template = prompt_template or PROMPT_TEMPLATE

    def build(seed: int, agent_id: str) -> Policy:
        return llm_policy(cfg, template, transport)

    return build


@dataclass(frozen=True)
class BenchmarkReport:
    tasks: tuple[str, ...]
    policies: tuple[str, ...]
    rows: dict  # (task name, policy name) -> RowStats

    def to_document(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tasks": list(self.tasks),
            "policies": list(self.policies),
            "rows": [
                {
                    "task": task,
                    "policy": policy,
                    **self.rows[(task, policy)].to_document(),
                }
                for task in self.tasks
                for policy in self.policies
            ],
        }


def render_table(report: BenchmarkReport) -> str:
    """Aligned text table: tasks as rows, policies as columns, cells
    "mean ± std"."""

    def cell(task, policy):
        stats = report.rows[(task, policy)]
        return f"{stats.mean:.2f} ± {stats.std:.2f}"

    headers = ["Task"] + list(report.policies)
    body = [
        [task] + [cell(task, policy) for policy in report.policies]
        for task in report.tasks
    ]
    widths = [
        max(len(row[i]) for row in [headers] + body)
        for i in range(len(headers))
    ]
    lines = []
    for row in [headers] + body:
        lines.append(
            "  ".join(col.ljust(width) for col, width in zip(row, widths))
            .rstrip()
        )
        if row is headers:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines)


def _run_cell(task: TaskDef, factory, seed: int) -> SeedOutcome:
    graph, goal, default_budget = SCENARIOS[task.scenario](seed)
    budget = task.budget if task.budget is not None else default_budget
    policies = {aid: factory(seed, aid) for aid in sorted(graph.agents)}
    trace = run_episode(graph, goal, policies, budget=budget, seed=seed,
                        task_id=task.name)
    success = trace.terminal is Terminal.SUCCESS
    ticks = max((s.tick for s in trace.steps), default=0)
    failure = None
    if not success:
        failure = classify_failure(trace, final_graph_of(graph, trace)).value
    return SeedOutcome(success=success, ticks=ticks, failure=failure)


def run_benchmark(suite: BenchmarkSuite, policies, jobs: int = 1
                  ) -> BenchmarkReport:
    """Run every (task, policy, seed) episode and reduce to one row per
    (task, policy), in deterministic order regardless of `jobs`."""
    policies = list(policies)
    cells = [
        (task, name, factory, seed)
        for task in suite.tasks
        for name, factory in policies
        for seed in task.seeds
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_cell, task, factory, seed)
                for task, _name, factory, seed in cells
            ]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = [
            _run_cell(task, factory, seed)
            for task, _name, factory, seed in cells
        ]
    rows = {}
    for (task, name, _factory, _seed), outcome in zip(cells, outcomes):
        rows.setdefault((task.name, name), []).append(outcome)
    return BenchmarkReport(
        tasks=tuple(t.name for t in suite.tasks),
        policies=tuple(name for name, _factory in policies),
        rows={key: aggregate(outs) for key, outs in rows.items()},
    )
