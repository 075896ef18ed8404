"""Failure-mode classifier fixtures, Bernoulli aggregation exactness,
suite schema handling, and benchmark report layout."""

import json
import math
import random as stdlib_random

import httpx
import pytest

from roomworld.actions import (
    GoTo,
    Open,
    Outcome,
    PickUp,
    Place,
    PreconditionError,
    Unlock,
    Wait,
)
from roomworld.evaluation import (
    SCENARIOS,
    BenchmarkSuite,
    FailureCategory,
    SeedOutcome,
    TaskDef,
    TraceIncomplete,
    aggregate,
    classify_failure,
    default_suite,
    final_graph_of,
    llm_factory,
    oracle_factory,
    random_factory,
    render_table,
    run_benchmark,
    suite_from_document,
)
from roomworld.harness import (
    ConjunctReport,
    EpisodeTrace,
    GoalReport,
    LlmEndpointConfig,
    Step,
    Terminal,
    run_episode,
    random_policy,
)
from roomworld.puzzles import LevelConfig, generate
from roomworld.scene_graph import (
    CATEGORY_AFFORDANCES,
    ObjectNode,
    RoomNode,
    SceneGraph,
    SchemaError,
    check_invariants,
    observe,
)


# ── trace fabrication helpers ────────────────────────────────────────────────


def step(tick, agent, room, action, ok=True, error=None, visible=()):
    return Step(
        tick=tick,
        agent_id=agent,
        observation={"room": room, "visible": list(visible), "sha256": "0" * 16},
        action=action,
        outcome=Outcome(ok=ok, error=error),
    )


def row(index=0, object=None, target=None, assigned=None, first_tick=None,
        agent=None, satisfied=False):
    return ConjunctReport(
        index=index, description="conjunct", satisfied=satisfied,
        first_tick=first_tick, agent=agent, ordering_ok=True,
        assignment_ok=True, object=object, target=target, assigned=assigned,
    )


def fail_trace(steps, rows=(row(),), terminal=Terminal.BUDGET_EXHAUSTED):
    return EpisodeTrace(
        task_id="fixture", seed=0, steps=list(steps), terminal=terminal,
        goal_report=GoalReport(conjuncts=tuple(rows)),
    )


def graph_with(*specs):
    g = SceneGraph()
    g.rooms["room_1"] = RoomNode("room_1", "Study")
    for oid, category in specs:
        g.objects[oid] = ObjectNode(
            id=oid, category=category, display_name=oid,
            affordances=CATEGORY_AFFORDANCES[category],
        )
    return g


EMPTY_GRAPH = SceneGraph()


# ── classifier fixtures, one per category ────────────────────────────────────


def looping_steps(cycles=5):
    steps = []
    tick = 1
    for _ in range(cycles):
        steps.append(step(tick, "agent_1", "room_1", GoTo("room_2"),
                          visible=["door_1"]))
        steps.append(step(tick + 1, "agent_1", "room_2", GoTo("room_1"),
                          visible=["door_1"]))
        tick += 2
    return steps


def test_exploration_loop_detected():
    trace = fail_trace(looping_steps())
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.EXPLORATION_LOOP


def test_productive_revisits_are_not_a_loop():
    # same five cycles, but every revisit reveals something unseen
    steps = []
    tick = 1
    for i in range(5):
        steps.append(step(tick, "agent_1", "room_1", GoTo("room_2"),
                          visible=[f"box_{i}"]))
        steps.append(step(tick + 1, "agent_1", "room_2", GoTo("room_1"),
                          visible=[f"note_{i}"]))
        tick += 2
    trace = fail_trace(steps)
    assert classify_failure(trace, EMPTY_GRAPH) \
        is not FailureCategory.EXPLORATION_LOOP


def test_phantom_goal_detected():
    trace = fail_trace([
        step(1, "agent_1", "room_1", PickUp("ghost_7"), ok=False,
             error=PreconditionError.UNKNOWN_OBJECT),
    ])
    assert classify_failure(trace, EMPTY_GRAPH) is FailureCategory.PHANTOM_GOAL


def test_contested_object_is_coordination_failure():
    steps = []
    for tick in (1, 2):
        steps.append(step(tick, "agent_1", "room_1", PickUp("key_1"),
                          ok=tick == 1))
        steps.append(step(tick, "agent_2", "room_1", PickUp("key_1"),
                          ok=False, error=PreconditionError.NOT_AFFORDANT))
    trace = fail_trace(steps)
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.COORDINATION_FAILURE


def test_idle_assigned_agents_are_coordination_failure():
    steps = [step(t, a, "room_1", Wait())
             for t in range(1, 11) for a in ("agent_1", "agent_2")]
    rows = (
        row(index=0, object="pan_1", assigned="agent_1"),
        row(index=1, target="stove_1", assigned="agent_2"),
    )
    trace = fail_trace(steps, rows=rows)
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.COORDINATION_FAILURE


def test_single_agent_never_coordination_failure():
    steps = [step(t, "agent_1", "room_1", Wait()) for t in range(1, 11)]
    rows = (row(index=0, object="pan_1", assigned="agent_1"),)
    trace = fail_trace(steps, rows=rows)
    assert classify_failure(trace, EMPTY_GRAPH) \
        is not FailureCategory.COORDINATION_FAILURE


def test_repeated_lock_surprises_are_state_assumption():
    trace = fail_trace([
        step(1, "agent_1", "room_1", Unlock("door_1", key="key_2"), ok=False,
             error=PreconditionError.WRONG_KEY),
        step(2, "agent_1", "room_1", Open("door_1"), ok=False,
             error=PreconditionError.LOCKED),
    ])
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.STATE_ASSUMPTION


def test_one_lock_surprise_is_below_threshold():
    trace = fail_trace([
        step(1, "agent_1", "room_1", Open("door_1"), ok=False,
             error=PreconditionError.LOCKED),
    ])
    assert classify_failure(trace, EMPTY_GRAPH) \
        is not FailureCategory.STATE_ASSUMPTION


def test_not_held_place_is_impossible_sequence():
    trace = fail_trace([
        step(1, "agent_1", "room_1", Place("key_1", "box_1"), ok=False,
             error=PreconditionError.NOT_HELD),
    ])
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.IMPOSSIBLE_SEQUENCE


def test_wrong_same_category_object_is_confusion():
    final = graph_with(("key_1", "key"), ("key_2", "key"))
    trace = fail_trace(
        [step(1, "agent_1", "room_1", PickUp("key_2"))],
        rows=(row(object="key_1"),),
    )
    assert classify_failure(trace, final) is FailureCategory.OBJECT_CONFUSION


def test_different_category_manipulation_is_not_confusion():
    final = graph_with(("key_1", "key"), ("cloth_1", "cloth"))
    trace = fail_trace(
        [step(1, "agent_1", "room_1", PickUp("cloth_1"))],
        rows=(row(object="key_1"),),
    )
    assert classify_failure(trace, final) is FailureCategory.UNCLASSIFIED


def test_quiet_failure_is_unclassified():
    trace = fail_trace([step(1, "agent_1", "room_1", Wait())])
    assert classify_failure(trace, EMPTY_GRAPH) is FailureCategory.UNCLASSIFIED


def test_priority_exploration_beats_phantom():
    steps = looping_steps()
    steps.append(step(11, "agent_1", "room_1", PickUp("ghost_7"), ok=False,
                      error=PreconditionError.UNKNOWN_OBJECT))
    trace = fail_trace(steps)
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.EXPLORATION_LOOP


def test_priority_coordination_beats_state_assumption():
    steps = []
    for tick in (1, 2):
        for agent in ("agent_1", "agent_2"):
            steps.append(step(tick, agent, "room_1",
                              Unlock("door_1", key="key_1"), ok=False,
                              error=PreconditionError.WRONG_KEY))
    trace = fail_trace(steps)
    assert classify_failure(trace, EMPTY_GRAPH) \
        is FailureCategory.COORDINATION_FAILURE


def test_classifying_a_success_trace_is_an_error():
    trace = fail_trace([step(1, "agent_1", "room_1", Wait())],
                       terminal=Terminal.SUCCESS)
    with pytest.raises(TraceIncomplete):
        classify_failure(trace, EMPTY_GRAPH)


def test_within_tick_permutation_does_not_change_class():
    steps = []
    for tick in (1, 2):
        steps.append(step(tick, "agent_1", "room_1", PickUp("key_1")))
        steps.append(step(tick, "agent_2", "room_1", PickUp("key_1"),
                          ok=False, error=PreconditionError.NOT_AFFORDANT))
    forward = fail_trace(steps)
    swapped = fail_trace([steps[1], steps[0], steps[3], steps[2]])
    assert classify_failure(forward, EMPTY_GRAPH) \
        == classify_failure(swapped, EMPTY_GRAPH)


def test_classifier_is_total_on_real_failed_traces():
    seen = set()
    for seed in range(30):
        room = generate(LevelConfig(level=3, seed=seed))
        trace = run_episode(room.graph, room.goal,
                            {"agent_1": random_policy(seed)},
                            budget=12, seed=seed)
        if trace.terminal is Terminal.SUCCESS:
            continue
        category = classify_failure(trace,
                                    final_graph_of(room.graph, trace))
        assert isinstance(category, FailureCategory)
        seen.add(category)
    assert seen  # at least one real failure got classified


def test_final_graph_replay_matches_apply():
    room = generate(LevelConfig(level=1, seed=2))
    plan = [a for _aid, a in room.certificate.plan]
    trace = run_episode(room.graph, room.goal,
                        {"agent_1": random_policy(7)}, budget=6, seed=7)
    g = final_graph_of(room.graph, trace)
    assert check_invariants(g) == []


# ── aggregation ──────────────────────────────────────────────────────────────


def test_aggregate_matches_hand_computation():
    stats = aggregate([1, 1, 0, 1])
    assert stats.n == 4
    assert stats.successes == 3
    assert stats.mean == 0.75
    assert abs(stats.std - 0.5) < 1e-12


def test_aggregate_all_successes():
    stats = aggregate([True] * 8)
    assert (stats.mean, stats.std) == (1.0, 0.0)


def test_aggregate_single_failure_degenerate():
    stats = aggregate([False])
    assert (stats.n, stats.mean, stats.std) == (1, 0.0, 0.0)


def test_aggregate_matches_closed_form_bernoulli():
    rng = stdlib_random.Random(13)
    for _ in range(200):
        n = rng.randint(1, 40)
        values = [rng.random() < 0.4 for _ in range(n)]
        stats = aggregate(values)
        k = sum(values)
        mean = k / n
        std = 0.0 if n == 1 else math.sqrt(k * (n - k) / (n * (n - 1)))
        assert abs(stats.mean - mean) < 1e-12
        assert abs(stats.std - std) < 1e-12


def test_aggregate_histogram_and_ticks():
    stats = aggregate([
        SeedOutcome(success=True, ticks=4),
        SeedOutcome(success=False, ticks=10, failure="state_assumption"),
        SeedOutcome(success=False, ticks=10, failure="state_assumption"),
        SeedOutcome(success=False, ticks=8, failure="unclassified"),
    ])
    assert stats.failures == {"state_assumption": 2, "unclassified": 1}
    assert stats.mean_ticks == 8.0


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


# ── scenarios ────────────────────────────────────────────────────────────────


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenarios_build_valid_worlds(name):
    graph, goal, budget = SCENARIOS[name](3)
    assert check_invariants(graph) == []
    assert goal.conjuncts
    assert budget >= 1


def test_find_object_goal_starts_hidden():
    graph, goal, _budget = SCENARIOS["find_object"](0)
    target = goal.conjuncts[0].object
    for agent_id in graph.agents:
        assert target not in observe(graph, agent_id).visible_ids()


def test_find_object_hiding_spot_varies_with_seed():
    spots = set()
    for seed in range(10):
        graph, goal, _budget = SCENARIOS["find_object"](seed)
        target = goal.conjuncts[0].object
        spots.add(graph.parent_relation(target).dst)
    assert len(spots) > 1


def test_prepare_food_is_heterogeneous():
    _graph, goal, _budget = SCENARIOS["prepare_food"](1)
    assert goal.assignments == ((0, "agent_1"), (1, "agent_2"))


def test_clean_room_gets_allocated_assignments():
    graph, goal, _budget = SCENARIOS["clean_room"](1)
    assert len(goal.assignments) == len(goal.conjuncts)
    assert {a for _i, a in goal.assignments} <= set(graph.agents)


def test_escape_scenario_budget_tracks_optimal():
    room = generate(LevelConfig(level=2, seed=5))
    _graph, _goal, budget = SCENARIOS["escape_2"](5)
    assert budget == 4 * room.certificate.optimal_length


# ── suites ───────────────────────────────────────────────────────────────────


def test_default_suite_is_valid_and_round_trips():
    suite = default_suite(seeds=3, escape_seeds=2)
    doc = suite.to_document()
    again = suite_from_document(json.loads(json.dumps(doc)))
    assert again == suite


def test_suite_rejects_duplicate_names():
    task = TaskDef("Twice", "clean_floor", (1,))
    with pytest.raises(ValueError):
        BenchmarkSuite(tasks=(task, task))


def test_suite_rejects_empty_seeds():
    with pytest.raises(ValueError):
        BenchmarkSuite(tasks=(TaskDef("T", "clean_floor", ()),))


def test_suite_rejects_unknown_scenario():
    with pytest.raises(ValueError):
        BenchmarkSuite(tasks=(TaskDef("T", "mystery", (1,)),))


@pytest.mark.parametrize(
    "doc, path",
    [
        ([], "/"),
        ({}, "/tasks"),
        ({"tasks": [{"scenario": "clean_floor", "seeds": [1]}]},
         "/tasks/0/name"),
        ({"tasks": [{"name": "T", "scenario": "nope", "seeds": [1]}]},
         "/tasks/0/scenario"),
        ({"tasks": [{"name": "T", "scenario": "clean_floor", "seeds": []}]},
         "/tasks/0/seeds"),
        ({"tasks": [{"name": "T", "scenario": "clean_floor", "seeds": [1],
                     "budget": 0}]},
         "/tasks/0/budget"),
    ],
)
def test_suite_document_validation_paths(doc, path):
    with pytest.raises(SchemaError) as err:
        suite_from_document(doc)
    assert str(err.value).startswith(path)


# ── benchmark runner ─────────────────────────────────────────────────────────


def small_suite():
    return BenchmarkSuite(tasks=(
        TaskDef("Escape L1", "escape_1", tuple(range(5))),
        TaskDef("Clean Floor (S)", "clean_floor", tuple(range(5))),
    ))


def test_oracle_row_is_perfect():
    suite = BenchmarkSuite(tasks=(
        TaskDef("Escape L1", "escape_1", tuple(range(20))),
    ))
    report = run_benchmark(suite, [("oracle", oracle_factory)])
    stats = report.rows[("Escape L1", "oracle")]
    assert (stats.mean, stats.std) == (1.0, 0.0)
    assert stats.n == 20


def test_empty_policy_list_gives_empty_report():
    report = run_benchmark(small_suite(), [])
    assert report.policies == ()
    assert report.rows == {}


def test_benchmark_rerun_is_identical():
    suite = small_suite()
    policies = [("oracle", oracle_factory), ("random", random_factory)]
    first = run_benchmark(suite, policies).to_document()
    second = run_benchmark(suite, policies).to_document()
    assert json.dumps(first, sort_keys=True) == json.dumps(second,
                                                           sort_keys=True)


def test_parallel_run_matches_serial():
    suite = small_suite()
    policies = [("oracle", oracle_factory), ("random", random_factory)]
    serial = run_benchmark(suite, policies, jobs=1).to_document()
    parallel = run_benchmark(suite, policies, jobs=4).to_document()
    assert serial == parallel


def test_failing_policy_counts_as_failure_without_aborting():
    class Broken:
        def fresh_memory(self):
            from roomworld.harness import PolicyMemory
            return PolicyMemory()

        def decide(self, observation, goal, memory):
            raise RuntimeError("dead")

    def broken_factory(seed, agent_id):
        return Broken()

    suite = BenchmarkSuite(tasks=(
        TaskDef("Escape L1", "escape_1", (0, 1, 2)),
    ))
    report = run_benchmark(suite, [("broken", broken_factory)])
    stats = report.rows[("Escape L1", "broken")]
    assert stats.mean == 0.0
    assert stats.n == 3


def test_llm_factory_runs_through_benchmark():
    transport = httpx.MockTransport(lambda request: httpx.Response(
        200, json={"choices": [{"message": {"content": '{"type": "wait"}'}}]},
    ))
    cfg = LlmEndpointConfig(base_url="http://mock", model="stub",
                            max_retries=0)
    suite = BenchmarkSuite(tasks=(TaskDef("Escape L1", "escape_1", (0,)),))
    report = run_benchmark(
        suite, [("llm", llm_factory(cfg, transport=transport))])
    stats = report.rows[("Escape L1", "llm")]
    assert stats.n == 1
    assert stats.mean == 0.0  # waiting never escapes


def test_report_document_shape():
    report = run_benchmark(small_suite(), [("oracle", oracle_factory)])
    doc = report.to_document()
    assert doc["schema_version"] == "1"
    assert doc["tasks"] == ["Escape L1", "Clean Floor (S)"]
    assert doc["policies"] == ["oracle"]
    row0 = doc["rows"][0]
    assert set(row0) == {"task", "policy", "n", "successes", "mean", "std",
                         "mean_ticks", "failures"}
    json.dumps(doc)


def test_table_layout_tasks_rows_policies_columns():
    report = run_benchmark(small_suite(),
                           [("oracle", oracle_factory),
                            ("random", random_factory)])
    table = render_table(report)
    lines = table.splitlines()
    assert lines[0].split() == ["Task", "oracle", "random"]
    assert set(lines[1]) <= {"-", " "}
    assert any(line.startswith("Escape L1") for line in lines)
    assert any(line.startswith("Clean Floor (S)") for line in lines)
    oracle_line = next(line for line in lines if line.startswith("Escape L1"))
    assert "1.00 ± 0.00" in oracle_line
