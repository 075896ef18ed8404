"""CLI surface: generate/solve round trip, bench table and report file,
and the line-mode edit client against an in-process server."""

import json

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from roomworld.cli import _load_config, _parse_policies, main
from roomworld.puzzles import LevelConfig, generate, room_from_document
from roomworld.server import create_app


@pytest.fixture
def runner():
    return CliRunner()


# ── generate / solve ─────────────────────────────────────────────────────────


def test_generate_writes_room_document(runner, tmp_path):
    out = tmp_path / "room.json"
    result = runner.invoke(
        main, ["generate", "--level", "2", "--seed", "3", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert "optimal 7 moves" in result.output
    room = room_from_document(json.loads(out.read_text()))
    assert room.level == 2
    assert room.certificate.optimal_length == 7


def test_generate_without_out_prints_json(runner):
    result = runner.invoke(main, ["generate", "--level", "1", "--seed", "7"])
    assert result.exit_code == 0
    doc = json.loads(result.output)
    assert doc["level"] == 1


def test_generate_rejects_bad_level(runner):
    result = runner.invoke(main, ["generate", "--level", "9", "--seed", "0"])
    assert result.exit_code != 0
    assert "level must be 1..4" in result.output


def test_solve_prints_plan_and_length(runner, tmp_path):
    out = tmp_path / "room.json"
    runner.invoke(
        main, ["generate", "--level", "1", "--seed", "7", "--out", str(out)]
    )
    result = runner.invoke(main, ["solve", "--room", str(out)])
    assert result.exit_code == 0, result.output
    assert "optimal length: 5" in result.output
    # one numbered line per plan step
    steps = [l for l in result.output.splitlines() if l.lstrip()[0:1].isdigit()]
    assert len(steps) == 5


def test_solve_reports_unsolvable(runner, tmp_path):
    room = generate(LevelConfig(level=1, seed=7))
    doc = room.to_document()
    # strand the exit key on the far side of the locked door
    doc["graph"]["relations"] = [
        {"kind": "in_room", "src": "key_1", "dst": "outside"}
        if r["src"] == "key_1" and r["kind"] in ("inside", "in_room", "on_top")
        else r
        for r in doc["graph"]["relations"]
    ]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    result = runner.invoke(main, ["solve", "--room", str(path)])
    assert result.exit_code != 0
    assert "unsolvable" in result.output


def test_solve_rejects_junk_file(runner, tmp_path):
    path = tmp_path / "junk.json"
    path.write_text("{]")
    result = runner.invoke(main, ["solve", "--room", str(path)])
    assert result.exit_code != 0


# ── bench ────────────────────────────────────────────────────────────────────


def suite_file(tmp_path, seeds=(0, 1)):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps({
        "tasks": [
            {"name": "Escape L1", "scenario": "escape_1", "seeds": list(seeds)}
        ]
    }))
    return path


def test_bench_prints_table_and_writes_report(runner, tmp_path):
    suite = suite_file(tmp_path)
    out = tmp_path / "report.json"
    result = runner.invoke(main, [
        "bench", "--suite", str(suite), "--policies", "oracle",
        "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    assert "Task" in result.output and "oracle" in result.output
    assert "1.00 ± 0.00" in result.output
    doc = json.loads(out.read_text())
    assert doc["rows"][0]["mean"] == 1.0


def test_bench_rejects_unknown_policy(runner, tmp_path):
    result = runner.invoke(main, [
        "bench", "--suite", str(suite_file(tmp_path)),
        "--policies", "telepathy",
    ])
    assert result.exit_code != 0
    assert "unknown policy" in result.output


def test_bench_rejects_bad_suite_file(runner, tmp_path):
    path = tmp_path / "suite.json"
    path.write_text(json.dumps({"tasks": [{"name": "X"}]}))
    result = runner.invoke(main, ["bench", "--suite", str(path)])
    assert result.exit_code != 0


def test_parse_policies_llm_config(tmp_path):
    cfg_path = tmp_path / "llm.json"
    cfg_path.write_text(json.dumps({
        "base_url": "http://127.0.0.1:1", "model": "stub", "max_retries": 0,
    }))
    policies = _parse_policies(f"oracle,llm:{cfg_path}")
    assert [name for name, _ in policies] == ["oracle", "llm"]


def test_parse_policies_llm_bad_key(tmp_path):
    cfg_path = tmp_path / "llm.json"
    cfg_path.write_text(json.dumps({"base_url": "x", "model": "m",
                                    "volume": 11}))
    with pytest.raises(Exception):
        _parse_policies(f"llm:{cfg_path}")


def test_bench_unreachable_llm_scores_zero(runner, tmp_path):
    cfg_path = tmp_path / "llm.json"
    cfg_path.write_text(json.dumps({
        "base_url": "http://127.0.0.1:1", "model": "stub",
        "max_retries": 0, "timeout": 0.2,
    }))
    result = runner.invoke(main, [
        "bench", "--suite", str(suite_file(tmp_path, seeds=(0,))),
        "--policies", f"llm:{cfg_path}",
    ])
    assert result.exit_code == 0, result.output
    assert "0.00 ± 0.00" in result.output


# ── config ───────────────────────────────────────────────────────────────────


def test_load_config_reads_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"port": 9001, "session_ttl": 60}))
    assert _load_config(str(path))["port"] == 9001
    assert _load_config(None) == {}


def test_load_config_rejects_non_object(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("[1, 2]")
    with pytest.raises(Exception):
        _load_config(str(path))


# ── edit client ──────────────────────────────────────────────────────────────


def live_session():
    client = TestClient(create_app())
    response = client.post("/sessions", json={"level": 1, "seed": 7})
    return client, response.json()["id"]


def test_edit_client_round_trip(runner):
    client, sid = live_session()
    lines = "\n".join([
        json.dumps({"op": "set_state", "id": "box_1", "key": "open",
                    "value": True}),
        json.dumps({"op": "remove", "id": "ghost_1"}),
        "quit",
    ]) + "\n"
    result = runner.invoke(main, ["edit", "--session", sid],
                           input=lines, obj={"client": client})
    assert result.exit_code == 0, result.output
    assert "[0] ok set_state(box_1)" in result.output
    assert "passed" in result.output
    assert "FAILED remove(ghost_1)" in result.output
    assert "failed" in result.output


def test_edit_client_batch_line(runner):
    client, sid = live_session()
    batch = json.dumps([
        {"op": "set_state", "id": "box_1", "key": "open", "value": True},
        {"op": "set_state", "id": "box_1", "key": "open", "value": False},
    ])
    result = runner.invoke(main, ["edit", "--session", sid],
                           input=batch + "\nquit\n", obj={"client": client})
    assert result.exit_code == 0
    assert "[0] ok" in result.output and "[1] ok" in result.output


def test_edit_client_reports_http_errors(runner):
    client, _sid = live_session()
    result = runner.invoke(main, ["edit", "--session", "bogus"],
                           input='{"op": "remove", "id": "x"}\n',
                           obj={"client": client})
    assert result.exit_code == 0
    assert "error 404" in result.output


def test_edit_client_skips_blank_and_bad_lines(runner):
    client, sid = live_session()
    result = runner.invoke(main, ["edit", "--session", sid],
                           input="\nnot json\nquit\n",
                           obj={"client": client})
    assert result.exit_code == 0
    assert "not JSON" in result.output
