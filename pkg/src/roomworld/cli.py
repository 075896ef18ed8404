"""Command-line front end: serve the session API, generate and solve
escape rooms, run benchmark suites, and drive a live session's edit
endpoint line by line."""

from __future__ import annotations

import json
import sys

import click
import httpx

from .actions import action_to_wire
from .evaluation import (
    default_suite,
    llm_factory,
    oracle_factory,
    random_factory,
    render_table,
    run_benchmark,
    suite_from_document,
)
from .harness import LlmEndpointConfig
from .puzzles import GenerationFailure, LevelConfig, generate as generate_room
from .puzzles import room_from_document
from .scene_graph import SchemaError
from .solver import BudgetExceeded, SolutionCertificate, solve
from .server import create_app


@click.group()
def main():
    """Scene-graph simulator: rooms, solver, benchmarks, and a session
    server."""


# ── serve ────────────────────────────────────────────────────────────────────


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise click.ClickException(f"{path}: config must be a JSON object")
    return doc


@main.command()
@click.option("--port", type=int, default=None, help="Listen port [8000].")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static", "static_dir", default=None,
              type=click.Path(exists=True, file_okay=False),
              help="Serve a UI directory at /.")
@click.option("--config", "config_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON config: port, session_ttl, snapshot_dir, llm.")
def serve(port, host, static_dir, config_path):
    """Run the session HTTP service."""
    import uvicorn

    cfg = _load_config(config_path)
    if port is None:
        port = cfg.get("port", 8000)
    app = create_app(
        static_dir=static_dir,
        session_ttl=cfg.get("session_ttl"),
        snapshot_dir=cfg.get("snapshot_dir"),
    )
    uvicorn.run(app, host=host, port=port)


# ── generate / solve ─────────────────────────────────────────────────────────


@main.command()
@click.option("--level", type=int, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, writable=True))
def generate(level, seed, out_path):
    """Generate one escape room and print or save its document."""
    try:
        room = generate_room(LevelConfig(level=level, seed=seed))
    except ValueError as exc:
        raise click.ClickException(str(exc))
    except GenerationFailure as exc:
        raise click.ClickException(f"generation failed: {exc}")
    doc = room.to_document()
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
        click.echo(
            f"level {level} seed {seed}: optimal "
            f"{room.certificate.optimal_length} moves -> {out_path}"
        )
    else:
        click.echo(json.dumps(doc, indent=2))


def _describe_wire(wire: dict) -> str:
    kind = wire["type"]
    rest = {k: v for k, v in wire.items() if k != "type" and v is not None}
    if not rest:
        return kind
    parts = []
    for key in ("room", "object", "objects", "target", "relation", "key",
                "code"):
        if key in rest:
            value = rest[key]
            parts.append(",".join(value) if isinstance(value, list)
                         else str(value))
    return f"{kind} {' '.join(parts)}"


@main.command("solve")
@click.option("--room", "room_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--budget", type=int, default=50_000, show_default=True)
def solve_cmd(room_path, budget):
    """Re-solve a generated room document and print the plan."""
    with open(room_path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"{room_path}: {exc}")
    try:
        room = room_from_document(doc)
    except SchemaError as exc:
        raise click.ClickException(str(exc))
    result = solve(room.graph, room.goal, budget)
    if isinstance(result, SolutionCertificate):
        for i, (agent_id, action) in enumerate(result.plan, start=1):
            click.echo(f"{i:2d}. {agent_id}  {_describe_wire(action_to_wire(action))}")
        click.echo(f"optimal length: {result.optimal_length}")
    elif isinstance(result, BudgetExceeded):
        raise click.ClickException(
            f"budget exceeded after {result.expanded} expansions"
        )
    else:
        raise click.ClickException(f"unsolvable: {result.reason}")


# ── bench ────────────────────────────────────────────────────────────────────


def _parse_policies(spec: str):
    policies = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        if token == "oracle":
            policies.append(("oracle", oracle_factory))
        elif token == "random":
            policies.append(("random", random_factory))
        elif token.startswith("llm:"):
            path = token[len("llm:"):]
            with open(path) as fh:
                doc = json.load(fh)
            try:
                cfg = LlmEndpointConfig(**doc)
            except (TypeError, ValueError) as exc:
                raise click.ClickException(f"{path}: {exc}")
            policies.append(("llm", llm_factory(cfg)))
        else:
            raise click.ClickException(
                f"unknown policy {token!r}; expected oracle, random, "
                "or llm:config.json"
            )
    return policies


@main.command()
@click.option("--suite", "suite_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Suite JSON; omit for the built-in suite.")
@click.option("--policies", default="oracle,random", show_default=True)
@click.option("--seeds", type=int, default=20, show_default=True,
              help="Seeds per task when using the built-in suite.")
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, writable=True))
def bench(suite_path, policies, seeds, jobs, out_path):
    """Run a benchmark suite and print the success table."""
    if suite_path:
        with open(suite_path) as fh:
            doc = json.load(fh)
        try:
            suite = suite_from_document(doc)
        except SchemaError as exc:
            raise click.ClickException(str(exc))
    else:
        suite = default_suite(seeds=seeds, escape_seeds=seeds)
    report = run_benchmark(suite, _parse_policies(policies), jobs=jobs)
    click.echo(render_table(report))
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(report.to_document(), fh, indent=2)
            fh.write("\n")
        click.echo(f"report -> {out_path}")


# ── edit client ──────────────────────────────────────────────────────────────


def _edit_batch(line: str):
    doc = json.loads(line)
    return doc if isinstance(doc, list) else [doc]


@main.command()
@click.option("--session", "session_id", required=True)
@click.option("--url", default="http://127.0.0.1:8000", show_default=True)
@click.option("--viewpoint", default=None,
              help="Agent or room id to verify edits against.")
@click.pass_context
def edit(ctx, session_id, url, viewpoint):
    """Line-mode edit client: one JSON edit (or list) per stdin line."""
    client = None
    if isinstance(ctx.obj, dict):
        client = ctx.obj.get("client")
    if client is None:
        client = httpx.Client(base_url=url)
    for line in sys.stdin:
        line = line.strip()
        if not line or line in ("quit", "exit"):
            if line:
                break
            continue
        try:
            batch = _edit_batch(line)
        except json.JSONDecodeError as exc:
            click.echo(f"not JSON: {exc}", err=True)
            continue
        body = {"edits": batch}
        if viewpoint:
            body["viewpoint"] = viewpoint
        response = client.post(f"/sessions/{session_id}/edits", json=body)
        if response.status_code != 200:
            detail = response.json().get("detail", response.text)
            click.echo(f"error {response.status_code}: {detail}", err=True)
            continue
        report = response.json()["report"]
        for verdict in report["verdicts"]:
            mark = "ok" if verdict["applied"] else "FAILED"
            reason = f"  ({verdict['reason']})" if verdict.get("reason") else ""
            click.echo(f"[{verdict['index']}] {mark} {verdict['op']}{reason}")
        for mismatch in report["mismatches"]:
            click.echo(
                f"mismatch ({mismatch['source']}/{mismatch['predicate']}): "
                f"expected {mismatch['expected']}, observed {mismatch['observed']}"
            )
        click.echo("passed" if report["passed"] else "failed")


if __name__ == "__main__":
    main()
