"""Scene editing as JSON edit scripts.

The edit protocol has five operations — add, remove, replace, move,
set_state — covering object-level changes to a scene.  Scripts apply
in list order, one edit at a time; an edit that fails validation (or
would break a graph invariant) is recorded in the report and skipped,
and later edits still run.  Each applied edit is atomic.

`diff(a, b)` emits a normalized script in this protocol that rewrites
a into b: adds first (placement parents before children), then
replacements, moves, state changes, and removals last (children before
their containers).  Closure property: applying diff(a, b) to a yields
a graph structurally equal to b.

The protocol deliberately cannot touch rooms, agents, doors'
connectivity, or agent memory — those belong to the generator and the
action engine, not to scene editing.  diff raises DiffError when asked
to bridge graphs that differ in those.

`interpretation_check` re-evaluates each edit's postcondition twice:
against the symbolic graph, and against the view derived from a
declared viewpoint (an agent's observation, or a room-scoped one).
Postconditions that cannot be seen from the viewpoint — the subject
sits in another room or behind a closed container — are checked
graph-side only and annotated occluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scene_graph import (
    Observation,
    PARENT_KINDS,
    Relation,
    SceneGraph,
    SchemaError,
    check_invariants,
    observe,
    parse_object,
    serialize,
)


class DiffError(Exception):
    """The two graphs differ in something the edit protocol cannot
    express (rooms, agents, connects, memory)."""


class UnknownViewpoint(Exception):
    pass


# ── report types ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Verdict:
    index: int
    op: str
    applied: bool
    reason: str | None = None

    def to_document(self) -> dict:
        return {
            "index": self.index,
            "op": self.op,
            "applied": self.applied,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class Mismatch:
    predicate: str
    expected: str
    observed: str
    source: str  # "graph" | "view"

    def to_document(self) -> dict:
        return {
            "predicate": self.predicate,
            "expected": self.expected,
            "observed": self.observed,
            "source": self.source,
        }


@dataclass
class CheckReport:
    verdicts: list[Verdict] = field(default_factory=list)
    mismatches: list[Mismatch] = field(default_factory=list)
    occlusions: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v.applied for v in self.verdicts) and not self.mismatches

    def to_document(self) -> dict:
        return {
            "verdicts": [v.to_document() for v in self.verdicts],
            "mismatches": [m.to_document() for m in self.mismatches],
            "occlusions": self.occlusions,
            "passed": self.passed,
        }


def merge_reports(applied: CheckReport, interpreted: CheckReport) -> CheckReport:
    return CheckReport(
        verdicts=applied.verdicts + interpreted.verdicts,
        mismatches=applied.mismatches + interpreted.mismatches,
        occlusions=applied.occlusions + interpreted.occlusions,
    )


# ── edit parsing ─────────────────────────────────────────────────────────────

_EDIT_KEYS = {
    "add": {"op", "node", "relation", "target"},
    "remove": {"op", "id"},
    "replace": {"op", "id", "node"},
    "move": {"op", "id", "relation", "target"},
    "set_state": {"op", "id", "key", "value"},
}


def parse_edit(doc, path: str) -> dict:
    """Strict shape check; returns the doc unchanged on success."""
    if not isinstance(doc, dict):
        raise SchemaError(path, "edit must be an object")
    op = doc.get("op")
    if op not in _EDIT_KEYS:
        raise SchemaError(f"{path}/op", f"unknown edit op {op!r}")
    unknown = sorted(set(doc) - _EDIT_KEYS[op])
    if unknown:
        raise SchemaError(f"{path}/{unknown[0]}", "unknown key")
    missing = sorted(_EDIT_KEYS[op] - set(doc))
    if missing:
        raise SchemaError(f"{path}/{missing[0]}", "missing required key")
    if op in ("add", "replace"):
        parse_object(doc["node"], f"{path}/node")
    if op in ("add", "move"):
        if doc["relation"] not in PARENT_KINDS:
            raise SchemaError(f"{path}/relation", f"bad relation {doc['relation']!r}")
        if not isinstance(doc["target"], str):
            raise SchemaError(f"{path}/target", "expected string")
    if op in ("remove", "replace", "move", "set_state"):
        if not isinstance(doc["id"], str):
            raise SchemaError(f"{path}/id", "expected string")
    if op == "set_state":
        if not isinstance(doc["key"], str):
            raise SchemaError(f"{path}/key", "expected string")
        if not isinstance(doc["value"], bool):
            raise SchemaError(f"{path}/value", "state value must be boolean")
    return doc


def _edit_summary(doc) -> str:
    if not isinstance(doc, dict):
        return repr(doc)
    op = doc.get("op", "?")
    subject = doc.get("id") or (doc.get("node") or {}).get("id", "?")
    return f"{op}({subject})"


# ── application ──────────────────────────────────────────────────────────────


def _try_apply_one(g: SceneGraph, doc: dict) -> str | None:
    """Mutate g in place per one edit; returns a failure reason or
    None.  Caller guarantees g is a scratch clone."""
    op = doc["op"]
    if op == "add":
        node = parse_object(doc["node"], "/node")
        if g.has_id(node.id):
            return f"id {node.id!r} already exists"
        if not g.has_id(doc["target"]):
            return f"target {doc['target']!r} does not exist"
        g.objects[node.id] = node
        g.relations.add(Relation(doc["relation"], node.id, doc["target"]))
        if doc["relation"] == "held_by" and doc["target"] in g.agents:
            g.agents[doc["target"]].holding.append(node.id)
    elif op == "remove":
        if doc["id"] not in g.objects:
            return f"no object {doc['id']!r}"
        if g.contents_of(doc["id"]):
            return f"{doc['id']} still has contents; move them first"
        node_id = doc["id"]
        g.relations = {r for r in g.relations if node_id not in (r.src, r.dst)}
        del g.objects[node_id]
        for agent in g.agents.values():
            if node_id in agent.holding:
                agent.holding = [h for h in agent.holding if h != node_id]
    elif op == "replace":
        if doc["id"] not in g.objects:
            return f"no object {doc['id']!r}"
        node = parse_object(doc["node"], "/node")
        if node.id != doc["id"]:
            return "replace cannot change the id"
        g.objects[node.id] = node
    elif op == "move":
        if doc["id"] not in g.objects:
            return f"no object {doc['id']!r}"
        if not g.has_id(doc["target"]):
            return f"target {doc['target']!r} does not exist"
        old = g.parent_relation(doc["id"])
        if old is not None:
            g.relations.discard(old)
            if old.kind == "held_by" and old.dst in g.agents:
                holder = g.agents[old.dst]
                holder.holding = [h for h in holder.holding if h != doc["id"]]
        g.relations.add(Relation(doc["relation"], doc["id"], doc["target"]))
        if doc["relation"] == "held_by" and doc["target"] in g.agents:
            g.agents[doc["target"]].holding.append(doc["id"])
    elif op == "set_state":
        if doc["id"] not in g.objects:
            return f"no object {doc['id']!r}"
        g.objects[doc["id"]].states[doc["key"]] = doc["value"]
    return None


def apply_edits(graph: SceneGraph, edits: list[dict]) -> tuple[SceneGraph, CheckReport]:
    """Apply a script in list order; failed edits are skipped and
    reported, applied ones are atomic and bump the revision."""
    report = CheckReport()
    current = graph
    for index, doc in enumerate(edits):
        summary = _edit_summary(doc)
        try:
            parse_edit(doc, f"/edits/{index}")
        except SchemaError as exc:
            report.verdicts.append(Verdict(index, summary, False, str(exc)))
            continue
        scratch = current.clone()
        reason = _try_apply_one(scratch, doc)
        if reason is None:
            violations = check_invariants(scratch)
            if violations:
                reason = str(violations[0])
        if reason is not None:
            report.verdicts.append(Verdict(index, summary, False, reason))
            continue
        scratch.bump()
        current = scratch
        report.verdicts.append(Verdict(index, summary, True))
    return current, report


# ── diff ─────────────────────────────────────────────────────────────────────


def _object_docs(graph: SceneGraph) -> dict[str, dict]:
    return {doc["id"]: doc for doc in serialize(graph)["objects"]}


def _statics_equal(doc_a: dict, doc_b: dict) -> bool:
    pruned_a = {k: v for k, v in doc_a.items() if k != "states"}
    pruned_b = {k: v for k, v in doc_b.items() if k != "states"}
    return pruned_a == pruned_b


def _loses_capacity(doc_a: dict, doc_b: dict) -> bool:
    before = set(doc_a["affordances"])
    after = set(doc_b["affordances"])
    return bool((before - after) & {"container", "surface"})


def _topo_adds(b: SceneGraph, ids: list[str]) -> list[str]:
    """Placement parents before children; lexicographic among ready."""
    pending = set(ids)
    out = []
    while pending:
        ready = sorted(
            oid for oid in pending
            if (b.parent_relation(oid) is None
                or b.parent_relation(oid).dst not in pending)
        )
        if not ready:
            out.extend(sorted(pending))
            break
        out.extend(ready)
        pending.difference_update(ready)
    return out


def _removal_depth(a: SceneGraph, oid: str) -> int:
    depth, current = 0, oid
    while current in a.objects:
        rel = a.parent_relation(current)
        if rel is None:
            break
        depth += 1
        current = rel.dst
    return depth


def _connects_map(graph: SceneGraph) -> dict[str, tuple[str, ...]]:
    out: dict[str, list[str]] = {}
    for rel in graph.relations:
        if rel.kind == "connects":
            out.setdefault(rel.src, []).append(rel.dst)
    return {k: tuple(sorted(v)) for k, v in out.items()}


def diff(a: SceneGraph, b: SceneGraph) -> list[dict]:
    """Normalized edit script turning a into b (revision ignored)."""
    if a.rooms != b.rooms:
        raise DiffError("graphs differ in rooms")
    if set(a.agents) != set(b.agents) or any(
        a.agents[k].capacity != b.agents[k].capacity
        or a.agents[k].read_clues != b.agents[k].read_clues
        for k in a.agents
    ):
        raise DiffError("graphs differ in agents")
    docs_a, docs_b = _object_docs(a), _object_docs(b)
    conn_a, conn_b = _connects_map(a), _connects_map(b)
    if conn_a != conn_b:
        raise DiffError("graphs differ in door connectivity")

    edits: list[dict] = []
    added = sorted(set(docs_b) - set(docs_a))
    common = sorted(set(docs_a) & set(docs_b))
    removed = sorted(set(docs_a) - set(docs_b))

    for oid in _topo_adds(b, added):
        rel = b.parent_relation(oid)
        edits.append(
            {"op": "add", "node": docs_b[oid], "relation": rel.kind,
             "target": rel.dst}
        )

    replaced: set[str] = set()
    late_replaces: list[dict] = []
    for oid in common:
        if _statics_equal(docs_a[oid], docs_b[oid]):
            continue
        replaced.add(oid)
        op = {"op": "replace", "id": oid, "node": docs_b[oid]}
        # shrinking container/surface capability must wait until the
        # children have been moved away
        if _loses_capacity(docs_a[oid], docs_b[oid]):
            late_replaces.append(op)
        else:
            edits.append(op)

    for oid in common:
        rel_a, rel_b = a.parent_relation(oid), b.parent_relation(oid)
        if rel_a != rel_b and rel_b is not None:
            edits.append(
                {"op": "move", "id": oid, "relation": rel_b.kind,
                 "target": rel_b.dst}
            )

    for oid in common:
        states_a = docs_a[oid]["states"]
        states_b = docs_b[oid]["states"]
        if oid in replaced:
            # replace already wrote b's full states dict
            continue
        missing = sorted(set(states_a) - set(states_b))
        if missing:
            raise DiffError(
                f"{oid}: state key {missing[0]!r} removed; "
                "the edit protocol can only set states"
            )
        for key in sorted(states_b):
            if states_a.get(key) != states_b[key]:
                edits.append(
                    {"op": "set_state", "id": oid, "key": key,
                     "value": states_b[key]}
                )

    edits.extend(late_replaces)

    for oid in sorted(removed, key=lambda o: (-_removal_depth(a, o), o)):
        edits.append({"op": "remove", "id": oid})

    return edits


# ── interpretation check ─────────────────────────────────────────────────────


def _room_view(graph: SceneGraph, room_id: str) -> Observation:
    """Room-scoped pseudo-observation (a fixed camera instead of an
    agent's eyes)."""
    probe = "___viewpoint___"
    g = graph.clone()
    from .scene_graph import AgentNode  # local to avoid cycle noise

    g.agents[probe] = AgentNode(id=probe, capacity=0)
    g.relations.add(Relation("in_room", probe, room_id))
    obs = observe(g, probe)
    return obs


def _resolve_viewpoint(graph: SceneGraph, viewpoint: str) -> Observation:
    if viewpoint in graph.agents:
        return observe(graph, viewpoint)
    if viewpoint in graph.rooms:
        return _room_view(graph, viewpoint)
    raise UnknownViewpoint(viewpoint)


def _graph_side(graph: SceneGraph, doc: dict) -> list[Mismatch]:
    """Evaluate one edit's postcondition against the symbolic graph."""
    out = []
    op = doc["op"]
    if op == "add" or op == "replace":
        node = parse_object(doc["node"], "/node")
        if node.id not in graph.objects:
            out.append(Mismatch(f"exists({node.id})", "present", "absent", "graph"))
            return out
        live = graph.objects[node.id]
        if (live.category, live.display_name, live.affordances) != (
            node.category, node.display_name, node.affordances
        ):
            out.append(
                Mismatch(f"statics({node.id})", "as edited", "differs", "graph")
            )
        for key, value in node.states.items():
            if live.states.get(key) != value:
                out.append(
                    Mismatch(
                        f"state({node.id}.{key})",
                        str(value).lower(),
                        str(live.states.get(key)).lower(),
                        "graph",
                    )
                )
        if op == "add":
            rel = graph.parent_relation(node.id)
            want = (doc["relation"], node.id, doc["target"])
            if rel is None or tuple(rel) != want:
                out.append(
                    Mismatch(
                        f"parent({node.id})",
                        f"{doc['relation']}({doc['target']})",
                        f"{rel.kind}({rel.dst})" if rel else "none",
                        "graph",
                    )
                )
    elif op == "remove":
        if doc["id"] in graph.objects:
            out.append(Mismatch(f"absent({doc['id']})", "absent", "present", "graph"))
    elif op == "move":
        rel = graph.parent_relation(doc["id"])
        want = (doc["relation"], doc["id"], doc["target"])
        if rel is None or tuple(rel) != want:
            out.append(
                Mismatch(
                    f"parent({doc['id']})",
                    f"{doc['relation']}({doc['target']})",
                    f"{rel.kind}({rel.dst})" if rel else "none",
                    "graph",
                )
            )
    elif op == "set_state":
        if doc["id"] not in graph.objects:
            out.append(Mismatch(f"exists({doc['id']})", "present", "absent", "graph"))
        else:
            live = graph.objects[doc["id"]].states.get(doc["key"])
            if live != doc["value"]:
                out.append(
                    Mismatch(
                        f"state({doc['id']}.{doc['key']})",
                        str(doc["value"]).lower(),
                        str(live).lower(),
                        "graph",
                    )
                )
    return out


def _subject_of(doc: dict) -> str:
    return doc.get("id") or doc["node"]["id"]


def _view_side(
    graph: SceneGraph, obs: Observation, doc: dict, index: int,
    occlusions: list[dict],
) -> list[Mismatch]:
    """Re-evaluate the postcondition against the derived view.  Returns
    mismatches; appends occlusion annotations for subjects the view
    legitimately cannot see."""
    op = doc["op"]
    subject = _subject_of(doc)
    vis = {v.id: v for v in obs.visible_objects}

    if op == "remove":
        if subject in vis:
            return [Mismatch(f"absent({subject})", "absent", "visible", "view")]
        return []

    if subject not in vis:
        # Distinguish "hidden from this viewpoint" from "missing".
        in_graph = subject in graph.objects
        occluded = in_graph and (
            graph.room_of(subject) != obs.room_id or not graph.chain_visible(subject)
        )
        if occluded:
            occlusions.append(
                {"index": index, "predicate": f"visible({subject})",
                 "view": "occluded"}
            )
            return []
        return [Mismatch(f"visible({subject})", "visible", "absent", "view")]

    out = []
    entry = vis[subject]
    if op in ("add", "replace"):
        node = parse_object(doc["node"], "/node")
        if (entry.category, entry.display_name) != (node.category, node.display_name):
            out.append(Mismatch(f"statics({subject})", "as edited", "differs", "view"))
        view_states = dict(entry.states)
        for key, value in node.states.items():
            if view_states.get(key) != value:
                out.append(
                    Mismatch(
                        f"state({subject}.{key})",
                        str(value).lower(),
                        str(view_states.get(key)).lower(),
                        "view",
                    )
                )
    if op in ("add", "move"):
        want = Relation(doc["relation"], subject, doc["target"])
        rels = set(entry.relations)
        if want not in rels:
            # target may itself be out of view (e.g. moved onto a
            # surface in another room wouldn't leave the subject
            # visible anyway, so reaching here means a real mismatch)
            out.append(
                Mismatch(
                    f"parent({subject})",
                    f"{doc['relation']}({doc['target']})",
                    "; ".join(f"{r.kind}({r.dst})" for r in sorted(rels)) or "none",
                    "view",
                )
            )
    if op == "set_state":
        view_states = dict(entry.states)
        if view_states.get(doc["key"]) != doc["value"]:
            out.append(
                Mismatch(
                    f"state({subject}.{doc['key']})",
                    str(doc["value"]).lower(),
                    str(view_states.get(doc["key"])).lower(),
                    "view",
                )
            )
    return out


def interpretation_check(
    graph: SceneGraph, edits: list[dict], viewpoint: str
) -> CheckReport:
    """Check that the most recent edit batch is faithfully reflected in
    both the symbolic graph and the viewpoint-derived view."""
    obs = _resolve_viewpoint(graph, viewpoint)
    report = CheckReport()
    for index, doc in enumerate(edits):
        try:
            parse_edit(doc, f"/edits/{index}")
        except SchemaError:
            continue  # malformed edits were never applied; nothing to check
        report.mismatches.extend(_graph_side(graph, doc))
        report.mismatches.extend(
            _view_side(graph, obs, doc, index, report.occlusions)
        )
    return report
