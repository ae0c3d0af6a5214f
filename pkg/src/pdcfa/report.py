"""Analyst-facing outputs: flow report, permissions report, heat map, graph.

Reports serialize as JSON against schemas shipped in ``pdcfa/schemas``; the
graph is emitted as DOT (SVG rendering is external tooling's job). All
documents are byte-deterministic for fixed inputs and embed the config echo
and input digests passed in ``meta``. Verdict hints only restate findings
and permission gaps; the tool never rules on maliciousness by itself.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from fnmatch import fnmatchcase
from importlib import resources

from .ir import StmtPos
from .permissions import PermissionReport
from .reach import AnalysisResult, NOOP, POP, PUSH
from .taint import TaintVal

_ATOM_RE = re.compile(r"\s*([A-Za-z]+)\s*\(\s*([^()]*)\s*\)\s*")

_ATOM_NAMES = ("classIs", "methodIs", "lineIn", "taintHas", "sinkKindIs",
               "permissionIs", "unitIs")


class PredicateError(Exception):
    pass


@dataclass(frozen=True)
class PredicateAtom:
    name: str
    args: tuple

    def text(self) -> str:
        return f"{self.name}({','.join(str(a) for a in self.args)})"


@dataclass(frozen=True)
class Predicate:
    """Conjunction of filter atoms over findings."""

    atoms: tuple

    def text(self) -> str:
        return " and ".join(a.text() for a in self.atoms)

    def matches(self, finding) -> bool:
        return all(_atom_matches(a, finding) for a in self.atoms)


def parse_predicate(text: str) -> Predicate:
    """Parse e.g. ``taintHas(Location) and classIs(Photo*)``."""
    atoms = []
    for part in re.split(r"\band\b", text):
        part = part.strip()
        if not part:
            continue
        m = _ATOM_RE.fullmatch(part)
        if m is None:
            raise PredicateError(f"malformed predicate atom {part!r}")
        name, rawargs = m.group(1), m.group(2)
        if name not in _ATOM_NAMES:
            raise PredicateError(f"unknown predicate atom {name!r}")
        args = tuple(a.strip() for a in rawargs.split(",") if a.strip())
        if name == "lineIn":
            if len(args) != 2:
                raise PredicateError("lineIn takes (lo, hi)")
            lo, hi = int(args[0]), int(args[1])
            if lo > hi:
                raise PredicateError("lineIn requires lo <= hi")
            args = (lo, hi)
        elif name == "taintHas":
            if len(args) != 1 or args[0] not in {t.value for t in TaintVal}:
                raise PredicateError(f"taintHas needs a taint category, got "
                                     f"{args!r}")
        elif len(args) != 1:
            raise PredicateError(f"{name} takes one argument")
        atoms.append(PredicateAtom(name, args))
    if not atoms:
        raise PredicateError("empty predicate")
    return Predicate(tuple(atoms))


def conjoin(predicates) -> Predicate | None:
    atoms = []
    for p in predicates:
        if p is not None:
            atoms.extend(p.atoms)
    return Predicate(tuple(atoms)) if atoms else None


def _atom_matches(atom: PredicateAtom, f) -> bool:
    src_cls = f.source_state.pos.method.class_name
    snk_cls = f.sink_state.pos.method.class_name
    if atom.name == "classIs":
        return fnmatchcase(src_cls, atom.args[0]) \
            or fnmatchcase(snk_cls, atom.args[0])
    if atom.name == "methodIs":
        return fnmatchcase(f.source_state.pos.method.method_name, atom.args[0]) \
            or fnmatchcase(f.sink_state.pos.method.method_name, atom.args[0])
    if atom.name == "lineIn":
        lo, hi = atom.args
        return lo <= f.source_line <= hi or lo <= f.sink_line <= hi
    if atom.name == "taintHas":
        return f.category.value == atom.args[0]
    if atom.name == "sinkKindIs":
        return f.sink_kind == atom.args[0]
    if atom.name == "permissionIs":
        return atom.args[0] in f.sink_permissions
    if atom.name == "unitIs":
        return fnmatchcase(f.trigger.unit, atom.args[0])
    raise AssertionError(atom.name)


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------


def _state_ref(program, state) -> dict:
    return {
        "class": state.pos.method.class_name,
        "method": state.pos.method.method_name,
        "line": program.line_of(state.pos),
    }


def emit_flow_report(findings, predicate, program, meta=None) -> dict:
    """Findings filtered by the predicate (all pass when absent)."""
    meta = meta or {}
    kept = [f for f in findings if predicate is None or predicate.matches(f)]
    entries = []
    for f in kept:
        entries.append({
            "unit": f.trigger.unit,
            "trigger": {"unit": f.trigger.unit,
                        "entryPoint": f.trigger.entry_point},
            "category": f.category.value,
            "source": _state_ref(program, f.source_state),
            "sink": {**_state_ref(program, f.sink_state),
                     "kind": f.sink_kind,
                     "permissions": sorted(f.sink_permissions)},
            "witness": [_state_ref(program, s) for s in f.witness],
        })
    hints = []
    if kept:
        cats = sorted({f.category.value for f in kept})
        hints.append(f"{len(kept)} tainted source-to-sink flow(s) detected "
                     f"across categories: {', '.join(cats)}")
        kinds = sorted({f.sink_kind for f in kept})
        hints.append(f"sink kinds reached by tainted data: {', '.join(kinds)}")
    doc = {
        "schema": "flow_report",
        "findingCount": len(entries),
        "predicate": predicate.text() if predicate is not None else None,
        "findings": entries,
        "verdictHints": hints,
    }
    doc.update(meta)
    return doc


def emit_permission_report(preport: PermissionReport, program,
                           meta=None) -> dict:
    meta = meta or {}
    evidence = {}
    for perm, sites in preport.evidence.items():
        evidence[perm] = [{"class": s.pos.method.class_name,
                           "method": s.pos.method.method_name,
                           "line": line} for s, line in sites]
    hints = []
    if preport.over_privileged:
        hints.append("requested permission(s) with no reachable use: "
                     + ", ".join(sorted(preport.over_privileged)))
    if preport.missing:
        hints.append("permission-gated API(s) reachable without a request: "
                     + ", ".join(sorted(preport.missing)))
    doc = {
        "schema": "permissions_report",
        "requested": sorted(preport.requested),
        "reached": sorted(preport.reached),
        "overPrivileged": sorted(preport.over_privileged),
        "missing": sorted(preport.missing),
        "evidence": evidence,
        "lowerBound": preport.lower_bound,
        "verdictHints": hints,
    }
    doc.update(meta)
    return doc


def _result_items(results):
    if isinstance(results, AnalysisResult):
        return [results]
    return list(results)


def emit_heat_map(results, program, meta=None, top_n: int = 50) -> dict:
    """Visit counts aggregated per method and per statement, descending."""
    meta = meta or {}
    per_stmt: dict = {}
    per_method: dict = {}
    for res in _result_items(results):
        for state, count in res.visit_counts.items():
            if count == 0:  # discovered but unprocessed (budget break)
                continue
            key = (state.pos.method, state.pos.index)
            per_stmt[key] = per_stmt.get(key, 0) + count
            per_method[state.pos.method] = \
                per_method.get(state.pos.method, 0) + count
    methods = [{"class": m.class_name, "method": m.method_name,
                "visits": v}
               for m, v in sorted(per_method.items(),
                                  key=lambda kv: (-kv[1], kv[0].sort_key()))]
    statements = [{"class": m.class_name, "method": m.method_name,
                   "index": idx,
                   "line": program.line_of(StmtPos(m, idx)),
                   "visits": v}
                  for (m, idx), v in sorted(
                      per_stmt.items(),
                      key=lambda kv: (-kv[1], kv[0][0].sort_key(), kv[0][1]))]
    doc = {
        "schema": "heatmap",
        "methods": methods,
        "statements": statements[:top_n],
    }
    doc.update(meta)
    return doc


# ---------------------------------------------------------------------------
# Graph export
# ---------------------------------------------------------------------------


def _merge_graph(results):
    nodes: dict = {}
    edges: dict = {}
    for res in _result_items(results):
        for n in res.dsg.nodes:
            nodes[n] = None
        for e in res.dsg.edges:
            edges[e] = None
    return nodes, edges


def _dot_quote(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_graph(results, findings, program) -> str:
    """The reachable control-state graph in DOT, sources/sinks and witness
    paths highlighted; stack actions label the edges (push / pop / ε)."""
    nodes, edges = _merge_graph(results)
    source_states = set()
    sink_states = set()
    for res in _result_items(results):
        for app in res.applications:
            if app.source_categories:
                source_states.add(app.state)
            if app.sink_hits:
                sink_states.add(app.state)
    witness_edges = set()
    witness_summaries = set()
    for f in findings:
        for step in f.witness_steps:
            if step.kind == "summary":
                witness_summaries.add((step.src, step.dst))
            else:
                witness_edges.add((step.src, step.kind, step.frame, step.dst))

    ordered = sorted(nodes, key=lambda n: n.sort_key())
    ids = {n: f"n{i}" for i, n in enumerate(ordered)}
    lines = ["digraph reachable_states {",
             "  rankdir=LR;",
             '  node [shape=box, fontname="monospace", fontsize=9];']
    for n in ordered:
        label = _dot_quote(
            f"{n.pos.method.class_name}.{n.pos.method.method_name}"
            f":{program.line_of(n.pos)}\\n@{n.pos.index}"
            f"{'+move' if n.pos.at_move else ''} {n.fp.canonical()}")
        style = ""
        if n in source_states and n in sink_states:
            style = ', style=filled, fillcolor="orange"'
        elif n in source_states:
            style = ', style=filled, fillcolor="palegreen"'
        elif n in sink_states:
            style = ', style=filled, fillcolor="lightcoral"'
        lines.append(f'  {ids[n]} [label="{label}"{style}];')
    for e in sorted(edges, key=lambda e: e.sort_key()):
        label = {NOOP: "ε", PUSH: "push", POP: "pop"}[e.kind]
        if e.frame is not None:
            label += f" {_dot_quote(e.frame.canonical())}"
        attrs = [f'label="{label}"']
        if (e.src, e.kind, e.frame, e.dst) in witness_edges:
            attrs.append('color="red"')
            attrs.append("penwidth=2")
            attrs.append('witness="1"')
        lines.append(f"  {ids[e.src]} -> {ids[e.dst]} [{', '.join(attrs)}];")
    for src, dst in sorted(witness_summaries,
                           key=lambda p: (p[0].sort_key(), p[1].sort_key())):
        if src in ids and dst in ids:
            lines.append(f"  {ids[src]} -> {ids[dst]} "
                         '[label="ε*", style=dashed, color="red", '
                         'penwidth=2, witness="1"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Serialization and schema validation
# ---------------------------------------------------------------------------


def to_json_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")


def load_schema(name: str) -> dict:
    ref = resources.files("pdcfa").joinpath("schemas", f"{name}.schema.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def validate_document(doc: dict, schema_name: str) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema(schema_name))


# ---------------------------------------------------------------------------
# Plain-text rendering for terminal use
# ---------------------------------------------------------------------------


def render_flow_report_text(doc: dict) -> str:
    out = [f"information-flow report: {doc['findingCount']} finding(s)"]
    for f in doc["findings"]:
        out.append(
            f"  [{f['category']}] {f['source']['class']}."
            f"{f['source']['method']}:{f['source']['line']}"
            f" -> {f['sink']['kind']} sink {f['sink']['class']}."
            f"{f['sink']['method']}:{f['sink']['line']}"
            f" (trigger {f['trigger']['entryPoint']}, unit {f['unit']})")
    for hint in doc.get("verdictHints", []):
        out.append(f"  note: {hint}")
    return "\n".join(out) + "\n"


def render_permissions_text(doc: dict) -> str:
    out = ["least-permissions report:"]
    out.append(f"  requested: {', '.join(doc['requested']) or '(none)'}")
    out.append(f"  reached:   {', '.join(doc['reached']) or '(none)'}")
    out.append(f"  over-privileged: {', '.join(doc['overPrivileged']) or '(none)'}")
    out.append(f"  missing:   {', '.join(doc['missing']) or '(none)'}")
    return "\n".join(out) + "\n"
