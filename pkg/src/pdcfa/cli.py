"""Command-line front-end: load a bundle, saturate, analyze, write reports.

Exit codes: 0 completed with no findings, 1 completed with findings,
2 usage or input error, 3 resource limit hit. ``PDCFA_LOG`` selects the log
level. ``--mode`` is the only difference between the two engines'
invocations; every other knob is shared.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from . import __version__, eps, permissions as perms_mod, report as report_mod
from .ir import ParseError, Program, parse_program
from .machine import MalformedState
from .reach import AnalysisConfig, FINITE, PUSHDOWN
from .taint import SummaryFormatError, SummaryTable, extract_findings, load_summaries

log = logging.getLogger("pdcfa.cli")

EXIT_CLEAN = 0
EXIT_FINDINGS = 1
EXIT_USAGE = 2
EXIT_RESOURCE_LIMIT = 3


class BundleError(Exception):
    pass


@dataclass
class AppBundle:
    root: Path
    manifest: dict
    program_path: Path
    summaries_path: Path
    program: Program
    summaries: SummaryTable
    predicates: list

    @property
    def app_name(self) -> str:
        return self.manifest["appName"]

    @property
    def requested_permissions(self) -> frozenset:
        return frozenset(self.manifest.get("requestedPermissions", []))


def load_bundle(root) -> AppBundle:
    root = Path(root)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise BundleError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BundleError(f"malformed manifest: {exc}") from exc
    try:
        report_mod.validate_document(manifest, "manifest")
    except Exception as exc:
        raise BundleError(f"manifest does not validate: {exc}") from exc
    program_path = root / manifest["program"]
    summaries_path = root / manifest["summaries"]
    for p in (program_path, summaries_path):
        if not p.is_file():
            raise BundleError(f"missing bundle file {p}")
    program = parse_program(program_path.read_text(encoding="utf-8"))
    summaries = load_summaries(summaries_path)
    predicates = [report_mod.parse_predicate(p)
                  for p in manifest.get("predicates", [])]
    return AppBundle(root, manifest, program_path, summaries_path,
                     program, summaries, predicates)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _meta(bundle: AppBundle, cfg: AnalysisConfig, predicate) -> dict:
    return {
        "toolVersion": __version__,
        "app": bundle.app_name,
        "config": {
            "mode": cfg.mode,
            "k": cfg.k,
            "heapContext": cfg.heap_context,
            "intConstantBudget": cfg.int_constant_budget,
            "maxStates": cfg.max_states,
            "maxSeconds": cfg.max_seconds,
            "jobs": cfg.jobs,
            "predicate": predicate.text() if predicate is not None else None,
        },
        "inputs": {
            "programSha256": _sha256(bundle.program_path),
            "manifestSha256": _sha256(bundle.root / "manifest.json"),
            "summariesSha256": _sha256(bundle.summaries_path),
        },
    }


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pdcfa",
        description="Pushdown control-flow, taint, and least-permissions "
                    "analysis for .sdex bundles.")
    p.add_argument("--bundle", required=True, metavar="DIR",
                   help="bundle directory (manifest.json, program, summaries)")
    p.add_argument("--mode", choices=[PUSHDOWN, FINITE], default=PUSHDOWN,
                   help="reachability engine (default: pushdown)")
    p.add_argument("--k", type=int, default=1, metavar="N",
                   help="call-site context depth, 0..4 (default: 1)")
    p.add_argument("--heap-context", action="store_true",
                   help="pair allocation sites with the allocating context")
    p.add_argument("--jobs", type=int, default=1, metavar="N",
                   help="worklist workers; any schedule yields the same "
                        "fixpoint, and 1 keeps runs byte-reproducible")
    p.add_argument("--max-states", type=int, default=500_000, metavar="N")
    p.add_argument("--max-seconds", type=float, default=300.0, metavar="N")
    p.add_argument("--where", metavar="PRED", default=None,
                   help='finding filter, e.g. "taintHas(Location) and '
                        'classIs(Photo*)"')
    p.add_argument("--out", required=True, metavar="DIR",
                   help="output directory for report files")
    return p


def _configure_logging() -> None:
    level = os.environ.get("PDCFA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(name)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_arg_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_CLEAN
    t0 = time.monotonic()
    try:
        bundle = load_bundle(args.bundle)
        where = report_mod.parse_predicate(args.where) if args.where else None
        predicate = report_mod.conjoin(bundle.predicates + [where])
        cfg = AnalysisConfig(
            mode=args.mode, k=args.k, heap_context=args.heap_context,
            max_states=args.max_states, max_seconds=args.max_seconds,
            jobs=args.jobs, predicate=predicate)
        units = eps.discover_entry_points(bundle, bundle.program)
    except (BundleError, ParseError, SummaryFormatError,
            report_mod.PredicateError, eps.UnknownMethod, eps.EmptyUnit,
            ValueError) as exc:
        print(f"pdcfa: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.jobs > 1:
        log.info("jobs=%d requested; running the sequential schedule", args.jobs)

    try:
        _store, _taint, trace = eps.saturate_app(
            bundle.program, units, cfg, bundle.summaries)
    except MalformedState as exc:
        print(f"pdcfa: malformed program state: {exc}", file=sys.stderr)
        return EXIT_USAGE
    results = trace.final_results()
    findings = extract_findings(results, bundle.summaries, units)
    collected = perms_mod.collect_permissions(results)
    preport = perms_mod.build_permission_report(
        bundle.requested_permissions, collected,
        lower_bound=not trace.complete)

    meta = _meta(bundle, cfg, predicate)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    flow_doc = report_mod.emit_flow_report(findings, predicate,
                                           bundle.program, meta)
    perm_doc = report_mod.emit_permission_report(preport, bundle.program, meta)
    heat_doc = report_mod.emit_heat_map(results, bundle.program, meta)
    dot_text = report_mod.export_graph(results, findings, bundle.program)
    (outdir / "flow_report.json").write_bytes(report_mod.to_json_bytes(flow_doc))
    (outdir / "permissions_report.json").write_bytes(
        report_mod.to_json_bytes(perm_doc))
    (outdir / "heatmap.json").write_bytes(report_mod.to_json_bytes(heat_doc))
    (outdir / "state_graph.dot").write_text(dot_text, encoding="utf-8")
    run_meta = {
        **meta,
        "schema": "run_meta",
        "complete": trace.complete,
        "limitReason": trace.limit_reason,
        "globalRounds": trace.global_rounds,
        "findingCount": flow_doc["findingCount"],
        "elapsedSeconds": round(time.monotonic() - t0, 3),
    }
    (outdir / "run_meta.json").write_bytes(report_mod.to_json_bytes(run_meta))

    print(report_mod.render_flow_report_text(flow_doc), end="")
    print(report_mod.render_permissions_text(perm_doc), end="")
    if not trace.complete:
        print(f"pdcfa: resource limit hit ({trace.limit_reason}); "
              "results are partial", file=sys.stderr)
        return EXIT_RESOURCE_LIMIT
    return EXIT_FINDINGS if flow_doc["findingCount"] else EXIT_CLEAN


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
