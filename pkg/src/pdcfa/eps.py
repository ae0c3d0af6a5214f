"""Entry-point saturation: cover all orderings of asynchronous entry points.

Each declared entry point is analyzed with the widened store pair inherited
from the previous one; passes repeat within a unit, and rounds repeat across
units, until a full pass adds nothing. The saturated store then models every
interleaving of entry points without enumerating orderings.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import machine, reach
from .ir import MethodRef, Program
from .machine import Store
from .taint import SummaryTable, TaintStore, TriggerContext

log = logging.getLogger("pdcfa.eps")

UNIT_KINDS = ("activity", "service", "receiver", "provider", "background",
              "other")
ENTRY_CATEGORIES = ("lifecycle-callback", "async-operation", "ui-handler")
REGISTRATION_SOURCES = ("manifest", "layout")


class UnknownMethod(Exception):
    pass


class EmptyUnit(Exception):
    pass


@dataclass(frozen=True)
class EntryPoint:
    method_ref: MethodRef
    category: str
    registration_source: str

    def label(self) -> str:
        return self.method_ref.method_name


@dataclass(frozen=True)
class Unit:
    name: str
    kind: str
    entry_points: tuple


@dataclass
class SaturationTrace:
    results: dict  # (unit name, entry label) -> final-round AnalysisResult
    rounds_per_unit: dict
    global_rounds: int
    final_store: Store
    final_taint: TaintStore
    complete: bool = True
    limit_reason: str | None = None

    def final_results(self) -> list:
        return list(self.results.values())


def discover_entry_points(bundle, program: Program) -> list:
    """Units and entry points exactly as the bundle manifest declares them.

    The manifest stands in for layout/bytecode scanning; declarations are
    validated against the parsed program.
    """
    units = []
    for u in bundle.manifest["units"]:
        eps = []
        for e in u["entryPoints"]:
            ref = MethodRef(e["class"], e["method"],
                            tuple(e.get("paramTypes", [])))
            if ref not in program.methods:
                raise UnknownMethod(f"entry point {ref.sig()} not in program")
            category = e.get("category", "ui-handler")
            source = e.get("registrationSource", "manifest")
            if category not in ENTRY_CATEGORIES:
                raise ValueError(f"unknown entry category {category!r}")
            if source not in REGISTRATION_SOURCES:
                raise ValueError(f"unknown registration source {source!r}")
            eps.append(EntryPoint(ref, category, source))
        if not eps:
            raise EmptyUnit(f"unit {u['name']} declares no entry points")
        kind = u.get("kind", "other")
        if kind not in UNIT_KINDS:
            raise ValueError(f"unknown unit kind {kind!r}")
        units.append(Unit(u["name"], kind, tuple(eps)))
    names = [u.name for u in units]
    if len(set(names)) != len(names):
        raise ValueError("unit names must be unique")
    return units


def _run_entry(program: Program, unit: Unit, ep: EntryPoint, store: Store,
               taint: TaintStore, cfg: reach.AnalysisConfig,
               summaries: SummaryTable, shared) -> reach.AnalysisResult:
    seeded = store.copy()
    seeded_taint = taint.copy()
    machine.seed_entry_bindings(program, ep.method_ref, seeded, seeded_taint)
    result = reach.analyze(program, ep.method_ref, seeded, seeded_taint, cfg,
                           summaries, shared)
    result.trigger = TriggerContext(unit.name, ep.label())
    return result


def saturate_unit(program: Program, unit: Unit, in_store: Store,
                  in_taint: TaintStore, cfg: reach.AnalysisConfig,
                  summaries: SummaryTable | None = None,
                  shared=None) -> tuple:
    """Analyze each entry point with the inherited store pair; repeat full
    passes until one adds nothing. Returns (store, taint, trace)."""
    summaries = summaries or SummaryTable([])
    store, taint = in_store, in_taint
    results: dict = {}
    rounds = 0
    while True:
        rounds += 1
        before = (store.fingerprint(), taint.fingerprint(),
                  shared.fingerprint() if shared is not None else 0)
        for ep in unit.entry_points:
            result = _run_entry(program, unit, ep, store, taint, cfg,
                                summaries, shared)
            results[(unit.name, ep.label())] = result
            store = result.final_store
            taint = result.final_taint
            if not result.complete:
                trace = SaturationTrace(results, {unit.name: rounds}, rounds,
                                        store, taint, complete=False,
                                        limit_reason=result.limit_reason)
                return store, taint, trace
        after = (store.fingerprint(), taint.fingerprint(),
                 shared.fingerprint() if shared is not None else 0)
        if after == before:
            break
    trace = SaturationTrace(results, {unit.name: rounds}, rounds, store, taint)
    return store, taint, trace


def saturate_app(program: Program, units, cfg: reach.AnalysisConfig,
                 summaries: SummaryTable | None = None,
                 init_store: Store | None = None,
                 init_taint: TaintStore | None = None) -> tuple:
    """Round-robin unit saturation to a global fixpoint.

    Returns (store, taint, trace); the trace holds every entry point's
    final-round analysis result. Optional seeds support re-running
    saturation from its own output (a fixpoint check).
    """
    if not units:
        raise EmptyUnit("no units declared")
    summaries = summaries or SummaryTable([])
    store = init_store.copy() if init_store is not None \
        else Store(cfg.int_constant_budget)
    taint = init_taint.copy() if init_taint is not None else TaintStore()
    shared = reach.FiniteShared() if cfg.mode == reach.FINITE else None
    results: dict = {}
    rounds_per_unit: dict = {}
    global_rounds = 0
    while True:
        global_rounds += 1
        before = (store.fingerprint(), taint.fingerprint(),
                  shared.fingerprint() if shared is not None else 0)
        for unit in units:
            store, taint, unit_trace = saturate_unit(
                program, unit, store, taint, cfg, summaries, shared)
            results.update(unit_trace.results)
            rounds_per_unit[unit.name] = unit_trace.rounds_per_unit[unit.name]
            if not unit_trace.complete:
                trace = SaturationTrace(results, rounds_per_unit,
                                        global_rounds, store, taint,
                                        complete=False,
                                        limit_reason=unit_trace.limit_reason)
                return store, taint, trace
        after = (store.fingerprint(), taint.fingerprint(),
                 shared.fingerprint() if shared is not None else 0)
        if after == before:
            break
    trace = SaturationTrace(results, rounds_per_unit, global_rounds,
                            store, taint)
    return store, taint, trace
