"""Pushdown control-flow, taint-flow, and least-permissions analysis for an
object-oriented register bytecode."""

__version__ = "0.1.0"

from .ir import MethodRef, ParseError, Program, parse_program  # noqa: F401
from .machine import AllocPolicy, Store, seed_entry_bindings  # noqa: F401
from .reach import (  # noqa: F401
    AnalysisConfig,
    AnalysisResult,
    analyze_finite,
    analyze_pushdown,
    reconstruct_path,
)
from .eps import discover_entry_points, saturate_app, saturate_unit  # noqa: F401
from .taint import (  # noqa: F401
    SummaryTable,
    TaintStore,
    TaintVal,
    extract_findings,
    load_summaries,
    parse_summaries,
)
from .permissions import build_permission_report, collect_permissions  # noqa: F401
from .concrete import run_concrete  # noqa: F401

__all__ = [
    "__version__",
    "AllocPolicy",
    "AnalysisConfig",
    "AnalysisResult",
    "MethodRef",
    "ParseError",
    "Program",
    "Store",
    "SummaryTable",
    "TaintStore",
    "TaintVal",
    "analyze_finite",
    "analyze_pushdown",
    "build_permission_report",
    "collect_permissions",
    "discover_entry_points",
    "extract_findings",
    "load_summaries",
    "parse_program",
    "parse_summaries",
    "reconstruct_path",
    "run_concrete",
    "saturate_app",
    "saturate_unit",
    "seed_entry_bindings",
]
