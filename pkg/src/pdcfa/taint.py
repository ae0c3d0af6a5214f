"""Taint lattice, API summaries, and source-to-sink finding extraction.

A taint store maps the same abstract addresses as the value store to sets of
sensitivity categories; joins are pointwise union and taint is only ever
propagated monotonically alongside values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fnmatch import fnmatchcase


class TaintVal(enum.Enum):
    LOCATION = "Location"
    FILE_SYSTEM = "FileSystem"
    SMS = "Sms"
    PHONE = "Phone"
    VOICE = "Voice"
    DEVICE_ID = "DeviceID"
    NETWORK = "Network"
    ID = "ID"
    TIME_OR_DATE = "TimeOrDate"
    DISPLAY = "Display"
    REFLECTION = "Reflection"
    IPC = "IPC"
    BROWSER_BOOKMARK = "BrowserBookmark"
    SD_CARD = "SdCard"
    BROWSER_HISTORY = "BrowserHistory"
    THREAD = "Thread"
    PICTURE = "Picture"
    CONTACT = "Contact"
    SENSOR = "Sensor"
    ACCOUNT = "Account"
    MEDIA = "Media"


_CATEGORY_BY_NAME = {t.value: t for t in TaintVal}

SINK_KINDS = ("network", "file", "intent", "sms", "log")
RETURN_ABSTRACTIONS = ("any-string", "any-int", "null", "void")


class SummaryFormatError(Exception):
    pass


class TaintStore:
    """Addr -> set of TaintVal; a join-semilattice under pointwise union."""

    def __init__(self):
        self._data: dict = {}
        self.version = 0
        self.on_read = None
        self.on_grow = None

    def lookup(self, addr) -> frozenset:
        if self.on_read is not None:
            self.on_read(addr)
        return self._data.get(addr, frozenset())

    def join(self, addr, taints) -> bool:
        taints = frozenset(taints)
        if not taints:
            return False
        old = self._data.get(addr, frozenset())
        new = old | taints
        if new == old:
            return False
        self._data[addr] = new
        self.version += 1
        if self.on_grow is not None:
            self.on_grow(addr)
        return True

    def items(self):
        return self._data.items()

    def copy(self) -> "TaintStore":
        other = TaintStore()
        other._data = dict(self._data)
        other.version = self.version
        return other

    def join_store(self, other: "TaintStore") -> bool:
        grew = False
        for addr, taints in other._data.items():
            grew |= self.join(addr, taints)
        return grew

    def canonical_text(self) -> str:
        lines = []
        for addr in sorted(self._data, key=lambda a: a.sort_key()):
            cats = ",".join(sorted(t.value for t in self._data[addr]))
            lines.append(f"{addr.canonical()} -> {{{cats}}}")
        return "\n".join(lines) + "\n"

    def fingerprint(self):
        return self.canonical_text()

    def all_categories(self) -> frozenset:
        out = set()
        for taints in self._data.values():
            out |= taints
        return frozenset(out)


# ---------------------------------------------------------------------------
# API summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ApiSummary:
    """One record of the summary table.

    Patterns cover class (with ``*`` globbing) and method name; parameter
    lists are always wildcarded. ``sink_categories=None`` means the sink
    reports every category that reaches it.
    """

    class_pattern: str
    method_name: str
    role: str  # source | sink | propagate | neutral
    source_categories: tuple = ()
    sink_kind: str | None = None
    sink_categories: tuple | None = None
    return_abstraction: str = "void"
    permissions: tuple = ()

    def key(self) -> str:
        return f"{self.class_pattern}.{self.method_name}"


class SummaryTable:
    def __init__(self, records: list):
        self.records: list[ApiSummary] = list(records)

    def match(self, class_chain, method_name: str) -> ApiSummary | None:
        """First record matching the method on the most-derived class first."""
        for cls in class_chain:
            for rec in self.records:
                if rec.method_name == method_name \
                        and fnmatchcase(cls, rec.class_pattern):
                    return rec
        return None


def _parse_categories(text: str) -> tuple:
    cats = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if part not in _CATEGORY_BY_NAME:
            raise SummaryFormatError(f"unknown taint category {part!r}")
        cats.append(_CATEGORY_BY_NAME[part])
    return tuple(cats)


def parse_summaries(text: str) -> SummaryTable:
    """Parse the summary table format.

    One record per line:
    ``summary <class-pattern> <method> role=<...> ret=<...> perms=<P1,...>``
    where role is ``source:cat,...``, ``sink:kind[:cat,...]``, ``propagate``
    or ``neutral``. Blank lines and ``#``/``;`` comments are skipped.
    """
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        parts = line.split()
        if parts[0] != "summary" or len(parts) < 4:
            raise SummaryFormatError(f"line {lineno}: expected "
                                     "'summary <class> <method> ...'")
        class_pattern, method_name = parts[1], parts[2]
        role = None
        source_cats: tuple = ()
        sink_kind = None
        sink_cats = None
        ret = "void"
        perms: tuple = ()
        for item in parts[3:]:
            if "=" not in item:
                raise SummaryFormatError(f"line {lineno}: malformed field {item!r}")
            key, _, value = item.partition("=")
            if key == "role":
                bits = value.split(":")
                role = bits[0]
                if role == "source":
                    if len(bits) != 2:
                        raise SummaryFormatError(
                            f"line {lineno}: source needs categories")
                    source_cats = _parse_categories(bits[1])
                elif role == "sink":
                    if len(bits) not in (2, 3) or bits[1] not in SINK_KINDS:
                        raise SummaryFormatError(
                            f"line {lineno}: sink needs a kind from "
                            f"{SINK_KINDS}")
                    sink_kind = bits[1]
                    if len(bits) == 3:
                        sink_cats = _parse_categories(bits[2])
                elif role not in ("propagate", "neutral"):
                    raise SummaryFormatError(f"line {lineno}: unknown role {role!r}")
            elif key == "ret":
                if value not in RETURN_ABSTRACTIONS:
                    raise SummaryFormatError(
                        f"line {lineno}: ret must be one of {RETURN_ABSTRACTIONS}")
                ret = value
            elif key == "perms":
                perms = tuple(p for p in value.split(",") if p)
            else:
                raise SummaryFormatError(f"line {lineno}: unknown field {key!r}")
        if role is None:
            raise SummaryFormatError(f"line {lineno}: missing role")
        records.append(ApiSummary(class_pattern, method_name, role,
                                  source_cats, sink_kind, sink_cats,
                                  ret, perms))
    return SummaryTable(records)


def load_summaries(path) -> SummaryTable:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_summaries(fh.read())


def apply_summary(summary: ApiSummary, arg_vals, arg_taints):
    """Return (ret_val, ret_taint, sink_hits) for one summary application.

    ``ret_val`` is a frozenset of abstract values per the record's return
    abstraction; sink hits pair each flowing category with the sink kind.
    """
    from . import machine

    all_arg_taint = frozenset().union(*arg_taints) if arg_taints else frozenset()
    ret_taint: frozenset = frozenset()
    sink_hits: frozenset = frozenset()
    if summary.role == "source":
        ret_taint = frozenset(summary.source_categories)
    elif summary.role == "propagate":
        ret_taint = all_arg_taint
    elif summary.role == "sink":
        flowing = all_arg_taint
        if summary.sink_categories is not None:
            flowing = flowing & frozenset(summary.sink_categories)
        sink_hits = frozenset((t, summary.sink_kind) for t in flowing)
    ret_val = {
        "any-string": frozenset({machine.ANY_STRING}),
        "any-int": frozenset({machine.ANY_INT}),
        "null": frozenset({machine.NULL}),
        "void": frozenset({machine.VOID}),
    }[summary.return_abstraction]
    return ret_val, ret_taint, sink_hits


# ---------------------------------------------------------------------------
# Findings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TriggerContext:
    unit: str
    entry_point: str


@dataclass(frozen=True)
class TaintFinding:
    category: TaintVal
    source_state: object  # ControlState
    source_line: int
    sink_state: object
    sink_kind: str
    sink_line: int
    witness: tuple  # ControlStates
    trigger: TriggerContext
    sink_permissions: tuple = ()
    witness_steps: tuple = ()  # PathSteps backing the witness

    def dedup_key(self):
        return (self.trigger, self.category.value,
                self.source_state.pos.sort_key(),
                self.sink_state.pos.sort_key())

    def sort_key(self):
        return (self.trigger.unit, self.source_line, self.sink_line,
                self.category.value, self.trigger.entry_point,
                self.sink_state.pos.sort_key())


def _result_items(results):
    """Normalize one AnalysisResult or an iterable of them to a list."""
    from .reach import AnalysisResult

    if isinstance(results, AnalysisResult):
        return [results]
    return list(results)


def extract_findings(results, summaries=None, units=None) -> list:
    """Build deduplicated, deterministically ordered findings.

    ``results`` is one AnalysisResult or the final-round result collection
    from saturation. Source applications are pooled across all results so
    that flows crossing entry points (through saturated field addresses)
    still name their introducing source. A within-result witness is the
    stack-respecting path from source to sink; for cross-entry flows it is
    the entry-to-source path followed by the entry-to-sink path.
    """
    items = _result_items(results)
    sources = []  # (category, state, line, result)
    seen_sources = set()
    for res in items:
        for app in res.source_applications():
            for cat in app.source_categories:
                key = (cat, app.state)
                if key in seen_sources:
                    continue
                seen_sources.add(key)
                sources.append((cat, app.state, app.line, res))
    sources.sort(key=lambda s: (s[0].value, s[1].sort_key()))

    findings: dict = {}
    for res in items:
        trigger = res.trigger
        for app in res.sink_applications():
            for cat, kind in sorted(app.sink_hits,
                                    key=lambda h: (h[0].value, h[1])):
                for src_cat, src_state, src_line, src_res in sources:
                    if src_cat is not cat:
                        continue
                    states, steps = _witness(src_res, src_state, res, app.state)
                    finding = TaintFinding(
                        category=cat,
                        source_state=src_state,
                        source_line=src_line,
                        sink_state=app.state,
                        sink_kind=kind,
                        sink_line=app.line,
                        witness=states,
                        trigger=trigger,
                        sink_permissions=app.permissions,
                        witness_steps=steps,
                    )
                    findings.setdefault(finding.dedup_key(), finding)
    return sorted(findings.values(), key=lambda f: f.sort_key())


def _segment(res, frm, to):
    from .reach import reconstruct_path_steps

    steps = reconstruct_path_steps(res, frm, to)
    if steps is None:
        return None, None
    return (frm,) + tuple(s.dst for s in steps), tuple(steps)


def _witness(src_res, src_state, sink_res, sink_state):
    if src_res is sink_res:
        states, steps = _segment(sink_res, src_state, sink_state)
        if states is not None:
            return states, steps
    head_states, head_steps = _segment(src_res, src_res.initial_state,
                                       src_state)
    tail_states, tail_steps = _segment(sink_res, sink_res.initial_state,
                                       sink_state)
    states = (head_states or ()) + (tail_states or ())
    steps = (head_steps or ()) + (tail_steps or ())
    return states, steps
