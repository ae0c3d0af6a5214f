"""Reachability engines over the abstract machine.

Two engines share the machine's transition rules and differ only in how the
continuation stack is treated:

* ``analyze_pushdown`` keeps the stack exact: it builds a Dyck state graph
  whose edges carry stack actions, maintaining epsilon summaries so a pop is
  propagated to exactly the push sites with a balanced path to it.
* ``analyze_finite`` finitizes the stack in the traditional way: returns flow
  to every continuation merged at the same context key (the callee frame
  pointer), and throws link to every recorded handler whose guarded region
  can reach the throwing method, so it computes a superset of the pushdown
  result.

Both run a worklist to a simultaneous fixpoint of the node set, edge set,
summaries, and one global widened store pair. Worklist order is LIFO with
deterministic tie-breaking, so results are identical across runs. The
worklist may be drained by several workers as long as store joins stay
atomic and node/edge insertion stays idempotent; the sequential schedule
used here is one valid schedule.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

from . import machine
from .ir import (
    MethodRef,
    PopHandler,
    Program,
    PushHandler,
    Return,
    StmtPos,
    Throw,
)
from .machine import (
    AllocPolicy,
    FramePointer,
    FunFrame,
    HandlerFrame,
    MalformedState,
    NOOP,
    POP,
    PUSH,
    RegAddr,
    Store,
    TERMINAL_RETURN,
    TERMINAL_UNCAUGHT,
    frame_pointer_zero,
)
from .taint import SummaryTable, TaintStore, TriggerContext

log = logging.getLogger("pdcfa.reach")

PUSHDOWN = "pushdown"
FINITE = "finite"


class ResourceLimit(Exception):
    """Raised only by callers that insist on complete results."""


@dataclass(frozen=True)
class ControlState:
    pos: StmtPos
    fp: FramePointer

    def sort_key(self):
        return (self.pos.sort_key(), self.fp.sort_key())

    def describe(self) -> str:
        move = "+move" if self.pos.at_move else ""
        return (f"{self.pos.method.sig()}@{self.pos.index}{move} "
                f"{self.fp.canonical()}")


@dataclass(frozen=True)
class Edge:
    src: ControlState
    kind: str  # noop | push | pop
    frame: object  # FunFrame | HandlerFrame | None
    dst: ControlState

    def sort_key(self):
        fkey = self.frame.sort_key() if self.frame is not None else ()
        return (self.src.sort_key(), self.kind, fkey, self.dst.sort_key())


class DyckStateGraph:
    """Reachable control states with stack-action edges and summaries."""

    def __init__(self):
        self.nodes: dict = {}
        self.edges: dict = {}
        self.epsilon_summaries: dict = {}
        self._out: dict = {}
        self._sum_from: dict = {}

    def add_node(self, s: ControlState) -> bool:
        if s in self.nodes:
            return False
        self.nodes[s] = None
        return True

    def add_edge(self, e: Edge) -> bool:
        if e in self.edges:
            return False
        self.edges[e] = None
        self._out.setdefault(e.src, []).append(e)
        return True

    def add_summary(self, a: ControlState, b: ControlState) -> bool:
        if (a, b) in self.epsilon_summaries:
            return False
        self.epsilon_summaries[(a, b)] = None
        self._sum_from.setdefault(a, []).append(b)
        return True

    def out_edges(self, s: ControlState) -> list:
        return self._out.get(s, [])

    def summaries_from(self, s: ControlState) -> list:
        return self._sum_from.get(s, [])


@dataclass(frozen=True)
class SummaryApplication:
    """One API summary applied at a control state (merged over revisits)."""

    state: ControlState
    line: int
    summary_key: str
    role: str
    sink_kind: str | None
    sink_hits: frozenset  # of (TaintVal, kind)
    permissions: tuple
    source_categories: tuple

    def sort_key(self):
        return (self.state.sort_key(), self.summary_key)


@dataclass(frozen=True)
class AnalysisConfig:
    mode: str = PUSHDOWN
    k: int = 1
    heap_context: bool = False
    int_constant_budget: int = 8
    max_states: int = 500_000
    max_seconds: float = 300.0
    jobs: int = 1
    predicate: object = None

    def __post_init__(self):
        if self.mode not in (PUSHDOWN, FINITE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 <= self.k <= 4:
            raise ValueError("k must be between 0 and 4")
        if self.max_states <= 0 or self.max_seconds <= 0:
            raise ValueError("budgets must be positive")

    def policy(self) -> AllocPolicy:
        return AllocPolicy(self.k, self.heap_context, self.int_constant_budget)


@dataclass
class AnalysisResult:
    mode: str
    entry: MethodRef
    initial_state: ControlState
    dsg: DyckStateGraph
    final_store: Store
    final_taint: TaintStore
    visit_counts: dict
    terminals: dict  # ControlState -> tuple of terminal kinds
    tracebacks: dict  # ControlState -> discovering Edge
    complete: bool
    limit_reason: str | None
    applications: list
    config: AnalysisConfig
    trigger: TriggerContext

    def node_set(self) -> frozenset:
        return frozenset(self.dsg.nodes)

    def source_applications(self) -> list:
        return sorted((a for a in self.applications if a.source_categories),
                      key=lambda a: a.sort_key())

    def sink_applications(self) -> list:
        return sorted((a for a in self.applications if a.sink_hits),
                      key=lambda a: a.sort_key())


class _Recorder:
    def __init__(self, program: Program):
        self.program = program
        self._apps: dict = {}

    def summary_applied(self, pos, fp, rec, sink_hits, arg_taint):
        state = ControlState(pos, fp)
        key = (state, rec.key())
        hits = frozenset(sink_hits)
        old = self._apps.get(key)
        if old is not None:
            hits |= old.sink_hits
        self._apps[key] = SummaryApplication(
            state=state,
            line=self.program.line_of(pos),
            summary_key=rec.key(),
            role=rec.role,
            sink_kind=rec.sink_kind,
            sink_hits=hits,
            permissions=rec.permissions,
            source_categories=rec.source_categories if rec.role == "source"
            else (),
        )

    def applications(self) -> list:
        return sorted(self._apps.values(), key=lambda a: a.sort_key())


_HYP_ANY = "<any>"
_HYP_EMPTY = "<empty>"


def _hyp_key(hyp):
    if hyp is _HYP_ANY:
        return (0,)
    if hyp is _HYP_EMPTY:
        return (1,)
    return (2, hyp.sort_key())


def _item_key(item):
    state, hyp = item
    return (state.sort_key(), _hyp_key(hyp))


class _BaseEngine:
    def __init__(self, program: Program, entry: MethodRef, init_store: Store,
                 init_taint: TaintStore, cfg: AnalysisConfig,
                 summaries: SummaryTable):
        if entry not in program.methods:
            raise machine.ResolveError(f"unknown entry {entry.sig()}")
        self.program = program
        self.entry = entry
        self.cfg = cfg
        self.policy = cfg.policy()
        self.summaries = summaries
        self.store = Store(cfg.int_constant_budget)
        self.store.join_store(init_store)
        self.taint = TaintStore()
        self.taint.join_store(init_taint)
        self.fp0 = frame_pointer_zero(entry)
        self.init_state = ControlState(StmtPos(entry, 0), self.fp0)
        self.dsg = DyckStateGraph()
        self.visit_counts: dict = {}
        self.terminals: dict = {}
        self.tracebacks: dict = {}
        self.recorder = _Recorder(program)
        self.worklist: list = []
        self.pending: set = set()
        self.readers: dict = {}
        self.current_item = None
        self.complete = True
        self.limit_reason: str | None = None
        self.store.on_read = self._on_read
        self.store.on_grow = self._on_grow
        self.taint.on_read = self._on_read
        self.taint.on_grow = self._on_grow

    # dependency tracking -------------------------------------------------

    def _on_read(self, addr):
        if self.current_item is not None:
            self.readers.setdefault(addr, {})[self.current_item] = None

    def _on_grow(self, addr):
        for item in list(self.readers.get(addr, {})):
            self._enqueue(item)

    def _enqueue(self, item):
        if item not in self.pending:
            self.pending.add(item)
            self.worklist.append(item)

    def _enqueue_sorted(self, items):
        for item in sorted(items, key=_item_key):
            self._enqueue(item)

    def _budget_exceeded(self, t0: float) -> bool:
        if len(self.dsg.nodes) > self.cfg.max_states:
            self.complete = False
            self.limit_reason = "max-states"
            return True
        if time.monotonic() - t0 > self.cfg.max_seconds:
            self.complete = False
            self.limit_reason = "max-seconds"
            return True
        return False

    def _terminal(self, state: ControlState, kind: str):
        kinds = set(self.terminals.get(state, ()))
        kinds.add(kind)
        self.terminals[state] = tuple(sorted(kinds))

    def _result(self, mode: str) -> AnalysisResult:
        self.store.on_read = self.store.on_grow = None
        self.taint.on_read = self.taint.on_grow = None
        return AnalysisResult(
            mode=mode,
            entry=self.entry,
            initial_state=self.init_state,
            dsg=self.dsg,
            final_store=self.store,
            final_taint=self.taint,
            visit_counts=dict(self.visit_counts),
            terminals=dict(self.terminals),
            tracebacks=dict(self.tracebacks),
            complete=self.complete,
            limit_reason=self.limit_reason,
            applications=self.recorder.applications(),
            config=self.cfg,
            trigger=TriggerContext("<direct>", self.entry.sig()),
        )


class _PushdownEngine(_BaseEngine):
    """Dyck-state-graph construction with epsilon summarization."""

    def __init__(self, *args):
        super().__init__(*args)
        self.rfwd: dict = {}
        self.rbwd: dict = {}
        self.tops: dict = {}
        self.eb: set = set()
        self.push_into: dict = {}
        self.pushes_by_frame: dict = {}
        self.pops_at: dict = {}
        self.dependent: dict = {}

    def run(self) -> AnalysisResult:
        t0 = time.monotonic()
        self.eb.add(self.init_state)
        self._ensure_node(self.init_state, None)
        if self.dependent[self.init_state]:
            self._enqueue((self.init_state, _HYP_EMPTY))
        while self.worklist:
            if self._budget_exceeded(t0):
                break
            item = self.worklist.pop()
            self.pending.discard(item)
            self._process(item)
        return self._result(PUSHDOWN)

    # graph construction ---------------------------------------------------

    def _ensure_node(self, state: ControlState, via: Edge | None):
        if not self.dsg.add_node(state):
            return
        if via is not None:
            self.tracebacks[state] = via
        self.visit_counts.setdefault(state, 0)
        dep = machine.is_stack_dependent(self.program, state.pos)
        self.dependent[state] = dep
        if not dep:
            self._enqueue((state, _HYP_ANY))
        else:
            for frame in self.tops.get(state, {}):
                self._enqueue((state, frame))
            if state in self.eb:
                self._enqueue((state, _HYP_EMPTY))

    def _add_noop(self, src, dst):
        edge = Edge(src, NOOP, None, dst)
        self._ensure_node(dst, edge)
        self.dsg.add_edge(edge)
        self._add_pair(src, dst)

    def _add_push(self, src, frame, dst):
        edge = Edge(src, PUSH, frame, dst)
        self._ensure_node(dst, edge)
        if not self.dsg.add_edge(edge):
            return
        self.push_into.setdefault(dst, []).append((src, frame))
        self.pushes_by_frame.setdefault(frame, []).append((src, dst))
        for y in [dst] + list(self.rfwd.get(dst, {})):
            self._add_top(y, frame, src)

    def _add_pop(self, src, frame, dst):
        edge = Edge(src, POP, frame, dst)
        self._ensure_node(dst, edge)
        self.dsg.add_edge(edge)
        targets = self.pops_at.setdefault((src, frame), {})
        if dst in targets:
            return
        targets[dst] = None
        for psrc, psucc in self.pushes_by_frame.get(frame, []):
            if psucc == src or src in self.rfwd.get(psucc, {}):
                self._add_summary(psrc, dst)

    def _add_top(self, state, frame, push_src):
        known = self.tops.setdefault(state, {})
        if frame not in known:
            known[frame] = None
            if self.dependent.get(state):
                self._enqueue((state, frame))
        for tgt in self.pops_at.get((state, frame), {}):
            self._add_summary(push_src, tgt)

    def _add_summary(self, a, b):
        if self.dsg.add_summary(a, b):
            self._add_pair(a, b)

    def _add_pair(self, a, b):
        """Extend the balanced-reachability relation and its closure."""
        if a == b or b in self.rfwd.get(a, {}):
            return
        xs = [a] + list(self.rbwd.get(a, {}))
        ys = [b] + list(self.rfwd.get(b, {}))
        for x in xs:
            for y in ys:
                if x == y or y in self.rfwd.get(x, {}):
                    continue
                self.rfwd.setdefault(x, {})[y] = None
                self.rbwd.setdefault(y, {})[x] = None
                self._on_new_pair(x, y)

    def _on_new_pair(self, x, y):
        for psrc, frame in self.push_into.get(x, []):
            self._add_top(y, frame, psrc)
        if x == self.init_state and y not in self.eb:
            self.eb.add(y)
            if self.dependent.get(y):
                self._enqueue((y, _HYP_EMPTY))

    # transition dispatch ---------------------------------------------------

    def _process(self, item):
        state, hyp = item
        self.visit_counts[state] = self.visit_counts.get(state, 0) + 1
        self.current_item = item
        try:
            if hyp is _HYP_ANY:
                edges = machine.step_independent(
                    self.program, state.pos, state.fp, self.store, self.taint,
                    self.summaries, self.policy, self.recorder)
                assert edges is not None
                for e in edges:
                    dst = ControlState(e.pos, e.fp)
                    if e.kind == NOOP:
                        self._add_noop(state, dst)
                    else:
                        self._add_push(state, e.frame, dst)
            else:
                top = None if hyp is _HYP_EMPTY else hyp
                edges, terminals = machine.step_dependent(
                    self.program, state.pos, state.fp, top,
                    self.store, self.taint, self.policy)
                for kind in terminals:
                    self._terminal(state, kind)
                for e in edges:
                    self._add_pop(state, e.frame, ControlState(e.pos, e.fp))
        finally:
            self.current_item = None


# ---------------------------------------------------------------------------
# Finite-state engine
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HandlerRecord:
    frame: HandlerFrame
    push_state: ControlState
    region: tuple  # (lo, hi) indexes in frame.owner's body

    def sort_key(self):
        return (self.frame.sort_key(), self.push_state.sort_key())


class FiniteShared:
    """Flow facts of the finite engine, threaded across saturation runs.

    A finite-state analyzer keeps one application-wide flow graph; threading
    call edges and handler records through saturation the same way the store
    is threaded reproduces that regime.
    """

    def __init__(self):
        self.call_edges: dict = {}  # callee fp -> {(caller_state, FunFrame): None}
        self.handler_records: dict = {}  # HandlerRecord -> None
        self.version = 0

    def add_call(self, callee_fp: FramePointer, caller_state: ControlState,
                 frame: FunFrame) -> bool:
        entries = self.call_edges.setdefault(callee_fp, {})
        key = (caller_state, frame)
        if key in entries:
            return False
        entries[key] = None
        self.version += 1
        return True

    def add_handler(self, rec: HandlerRecord) -> bool:
        if rec in self.handler_records:
            return False
        self.handler_records[rec] = None
        self.version += 1
        return True

    def fingerprint(self) -> int:
        return self.version


def handler_regions(program: Program, method: MethodRef) -> dict:
    """Statically bracket push-handler/pop-handler pairs within a body.

    Returns push index -> (push index, matching pop index or body end).
    Assumes handler regions are not entered or left via goto; the analyses
    rely on that discipline holding for their inputs.
    """
    body = program.methods[method].body
    regions: dict = {}
    stack: list[int] = []
    for i, st in enumerate(body):
        if isinstance(st, PushHandler):
            stack.append(i)
        elif isinstance(st, PopHandler) and stack:
            lo = stack.pop()
            regions[i] = lo  # pop index -> push index
            regions[lo] = (lo, i)
    for lo in stack:
        regions[lo] = (lo, len(body))
    return regions


class _FiniteEngine(_BaseEngine):
    def __init__(self, program, entry, init_store, init_taint, cfg, summaries,
                 shared: FiniteShared | None):
        super().__init__(program, entry, init_store, init_taint, cfg, summaries)
        self.shared = shared if shared is not None else FiniteShared()
        self._regions_cache: dict = {}
        self._return_deps: dict = {}  # fp -> {state: None}
        self._throw_states: dict = {}
        self._callgraph_version = -1
        self._callgraph: dict = {}

    def run(self) -> AnalysisResult:
        t0 = time.monotonic()
        self._ensure_node(self.init_state, None)
        while self.worklist:
            if self._budget_exceeded(t0):
                break
            item = self.worklist.pop()
            self.pending.discard(item)
            self._process(item)
        return self._result(FINITE)

    def _ensure_node(self, state: ControlState, via: Edge | None):
        if not self.dsg.add_node(state):
            return
        if via is not None:
            self.tracebacks[state] = via
        self.visit_counts.setdefault(state, 0)
        self._enqueue((state, _HYP_ANY))

    def _regions(self, method: MethodRef) -> dict:
        if method not in self._regions_cache:
            self._regions_cache[method] = handler_regions(self.program, method)
        return self._regions_cache[method]

    def _callees_by_method(self) -> dict:
        if self._callgraph_version == self.shared.version:
            return self._callgraph
        graph: dict = {}
        for callee_fp, entries in self.shared.call_edges.items():
            for caller_state, _frame in entries:
                graph.setdefault(caller_state.pos.method, []).append(
                    (caller_state.pos.index, callee_fp.method))
        self._callgraph = graph
        self._callgraph_version = self.shared.version
        return graph

    def _scope_allows(self, rec: HandlerRecord, throw_state: ControlState) -> bool:
        lo, hi = rec.region
        owner = rec.frame.owner
        if throw_state.pos.method == owner and lo < throw_state.pos.index < hi:
            return True
        graph = self._callees_by_method()
        frontier = [callee for idx, callee in graph.get(owner, [])
                    if lo < idx < hi]
        seen: set = set()
        while frontier:
            m = frontier.pop()
            if m in seen:
                continue
            seen.add(m)
            if m == throw_state.pos.method:
                return True
            frontier.extend(callee for _idx, callee in graph.get(m, []))
        return False

    def _process(self, item):
        state, _hyp = item
        self.visit_counts[state] = self.visit_counts.get(state, 0) + 1
        self.current_item = item
        try:
            st = self.program.stmt_at(state.pos)
            if isinstance(st, Return):
                self._process_return(state)
            elif isinstance(st, Throw):
                self._process_throw(state)
            elif isinstance(st, PopHandler):
                self._process_pop_handler(state)
            else:
                edges = machine.step_independent(
                    self.program, state.pos, state.fp, self.store, self.taint,
                    self.summaries, self.policy, self.recorder)
                assert edges is not None
                for e in edges:
                    dst = ControlState(e.pos, e.fp)
                    edge = Edge(state, e.kind, e.frame, dst)
                    self._ensure_node(dst, edge)
                    self.dsg.add_edge(edge)
                    if e.kind == PUSH:
                        if isinstance(e.frame, FunFrame):
                            if self.shared.add_call(dst.fp, state, e.frame):
                                self._on_shared_growth(callee_fp=dst.fp)
                        else:
                            regions = self._regions(state.pos.method)
                            region = regions.get(state.pos.index,
                                                 (state.pos.index,
                                                  len(self.program.methods[
                                                      state.pos.method].body)))
                            rec = HandlerRecord(e.frame, state, region)
                            if self.shared.add_handler(rec):
                                self._on_shared_growth()
        finally:
            self.current_item = None

    def _on_shared_growth(self, callee_fp: FramePointer | None = None):
        # new call edges affect matching returns and every throw's scope;
        # new handler records affect every throw
        items = []
        if callee_fp is not None:
            items.extend((s, _HYP_ANY) for s in
                         self._return_deps.get(callee_fp, {}))
        items.extend((s, _HYP_ANY) for s in self._throw_states)
        self._enqueue_sorted(items)

    def _process_return(self, state: ControlState):
        self._return_deps.setdefault(state.fp, {})[state] = None
        program = self.program
        st = program.stmt_at(state.pos)
        vals = machine.eval_atomic(program, st.exp, state.fp, self.store)
        if not vals:
            return
        taints = machine.eval_atomic_taint(st.exp, state.fp, self.taint)
        if state.fp == self.fp0:
            self.store.join(RegAddr(state.fp, machine.RET_REG), vals)
            self.taint.join(RegAddr(state.fp, machine.RET_REG), taints)
            self._terminal(state, TERMINAL_RETURN)
        entries = sorted(self.shared.call_edges.get(state.fp, {}),
                         key=lambda e: (e[0].sort_key(), e[1].sort_key()))
        for _caller_state, frame in entries:
            self.store.join(RegAddr(frame.fp, machine.RET_REG), vals)
            self.taint.join(RegAddr(frame.fp, machine.RET_REG), taints)
            dst = ControlState(frame.ret_pos, frame.fp)
            edge = Edge(state, POP, frame, dst)
            self._ensure_node(dst, edge)
            self.dsg.add_edge(edge)

    def _process_throw(self, state: ControlState):
        self._throw_states[state] = None
        program = self.program
        st = program.stmt_at(state.pos)
        vals = machine.eval_atomic(program, st.exp, state.fp, self.store)
        thrown = [v for v in vals if isinstance(v, machine.ObjectValue)]
        if not thrown:
            return
        taints = machine.eval_atomic_taint(st.exp, state.fp, self.taint)
        # without a stack the unwind may always escape
        self.store.join(RegAddr(state.fp, machine.EXN_REG), frozenset(thrown))
        self.taint.join(RegAddr(state.fp, machine.EXN_REG), taints)
        self._terminal(state, TERMINAL_UNCAUGHT)
        for rec in sorted(self.shared.handler_records,
                          key=lambda r: r.sort_key()):
            catchable = [v for v in thrown
                         if program.is_subclass(v.class_name,
                                                rec.frame.class_name)]
            if not catchable or not self._scope_allows(rec, state):
                continue
            hpos = program.pos_of_label(rec.frame.owner, rec.frame.label)
            dst = ControlState(hpos, state.fp)
            edge = Edge(state, POP, rec.frame, dst)
            self._ensure_node(dst, edge)
            self.dsg.add_edge(edge)

    def _process_pop_handler(self, state: ControlState):
        regions = self._regions(state.pos.method)
        push_idx = regions.get(state.pos.index)
        if not isinstance(push_idx, int):
            raise MalformedState(
                f"unmatched pop-handler at {state.pos.method.sig()}"
                f"@{state.pos.index}")
        push_stmt = self.program.methods[state.pos.method].body[push_idx]
        frame = HandlerFrame(push_stmt.class_name, push_stmt.label,
                             state.pos.method)
        dst = ControlState(self.program.advance(state.pos), state.fp)
        edge = Edge(state, POP, frame, dst)
        self._ensure_node(dst, edge)
        self.dsg.add_edge(edge)


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def analyze_pushdown(program: Program, entry: MethodRef, init_store: Store,
                     init_taint: TaintStore, cfg: AnalysisConfig,
                     summaries: SummaryTable | None = None) -> AnalysisResult:
    cfg = replace(cfg, mode=PUSHDOWN)
    engine = _PushdownEngine(program, entry, init_store, init_taint, cfg,
                             summaries or SummaryTable([]))
    return engine.run()


def analyze_finite(program: Program, entry: MethodRef, init_store: Store,
                   init_taint: TaintStore, cfg: AnalysisConfig,
                   summaries: SummaryTable | None = None,
                   shared: FiniteShared | None = None) -> AnalysisResult:
    cfg = replace(cfg, mode=FINITE)
    engine = _FiniteEngine(program, entry, init_store, init_taint, cfg,
                           summaries or SummaryTable([]), shared)
    return engine.run()


def analyze(program: Program, entry: MethodRef, init_store: Store,
            init_taint: TaintStore, cfg: AnalysisConfig,
            summaries: SummaryTable | None = None,
            shared: FiniteShared | None = None) -> AnalysisResult:
    if cfg.mode == FINITE:
        return analyze_finite(program, entry, init_store, init_taint, cfg,
                              summaries, shared)
    return analyze_pushdown(program, entry, init_store, init_taint, cfg,
                            summaries)


# ---------------------------------------------------------------------------
# Path reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathStep:
    kind: str  # noop | push | pop | summary
    frame: object
    src: ControlState
    dst: ControlState


def reconstruct_path_steps(result: AnalysisResult, frm: ControlState,
                           to: ControlState) -> list | None:
    """Shortest edge-count witness path; None when unreachable.

    Pushdown results respect stack balance: a path is pops of the
    pre-existing stack (with balanced segments riding epsilon summaries)
    followed by pushes; finite results use plain graph search, which is
    exactly where their spurious flows become visible.
    """
    if frm not in result.dsg.nodes or to not in result.dsg.nodes:
        return None
    if frm == to:
        return []
    if result.mode == FINITE:
        return _bfs_plain(result.dsg, frm, to)
    return _bfs_balanced(result.dsg, frm, to)


def reconstruct_path(result: AnalysisResult, frm: ControlState,
                     to: ControlState) -> list | None:
    steps = reconstruct_path_steps(result, frm, to)
    if steps is None:
        return None
    return [frm] + [s.dst for s in steps]


def _bfs_plain(dsg: DyckStateGraph, frm, to):
    from collections import deque

    parent: dict = {frm: None}
    queue = deque([frm])
    while queue:
        node = queue.popleft()
        for e in sorted(dsg.out_edges(node), key=lambda e: e.sort_key()):
            if e.dst in parent:
                continue
            parent[e.dst] = (node, PathStep(e.kind, e.frame, node, e.dst))
            if e.dst == to:
                return _unwind_parents(parent, e.dst)
            queue.append(e.dst)
    return None


def _bfs_balanced(dsg: DyckStateGraph, frm, to):
    from collections import deque

    DOWN, UP = 0, 1
    start = (frm, DOWN)
    parent: dict = {start: None}
    queue = deque([start])
    while queue:
        key = queue.popleft()
        node, phase = key
        moves = []
        for e in sorted(dsg.out_edges(node), key=lambda e: e.sort_key()):
            if e.kind == NOOP:
                moves.append(((e.dst, phase),
                              PathStep(NOOP, None, node, e.dst)))
            elif e.kind == PUSH:
                moves.append(((e.dst, UP),
                              PathStep(PUSH, e.frame, node, e.dst)))
            elif e.kind == POP and phase == DOWN:
                moves.append(((e.dst, DOWN),
                              PathStep(POP, e.frame, node, e.dst)))
        for dst in sorted(dsg.summaries_from(node), key=lambda s: s.sort_key()):
            moves.append(((dst, phase), PathStep("summary", None, node, dst)))
        for nkey, step in moves:
            if nkey in parent:
                continue
            parent[nkey] = (key, step)
            if nkey[0] == to:
                return _unwind_parents(parent, nkey)
            queue.append(nkey)
    return None


def _unwind_parents(parent: dict, key):
    steps = []
    while parent[key] is not None:
        prev, step = parent[key]
        steps.append(step)
        key = prev
    steps.reverse()
    return steps


def replay_stack_actions(steps) -> bool:
    """Check a witness path replays as a legal stack evolution.

    Pops against the unknown pre-existing stack (empty replay stack) are
    allowed; a pop against a frame pushed on the path must match it.
    """
    stack: list = []
    for s in steps:
        if s.kind == PUSH:
            stack.append(s.frame)
        elif s.kind == POP:
            if stack and stack[-1] != s.frame:
                return False
            if stack:
                stack.pop()
    return True
