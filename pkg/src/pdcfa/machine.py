"""Abstract machine: value domains, monotone stores, and transition rules.

States pair a statement position with a frame pointer; the value and taint
stores are global join-semilattices that only ever grow (no strong updates).
The continuation stack is left unbounded; the reachability engines decide how
to treat it. ``step`` transitions a configuration carrying an explicit stack,
while the engine-facing ``step_independent``/``step_dependent`` split exposes
each rule as stack actions (noop / push / pop) against a top-frame hypothesis.

All step functions are pure apart from joins into the supplied stores; joins
are commutative and idempotent, so evaluating disjoint worklist items in any
order (or concurrently, with atomic joins) yields the same fixpoint.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from . import taint as taint_mod
from .ir import (
    AssignAtomic,
    AssignComplex,
    AtomicOp,
    BoolLit,
    FieldGet,
    FieldPut,
    Goto,
    If,
    InstanceOf,
    IntLit,
    Invoke,
    Label,
    Line,
    MethodRef,
    MoveFromRet,
    Name,
    New,
    Nop,
    NullLit,
    PopHandler,
    Program,
    PushHandler,
    ResolveError,
    Return,
    StmtPos,
    This,
    Throw,
    VoidLit,
)

log = logging.getLogger("pdcfa.machine")

RET_REG = "ret"
EXN_REG = "exn"


class MalformedState(Exception):
    """pop-handler over a call frame or an empty stack: an IR bug."""


# ---------------------------------------------------------------------------
# Pointers and addresses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FramePointer:
    method: MethodRef
    context: tuple = ()  # call-site positions, length <= k

    def sort_key(self):
        return (self.method.sort_key(),
                tuple(s.sort_key() for s in self.context))

    def canonical(self) -> str:
        ctx = ";".join(f"{s.method.sig()}@{s.index}" for s in self.context)
        return f"{self.method.sig()}[{ctx}]"


@dataclass(frozen=True)
class AmbientSite:
    """Allocation site of a framework-supplied object (entry receiver/arg)."""

    class_name: str

    def sort_key(self):
        return ("<ambient>", self.class_name, -1)

    def canonical(self) -> str:
        return f"<ambient:{self.class_name}>"


@dataclass(frozen=True)
class ObjectPointer:
    site: object  # StmtPos | AmbientSite
    context: tuple = ()

    def sort_key(self):
        site = self.site
        skey = site.sort_key() if isinstance(site, AmbientSite) \
            else ("stmt", *site.sort_key())
        return (skey, tuple(s.sort_key() for s in self.context))

    def canonical(self) -> str:
        site = self.site
        text = site.canonical() if isinstance(site, AmbientSite) \
            else f"{site.method.sig()}@{site.index}"
        if self.context:
            ctx = ";".join(f"{s.method.sig()}@{s.index}" for s in self.context)
            return f"{text}<{ctx}>"
        return text


@dataclass(frozen=True)
class RegAddr:
    fp: FramePointer
    reg: str

    def sort_key(self):
        return (0, self.fp.sort_key(), self.reg)

    def canonical(self) -> str:
        return f"reg:{self.fp.canonical()}:{self.reg}"


@dataclass(frozen=True)
class FieldAddr:
    op: ObjectPointer
    field_name: str

    def sort_key(self):
        return (1, self.op.sort_key(), self.field_name)

    def canonical(self) -> str:
        return f"field:{self.op.canonical()}.{self.field_name}"


# ---------------------------------------------------------------------------
# Abstract values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectValue:
    op: ObjectPointer
    class_name: str

    def sort_key(self):
        return (4, self.class_name, self.op.sort_key())

    def canonical(self) -> str:
        return f"obj:{self.op.canonical()}:{self.class_name}"


@dataclass(frozen=True)
class AbstractInt:
    value: int | None  # None means any integer

    def sort_key(self):
        return (0, 1, self.value) if self.value is not None else (0, 0, 0)

    def canonical(self) -> str:
        return f"int:{'any' if self.value is None else self.value}"


@dataclass(frozen=True)
class AbstractString:
    value: str | None  # None means any string

    def sort_key(self):
        return (3, 1, self.value) if self.value is not None else (3, 0, "")

    def canonical(self) -> str:
        return f"str:{'any' if self.value is None else self.value}"


@dataclass(frozen=True)
class AbstractBool:
    value: bool

    def sort_key(self):
        return (1, int(self.value))

    def canonical(self) -> str:
        return f"bool:{str(self.value).lower()}"


@dataclass(frozen=True)
class NullVal:
    def sort_key(self):
        return (2, 0)

    def canonical(self) -> str:
        return "null"


@dataclass(frozen=True)
class VoidVal:
    def sort_key(self):
        return (2, 1)

    def canonical(self) -> str:
        return "void"


ANY_INT = AbstractInt(None)
ANY_STRING = AbstractString(None)
TRUE = AbstractBool(True)
FALSE = AbstractBool(False)
NULL = NullVal()
VOID = VoidVal()
BOTH_BOOLS = frozenset({TRUE, FALSE})


def value_sort_key(v):
    return v.sort_key()


def normalize_vals(values, int_budget: int) -> frozenset:
    """Apply the flat-lattice absorption: AnyInt/AnyString swallow exact
    constants once present or once the per-address constant budget is hit."""
    values = frozenset(values)
    ints = [v for v in values if isinstance(v, AbstractInt) and v.value is not None]
    strs = [v for v in values
            if isinstance(v, AbstractString) and v.value is not None]
    out = set(values)
    if ANY_INT in values or len(ints) > int_budget:
        out.difference_update(ints)
        if ints:
            out.add(ANY_INT)
    if ANY_STRING in values or len(strs) > int_budget:
        out.difference_update(strs)
        if strs:
            out.add(ANY_STRING)
    return frozenset(out)


class Store:
    """Addr -> set(AbstractValue); lookups of absent addresses are empty."""

    def __init__(self, int_budget: int = 8):
        self._data: dict = {}
        self.int_budget = int_budget
        self.version = 0
        self.on_read = None
        self.on_grow = None

    def lookup(self, addr) -> frozenset:
        if self.on_read is not None:
            self.on_read(addr)
        return self._data.get(addr, frozenset())

    def join(self, addr, values) -> bool:
        values = frozenset(values)
        if not values:
            return False
        old = self._data.get(addr, frozenset())
        new = normalize_vals(old | values, self.int_budget)
        if new == old:
            return False
        self._data[addr] = new
        self.version += 1
        if self.on_grow is not None:
            self.on_grow(addr)
        return True

    def items(self):
        return self._data.items()

    def copy(self) -> "Store":
        other = Store(self.int_budget)
        other._data = dict(self._data)
        other.version = self.version
        return other

    def join_store(self, other: "Store") -> bool:
        grew = False
        for addr, vals in other._data.items():
            grew |= self.join(addr, vals)
        return grew

    def canonical_text(self) -> str:
        lines = []
        for addr in sorted(self._data, key=lambda a: a.sort_key()):
            vals = ",".join(sorted(v.canonical() for v in self._data[addr]))
            lines.append(f"{addr.canonical()} -> {{{vals}}}")
        return "\n".join(lines) + "\n"

    def fingerprint(self):
        return self.canonical_text()


# ---------------------------------------------------------------------------
# Allocation policy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AllocPolicy:
    k: int = 1
    heap_context: bool = False
    int_budget: int = 8


def frame_pointer_zero(entry: MethodRef) -> FramePointer:
    return FramePointer(entry, ())


def alloc_fp(caller_fp: FramePointer, call_site: StmtPos, callee: MethodRef,
             policy: AllocPolicy) -> FramePointer:
    """Callee context: the last k call sites including the current one."""
    if policy.k <= 0:
        return FramePointer(callee, ())
    ctx = (caller_fp.context + (call_site,))[-policy.k:]
    return FramePointer(callee, ctx)


def alloc_op(site: StmtPos, fp: FramePointer, policy: AllocPolicy) -> ObjectPointer:
    """Allocation-site pointer, optionally refined by the allocating context."""
    return ObjectPointer(site, fp.context if policy.heap_context else ())


# ---------------------------------------------------------------------------
# Atomic evaluation
# ---------------------------------------------------------------------------


def truncated_div(a: int, b: int) -> int:
    """Integer division truncating toward zero (Java semantics)."""
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def truncated_rem(a: int, b: int) -> int:
    return a - b * truncated_div(a, b)


def _pair_op(program: Program, op: str, a, b) -> frozenset:
    both_ints = isinstance(a, AbstractInt) and isinstance(b, AbstractInt)
    both_bools = isinstance(a, AbstractBool) and isinstance(b, AbstractBool)
    if op in ("add", "sub", "mul", "div", "rem"):
        if not both_ints:
            return frozenset()
        if a.value is None or b.value is None:
            return frozenset({ANY_INT})
        if op in ("div", "rem") and b.value == 0:
            return frozenset()
        n = {"add": a.value + b.value, "sub": a.value - b.value,
             "mul": a.value * b.value,
             "div": truncated_div(a.value, b.value) if b.value else 0,
             "rem": truncated_rem(a.value, b.value) if b.value else 0,
             }[op]
        return frozenset({AbstractInt(n)})
    if op in ("lt", "le", "gt", "ge"):
        if not both_ints:
            return frozenset()
        if a.value is None or b.value is None:
            return BOTH_BOOLS
        r = {"lt": a.value < b.value, "le": a.value <= b.value,
             "gt": a.value > b.value, "ge": a.value >= b.value}[op]
        return frozenset({AbstractBool(r)})
    if op in ("eq", "ne"):
        res = _abstract_eq(a, b)
        if op == "ne":
            res = frozenset({AbstractBool(not v.value) for v in res})
        return res
    if op in ("and", "or", "xor"):
        if both_bools:
            r = {"and": a.value and b.value, "or": a.value or b.value,
                 "xor": a.value != b.value}[op]
            return frozenset({AbstractBool(r)})
        if both_ints:
            if a.value is None or b.value is None:
                return frozenset({ANY_INT})
            r = {"and": a.value & b.value, "or": a.value | b.value,
                 "xor": a.value ^ b.value}[op]
            return frozenset({AbstractInt(r)})
        return frozenset()
    raise AssertionError(op)


def _abstract_eq(a, b) -> frozenset:
    if isinstance(a, AbstractInt) and isinstance(b, AbstractInt):
        if a.value is None or b.value is None:
            return BOTH_BOOLS
        return frozenset({AbstractBool(a.value == b.value)})
    if isinstance(a, AbstractBool) and isinstance(b, AbstractBool):
        return frozenset({AbstractBool(a.value == b.value)})
    if isinstance(a, AbstractString) and isinstance(b, AbstractString):
        if a.value is None or b.value is None:
            return BOTH_BOOLS
        return frozenset({AbstractBool(a.value == b.value)})
    if isinstance(a, NullVal) and isinstance(b, NullVal):
        return frozenset({TRUE})
    if isinstance(a, VoidVal) and isinstance(b, VoidVal):
        return frozenset({TRUE})
    if isinstance(a, ObjectValue) and isinstance(b, ObjectValue):
        # Same allocation site may or may not be the same concrete object.
        return BOTH_BOOLS if a.op == b.op else frozenset({FALSE})
    return frozenset({FALSE})


def _unary_op(op: str, a) -> frozenset:
    if op == "neg":
        if isinstance(a, AbstractInt):
            return frozenset({ANY_INT if a.value is None
                              else AbstractInt(-a.value)})
        return frozenset()
    if op == "not":
        if isinstance(a, AbstractBool):
            return frozenset({AbstractBool(not a.value)})
        return frozenset()
    raise AssertionError(op)


def eval_atomic(program: Program, ae, fp: FramePointer, store: Store) -> frozenset:
    """Evaluate an atomic expression to a value set; unbound names are empty."""
    match ae:
        case This():
            return store.lookup(RegAddr(fp, "this"))
        case Name(reg):
            return store.lookup(RegAddr(fp, reg))
        case IntLit(n):
            return frozenset({AbstractInt(n)})
        case BoolLit(v):
            return frozenset({AbstractBool(v)})
        case NullLit():
            return frozenset({NULL})
        case VoidLit():
            return frozenset({VOID})
        case AtomicOp(op, args):
            vals = [eval_atomic(program, a, fp, store) for a in args]
            if any(not v for v in vals):
                return frozenset()
            out: set = set()
            if len(vals) == 1:
                for a in vals[0]:
                    out |= _unary_op(op, a)
            else:
                for a in vals[0]:
                    for b in vals[1]:
                        out |= _pair_op(program, op, a, b)
            return normalize_vals(out, store.int_budget)
        case InstanceOf(inner, cls):
            vals = eval_atomic(program, inner, fp, store)
            out = set()
            for v in vals:
                if isinstance(v, ObjectValue):
                    out.add(AbstractBool(program.is_subclass(v.class_name, cls)))
                elif isinstance(v, NullVal):
                    out.add(FALSE)
                elif isinstance(v, AbstractString):
                    out.add(AbstractBool(
                        cls in ("java/lang/Object", "java/lang/String")))
            return frozenset(out)
    raise TypeError(f"not an atomic expression: {ae!r}")


def eval_atomic_taint(ae, fp: FramePointer,
                      taint_store: taint_mod.TaintStore) -> frozenset:
    """Taint carried by an atomic expression: the union over registers read."""
    match ae:
        case This():
            return taint_store.lookup(RegAddr(fp, "this"))
        case Name(reg):
            return taint_store.lookup(RegAddr(fp, reg))
        case AtomicOp(_, args):
            out: frozenset = frozenset()
            for a in args:
                out |= eval_atomic_taint(a, fp, taint_store)
            return out
        case InstanceOf(inner, _):
            return eval_atomic_taint(inner, fp, taint_store)
        case _:
            return frozenset()


def eval_field(program: Program, ae_o, fp: FramePointer, store: Store,
               field_name: str) -> frozenset:
    """Join of the field's values over every object the receiver may be."""
    out: set = set()
    for v in eval_atomic(program, ae_o, fp, store):
        if isinstance(v, ObjectValue):
            out |= store.lookup(FieldAddr(v.op, field_name))
    return normalize_vals(out, store.int_budget)


def eval_field_taint(program: Program, ae_o, fp: FramePointer, store: Store,
                     taint_store: taint_mod.TaintStore, field_name: str) -> frozenset:
    out: frozenset = frozenset()
    for v in eval_atomic(program, ae_o, fp, store):
        if isinstance(v, ObjectValue):
            out |= taint_store.lookup(FieldAddr(v.op, field_name))
    return out


def init_object(program: Program, store: Store, op: ObjectPointer,
                class_name: str) -> None:
    """Join type defaults into the fields of the class and all ancestors."""
    for cls in program.superclass_chain(class_name):
        cdef = program.classes.get(cls)
        if cdef is None:
            continue
        for fdef in cdef.fields:
            if fdef.field_type == "boolean":
                default: frozenset = frozenset({FALSE})
            elif fdef.field_type in ("int", "byte", "char"):
                default = frozenset({AbstractInt(0)})
            else:
                default = frozenset({NULL})
            store.join(FieldAddr(op, fdef.name), default)


# ---------------------------------------------------------------------------
# Frames and step edges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FunFrame:
    fp: FramePointer
    ret_pos: StmtPos  # the MoveFromRet slot of the calling assign

    def sort_key(self):
        return (0, self.fp.sort_key(), self.ret_pos.sort_key())

    def canonical(self) -> str:
        return (f"fun({self.fp.canonical()}, "
                f"{self.ret_pos.method.sig()}@{self.ret_pos.index})")


@dataclass(frozen=True)
class HandlerFrame:
    class_name: str
    label: str
    owner: MethodRef

    def sort_key(self):
        return (1, self.class_name, self.label, self.owner.sort_key())

    def canonical(self) -> str:
        return f"handle({self.class_name}, {self.owner.sig()}:{self.label})"


NOOP = "noop"
PUSH = "push"
POP = "pop"


@dataclass(frozen=True)
class StepEdge:
    kind: str  # noop | push | pop
    frame: object  # FunFrame | HandlerFrame | None
    pos: StmtPos
    fp: FramePointer


TERMINAL_RETURN = "return"
TERMINAL_UNCAUGHT = "uncaught-exception"


class NullRecorder:
    def summary_applied(self, pos, fp, summary, sink_hits, arg_taint):
        pass


_NULL_RECORDER = NullRecorder()


def _summary_chain(program: Program, class_name: str):
    if program.is_declared(class_name):
        return list(program.superclass_chain(class_name))
    return [class_name]


def _apply_summary_here(program, pos, fp, rec, arg_vals, arg_taints,
                        store, taint_store, recorder) -> StepEdge:
    ret_val, ret_taint, sink_hits = taint_mod.apply_summary(
        rec, arg_vals, arg_taints)
    store.join(RegAddr(fp, RET_REG), ret_val)
    taint_store.join(RegAddr(fp, RET_REG), ret_taint)
    all_taint = frozenset().union(*arg_taints) if arg_taints else frozenset()
    recorder.summary_applied(pos, fp, rec, sink_hits, all_taint)
    move_pos = StmtPos(pos.method, pos.index, at_move=True)
    return StepEdge(NOOP, None, move_pos, fp)


def _push_call(program, pos, fp, mdef, receivers, arg_vals, arg_taints,
               is_static, store, taint_store, policy) -> StepEdge:
    call_site = StmtPos(pos.method, pos.index)
    fp2 = alloc_fp(fp, call_site, mdef.ref, policy)
    if is_static:
        for i, vals in enumerate(arg_vals):
            store.join(RegAddr(fp2, f"param{i}"), vals)
            taint_store.join(RegAddr(fp2, f"param{i}"), arg_taints[i])
    else:
        store.join(RegAddr(fp2, "this"), receivers)
        taint_store.join(RegAddr(fp2, "this"), arg_taints[0])
        for i, vals in enumerate(arg_vals[1:]):
            store.join(RegAddr(fp2, f"param{i}"), vals)
            taint_store.join(RegAddr(fp2, f"param{i}"), arg_taints[i + 1])
    move_pos = StmtPos(pos.method, pos.index, at_move=True)
    frame = FunFrame(fp, move_pos)
    return StepEdge(PUSH, frame, StmtPos(mdef.ref, 0), fp2)


def _invoke_edges(program, pos, fp, inv: Invoke, store, taint_store,
                  summaries, policy, recorder) -> list:
    arg_vals = [eval_atomic(program, a, fp, store) for a in inv.args]
    arg_taints = [eval_atomic_taint(a, fp, taint_store) for a in inv.args]
    if any(not v for v in arg_vals):
        log.debug("stuck invoke at %s: unbound argument", pos)
        return []
    edges: list[StepEdge] = []

    if inv.kind == "static":
        rec = summaries.match(_summary_chain(program, inv.class_name),
                              inv.method_name)
        if rec is not None:
            edges.append(_apply_summary_here(program, pos, fp, rec, arg_vals,
                                             arg_taints, store, taint_store,
                                             recorder))
            return edges
        if program.is_declared(inv.class_name):
            try:
                mdef = program.resolve_method(inv.class_name, inv.method_name,
                                              inv.arg_types, "static")
            except ResolveError:
                log.debug("stuck invoke-static at %s: unresolved", pos)
                return edges
            edges.append(_push_call(program, pos, fp, mdef, frozenset(),
                                    arg_vals, arg_taints, True,
                                    store, taint_store, policy))
        else:
            log.debug("stuck invoke-static at %s: unknown class %s",
                      pos, inv.class_name)
        return edges

    receivers = [v for v in arg_vals[0] if isinstance(v, ObjectValue)]
    if not receivers:
        log.debug("stuck invoke at %s: no object receiver", pos)
        return edges

    if inv.kind == "super" or (inv.kind == "direct" and inv.class_name):
        if inv.kind == "super":
            resolve_from = pos.method.class_name
            lookup_start = program.classes[resolve_from].super_name
        else:
            resolve_from = lookup_start = inv.class_name
        rec = summaries.match(_summary_chain(program, lookup_start),
                              inv.method_name)
        if rec is not None:
            edges.append(_apply_summary_here(program, pos, fp, rec, arg_vals,
                                             arg_taints, store, taint_store,
                                             recorder))
            return edges
        try:
            mdef = program.resolve_method(
                resolve_from, inv.method_name, inv.arg_types,
                "super" if inv.kind == "super" else "direct")
        except ResolveError:
            return edges
        edges.append(_push_call(program, pos, fp, mdef, frozenset(receivers),
                                arg_vals, arg_taints, False,
                                store, taint_store, policy))
        return edges

    # virtual / interface / unqualified direct: dispatch on the dynamic class
    summary_groups: dict = {}
    resolved_groups: dict = {}
    for ov in sorted(receivers, key=value_sort_key):
        rec = summaries.match(_summary_chain(program, ov.class_name),
                              inv.method_name)
        if rec is not None:
            summary_groups.setdefault(rec.key(), (rec, []))[1].append(ov)
            continue
        try:
            mdef = program.resolve_method(ov.class_name, inv.method_name,
                                          inv.arg_types, inv.kind)
        except ResolveError:
            log.debug("unresolved %s.%s at %s", ov.class_name,
                      inv.method_name, pos)
            continue
        resolved_groups.setdefault(mdef.ref, (mdef, []))[1].append(ov)
    for _, (rec, _) in sorted(summary_groups.items()):
        edges.append(_apply_summary_here(program, pos, fp, rec, arg_vals,
                                         arg_taints, store, taint_store,
                                         recorder))
    for ref in sorted(resolved_groups, key=lambda r: r.sort_key()):
        mdef, group = resolved_groups[ref]
        edges.append(_push_call(program, pos, fp, mdef, frozenset(group),
                                arg_vals, arg_taints, False,
                                store, taint_store, policy))
    return edges


def step_independent(program: Program, pos: StmtPos, fp: FramePointer,
                     store: Store, taint_store: taint_mod.TaintStore,
                     summaries: taint_mod.SummaryTable,
                     policy: AllocPolicy,
                     recorder=_NULL_RECORDER) -> list | None:
    """Successor edges for statements whose behavior ignores the stack.

    Returns None for Return/Throw/PopHandler, which need a top-frame
    hypothesis (see step_dependent). An empty list means the path is stuck.
    """
    st = program.stmt_at(pos)
    if st is None:
        return []
    nxt = program.advance(pos)
    match st:
        case Label(_) | Nop() | Line(_):
            return [StepEdge(NOOP, None, nxt, fp)]
        case Goto(label):
            return [StepEdge(NOOP, None,
                             program.pos_of_label(pos.method, label), fp)]
        case If(cond, label):
            vals = eval_atomic(program, cond, fp, store)
            if not vals:
                return []
            target = program.pos_of_label(pos.method, label)
            if vals == frozenset({TRUE}):
                return [StepEdge(NOOP, None, target, fp)]
            if vals == frozenset({FALSE}):
                return [StepEdge(NOOP, None, nxt, fp)]
            return [StepEdge(NOOP, None, nxt, fp),
                    StepEdge(NOOP, None, target, fp)]
        case AssignAtomic(name, exp):
            vals = eval_atomic(program, exp, fp, store)
            if not vals:
                return []
            store.join(RegAddr(fp, name), vals)
            taint_store.join(RegAddr(fp, name),
                             eval_atomic_taint(exp, fp, taint_store))
            return [StepEdge(NOOP, None, nxt, fp)]
        case AssignComplex(name, New(class_name)):
            op = alloc_op(StmtPos(pos.method, pos.index), fp, policy)
            store.join(RegAddr(fp, name),
                       frozenset({ObjectValue(op, class_name)}))
            init_object(program, store, op, class_name)
            return [StepEdge(NOOP, None, nxt, fp)]
        case AssignComplex(_, Invoke() as inv):
            return _invoke_edges(program, pos, fp, inv, store, taint_store,
                                 summaries, policy, recorder)
        case MoveFromRet(name):
            vals = store.lookup(RegAddr(fp, RET_REG))
            if not vals:
                return []
            store.join(RegAddr(fp, name), vals)
            taint_store.join(RegAddr(fp, name),
                             taint_store.lookup(RegAddr(fp, RET_REG)))
            return [StepEdge(NOOP, None, nxt, fp)]
        case FieldPut(obj, field_name, value):
            receivers = [v for v in eval_atomic(program, obj, fp, store)
                         if isinstance(v, ObjectValue)]
            vals = eval_atomic(program, value, fp, store)
            if not receivers or not vals:
                return []
            taints = eval_atomic_taint(value, fp, taint_store)
            for ov in sorted(receivers, key=value_sort_key):
                store.join(FieldAddr(ov.op, field_name), vals)
                taint_store.join(FieldAddr(ov.op, field_name), taints)
            return [StepEdge(NOOP, None, nxt, fp)]
        case FieldGet(name, obj, field_name):
            vals = eval_field(program, obj, fp, store, field_name)
            if not vals:
                return []
            store.join(RegAddr(fp, name), vals)
            taint_store.join(
                RegAddr(fp, name),
                eval_field_taint(program, obj, fp, store, taint_store,
                                 field_name))
            return [StepEdge(NOOP, None, nxt, fp)]
        case PushHandler(class_name, label):
            frame = HandlerFrame(class_name, label, pos.method)
            return [StepEdge(PUSH, frame, nxt, fp)]
        case Return(_) | Throw(_) | PopHandler():
            return None
    raise TypeError(f"unhandled statement {st!r}")


def is_stack_dependent(program: Program, pos: StmtPos) -> bool:
    st = program.stmt_at(pos)
    return isinstance(st, (Return, Throw, PopHandler))


def step_dependent(program: Program, pos: StmtPos, fp: FramePointer,
                   top, store: Store, taint_store: taint_mod.TaintStore,
                   policy: AllocPolicy) -> tuple:
    """Successors of Return/Throw/PopHandler under a top-frame hypothesis.

    ``top`` is a frame or None (empty stack). Returns (edges, terminals)
    where terminals name terminal outcomes reached under this hypothesis.
    """
    st = program.stmt_at(pos)
    match st:
        case Return(exp):
            vals = eval_atomic(program, exp, fp, store)
            if not vals:
                return [], []
            taints = eval_atomic_taint(exp, fp, taint_store)
            if top is None:
                store.join(RegAddr(fp, RET_REG), vals)
                taint_store.join(RegAddr(fp, RET_REG), taints)
                return [], [TERMINAL_RETURN]
            if isinstance(top, HandlerFrame):
                # handler-skipping: pop until a call frame is on top
                return [StepEdge(POP, top, pos, fp)], []
            store.join(RegAddr(top.fp, RET_REG), vals)
            taint_store.join(RegAddr(top.fp, RET_REG), taints)
            return [StepEdge(POP, top, top.ret_pos, top.fp)], []
        case Throw(exp):
            vals = eval_atomic(program, exp, fp, store)
            thrown = [v for v in vals if isinstance(v, ObjectValue)]
            if not thrown:
                return [], []
            taints = eval_atomic_taint(exp, fp, taint_store)
            if top is None:
                store.join(RegAddr(fp, EXN_REG), frozenset(thrown))
                taint_store.join(RegAddr(fp, EXN_REG), taints)
                return [], [TERMINAL_UNCAUGHT]
            if isinstance(top, FunFrame):
                return [StepEdge(POP, top, pos, fp)], []
            catchable = [v for v in thrown
                         if program.is_subclass(v.class_name, top.class_name)]
            edges = []
            if catchable:
                store.join(RegAddr(fp, EXN_REG), frozenset(catchable))
                taint_store.join(RegAddr(fp, EXN_REG), taints)
                hpos = program.pos_of_label(top.owner, top.label)
                edges.append(StepEdge(POP, top, hpos, fp))
            if len(catchable) < len(thrown):
                edges.append(StepEdge(POP, top, pos, fp))
            return edges, []
        case PopHandler():
            if not isinstance(top, HandlerFrame):
                what = top.canonical() if top is not None else "an empty stack"
                raise MalformedState(
                    f"pop-handler over {what} at {pos.method.sig()}@{pos.index}")
            return [StepEdge(POP, top, program.advance(pos), fp)], []
    raise TypeError(f"not a stack-dependent statement: {st!r}")


# ---------------------------------------------------------------------------
# Explicit-stack configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AbstractConfig:
    pos: StmtPos
    fp: FramePointer
    store: Store
    taint_store: taint_mod.TaintStore
    kont: tuple = ()


def inject(program: Program, entry: MethodRef, store: Store,
           taint_store: taint_mod.TaintStore) -> AbstractConfig:
    """Inject a method entry into a configuration with an empty stack."""
    if entry not in program.methods:
        raise ResolveError(f"unknown entry {entry.sig()}")
    return AbstractConfig(StmtPos(entry, 0), frame_pointer_zero(entry),
                          store, taint_store, ())


def step(program: Program, config: AbstractConfig,
         summaries: taint_mod.SummaryTable,
         policy: AllocPolicy = AllocPolicy(),
         recorder=_NULL_RECORDER) -> list:
    """One transition of an explicit-stack configuration.

    Terminal configurations (empty-stack return, uncaught throw) have no
    successors. The value/taint stores are mutated by joins only.
    """
    store, taints = config.store, config.taint_store
    edges = step_independent(program, config.pos, config.fp, store, taints,
                             summaries, policy, recorder)
    if edges is None:
        top = config.kont[0] if config.kont else None
        edges, _terminals = step_dependent(program, config.pos, config.fp,
                                           top, store, taints, policy)
    out = []
    for e in edges:
        if e.kind == PUSH:
            kont = (e.frame,) + config.kont
        elif e.kind == POP:
            kont = config.kont[1:]
        else:
            kont = config.kont
        out.append(AbstractConfig(e.pos, e.fp, store, taints, kont))
    return out


# ---------------------------------------------------------------------------
# Ambient entry bindings
# ---------------------------------------------------------------------------


def ambient_object(class_name: str) -> ObjectValue:
    return ObjectValue(ObjectPointer(AmbientSite(class_name)), class_name)


def seed_entry_bindings(program: Program, entry: MethodRef, store: Store,
                        taint_store: taint_mod.TaintStore) -> FramePointer:
    """Bind the entry receiver and parameters to ambient framework values.

    Every entry point of a class shares one ambient receiver instance, which
    is what lets saturated field state flow between entry points. Ambient
    values carry no taint.
    """
    fp0 = frame_pointer_zero(entry)
    mdef = program.methods[entry]
    recv = ambient_object(entry.class_name)
    store.join(RegAddr(fp0, "this"), frozenset({recv}))
    init_object(program, store, recv.op, entry.class_name)
    for i, ptype in enumerate(mdef.param_types):
        addr = RegAddr(fp0, f"param{i}")
        if ptype in ("int", "byte", "char"):
            store.join(addr, frozenset({ANY_INT}))
        elif ptype == "boolean":
            store.join(addr, BOTH_BOOLS)
        else:
            obj = ambient_object(ptype)
            store.join(addr, frozenset({obj}))
            init_object(program, store, obj.op, ptype)
    return fp0
