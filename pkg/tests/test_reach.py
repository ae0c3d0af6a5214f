"""Reachability-engine tests: pushdown vs finite, summaries, paths."""

import pytest

from corpus_micro import MICRO_PROGRAMS, MICRO_SUMMARIES, RUN, STRICT_PROGRAMS
from pdcfa.ir import MethodRef, StmtPos, parse_program
from pdcfa.machine import (
    RegAddr,
    Store,
    VOID,
    AbstractInt,
    frame_pointer_zero,
    seed_entry_bindings,
)
from pdcfa.reach import (
    AnalysisConfig,
    ControlState,
    analyze_finite,
    analyze_pushdown,
    reconstruct_path,
    reconstruct_path_steps,
    replay_stack_actions,
)
from pdcfa.taint import SummaryTable, TaintStore, parse_summaries

TABLE = parse_summaries(MICRO_SUMMARIES)
EMPTY = SummaryTable([])


def _seeded(program, entry, cfg):
    store, taint = Store(cfg.int_constant_budget), TaintStore()
    seed_entry_bindings(program, entry, store, taint)
    return store, taint


def _pushdown(src, entry=RUN, k=1, table=TABLE):
    program = parse_program(src)
    cfg = AnalysisConfig(k=k)
    store, taint = _seeded(program, entry, cfg)
    return program, analyze_pushdown(program, entry, store, taint, cfg, table)


def _finite(src, entry=RUN, k=1, table=TABLE):
    program = parse_program(src)
    cfg = AnalysisConfig(mode="finite", k=k)
    store, taint = _seeded(program, entry, cfg)
    return program, analyze_finite(program, entry, store, taint, cfg, table)


def test_single_return_terminal():
    src = """
(public class Main extends java/lang/Object ()
  ((method public run () void (throws) (limit 1)
     (return void))))
"""
    program, res = _pushdown(src, table=EMPTY)
    assert 1 <= len(res.dsg.nodes) <= 2
    assert any("return" in kinds for kinds in res.terminals.values())
    fp0 = frame_pointer_zero(RUN)
    ret_vals = res.final_store.lookup(RegAddr(fp0, "ret"))
    assert ret_vals == {VOID}


def test_call_and_return_with_one_summary():
    src = """
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 2)
     (assign r (invoke-static Main->f () ()))
     (return ret))
   (method public f () int (throws) (limit 1)
     (return 1))))
"""
    program, res = _pushdown(src, table=EMPTY)
    fp0 = frame_pointer_zero(RUN)
    assert AbstractInt(1) in res.final_store.lookup(RegAddr(fp0, "ret"))
    assert any("return" in kinds for kinds in res.terminals.values())
    # exactly one generated epsilon summary: over f's balanced body
    assert len(res.dsg.epsilon_summaries) == 1
    ((a, b),) = res.dsg.epsilon_summaries
    assert a.pos == StmtPos(RUN, 0)
    assert b.pos == StmtPos(RUN, 0, at_move=True)


TWO_SITES_HANDLERS = """
(public class java/lang/Throwable extends java/lang/Object () ())
(public class java/lang/Exception extends java/lang/Throwable () ())
(public class Fault extends java/lang/Exception () ())
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 4)
     (push-handler Fault h1)
     (assign x (invoke-static Main->boom () ()))
     (pop-handler)
     (push-handler Fault h2)
     (assign y (invoke-static Main->boom () ()))
     (pop-handler)
     (return 0)
     (label h1)
     (return 1)
     (label h2)
     (return 2))
   (method public boom () int (throws Fault) (limit 3)
     (assign c (invoke-static test/Api->getNumber () ()))
     (if (eq c 0) (goto t))
     (return 0)
     (label t)
     (assign e (new Fault))
     (throw e))))
"""


def test_pushdown_separates_handlers_per_call_site():
    """The central precision property: each throw returns only to the
    handler guarding its own call site; no cross-handler edges."""
    program, res = _pushdown(TWO_SITES_HANDLERS)
    run = RUN
    boom = MethodRef("Main", "boom", ())
    h1_states = [s for s in res.dsg.nodes
                 if s.pos == program.pos_of_label(run, "h1")]
    h2_states = [s for s in res.dsg.nodes
                 if s.pos == program.pos_of_label(run, "h2")]
    assert len(h1_states) == 1 and len(h2_states) == 1
    # handler states carry the thrower's frame pointer; with k=1 the two
    # call sites give boom distinct frame pointers
    (h1,) = h1_states
    (h2,) = h2_states
    assert h1.fp.method == boom and h2.fp.method == boom
    assert h1.fp.context == (StmtPos(run, 1),)
    assert h2.fp.context == (StmtPos(run, 4),)
    # no edge carries a throw from one site's frames into the other handler
    for e in res.dsg.edges:
        if e.dst == h1:
            assert e.src.fp.context == (StmtPos(run, 1),)
        if e.dst == h2:
            assert e.src.fp.context == (StmtPos(run, 4),)


def test_finite_k0_merges_the_two_handlers():
    program, res = _finite(TWO_SITES_HANDLERS, k=0)
    run = RUN
    h1 = program.pos_of_label(run, "h1")
    h2 = program.pos_of_label(run, "h2")
    throw_edges_h1 = [e for e in res.dsg.edges if e.dst.pos == h1]
    throw_edges_h2 = [e for e in res.dsg.edges if e.dst.pos == h2]
    # the single merged throw state reaches both handlers
    assert {e.src.pos.method.method_name for e in throw_edges_h1} == {"boom"}
    assert {e.src.pos.method.method_name for e in throw_edges_h2} == {"boom"}
    assert {e.src for e in throw_edges_h1} == {e.src for e in throw_edges_h2}


def test_straight_line_node_sets_identical():
    src = """
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 2)
     (assign a 1)
     (assign b (add a 2))
     (return b))))
"""
    _p1, res_p = _pushdown(src, table=EMPTY)
    _p2, res_f = _finite(src, table=EMPTY)
    assert res_p.node_set() == res_f.node_set()


@pytest.mark.parametrize("name", sorted(MICRO_PROGRAMS))
@pytest.mark.parametrize("k", [0, 1])
def test_pushdown_subset_of_finite_on_corpus(name, k):
    src, _o, _r = MICRO_PROGRAMS[name]
    _p1, res_p = _pushdown(src, k=k)
    _p2, res_f = _finite(src, k=k)
    assert res_p.node_set() <= res_f.node_set()


@pytest.mark.parametrize("name", sorted(STRICT_PROGRAMS))
def test_finite_strictly_coarser_on_merged_return_contexts(name):
    src = STRICT_PROGRAMS[name]
    _p1, res_p = _pushdown(src, k=1)
    _p2, res_f = _finite(src, k=1)
    assert res_p.node_set() < res_f.node_set(), name


def test_nested_calls_node_superset():
    src, _o, _r = MICRO_PROGRAMS["call_depth4"]
    _p1, res_p = _pushdown(src, k=1)
    _p2, res_f = _finite(src, k=1)
    assert res_p.node_set() <= res_f.node_set()


def test_mixed_receiver_set_dispatches_to_every_override():
    src = """
(public class A extends java/lang/Object ()
  ((method public m () int (throws) (limit 1) (return 1))))
(public class B extends A ()
  ((method public m () int (throws) (limit 1) (return 2))))
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 4)
     (assign c (invoke-static test/Api->getNumber () ()))
     (assign o (new A))
     (if (eq c 1) (goto keep))
     (assign o (new B))
     (label keep)
     (assign x (invoke-virtual m (o) ()))
     (return x))))
"""
    _program, res = _pushdown(src)
    reached = {s.pos.method.sig() for s in res.dsg.nodes}
    assert {"A.m()", "B.m()"} <= reached
    fp0 = frame_pointer_zero(RUN)
    receivers = res.final_store.lookup(RegAddr(fp0, "o"))
    assert {v.class_name for v in receivers} == {"A", "B"}


def test_fixpoint_rerun_is_stable():
    src, _o, _r = MICRO_PROGRAMS["taint_chain"]
    program = parse_program(src)
    cfg = AnalysisConfig(k=1)
    store, taint = _seeded(program, RUN, cfg)
    first = analyze_pushdown(program, RUN, store, taint, cfg, TABLE)
    second = analyze_pushdown(program, RUN, first.final_store,
                              first.final_taint, cfg, TABLE)
    assert first.final_store.canonical_text() \
        == second.final_store.canonical_text()
    assert first.node_set() == second.node_set()


def test_deterministic_across_runs():
    src, _o, _r = MICRO_PROGRAMS["try_nested"]
    results = [_pushdown(src)[1] for _ in range(2)]
    texts = [r.final_store.canonical_text() for r in results]
    assert texts[0] == texts[1]
    assert [s.sort_key() for s in results[0].dsg.nodes] \
        == [s.sort_key() for s in results[1].dsg.nodes]
    assert results[0].visit_counts == results[1].visit_counts


def test_resource_limit_flags_incomplete():
    src, _o, _r = MICRO_PROGRAMS["call_depth4"]
    program = parse_program(src)
    cfg = AnalysisConfig(k=1, max_states=3)
    store, taint = _seeded(program, RUN, cfg)
    res = analyze_pushdown(program, RUN, store, taint, cfg, EMPTY)
    assert not res.complete
    assert res.limit_reason == "max-states"


# -- path reconstruction -----------------------------------------------------


def test_path_from_equals_to():
    _p, res = _pushdown(MICRO_PROGRAMS["arith_add"][0], table=EMPTY)
    s = res.initial_state
    assert reconstruct_path(res, s, s) == [s]


def test_path_simple_noop_chain():
    _p, res = _pushdown(MICRO_PROGRAMS["arith_add"][0], table=EMPTY)
    nodes = sorted(res.dsg.nodes, key=lambda n: n.sort_key())
    start = res.initial_state
    end = [n for n in nodes if n.pos.index == 3][0]
    path = reconstruct_path(res, start, end)
    assert path is not None
    assert path[0] == start and path[-1] == end
    assert len(path) == 4


def test_path_unreachable_is_none():
    _p, res = _pushdown(MICRO_PROGRAMS["goto_skip"][0], table=EMPTY)
    start = res.initial_state
    dead = ControlState(StmtPos(RUN, 2), frame_pointer_zero(RUN))
    assert dead not in res.dsg.nodes                 # dead code never explored
    assert reconstruct_path(res, start, dead) is None


def test_path_through_push_and_callee_summary():
    """A sink inside a callee is reached via a push edge; the path back out
    rides the callee's epsilon summary."""
    src = """
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 3)
     (assign a (invoke-static Main->helper () ()))
     (assign b (add a 1))
     (return b))
   (method public helper () int (throws) (limit 2)
     (assign s (invoke-static test/Api->getSecret () ()))
     (return s))))
"""
    program, res = _pushdown(src)
    helper = MethodRef("Main", "helper", ())
    inside = [s for s in res.dsg.nodes if s.pos.method == helper][0]
    steps_in = reconstruct_path_steps(res, res.initial_state, inside)
    assert steps_in is not None
    assert any(s.kind == "push" for s in steps_in)
    after = [s for s in res.dsg.nodes
             if s.pos == StmtPos(RUN, 1)][0]
    steps_over = reconstruct_path_steps(res, res.initial_state, after)
    assert steps_over is not None
    kinds = [s.kind for s in steps_over]
    assert "summary" in kinds  # the callee's balanced body is summarized
    assert replay_stack_actions(steps_over)


def test_balanced_paths_replay():
    for name in ("try_nested", "rethrow", "call_two_sites"):
        src, _o, _r = MICRO_PROGRAMS[name]
        _p, res = _pushdown(src)
        start = res.initial_state
        for node in res.dsg.nodes:
            steps = reconstruct_path_steps(res, start, node)
            if steps is not None:
                assert replay_stack_actions(steps), (name, node.describe())
