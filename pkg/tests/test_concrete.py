"""Concrete-interpreter oracle tests."""

import pytest

from corpus_micro import MICRO_PROGRAMS, MICRO_SUMMARIES, RUN
from pdcfa.concrete import (
    CFun,
    CInt,
    ConcreteError,
    CRegAddr,
    run_concrete,
)
from pdcfa.ir import MethodRef, parse_program
from pdcfa.taint import parse_summaries

TABLE = parse_summaries(MICRO_SUMMARIES)


def _run(name, fuel=10_000):
    src, outcome, ret = MICRO_PROGRAMS[name]
    program = parse_program(src)
    crun = run_concrete(program, RUN, fuel=fuel, summaries=TABLE)
    return program, crun, outcome, ret


def _final_ret(crun):
    store = crun.final_store()
    candidates = [v for a, v in store.items()
                  if isinstance(a, CRegAddr) and a.reg == "ret"
                  and a.fpid == crun.states[-1].fpid]
    assert candidates, "no ret register in the final frame"
    return candidates[0]


def test_return_const_single_step():
    _p, crun, outcome, ret = _run("ret_const")
    assert crun.outcome == outcome
    assert crun.steps == 1
    assert _final_ret(crun) == CInt(ret)


def test_exact_arithmetic():
    _p, crun, _o, ret = _run("arith_add")
    assert _final_ret(crun) == CInt(5) == CInt(ret)


def test_uncaught_exception_outcome():
    _p, crun, outcome, _r = _run("uncaught_throw")
    assert crun.outcome == "uncaught-exception"
    exn = [v for a, v in crun.final_store().items()
           if isinstance(a, CRegAddr) and a.reg == "exn"]
    assert exn and exn[0].class_name == "Fault"


@pytest.mark.parametrize("name", sorted(MICRO_PROGRAMS))
def test_expected_concrete_results(name):
    _p, crun, outcome, ret = _run(name)
    assert crun.outcome == outcome
    if ret is not None:
        assert _final_ret(crun) == CInt(ret)


def test_determinism_identical_traces():
    for name in ("call_depth4", "try_nested", "taint_chain"):
        _p1, r1, _o, _v = _run(name)
        _p2, r2, _o2, _v2 = _run(name)
        assert r1.steps == r2.steps
        assert [s.pos for s in r1.states] == [s.pos for s in r2.states]
        assert [s.store for s in r1.states] == [s.store for s in r2.states]


def test_out_of_fuel():
    src = """
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 2)
     (label spin)
     (goto spin))))
"""
    program = parse_program(src)
    crun = run_concrete(program, MethodRef("Main", "run", ()), fuel=25)
    assert crun.outcome == "out-of-fuel"
    assert crun.steps == 25


def test_type_error_on_ill_typed_primitive():
    src = """
(public class Main extends java/lang/Object ()
  ((method public run () int (throws) (limit 2)
     (assign a true)
     (return (add a 1)))))
"""
    program = parse_program(src)
    with pytest.raises(ConcreteError):
        run_concrete(program, MethodRef("Main", "run", ()), fuel=25)


def test_stack_discipline():
    """Every pushed call frame is popped exactly once, by return or throw."""
    for name in ("call_depth4", "try_nested", "rethrow", "handler_skip_return"):
        _p, crun, _o, _r = _run(name)
        prev = crun.states[0].kont
        pushed, popped = 0, 0
        for state in crun.states[1:]:
            cur = state.kont
            delta = len(cur) - len(prev)
            if delta > 0:
                pushed += sum(1 for f in cur[:delta] if isinstance(f, CFun))
            elif delta < 0:
                popped += sum(1 for f in prev[:-delta] if isinstance(f, CFun))
            prev = cur
        assert pushed == popped + sum(
            1 for f in prev if isinstance(f, CFun))


def test_concrete_taint_reaches_sink():
    _p, crun, _o, _r = _run("taint_chain")
    hits = [h for app in crun.sink_hits for h in app.sink_hits]
    assert any(cat.value == "Location" and kind == "network"
               for cat, kind in hits)
    assert any(app.summary.role == "source" for app in crun.source_apps)
