import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapsched.driver import (BoundsTrace, InfeasibleInstanceError, SolverConfig, TraceEvent,
                              decode_variation, encode_variation, gap, grid_to_csv,
                              primal_dual_integral, run, run_variation_grid)
from swapsched.instance import Instance, check_feasible, evaluate_objective, generate_instance
from helpers import random_instance
from oracles import brute_force_optimum


def test_variation_encoding():
    assert decode_variation(2) == ("Simple", "Reg", "var-fix-binP", "nLoc")
    assert decode_variation(5) == ("Simple", "nReg", "var-fix-binP", "Loc")
    assert decode_variation(10) == ("MDS", "Reg", "var-fix-binP", "nLoc")
    assert decode_variation(13) == ("MDS", "nReg", "var-fix-binP", "Loc")
    assert [encode_variation(*decode_variation(v)) for v in range(1, 17)] == list(range(1, 17))
    with pytest.raises(ValueError):
        decode_variation(17)
    assert SolverConfig.from_variation(7, total_budget=1).variation == 7


def test_config_validation():
    for kw in ({"beta": 0.0}, {"beta": 1.0}, {"total_budget": 0}, {"total_budget": None},
               {"max_iterations": 0}, {"method": "Fancy"}, {"heu": 1}, {"bootstrap": "x"}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)
    assert SolverConfig(total_budget=None, max_iterations=3).test_mode
    assert not SolverConfig().test_mode


def test_gap_examples():
    assert gap(100, 90) == pytest.approx(0.10)
    assert gap(None, 5) == 1.0 and gap(math.inf, 5) == 1.0
    assert gap(7.5, 7.5) == 0
    with pytest.raises(ValueError):
        gap(0, -1)


def _trace(rows):
    return BoundsTrace([TraceEvent(t, i, u, l, "dual") for i, (t, u, l) in enumerate(rows)])


def test_primal_dual_integral_examples():
    assert primal_dual_integral(_trace([(0, 10, 5)]), 10).theta == 50
    assert primal_dual_integral(_trace([(0, 3, 3), (4, 3, 3)]), 9).theta == 0
    two = primal_dual_integral(_trace([(0, 10, 6), (2, 9, 8)]), 5)
    assert two.theta == 11 and two.excluded == 0
    late = primal_dual_integral(_trace([(0, math.inf, 1), (3, 6, 2)]), 5)
    assert late.theta == 8 and late.excluded == 3
    assert primal_dual_integral(_trace([(0, math.inf, 1)]), 5).excluded == 5


def test_trace_monotone_check_and_csv():
    good = _trace([(0, math.inf, 1), (1, 9, 2), (2, 8, 2)])
    assert good.is_monotone()
    assert not _trace([(0, 8, 1), (1, 9, 2)]).is_monotone()
    assert not _trace([(0, 8, 3), (1, 8, 2)]).is_monotone()
    lines = good.to_csv().splitlines()
    assert lines[0] == "elapsed_s,iter,h_upper,h_lower,source" and len(lines) == 4


def _cfg(v=2, iters=40, **kw):
    return SolverConfig.from_variation(v, total_budget=None, max_iterations=iters, **kw)


def test_two_period_example_is_solved_exactly():
    # gamma = 0: the only schedule charges both periods (unloading is a switch too), which
    # exact-demand bin packing cannot produce; the lower bound must still be valid
    inst = Instance(1, 1, 2, 1, (2,), (1,), (1,), (5.0, 3.0), 1.0, 0)
    res = run(inst, _cfg(13))
    assert res.lower <= 8.0 + 1e-6
    assert res.schedule is None or res.schedule.x[0, 0].tolist() == [1, 1]
    inst = replace(inst, gamma=1)
    res = run(inst, _cfg(13))
    assert res.schedule.x[0, 0].tolist() == [0, 1]
    assert res.upper == pytest.approx(4.5)
    # the dual optimum is 4: x = s = (1/2, 1/2) costs 4 with no switch, so the
    # reported gap stays at 1/9 even though the schedule is optimal
    assert res.lower == pytest.approx(4.0, abs=1e-6)
    assert res.gap == pytest.approx(1 / 9, abs=1e-6)


def test_tiny_budget_stops_on_budget():
    inst = generate_instance(20, 10, 2, seed=0)
    res = run(inst, SolverConfig(total_budget=0.001))
    assert res.reason == "budget"
    assert res.trace.is_monotone()


def test_infeasible_instance_raises():
    inst = Instance(2, 1, 1, 1, (1,), (1, 1), (1, 1), (1.0,), 1.0, 1)
    with pytest.raises(InfeasibleInstanceError):
        run(inst, _cfg())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([2, 5, 13, 16]))
def test_bounds_sandwich_optimum(seed, variation):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, B_max=3, N_max=2, T_max=4)
    ref = brute_force_optimum(inst)
    if ref is None:
        with pytest.raises(InfeasibleInstanceError):
            # capacity passes but gamma blocks every schedule: the solver just finds nothing
            run(inst, _cfg(variation, 10, heu=4))
            raise InfeasibleInstanceError("no incumbent")
        return
    res = run(inst, _cfg(variation, 30, heu=4))
    assert res.trace.is_monotone()
    for e in res.trace.events:
        assert e.lower <= ref[0] + 1e-6
        assert e.upper >= ref[0] - 1e-6
    if res.schedule is not None:
        assert check_feasible(inst, res.schedule).feasible
        assert evaluate_objective(inst, res.schedule).scalarized == pytest.approx(res.upper)


def test_determinism_in_test_mode():
    inst = generate_instance(12, 6, 2, seed=9)
    a, b = (run(inst, _cfg(13, 25, heu=6)) for _ in range(2))
    assert a.trace.to_csv() == b.trace.to_csv()
    assert a.summary() | {"elapsed_s": 0} == b.summary() | {"elapsed_s": 0}
    assert (a.schedule.x == b.schedule.x).all()
    seq = run(inst, _cfg(13, 25, heu=6, parallel=False))
    assert seq.trace.to_csv() == a.trace.to_csv()


def test_variation_grid():
    inst = generate_instance(20, 10, 2, seed=1)
    base = _cfg(2, 12)
    rows = run_variation_grid(inst, base, [2])
    assert len(rows) == 1 and rows[0].variation == 2
    # variations 1 and 2 differ only in local search, which first runs at iteration heu/2 = 10
    r1, r2 = (run(inst, replace(base, local=l)) for l in ("Loc", "nLoc"))
    early = lambda r: [(e.iteration, e.lower) for e in r.trace.events
                       if e.source == "dual" and e.iteration <= 10]
    assert early(r1) == early(r2)
    # plain variable fixing above its size cap never yields a schedule: an NA row
    rows = run_variation_grid(inst, replace(base, var_fix_max_vars=10, max_iterations=3), [4, 2])
    assert math.isinf(rows[0].upper) and rows[0].gap == 1.0
    text = grid_to_csv(rows)
    assert text.splitlines()[1].split(",")[1] == "NA"
    assert rows[1].upper_dev_pct == 0.0
    with pytest.raises(ValueError):
        run_variation_grid(inst, base, [])
