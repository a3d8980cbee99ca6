import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swapsched.exact import solve_exact_blocks
from swapsched.instance import check_feasible, evaluate_objective, schedule_from_x
from swapsched.local_search import (ErgodicState, Neighborhood, default_sigma, local_search_step,
                                    select_neighborhood, update_ergodic)
from helpers import FIG8_LEFT, fig8_instance, random_instance, x_from_layout
from oracles import brute_force_optimum


def _explicit(xs, a):
    w = np.array([(p + 1.0) ** a for p in range(len(xs))])
    return np.tensordot(w / w.sum(), np.array(xs, dtype=float), axes=1)


def test_ergodic_examples():
    s = update_ergodic(ErgodicState(a=4), np.array([1.0, 0.0]))
    assert s.x_tilde.tolist() == [1.0, 0.0]
    s = ErgodicState(a=1)
    for v in (1.0, 0.0, 1.0):
        s = update_ergodic(s, np.array(v))
    assert float(s.x_tilde) == pytest.approx(2 / 3, abs=1e-15)
    s = ErgodicState(a=0)
    for v in (3.0, 0.0, 0.0, 1.0):
        s = update_ergodic(s, np.array(v))
    assert float(s.x_tilde) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        update_ergodic(ErgodicState(a=-1), np.zeros(2))
    with pytest.raises(ValueError):
        update_ergodic(s, np.zeros(3))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([0.0, 1.0, 2.5, 4.0]))
def test_ergodic_streaming_equals_explicit(seed, a):
    rng = np.random.default_rng(seed)
    xs = [rng.integers(0, 2, size=(3, 2, 4)) for _ in range(int(rng.integers(1, 40)))]
    s = ErgodicState(a=a)
    for x in xs:
        s = update_ergodic(s, x)
    assert np.abs(s.x_tilde - _explicit(xs, a)).max() <= 1e-10
    assert s.x_tilde.min() >= -1e-12 and s.x_tilde.max() <= 1 + 1e-12


def test_neighborhood_examples():
    inst = fig8_instance(3)
    xb = x_from_layout(inst, FIG8_LEFT)
    nb = select_neighborhood(inst, None, xb, 2)
    assert nb.ports == (0, 1)
    full = select_neighborhood(inst, None, xb, inst.num_ports)
    assert full.ports == (0, 1, 2, 3) and len(full.batteries) == 10
    xt = np.zeros(inst.x_shape)
    xt[0, 0, 0] = 5.0 / 13.8  # port 1 scores 5.0
    xt[1, 1, 1] = 3.0 / 9.0  # port 2 scores 3.0
    assert select_neighborhood(inst, xt, xb, 1).ports == (0,)
    xt[1, 3, 1] = 1.0  # port 4 scores 9.0
    assert select_neighborhood(inst, xt, xb, 1).ports == (3,)
    assert select_neighborhood(inst, None, xb, 9).ports == (0, 1, 2, 3)
    with pytest.raises(ValueError):
        select_neighborhood(inst, None, xb, 0)
    by = nb.by_window(inst)
    assert sorted(by[1]) == list(nb.batteries)
    assert default_sigma(10) == 2 and default_sigma(50) == 5 and default_sigma(1) == 2


@pytest.mark.parametrize("gamma", [3, 4])
def test_fig8_replay(gamma):
    inst = fig8_instance(gamma)
    left = schedule_from_x(inst, x_from_layout(inst, FIG8_LEFT))
    nb = select_neighborhood(inst, None, left.x, 2)
    res = local_search_step(inst, left.x, left.y, nb)
    assert res.improved
    assert check_feasible(inst, res.schedule).feasible
    assert res.objective.electricity_cost <= 189.6 + 1e-6
    assert res.objective.switch_count <= 9
    # exterior ports untouched
    assert (res.schedule.x[:, 2:, :] == left.x[:, 2:, :]).all()


def test_empty_neighborhood_returns_incumbent():
    inst = fig8_instance(4)
    left = schedule_from_x(inst, x_from_layout(inst, FIG8_LEFT))
    res = local_search_step(inst, left.x, left.y, Neighborhood((0,), ()))
    assert not res.improved and res.status == "empty"
    assert (res.schedule.x == left.x).all() and (res.schedule.y == left.y).all()


def _random_feasible(rng, inst):
    # a feasible schedule via the exact solver on randomly perturbed prices
    from dataclasses import replace
    noisy = replace(inst, price=tuple(float(v) for v in rng.uniform(1, 15, inst.num_periods)))
    r = solve_exact_blocks(noisy, backend="highs")
    if r.schedule is None:
        return None
    sched = schedule_from_x(inst, r.schedule.x)
    return sched if check_feasible(inst, sched).feasible else None


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_monotone_and_feasible(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, B_max=4, N_max=3, T_max=5)
    inc = _random_feasible(rng, inst)
    if inc is None:
        return
    sigma = int(rng.integers(1, inst.num_ports + 1))
    xt = rng.random(inst.x_shape) * inst.mask
    nb = select_neighborhood(inst, xt, inc.x, sigma)
    res = local_search_step(inst, inc.x, inc.y, nb)
    before = evaluate_objective(inst, inc).scalarized
    assert res.objective.scalarized <= before + 1e-9
    assert check_feasible(inst, res.schedule).feasible
    # hours per neighbourhood battery are kept
    ports = list(nb.ports)
    assert (res.schedule.x[:, ports].sum(axis=(1, 2)) == inc.x[:, ports].sum(axis=(1, 2))).all()
    out = [k for k in range(inst.num_ports) if k not in nb.ports]
    assert (res.schedule.x[:, out] == inc.x[:, out]).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_all_ports_reaches_optimum(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, B_max=3, N_max=2, T_max=4, alpha=1.0)
    ref = brute_force_optimum(inst)
    inc = _random_feasible(rng, inst)
    if ref is None or inc is None:
        return
    nb = select_neighborhood(inst, None, inc.x, inst.num_ports)
    if len(nb.batteries) < inst.num_batteries:
        return  # a battery with no hours cannot enter the neighbourhood
    res = local_search_step(inst, inc.x, inc.y, nb)
    assert res.objective.scalarized == pytest.approx(ref[0], abs=1e-6)
