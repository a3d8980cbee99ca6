"""Ergodic averaging of x-subproblem solutions and port-neighbourhood local search."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import milp
from .instance import (Instance, ObjectiveValue, Schedule, augmentation_weight,
                       derive_switches, evaluate_objective)
from .timeblock import _switch_rows


@dataclass(frozen=True)
class ErgodicState:
    x_tilde: np.ndarray | None = None
    count: int = 0  # solutions absorbed so far
    a: float = 4.0
    weight_sum: float = 0.0  # cumulative p^a weights
    last_weight: float = 0.0


def update_ergodic(state: ErgodicState, x_star) -> ErgodicState:
    """Fold one more solution in with weight (p+1)^a, p = number already absorbed."""
    x_star = np.asarray(x_star, dtype=float)
    if state.a < 0:
        raise ValueError("a must be >= 0")
    w = float(state.count + 1) ** state.a
    total = state.weight_sum + w
    if state.x_tilde is None:
        xt = x_star.copy()
    else:
        if state.x_tilde.shape != x_star.shape:
            raise ValueError("shape mismatch")
        xt = (state.weight_sum / total) * state.x_tilde + (w / total) * x_star
    return replace(state, x_tilde=xt, count=state.count + 1, weight_sum=total, last_weight=w)


def default_sigma(num_ports: int) -> int:
    return max(2, math.ceil(0.1 * num_ports))


@dataclass(frozen=True)
class Neighborhood:
    ports: tuple
    batteries: tuple

    def by_window(self, inst: Instance) -> dict:
        out = {}
        for j in self.batteries:
            out.setdefault(inst.battery_window[j], []).append(j)
        return out


def select_neighborhood(inst: Instance, x_tilde, x_best, sigma: int) -> Neighborhood:
    """Top-sigma ports by ergodic electricity cost; ties go to the smaller port index."""
    if sigma < 1:
        raise ValueError("sigma must be >= 1")
    x_tilde = np.zeros(inst.x_shape) if x_tilde is None else np.asarray(x_tilde, dtype=float)
    score = np.einsum("jkt,t->k", x_tilde, inst.prices)
    order = np.lexsort((np.arange(inst.num_ports), -score))
    ports = tuple(sorted(int(k) for k in order[:min(sigma, inst.num_ports)]))
    on = np.asarray(x_best)[:, list(ports), :].any(axis=(1, 2))
    return Neighborhood(ports, tuple(int(j) for j in np.flatnonzero(on)))


@dataclass
class LocalSearchResult:
    schedule: Schedule
    objective: ObjectiveValue
    improved: bool
    status: str


def build_local_program(inst: Instance, x_best, y_best, nbhd: Neighborhood):
    B, N, T = inst.x_shape
    x_best = np.asarray(x_best)
    y_best = np.asarray(y_best)
    ports = list(nbhd.ports)
    bats = list(nbhd.batteries)
    outside = [k for k in range(N) if k not in nbhd.ports]
    b = milp.ProgramBuilder()
    xv = np.full(inst.x_shape, -1, dtype=int)
    for j in bats:
        for k in ports:
            for t in range(inst.horizon[j]):
                xv[j, k, t] = b.add_var(("x", j, k, t + 1), inst.prices[t])
    nb = max(T - 1, 0)
    yv = b.add_vars([("y", k, t + 1) for k in ports for t in range(nb)],
                    augmentation_weight(inst)).reshape(len(ports), nb)
    for j in bats:
        mine = xv[j][xv[j] >= 0]
        hours = int(x_best[j][ports].sum())
        b.add_row(mine, 1.0, lo=hours, hi=hours)  # keep hours on the neighbourhood
        busy = x_best[j][outside].sum(axis=0) if outside else np.zeros(T)
        for t in range(inst.horizon[j]):
            b.add_row(xv[j, ports, t], 1.0, hi=1 - busy[t])
    for k in ports:
        for t in range(T):
            col = xv[bats, k, t] if bats else np.zeros(0, dtype=int)
            col = col[col >= 0]
            if len(col) > 1:
                b.add_row(col, 1.0, hi=1)
    _switch_rows(b, inst, xv, yv, ports, bats)
    ext = y_best[outside].sum(axis=0) if outside else np.zeros(nb)
    for t in range(nb):
        b.add_row(yv[:, t], 1.0, hi=inst.gamma - ext[t])
    # incumbent as warm start
    warm = np.zeros(b.num_vars)
    on = xv >= 0
    warm[xv[on]] = x_best[on]
    warm[yv.ravel()] = y_best[ports].ravel()
    b.set_warm_start(warm)
    return b, {"x": xv, "y": yv}


def local_search_step(inst: Instance, x_best, y_best, nbhd: Neighborhood, budget: float = 50.0,
                      backend: str | None = None) -> LocalSearchResult:
    """Re-optimise the incumbent on the neighbourhood ports; never returns anything worse."""
    inc = Schedule(x_best, y_best)
    inc_obj = evaluate_objective(inst, inc)
    if not nbhd.batteries or not nbhd.ports:
        return LocalSearchResult(inc, inc_obj, False, "empty")
    if any(inst.gamma - np.delete(inc.y, list(nbhd.ports), axis=0).sum(axis=0) < 0):
        return LocalSearchResult(inc, inc_obj, False, "infeasible")
    builder, idx = build_local_program(inst, inc.x, inc.y, nbhd)
    out = milp.solve_auto(builder.build(), budget, backend=backend)
    if out.assignment is None:
        return LocalSearchResult(inc, inc_obj, False, out.status)
    x = inc.x.copy()
    x[:, list(nbhd.ports), :] = 0
    on = idx["x"] >= 0
    x[on] = np.rint(out.assignment[idx["x"][on]]).astype(np.int8)
    y = inc.y.copy()
    y[list(nbhd.ports)] = derive_switches(inst, x)[list(nbhd.ports)]
    cand = Schedule(x, y)
    obj = evaluate_objective(inst, cand)
    if obj.scalarized < inc_obj.scalarized - 1e-9:
        return LocalSearchResult(cand, obj, True, out.status)
    return LocalSearchResult(inc, inc_obj, False, out.status)
