"""Partial variable fixing: recover a feasible x from a subproblem's switches.

The switch pattern ybar cuts each port's horizon into disjoint intervals.
Every interval is given whole to at most one battery (or left idle), so
switches can only happen where ybar already has them.  Assigning batteries
to intervals is a small bin-packing style program whose size grows with
B times the number of intervals, not with B * N * T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import milp
from .instance import Instance, ObjectiveValue, Schedule, derive_switches, evaluate_objective


@dataclass(frozen=True)
class DisjunctiveBlocks:
    num_periods: int
    # per port, list of (t1, t2) covering periods t1+1..t2
    blocks: tuple
    # per port, R = sum of prices over each interval
    weight: tuple

    def count(self) -> int:
        return sum(len(z) for z in self.blocks)


@dataclass
class BinpackResult:
    feasible: bool
    schedule: Schedule | None
    objective: ObjectiveValue | None
    status: str
    num_vars: int = 0


def disjunctive_blocks(inst: Instance, ybar) -> DisjunctiveBlocks:
    ybar = np.asarray(ybar)
    T = inst.num_periods
    if ybar.shape != inst.y_shape:
        raise ValueError(f"ybar shape {ybar.shape} != {inst.y_shape}")
    pre = np.concatenate([[0.0], np.cumsum(inst.prices)])
    blocks, weight = [], []
    for k in range(inst.num_ports):
        cuts = [0] + [int(t) + 1 for t in np.flatnonzero(ybar[k])] + [T]
        z = tuple(zip(cuts[:-1], cuts[1:]))
        blocks.append(z)
        weight.append(tuple(float(pre[b] - pre[a]) for a, b in z))
    return DisjunctiveBlocks(T, tuple(blocks), tuple(weight))


def fill_switch_capacity(inst: Instance, ybar) -> np.ndarray:
    """Spend unused switching capacity: at each boundary with fewer than gamma
    switches, cut the longest intervals running across it (smaller port first on ties).

    Cutting only splits intervals, so every packing valid for ybar stays valid
    and the per-boundary cap still holds.
    """
    y = np.array(ybar, dtype=np.int8)
    N, nb = y.shape
    for t in range(nb):
        for _ in range(int(inst.gamma - y[:, t].sum())):
            best_len, best_k = 0, -1
            for k in np.flatnonzero(y[:, t] == 0):
                cuts = np.flatnonzero(y[k])
                left = cuts[cuts < t]
                right = cuts[cuts > t]
                lo = left[-1] + 1 if len(left) else 0
                hi = right[0] + 1 if len(right) else nb + 1
                if hi - lo > best_len:
                    best_len, best_k = hi - lo, int(k)
            if best_k < 0:
                break
            y[best_k, t] = 1
    return y


def build_binpack_program(inst: Instance, blocks: DisjunctiveBlocks):
    """kappa[k, block, j] for batteries whose window contains the whole block."""
    b = milp.ProgramBuilder()
    entries = []  # (k, t1, t2, j)
    costs = []
    for k, (z, r) in enumerate(zip(blocks.blocks, blocks.weight)):
        for (a, c), rr in zip(z, r):
            for j in np.flatnonzero(inst.horizon >= c):
                entries.append((k, a, c, int(j)))
                costs.append(rr)
    kap = b.add_vars([("kappa",) + e for e in entries], costs)
    if not entries:
        ek = ea = ec = ej = np.zeros(0, dtype=int)
    else:
        ek, ea, ec, ej = (np.array(col) for col in zip(*entries))
    # one battery per interval
    for k, z in enumerate(blocks.blocks):
        for a, c in z:
            on = np.flatnonzero((ek == k) & (ea == a))
            if len(on) > 1:
                b.add_row(kap[on], 1.0, hi=1)
    length = (ec - ea).astype(float)
    for j in range(inst.num_batteries):
        mine = np.flatnonzero(ej == j)
        # a battery sits on one port at a time
        for t in range(inst.horizon[j]):
            cov = mine[(ea[mine] <= t) & (ec[mine] > t)]
            if len(cov) > 1:
                b.add_row(kap[cov], 1.0, hi=1)
        # last-window batteries may exceed their minimum when a tight switch cap forces it
        need = inst.required[j]
        b.add_row(kap[mine], length[mine], lo=need, hi=math.inf if inst.is_last[j] else need)
    return b, {"kappa": kap, "entries": (ek, ea, ec, ej)}


def solve_binpack(inst: Instance, ybar, budget: float = 50.0,
                  backend: str | None = None, fill: bool = False) -> BinpackResult:
    if fill:
        ybar = fill_switch_capacity(inst, ybar)
    blocks = disjunctive_blocks(inst, ybar)
    builder, idx = build_binpack_program(inst, blocks)
    prog = builder.build()
    out = milp.solve_auto(prog, budget, backend=backend)
    if out.assignment is None:
        return BinpackResult(False, None, None, out.status, prog.num_vars)
    ek, ea, ec, ej = idx["entries"]
    x = np.zeros(inst.x_shape, dtype=np.int8)
    for i in np.flatnonzero(out.assignment[idx["kappa"]] > 0.5):
        x[ej[i], ek[i], ea[i]:ec[i]] = 1
    sched = Schedule(x, derive_switches(inst, x))
    return BinpackResult(True, sched, evaluate_objective(inst, sched), out.status, prog.num_vars)
