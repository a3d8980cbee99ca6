"""(y, s)-subproblem: switch variables plus the copy s of x.

Given reduced costs cbar[j, k, t] = (1 - beta) c_t - mu[j, k, t], the
subproblem picks, per port, which battery copy sits on the port in each
period and pays w per switch, with at most gamma switches per boundary and at
most one battery per port-period.

Two formulations are provided:

* the original one over (y, s), used as the reference;
* the time-block one over (y, lambda): lambda[k, t1, t2] = 1 selects the
  interval of periods t1+1..t2 on port k for the battery with the least
  reduced-cost sum over it.  Only intervals with a negative best sum are
  variables.

Block (t1, t2) uses boundary t1 (if t1 >= 1) and boundary t2 (if t2 <= T-1) as
switches; boundaries 0 and T are free.

Overlap between blocks on one port can be written two ways.  "period" (the
default) adds one row per port-period: blocks covering that period sum to at
most 1.  "pairwise" adds one row per overlapping pair.  Both describe the same
integer points, but the pairwise rows give a weaker LP relaxation: three
blocks that overlap pairwise can each take 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import milp
from .instance import Instance, augmentation_weight


@dataclass
class TimeBlockCatalog:
    num_periods: int
    num_ports: int
    # negative blocks, one entry per (port, t1, t2)
    port: np.ndarray
    t1: np.ndarray
    t2: np.ndarray
    cost: np.ndarray  # d
    battery: np.ndarray  # argmin witness j*

    @property
    def blocks_per_port(self) -> int:
        T = self.num_periods
        return T * (T + 1) // 2

    def __len__(self):
        return len(self.cost)


@dataclass
class YSSolution:
    y: np.ndarray  # (N, T-1) int8
    s: np.ndarray  # (B, N, T) int8
    value: float  # objective of the returned (y, s)
    lower_bound: float  # valid bound on the subproblem minimum
    status: str

    @property
    def proven(self) -> bool:
        return self.status == milp.OPTIMAL


def reduced_costs(inst: Instance, mu, beta: float) -> np.ndarray:
    """cbar = (1 - beta) c_t - mu, zero outside battery windows."""
    mu = np.asarray(mu, dtype=float)
    cbar = (1.0 - beta) * inst.prices[None, None, :] - mu
    return np.where(inst.mask, cbar, 0.0)


def block_sums(inst: Instance, cbar: np.ndarray) -> np.ndarray:
    """S[j, k, t1, t2] = sum of cbar over periods t1+1..t2 (inf when not eligible)."""
    B, N, T = inst.x_shape
    pre = np.zeros((B, N, T + 1))
    pre[:, :, 1:] = np.cumsum(cbar, axis=2)
    S = pre[:, :, None, :] - pre[:, :, :, None]  # [j, k, t1, t2]
    t1, t2 = np.meshgrid(np.arange(T + 1), np.arange(T + 1), indexing="ij")
    valid = t1 < t2
    eligible = valid[None, :, :] & (t2[None, :, :] <= inst.horizon[:, None, None])
    return np.where(eligible[:, None, :, :], S, np.inf)


def build_catalog(inst: Instance, cbar: np.ndarray) -> TimeBlockCatalog:
    S = block_sums(inst, cbar)
    j_star = np.argmin(S, axis=0)  # first minimum = smallest battery index
    d = np.take_along_axis(S, j_star[None], axis=0)[0]  # [k, t1, t2]
    k, a, b = np.nonzero(d < 0)
    return TimeBlockCatalog(inst.num_periods, inst.num_ports, k, a, b, d[k, a, b], j_star[k, a, b])


# ---------------------------------------------------------------- time-block model

def build_timeblock_program(inst: Instance, cat: TimeBlockCatalog, w: float,
                            overlap: str = "period") -> tuple[milp.BinaryProgram, dict]:
    N, T = inst.num_ports, inst.num_periods
    b = milp.ProgramBuilder()
    lam = b.add_vars([("lam", int(k), int(a), int(c)) for k, a, c in zip(cat.port, cat.t1, cat.t2)],
                     cat.cost)
    nb = max(T - 1, 0)
    yv = b.add_vars([("y", k, t + 1) for k in range(N) for t in range(nb)], w).reshape(N, nb)
    if overlap == "period":
        for k in range(N):
            on = np.flatnonzero(cat.port == k)
            for t in range(T):
                cover = on[(cat.t1[on] <= t) & (cat.t2[on] > t)]
                if len(cover) > 1:
                    b.add_row(lam[cover], 1.0, hi=1)
    elif overlap == "pairwise":
        for k in range(N):
            on = np.flatnonzero(cat.port == k)
            for i, p in enumerate(on):
                q = on[i + 1:]
                hit = q[(cat.t1[q] < cat.t2[p]) & (cat.t2[q] > cat.t1[p])]
                for r in hit:
                    b.add_row([lam[p], lam[r]], 1.0, hi=1)
    else:
        raise ValueError(f"unknown overlap mode {overlap!r}")
    for k in range(N):
        on = np.flatnonzero(cat.port == k)
        for t in range(1, T):
            starts = on[cat.t1[on] == t]
            if len(starts):  # y[k, t] >= blocks starting right after boundary t
                b.add_row(np.append(lam[starts], yv[k, t - 1]),
                          np.append(np.ones(len(starts)), -1.0), hi=0)
            ends = on[cat.t2[on] == t]
            if len(ends):  # y[k, t] >= blocks ending at boundary t
                b.add_row(np.append(lam[ends], yv[k, t - 1]),
                          np.append(np.ones(len(ends)), -1.0), hi=0)
    for t in range(nb):
        b.add_row(yv[:, t], 1.0, hi=inst.gamma)
    return b, {"lam": lam, "y": yv}


def _decode_blocks(inst: Instance, cat: TimeBlockCatalog, lam_val: np.ndarray) -> np.ndarray:
    s = np.zeros(inst.x_shape, dtype=np.int8)
    for i in np.flatnonzero(lam_val > 0.5):
        s[cat.battery[i], cat.port[i], cat.t1[i]:cat.t2[i]] = 1
    return s


def _finish(out: milp.SolveOutcome, value_fn, decode, shape_y, shape_s):
    if out.assignment is None:
        return YSSolution(np.zeros(shape_y, np.int8), np.zeros(shape_s, np.int8), math.nan,
                          out.lower_bound, out.status)
    y, s = decode(out.assignment)
    return YSSolution(y, s, value_fn(out.assignment), out.lower_bound, out.status)


def solve_ys_timeblock(inst: Instance, mu, beta: float, w: float | None = None,
                       budget: float = 50.0, overlap: str = "period", backend: str | None = None,
                       warm_y: np.ndarray | None = None, catalog: TimeBlockCatalog | None = None
                       ) -> YSSolution:
    w = augmentation_weight(inst) if w is None else w
    cat = catalog if catalog is not None else build_catalog(inst, reduced_costs(inst, mu, beta))
    builder, idx = build_timeblock_program(inst, cat, w, overlap)
    prog = builder.build()
    out = milp.solve_auto(prog, budget, backend=backend)

    def decode(a):
        y = np.rint(a[idx["y"]]).astype(np.int8)
        return y, _decode_blocks(inst, cat, a[idx["lam"]])

    return _finish(out, prog.objective, decode, inst.y_shape, inst.x_shape)


def lp_bound_timeblock(inst: Instance, mu, beta: float, w: float | None = None,
                       overlap: str = "period") -> float:
    w = augmentation_weight(inst) if w is None else w
    cat = build_catalog(inst, reduced_costs(inst, mu, beta))
    builder, _ = build_timeblock_program(inst, cat, w, overlap)
    return milp.solve_lp(builder.build())


# ---------------------------------------------------------------- original model

def build_original_program(inst: Instance, cbar: np.ndarray, w: float):
    B, N, T = inst.x_shape
    b = milp.ProgramBuilder()
    jkt = np.argwhere(inst.mask)
    sv = np.full(inst.x_shape, -1, dtype=int)
    sv[tuple(jkt.T)] = b.add_vars([("s", int(j), int(k), int(t + 1)) for j, k, t in jkt],
                                   cbar[tuple(jkt.T)])
    nb = max(T - 1, 0)
    yv = b.add_vars([("y", k, t + 1) for k in range(N) for t in range(nb)], w).reshape(N, nb)
    _switch_rows(b, inst, sv, yv, range(N), range(B))
    for k in range(N):
        for t in range(T):
            col = sv[:, k, t]
            col = col[col >= 0]
            if len(col) > 1:
                b.add_row(col, 1.0, hi=1)  # one battery per port-period
    for t in range(nb):
        b.add_row(yv[:, t], 1.0, hi=inst.gamma)
    return b, {"s": sv, "y": yv}


def _switch_rows(b: milp.ProgramBuilder, inst: Instance, xv, yv, ports, batteries):
    """Load and unload rows tying x (or s) variables on `ports` to y.

    xv[j, k, t] is a variable index or -1 (absent, counts as 0).
    """
    T = inst.num_periods
    batteries = list(batteries)
    for kk, k in enumerate(ports):
        for t in range(T - 1):
            nxt = xv[batteries, k, t + 1]
            cur = xv[batteries, k, t]
            nxt, cur = nxt[nxt >= 0], cur[cur >= 0]
            if len(nxt):  # occupancy increase needs a switch
                b.add_row(np.concatenate([nxt, cur, [yv[kk, t]]]),
                          np.concatenate([np.ones(len(nxt)), -np.ones(len(cur)), [-1.0]]), hi=0)
            for j in batteries:
                if xv[j, k, t] < 0:
                    continue
                if xv[j, k, t + 1] >= 0:  # unloading j needs a switch
                    b.add_row([xv[j, k, t], xv[j, k, t + 1], yv[kk, t]], [1.0, -1.0, -1.0], hi=0)
                else:  # window closes after t
                    b.add_row([xv[j, k, t], yv[kk, t]], [1.0, -1.0], hi=0)


def solve_ys_original(inst: Instance, mu, beta: float, w: float | None = None,
                      budget: float = 50.0, backend: str | None = None) -> YSSolution:
    w = augmentation_weight(inst) if w is None else w
    builder, idx = build_original_program(inst, reduced_costs(inst, mu, beta), w)
    prog = builder.build()
    out = milp.solve_auto(prog, budget, backend=backend)

    def decode(a):
        s = np.zeros(inst.x_shape, dtype=np.int8)
        on = idx["s"] >= 0
        s[on] = np.rint(a[idx["s"][on]]).astype(np.int8)
        return np.rint(a[idx["y"]]).astype(np.int8), s

    return _finish(out, prog.objective, decode, inst.y_shape, inst.x_shape)


def lp_bound_original(inst: Instance, mu, beta: float, w: float | None = None) -> float:
    w = augmentation_weight(inst) if w is None else w
    builder, _ = build_original_program(inst, reduced_costs(inst, mu, beta), w)
    return milp.solve_lp(builder.build())


def subproblem_value(inst: Instance, y, s, mu, beta: float, w: float | None = None) -> float:
    """L2(y, s; mu) = sum cbar * s + w * sum y."""
    w = augmentation_weight(inst) if w is None else w
    return float(np.sum(reduced_costs(inst, mu, beta) * s) + w * np.sum(y))


# ---------------------------------------------------------------- projection check

def in_timeblock_projection(inst: Instance, y, s, overlap: str = "period", tol: float = 1e-9) -> bool:
    """Whether fractional (y, s) is the image of some LP-feasible time-block point.

    lambda ranges over every window-eligible (battery, port, t1, t2) block and
    maps to s[j, k, t] = sum of lambda over j's blocks on k covering t.
    """
    B, N, T = inst.x_shape
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    blocks = [(j, k, a, c) for j in range(B) for k in range(N)
              for a in range(T) for c in range(a + 1, inst.horizon[j] + 1)]
    n = len(blocks)
    rows_eq, cols_eq, vals_eq, b_eq = [], [], [], []
    r = 0
    pos = {}
    for i, (j, k, a, c) in enumerate(blocks):
        for t in range(a, c):
            key = (j, k, t)
            if key not in pos:
                pos[key] = len(pos)
    for i, (j, k, a, c) in enumerate(blocks):
        for t in range(a, c):
            rows_eq.append(pos[(j, k, t)])
            cols_eq.append(i)
            vals_eq.append(1.0)
    b_eq = np.zeros(len(pos))
    for (j, k, t), p in pos.items():
        b_eq[p] = s[j, k, t]
    # s outside any block must be zero
    for j, k, t in np.argwhere(s > tol):
        if (j, k, t) not in pos:
            return False
    A_eq = sp.csr_matrix((vals_eq, (rows_eq, cols_eq)), shape=(len(pos), n))
    ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []

    def row(cols, rhs):
        nonlocal r
        ub_rows.extend([r] * len(cols))
        ub_cols.extend(cols)
        ub_vals.extend([1.0] * len(cols))
        b_ub.append(rhs)
        r += 1

    for k in range(N):
        on = [i for i, bl in enumerate(blocks) if bl[1] == k]
        if overlap == "period":
            for t in range(T):
                row([i for i in on if blocks[i][2] <= t < blocks[i][3]], 1.0)
        else:
            for p in on:
                for q in on:
                    if p < q and blocks[q][2] < blocks[p][3] and blocks[q][3] > blocks[p][2]:
                        row([p, q], 1.0)
        for t in range(1, T):
            row([i for i in on if blocks[i][2] == t], y[k, t - 1])
            row([i for i in on if blocks[i][3] == t], y[k, t - 1])
    A_ub = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(r, n))
    res = linprog(np.zeros(n), A_ub=A_ub, b_ub=np.array(b_ub) + tol, A_eq=A_eq, b_eq=b_eq,
                  bounds=(0, 1), method="highs")
    return res.status == 0
