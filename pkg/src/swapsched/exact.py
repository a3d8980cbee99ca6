"""The full binary model over (x, y), solved directly.

Used as the exact baseline on small instances and, with y fixed, as the
plain variable-fixing heuristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import milp
from .instance import Instance, Schedule, augmentation_weight, derive_switches
from .timeblock import _switch_rows

# bundled branch and bound refuses models larger than this without a backend
BUNDLED_MAX_VARS = 6000


class SizeGuardError(RuntimeError):
    pass


@dataclass
class ExactResult:
    status: str
    schedule: Schedule | None
    value: float  # scalarized objective of the schedule, nan without one
    lower_bound: float
    elapsed: float

    @property
    def gap(self) -> float:
        if self.schedule is None or not math.isfinite(self.value) or self.value <= 0:
            return 1.0
        return max(0.0, (self.value - self.lower_bound) / self.value)


def build_full_program(inst: Instance, y_fixed=None, w: float | None = None):
    """Model over x[j,k,t] (inside windows) and y[k,t]; y optionally fixed."""
    B, N, T = inst.x_shape
    w = augmentation_weight(inst) if w is None else w
    b = milp.ProgramBuilder()
    jkt = np.argwhere(inst.mask)
    xv = np.full(inst.x_shape, -1, dtype=int)
    xv[tuple(jkt.T)] = b.add_vars([("x", int(j), int(k), int(t + 1)) for j, k, t in jkt],
                                   inst.prices[jkt[:, 2]])
    nb = max(T - 1, 0)
    yv = b.add_vars([("y", k, t + 1) for k in range(N) for t in range(nb)], w).reshape(N, nb)
    if y_fixed is not None:
        y_fixed = np.asarray(y_fixed)
        for k in range(N):
            for t in range(nb):
                b.fix(yv[k, t], int(y_fixed[k, t]))
    for j in range(B):
        idx = xv[j][xv[j] >= 0]
        if inst.is_last[j]:
            b.add_row(idx, 1.0, lo=inst.required[j])
        else:
            b.add_row(idx, 1.0, lo=inst.required[j], hi=inst.required[j])
    for k in range(N):
        for t in range(T):
            col = xv[:, k, t]
            col = col[col >= 0]
            if len(col) > 1:
                b.add_row(col, 1.0, hi=1)
    if N > 1:
        for j in range(B):
            for t in range(inst.horizon[j]):
                b.add_row(xv[j, :, t], 1.0, hi=1)
    _switch_rows(b, inst, xv, yv, range(N), range(B))
    for t in range(nb):
        b.add_row(yv[:, t], 1.0, hi=inst.gamma)
    return b, {"x": xv, "y": yv}


def _decode(inst, idx, a):
    x = np.zeros(inst.x_shape, dtype=np.int8)
    on = idx["x"] >= 0
    x[on] = np.rint(a[idx["x"][on]]).astype(np.int8)
    return x


def solve_exact(inst: Instance, budget: float = 50.0, backend: str | None = None,
                y_fixed=None, warm: Schedule | None = None, target_gap: float = 0.0,
                max_vars: int | None = None) -> ExactResult:
    """Solve the full model; with `y_fixed` it becomes the plain variable-fixing heuristic.

    Without `max_vars` the bundled-solver limit applies unless a backend is
    chosen; an explicit `max_vars` is a hard cap for any solver.
    The returned schedule carries derived (minimal) switches, which never
    costs more than the solver's y.
    """
    builder, idx = build_full_program(inst, y_fixed)
    if max_vars is None:
        max_vars = math.inf if (backend or _env_backend()) else BUNDLED_MAX_VARS
    if builder.num_vars > max_vars:
        raise SizeGuardError(
            f"model has {builder.num_vars} variables, above the bundled solver limit "
            f"{max_vars}; register a backend (e.g. SWAPSCHED_BACKEND=highs)")
    if warm is not None:
        a = np.zeros(builder.num_vars)
        on = idx["x"] >= 0
        a[idx["x"][on]] = warm.x[on]
        a[idx["y"].ravel()] = warm.y.ravel()
        builder.set_warm_start(a)
    prog = builder.build()
    out = milp.solve_auto(prog, budget, target_gap, backend)
    if out.assignment is None:
        return ExactResult(out.status, None, math.nan, out.lower_bound, out.elapsed)
    x = _decode(inst, idx, out.assignment)
    sched = Schedule(x, derive_switches(inst, x))
    value = float(np.einsum("jkt,t->", x.astype(float), inst.prices)) \
        + augmentation_weight(inst) * int(sched.y.sum())
    return ExactResult(out.status, sched, value, min(out.lower_bound, value), out.elapsed)


# ---------------------------------------------------------------- port-free block model
#
# Ports are identical, so a schedule is determined (up to relabelling ports)
# by the charging intervals of each battery.  z[j, t1, t2] = 1 charges battery
# j over periods t1+1..t2 on a single port.  At boundary t, E_t intervals end
# and S_t start; pairing an ending port with a starting interval costs one
# switch, so the fewest switches at t is max(E_t, S_t).  That number is
# modelled with unary binaries v[t, m] (m = 1..gamma).

def build_block_program(inst: Instance, w: float | None = None):
    B, N, T = inst.x_shape
    w = augmentation_weight(inst) if w is None else w
    b = milp.ProgramBuilder()
    pre = np.concatenate([[0.0], np.cumsum(inst.prices)])
    blocks = [(j, a, c) for j in range(B) for a in range(T)
              for c in range(a + 1, inst.horizon[j] + 1)]
    bj, ba, bc = (np.array([blk[i] for blk in blocks], dtype=int) for i in range(3))
    z = b.add_vars([("z", j, a, c) for j, a, c in blocks], pre[bc] - pre[ba])
    nb = max(T - 1, 0)
    v = b.add_vars([("v", t + 1, m) for t in range(nb) for m in range(inst.gamma)], w)
    v = v.reshape(nb, inst.gamma)
    length = (bc - ba).astype(float)
    for j in range(B):
        on = np.flatnonzero(bj == j)
        if inst.is_last[j]:
            b.add_row(z[on], length[on], lo=inst.required[j])
        else:
            b.add_row(z[on], length[on], lo=inst.required[j], hi=inst.required[j])
        for t in range(inst.horizon[j]):
            cov = on[(ba[on] <= t) & (bc[on] > t)]
            b.add_row(z[cov], 1.0, hi=1)
    for t in range(T):
        cov = np.flatnonzero((ba <= t) & (bc > t))
        b.add_row(z[cov], 1.0, hi=N)
    for t in range(1, T):
        for sel in (bc == t, ba == t):
            on = np.flatnonzero(sel)
            if len(on):
                b.add_row(np.concatenate([z[on], v[t - 1]]),
                          np.concatenate([np.ones(len(on)), -np.ones(inst.gamma)]), hi=0)
    for t in range(nb):
        for m in range(inst.gamma - 1):  # unary order breaks symmetry
            b.add_row([v[t, m + 1], v[t, m]], [1.0, -1.0], hi=0)
    return b, {"z": z, "v": v, "blocks": (bj, ba, bc)}


def assign_ports(inst: Instance, intervals) -> np.ndarray:
    """Place (battery, t1, t2) intervals on ports with max(ends, starts) changes per boundary."""
    B, N, T = inst.x_shape
    x = np.zeros(inst.x_shape, dtype=np.int8)
    by_start = {}
    for j, a, c in intervals:
        by_start.setdefault(int(a), []).append((int(j), int(c)))
    port_end = np.zeros(N, dtype=int)  # period after which each port is free
    port_bat = np.full(N, -1)
    for t in range(T):
        new = sorted(by_start.get(t, []))
        ending = [k for k in range(N) if port_bat[k] >= 0 and port_end[k] == t]
        idle = [k for k in range(N) if port_bat[k] < 0 or port_end[k] < t]
        # same battery back on its port first, then other ending ports, then idle ones
        for j, c in list(new):
            hit = [k for k in ending if port_bat[k] == j]
            if hit:
                k = hit[0]
                ending.remove(k)
                new.remove((j, c))
                x[j, k, t:c] = 1
                port_end[k], port_bat[k] = c, j
        for j, c in new:
            pool = ending if ending else idle
            if not pool:
                raise ValueError(f"more than {N} intervals active in period {t + 1}")
            k = pool.pop(0)
            x[j, k, t:c] = 1
            port_end[k], port_bat[k] = c, j
        for k in range(N):
            if port_bat[k] >= 0 and port_end[k] <= t:
                port_bat[k] = -1
    return x


def solve_exact_blocks(inst: Instance, budget: float = 50.0, backend: str | None = None,
                       target_gap: float = 0.0, max_vars: int | None = None) -> ExactResult:
    """Exact optimum through the port-free interval model (size guard as in solve_exact)."""
    builder, idx = build_block_program(inst)
    if max_vars is None:
        max_vars = math.inf if (backend or _env_backend()) else BUNDLED_MAX_VARS
    if builder.num_vars > max_vars:
        raise SizeGuardError(
            f"interval model has {builder.num_vars} variables, above the bundled limit {max_vars}; "
            f"pass a backend (e.g. --backend highs)")
    prog = builder.build()
    out = milp.solve_auto(prog, budget, target_gap, backend)
    if out.assignment is None:
        return ExactResult(out.status, None, math.nan, out.lower_bound, out.elapsed)
    bj, ba, bc = idx["blocks"]
    on = np.flatnonzero(out.assignment[idx["z"]] > 0.5)
    x = assign_ports(inst, zip(bj[on], ba[on], bc[on]))
    sched = Schedule(x, derive_switches(inst, x))
    value = float(np.einsum("jkt,t->", x.astype(float), inst.prices)) \
        + augmentation_weight(inst) * int(sched.y.sum())
    return ExactResult(out.status, sched, value, min(out.lower_bound, value), out.elapsed)


def _env_backend():
    import os
    return os.environ.get("SWAPSCHED_BACKEND")
