"""Brute-force references that share no code with the package solvers."""

import itertools

import numpy as np


def _req(inst):
    need = []
    for p, w in zip(inst.demand_hours, inst.battery_window):
        if w == inst.num_windows:
            need.append(int(np.ceil(inst.alpha * p - 1e-9)))
        else:
            need.append(p)
    return need


def enumerate_px(inst):
    """All x satisfying demand, one battery per port-period and one port per
    battery-period.  Returns (slots, assignments): slot i is (j, t) and
    assignments[m, i] is 0 for idle or k+1 for port k."""
    ends = [inst.window_end[w - 1] for w in inst.battery_window]
    slots = [(j, t) for j in range(inst.num_batteries) for t in range(ends[j])]
    A = np.array(list(itertools.product(range(inst.num_ports + 1), repeat=len(slots))),
                 dtype=np.int8).reshape(-1, len(slots))
    keep = np.ones(len(A), dtype=bool)
    need = _req(inst)
    sj = np.array([s[0] for s in slots])
    st = np.array([s[1] for s in slots])
    for j in range(inst.num_batteries):
        hours = (A[:, sj == j] > 0).sum(axis=1)
        if inst.battery_window[j] == inst.num_windows:
            keep &= hours >= need[j]
        else:
            keep &= hours == need[j]
    for t in range(inst.num_periods):
        cols = A[:, st == t]
        for k in range(1, inst.num_ports + 1):
            keep &= (cols == k).sum(axis=1) <= 1
    return slots, A[keep]


def px_minimum(inst, slots, A, mu, beta):
    """min over P^x of sum (beta c_t + mu_jkt) x_jkt."""
    c = np.asarray(inst.price)
    C = np.zeros((len(slots), inst.num_ports + 1))
    for i, (j, t) in enumerate(slots):
        C[i, 1:] = beta * c[t] + mu[j, :, t]
    vals = C[np.arange(len(slots))[None, :], A].sum(axis=1)
    return float(vals.min())


def brute_force_optimum(inst, chunk=200_000):
    """Exact minimum of cost + w * switches over all schedules.

    Each port-period holds battery b (1..B) or nothing (0).  Returns
    (value, electricity_cost, switches, x) or None when infeasible.
    """
    B, N, T = inst.num_batteries, inst.num_ports, inst.num_periods
    c = np.asarray(inst.price)
    w = min(c) / ((T - 1) * inst.gamma + 1)
    ends = np.array([inst.window_end[wd - 1] for wd in inst.battery_window])
    need = np.array(_req(inst))
    last = np.array([wd == inst.num_windows for wd in inst.battery_window])
    cells = N * T
    total = (B + 1) ** cells
    best = None
    digits = (B + 1) ** np.arange(cells - 1, -1, -1, dtype=np.int64)
    for lo in range(0, total, chunk):
        codes = np.arange(lo, min(total, lo + chunk), dtype=np.int64)
        A = ((codes[:, None] // digits[None, :]) % (B + 1)).reshape(-1, N, T)
        ok = np.ones(len(A), dtype=bool)
        tt = np.arange(T)
        for j in range(B):
            on = A == j + 1  # (M, N, T)
            ok &= ~on[:, :, tt >= ends[j]].any(axis=(1, 2))
            ok &= on.sum(axis=1).max(axis=1) <= 1
            hours = on.sum(axis=(1, 2))
            ok &= (hours >= need[j]) if last[j] else (hours == need[j])
        if not ok.any():
            continue
        A = A[ok]
        sw = A[:, :, 1:] != A[:, :, :-1]
        ok2 = (sw.sum(axis=1) <= inst.gamma).all(axis=1)
        if not ok2.any():
            continue
        A, sw = A[ok2], sw[ok2]
        cost = ((A > 0) * c[None, None, :]).sum(axis=(1, 2))
        nsw = sw.sum(axis=(1, 2))
        val = cost + w * nsw
        i = int(np.argmin(val))
        if best is None or val[i] < best[0] - 1e-12:
            x = np.zeros((B, N, T), dtype=np.int8)
            for k in range(N):
                for t in range(T):
                    if A[i, k, t]:
                        x[A[i, k, t] - 1, k, t] = 1
            best = (float(val[i]), float(cost[i]), int(nsw[i]), x)
    return best
