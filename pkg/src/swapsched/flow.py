"""x-subproblem as a min-cost flow.

Layers: super source -> battery j -> (j, t) -> (k, t) -> sink.  Only the
(j, t) -> (k, t) arcs carry cost, beta * c_t + mu[j, k, t], scaled to
integers.  Batteries in earlier windows push exactly p_j units.  A battery in
the last window is given supply T and a zero-cost overflow arc straight to the
sink of capacity T - ceil(alpha p_j), so it may charge any number of periods
between ceil(alpha p_j) and T, whichever is cheaper.

Solved with successive shortest paths on reduced costs.  Two interchangeable
kernels exist: a compiled one (numba) that runs one heap Dijkstra per
augmenting path, and a scipy.sparse.csgraph one where each phase runs a
Dijkstra, moves potentials, and saturates the zero-reduced-cost subgraph with
a max flow.  Both start from DAG potentials, so negative arc costs are fine.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra, maximum_flow

from .instance import Instance, demand_fits

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

COST_SCALE = 10**6


class CapacityError(ValueError):
    """The instance cannot meet its charging demand with the available ports."""


@dataclass
class XSubproblemSolution:
    x: np.ndarray  # (B, N, T) int8
    value: float


@dataclass
class FlowNetwork:
    inst: Instance
    beta: float
    mu: np.ndarray
    num_nodes: int
    source: int
    sink: int
    tail: np.ndarray
    head: np.ndarray
    cap: np.ndarray
    cost: np.ndarray  # int64 scaled costs
    supply: np.ndarray  # per battery
    mid: slice  # middle arcs inside the arc arrays
    mid_index: tuple  # (j, k, t) arrays for the middle arcs
    _adj: tuple | None = field(default=None, repr=False)

    @property
    def total_supply(self) -> int:
        return int(self.supply.sum())


def scaled_costs(inst: Instance, mu: np.ndarray, beta: float) -> np.ndarray:
    return np.rint(COST_SCALE * (beta * inst.prices[None, None, :] + mu)).astype(np.int64)


def _check_capacity(inst: Instance):
    if not demand_fits(inst.window_end, inst.battery_window, inst.required.tolist(),
                       inst.num_ports):
        raise CapacityError("charging demand does not fit the available port-periods")


def build_flow(inst: Instance, mu, beta: float) -> FlowNetwork:
    if not 0 < beta <= 1:
        raise ValueError("beta must lie in (0, 1]")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != inst.x_shape:
        raise ValueError(f"mu shape {mu.shape} != {inst.x_shape}")
    if not np.all(np.isfinite(mu[inst.mask])):
        raise ValueError("mu must be finite")
    _check_capacity(inst)
    B, N, T = inst.x_shape
    jt = np.argwhere(inst.period_mask)  # (j, t) rows in battery-major order
    n_jt = len(jt)
    source = 0
    bat0 = 1
    jt0 = bat0 + B
    kt0 = jt0 + n_jt
    sink = kt0 + N * T
    supply = np.where(inst.is_last, T, inst.required).astype(np.int64)

    tails, heads, caps = [], [], []
    # source -> battery
    tails.append(np.full(B, source))
    heads.append(bat0 + np.arange(B))
    caps.append(supply)
    # battery -> (j, t)
    tails.append(bat0 + jt[:, 0])
    heads.append(jt0 + np.arange(n_jt))
    caps.append(np.ones(n_jt, dtype=np.int64))
    # (j, t) -> (k, t)
    mj = np.repeat(jt[:, 0], N)
    mt = np.repeat(jt[:, 1], N)
    mk = np.tile(np.arange(N), n_jt)
    mid_start = B + n_jt
    tails.append(np.repeat(jt0 + np.arange(n_jt), N))
    heads.append(kt0 + mk * T + mt)
    caps.append(np.ones(n_jt * N, dtype=np.int64))
    mid = slice(mid_start, mid_start + n_jt * N)
    # (k, t) -> sink
    tails.append(kt0 + np.arange(N * T))
    heads.append(np.full(N * T, sink))
    caps.append(np.ones(N * T, dtype=np.int64))
    # overflow for last-window batteries
    over = np.flatnonzero(inst.is_last & (T - inst.required > 0))
    tails.append(bat0 + over)
    heads.append(np.full(len(over), sink))
    caps.append((T - inst.required[over]).astype(np.int64))

    tail = np.concatenate(tails).astype(np.int64)
    head = np.concatenate(heads).astype(np.int64)
    cap = np.concatenate(caps).astype(np.int64)
    cost = np.zeros(len(tail), dtype=np.int64)
    net = FlowNetwork(inst, float(beta), mu.copy(), sink + 1, source, sink, tail, head, cap,
                      cost, supply, mid, (mj, mk, mt))
    return update_costs(net, mu)


def update_costs(net: FlowNetwork, mu) -> FlowNetwork:
    """Replace the middle-arc costs; everything else is kept."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != net.inst.x_shape:
        raise ValueError(f"topology mismatch: mu shape {mu.shape} != {net.inst.x_shape}")
    net.mu = mu.copy()
    j, k, t = net.mid_index
    net.cost[net.mid] = scaled_costs(net.inst, mu, net.beta)[j, k, t]
    return net


def _initial_potentials(net: FlowNetwork) -> np.ndarray:
    # The network is a DAG, so shortest distances follow layer by layer.
    pi = np.zeros(net.num_nodes, dtype=np.int64)
    inst = net.inst
    N, T = inst.num_ports, inst.num_periods
    kt0 = net.sink - N * T
    best = np.full(N * T, np.iinfo(np.int64).max)
    np.minimum.at(best, net.head[net.mid] - kt0, net.cost[net.mid])
    reach = best < np.iinfo(np.int64).max
    candidates = list(best[reach])
    if net.mid.stop < len(net.tail) - N * T or np.any(inst.is_last & (inst.required < T)):
        candidates.append(0)
    pi_sink = min(candidates) if candidates else 0
    pi[kt0:kt0 + N * T] = np.where(reach, best, max(pi_sink, 0))
    pi[net.sink] = pi_sink
    return pi


def _solve_flow(net: FlowNetwork, kernel: str | None = None) -> np.ndarray:
    """Min-cost flow saturating all supplies; returns flow per arc."""
    kernel = kernel or ("compiled" if numba is not None else "csgraph")
    if kernel == "compiled":
        return _solve_flow_compiled(net)
    if kernel != "csgraph":
        raise ValueError(f"unknown kernel {kernel!r}")
    return _solve_flow_csgraph(net)


def _solve_flow_csgraph(net: FlowNetwork) -> np.ndarray:
    n = net.num_nodes
    tail, head, cap, cost = net.tail, net.head, net.cap, net.cost
    flow = np.zeros(len(tail), dtype=np.int64)
    pi = _initial_potentials(net)
    target = net.total_supply
    sent = 0
    # arcs are keyed by (tail, head); no two arcs share an unordered pair
    keys = tail * n + head
    order = np.argsort(keys)
    sorted_keys = keys[order]
    while sent < target:
        fwd = flow < cap
        bwd = flow > 0
        ru = np.concatenate([tail[fwd], head[bwd]])
        rv = np.concatenate([head[fwd], tail[bwd]])
        rc = np.concatenate([cost[fwd], -cost[bwd]]) + pi[ru] - pi[rv]
        rcap = np.concatenate([cap[fwd] - flow[fwd], flow[bwd]])
        if rc.size and rc.min() < 0:
            raise RuntimeError("negative reduced cost; potentials broken")
        g = sp.csr_matrix((rc.astype(float), (ru, rv)), shape=(n, n))
        dist = dijkstra(g, directed=True, indices=net.source)
        if not np.isfinite(dist[net.sink]):
            raise CapacityError("demand cannot be routed through the available ports")
        reach = np.isfinite(dist)
        ds = int(np.rint(dist[net.sink]))
        d = np.full(n, ds, dtype=np.int64)
        # capping at the sink distance keeps every reduced cost nonnegative
        d[reach] = np.minimum(np.rint(dist[reach]).astype(np.int64), ds)
        pi = pi + d
        rc2 = rc + d[ru] - d[rv]
        adm = (rc2 == 0) & reach[ru] & reach[rv]
        ag = sp.csr_matrix((rcap[adm].astype(np.int32), (ru[adm], rv[adm])), shape=(n, n))
        ag.sort_indices()
        res = maximum_flow(ag, net.source, net.sink)
        if res.flow_value == 0:
            raise RuntimeError("no augmenting flow on admissible arcs")
        f = res.flow.tocoo()
        pos = f.data > 0
        fk = f.row[pos].astype(np.int64) * n + f.col[pos]
        fv = f.data[pos].astype(np.int64)
        # net flow u->v either pushes arc (u, v) or cancels arc (v, u)
        idx = np.searchsorted(sorted_keys, fk)
        hit = (idx < len(sorted_keys)) & (sorted_keys[np.minimum(idx, len(sorted_keys) - 1)] == fk)
        flow[order[idx[hit]]] += fv[hit]
        rk = f.col[pos][~hit].astype(np.int64) * n + f.row[pos][~hit]
        ridx = np.searchsorted(sorted_keys, rk)
        flow[order[ridx]] -= fv[~hit]
        sent += int(res.flow_value)
    return flow


def _adjacency(net: FlowNetwork):
    # residual arcs: e < m is arc e forward, e >= m is arc e - m backward
    m = len(net.tail)
    owner = np.concatenate([net.tail, net.head])
    order = np.argsort(owner, kind="stable")
    start = np.zeros(net.num_nodes + 1, dtype=np.int64)
    np.add.at(start, owner + 1, 1)
    return np.cumsum(start), order.astype(np.int64), m


def _solve_flow_compiled(net: FlowNetwork) -> np.ndarray:
    if net._adj is None:
        net._adj = _adjacency(net)
    start, adj, m = net._adj
    flow = np.zeros(m, dtype=np.int64)
    pi = _initial_potentials(net)
    ok = _ssp_kernel(net.num_nodes, net.source, net.sink, net.total_supply, net.tail,
                     net.head, net.cap, net.cost, start, adj, flow, pi)
    if not ok:
        raise CapacityError("demand cannot be routed through the available ports")
    return flow


def _ssp_kernel_py(n, source, sink, target, tail, head, cap, cost, start, adj, flow, pi):
    """One Dijkstra (binary heap, lazy deletion) per augmenting path."""
    m = tail.shape[0]
    big = np.iinfo(np.int64).max
    dist = np.empty(n, dtype=np.int64)
    pred = np.empty(n, dtype=np.int64)
    done = np.empty(n, dtype=np.bool_)
    hkey = np.empty(2 * m + 2, dtype=np.int64)
    hval = np.empty(2 * m + 2, dtype=np.int64)
    sent = 0
    while sent < target:
        dist[:] = big
        pred[:] = -1
        done[:] = False
        dist[source] = 0
        size = 1
        hkey[0] = 0
        hval[0] = source
        while size > 0:
            d = hkey[0]
            u = hval[0]
            # pop root
            size -= 1
            if size > 0:
                kk = hkey[size]
                vv = hval[size]
                i = 0
                while True:
                    c = 2 * i + 1
                    if c >= size:
                        break
                    if c + 1 < size and hkey[c + 1] < hkey[c]:
                        c += 1
                    if hkey[c] < kk:
                        hkey[i] = hkey[c]
                        hval[i] = hval[c]
                        i = c
                    else:
                        break
                hkey[i] = kk
                hval[i] = vv
            if done[u] or d > dist[u]:
                continue
            done[u] = True
            if u == sink:
                break
            for p in range(start[u], start[u + 1]):
                e = adj[p]
                if e < m:
                    v = head[e]
                    res = cap[e] - flow[e]
                    w = cost[e]
                else:
                    a = e - m
                    v = tail[a]
                    res = flow[a]
                    w = -cost[a]
                if res <= 0 or done[v]:
                    continue
                nd = d + w + pi[u] - pi[v]
                if nd < dist[v]:
                    dist[v] = nd
                    pred[v] = e
                    # push
                    i = size
                    size += 1
                    while i > 0:
                        par = (i - 1) // 2
                        if hkey[par] > nd:
                            hkey[i] = hkey[par]
                            hval[i] = hval[par]
                            i = par
                        else:
                            break
                    hkey[i] = nd
                    hval[i] = v
        if not done[sink]:
            return False
        ds = dist[sink]
        for v in range(n):
            if done[v]:
                pi[v] += dist[v]
            else:
                pi[v] += ds
        # bottleneck along the path
        push = target - sent
        v = sink
        while v != source:
            e = pred[v]
            if e < m:
                r = cap[e] - flow[e]
                v = tail[e]
            else:
                r = flow[e - m]
                v = head[e - m]
            if r < push:
                push = r
        v = sink
        while v != source:
            e = pred[v]
            if e < m:
                flow[e] += push
                v = tail[e]
            else:
                flow[e - m] -= push
                v = head[e - m]
        sent += push
    return True


_ssp_kernel = numba.njit(cache=True)(_ssp_kernel_py) if numba is not None else _ssp_kernel_py


def solve_network(net: FlowNetwork, kernel: str | None = None) -> XSubproblemSolution:
    inst = net.inst
    flow = _solve_flow(net, kernel)
    x = np.zeros(inst.x_shape, dtype=np.int8)
    j, k, t = net.mid_index
    x[j, k, t] = flow[net.mid]
    coef = net.beta * inst.prices[None, None, :] + net.mu
    value = float(np.sum(coef[x.astype(bool)]))
    return XSubproblemSolution(x, value)


def solve_x(inst: Instance, mu, beta: float, net: FlowNetwork | None = None) -> XSubproblemSolution:
    if net is None:
        net = build_flow(inst, mu, beta)
    else:
        update_costs(net, mu)
    return solve_network(net)


def to_dot(net: FlowNetwork) -> str:
    lines = ["digraph flow {", "  rankdir=LR;"]
    for u, v, c, w in zip(net.tail, net.head, net.cap, net.cost):
        lines.append(f'  n{u} -> n{v} [label="{c}/{w / COST_SCALE:g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
