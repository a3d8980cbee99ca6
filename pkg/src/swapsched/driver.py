"""Subgradient optimisation over the variable-layered Lagrangian dual.

Each iteration solves the x-subproblem (min-cost flow) and the (y, s)
subproblem (time-block model), updates the lower bound, moves the
multipliers, and from time to time turns a subproblem's switch pattern into a
feasible schedule (bin-packing or plain y-fixing) and polishes the incumbent
with neighbourhood local search.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dual, local_search as ls
from .binpack import fill_switch_capacity, solve_binpack
from .exact import SizeGuardError, solve_exact
from .flow import CapacityError, build_flow, solve_network, update_costs
from .instance import Instance, Schedule, derive_switches, evaluate_objective, check_feasible
from .timeblock import solve_ys_timeblock

METHODS = ("Simple", "MDS")
UPDATES = ("Reg", "nReg")
HEURISTICS = ("var-fix-binP", "var-fix")
LOCALS = ("Loc", "nLoc")


def decode_variation(idx: int) -> tuple:
    """Variation id 1..16 -> (method, update, heuristic, local)."""
    if not 1 <= idx <= 16:
        raise ValueError(f"variation must be in 1..16, got {idx}")
    v = idx - 1
    return METHODS[v >> 3], UPDATES[(v >> 2) & 1], HEURISTICS[(v >> 1) & 1], LOCALS[v & 1]


def encode_variation(method, update, heuristic, local) -> int:
    return (8 * METHODS.index(method) + 4 * UPDATES.index(update)
            + 2 * HEURISTICS.index(heuristic) + LOCALS.index(local) + 1)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "MDS"
    update: str = "nReg"
    heuristic: str = "var-fix-binP"
    local: str = "Loc"
    beta: float = 0.5
    heu: int = 20
    a: float = 4.0
    sigma: int | None = None  # default max(2, ceil(0.1 N))
    theta0: float = 1.0
    theta_patience: int = 10  # halve theta after this many iterations without a better bound
    theta_floor: float = 1e-4
    eps: float = 1e-3
    total_budget: float | None = 60.0  # seconds; None = no wall-clock limit
    max_iterations: int | None = None  # iteration budget (test mode)
    per_subproblem_budget: float = 50.0
    seed: int = 0
    warm_start: object = "packaged"  # "packaged", "cold", a path, or a RegressionFit
    backend: str | None = "highs"  # MILP backend for subproblems and heuristics
    parallel: bool = True
    var_fix_max_vars: int = 200_000
    # Polyak target before the first incumbent: "price_bound" uses an a-priori
    # upper bound on the optimum, "dimensionless" steps theta / |d|^2
    bootstrap: str = "price_bound"
    # let the heuristics use switching capacity that ybar leaves idle
    fill_switches: bool = True

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie strictly inside (0, 1)")
        if self.total_budget is not None and self.total_budget <= 0:
            raise ValueError("total_budget must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.total_budget is None and self.max_iterations is None:
            raise ValueError("need a time or an iteration budget")
        if self.per_subproblem_budget <= 0 or self.heu < 2:
            raise ValueError("per_subproblem_budget must be positive and heu >= 2")
        if self.bootstrap not in ("price_bound", "dimensionless"):
            raise ValueError(f"unknown bootstrap {self.bootstrap!r}")
        for val, opts in ((self.method, METHODS), (self.update, UPDATES),
                          (self.heuristic, HEURISTICS), (self.local, LOCALS)):
            if val not in opts:
                raise ValueError(f"{val!r} not one of {opts}")

    @classmethod
    def from_variation(cls, idx: int, **kw) -> "SolverConfig":
        m, u, h, l = decode_variation(idx)
        return cls(method=m, update=u, heuristic=h, local=l, **kw)

    @property
    def variation(self) -> int:
        return encode_variation(self.method, self.update, self.heuristic, self.local)

    @property
    def test_mode(self) -> bool:
        """Iteration budget only: the trace clock counts iterations, so runs repeat exactly."""
        return self.total_budget is None


@dataclass(frozen=True)
class TraceEvent:
    elapsed: float
    iteration: int
    upper: float
    lower: float
    source: str


@dataclass
class BoundsTrace:
    events: list = field(default_factory=list)

    def record(self, elapsed, iteration, upper, lower, source):
        self.events.append(TraceEvent(float(elapsed), int(iteration), float(upper),
                                      float(lower), source))

    def is_monotone(self) -> bool:
        ev = self.events
        for a, b in zip(ev, ev[1:]):
            if b.upper > a.upper or b.lower < a.lower or b.elapsed < a.elapsed:
                return False
        return all(e.lower <= e.upper + 1e-9 * (1 + abs(e.upper))
                   for e in ev if math.isfinite(e.upper) and math.isfinite(e.lower))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["elapsed_s", "iter", "h_upper", "h_lower", "source"])
        for e in self.events:
            w.writerow([f"{e.elapsed:.6f}", e.iteration, repr(e.upper), repr(e.lower), e.source])
        return out.getvalue()


@dataclass
class SolveResult:
    schedule: Schedule | None
    upper: float
    lower: float
    gap: float
    iterations: int
    trace: BoundsTrace
    variation: int
    reason: str
    elapsed: float
    best_mu: np.ndarray | None = None  # multipliers that gave the best lower bound

    def summary(self) -> dict:
        doc = {"variation": self.variation, "h_upper": _num(self.upper),
               "h_lower": _num(self.lower), "gap": _num(self.gap), "iterations": self.iterations,
               "termination": self.reason, "elapsed_s": round(self.elapsed, 6)}
        if self.schedule is not None:
            doc["switch_count"] = int(self.schedule.y.sum())
        return doc


def _num(v):
    return v if math.isfinite(v) else None


class InfeasibleInstanceError(RuntimeError):
    pass


def gap(upper: float | None, lower: float) -> float:
    """(upper - lower) / upper; 1 without an incumbent."""
    if upper is None or not math.isfinite(upper):
        return 1.0
    if upper <= 0:
        raise ValueError("gap undefined for a non-positive upper bound")
    return (upper - lower) / upper


@dataclass(frozen=True)
class PrimalDualIntegral:
    theta: float
    excluded: float  # time before the first finite pair of bounds, left out of theta


def primal_dual_integral(trace, t_lim: float) -> PrimalDualIntegral:
    """Integral of (upper - lower) over time, bounds held constant between events."""
    events = trace.events if isinstance(trace, BoundsTrace) else list(trace)
    theta = 0.0
    start = None
    for i, e in enumerate(events):
        if e.elapsed >= t_lim:
            break
        if not (math.isfinite(e.upper) and math.isfinite(e.lower)):
            continue
        if start is None:
            start = e.elapsed
        nxt = events[i + 1].elapsed if i + 1 < len(events) else t_lim
        theta += (e.upper - e.lower) * (min(nxt, t_lim) - e.elapsed)
    excluded = t_lim if start is None else start
    return PrimalDualIntegral(theta, excluded)


def price_bound(inst: Instance) -> float:
    """Any feasible schedule costs at most sum(required) max c plus the full switch allowance."""
    from .instance import augmentation_weight
    T = inst.num_periods
    return float(inst.required.sum() * inst.prices.max()
                 + augmentation_weight(inst) * inst.gamma * max(T - 1, 0) * inst.num_ports)


def _initial_multipliers(inst: Instance, cfg: SolverConfig) -> np.ndarray:
    ws = cfg.warm_start
    if isinstance(ws, dual.RegressionFit):
        fit = ws
    elif ws == "cold" or ws is None:
        fit = dual.COLD_START
    elif ws == "packaged":
        fit = dual.load_fit()
    else:
        fit = dual.load_fit(ws)
    return dual.warm_start(inst, fit)


def run(inst: Instance, cfg: SolverConfig) -> SolveResult:
    t0 = time.perf_counter()
    clock = (lambda it: float(it)) if cfg.test_mode else (lambda it: time.perf_counter() - t0)
    deadline = math.inf if cfg.total_budget is None else t0 + cfg.total_budget
    sigma = cfg.sigma or ls.default_sigma(inst.num_ports)
    trace = BoundsTrace()
    try:
        net = build_flow(inst, np.zeros(inst.x_shape), cfg.beta)
    except CapacityError as e:  # no schedule exists
        raise InfeasibleInstanceError(str(e)) from e

    mu = _initial_multipliers(inst, cfg)
    prior = price_bound(inst)
    best_mu = mu
    theta = cfg.theta0
    stall = 0
    h_up, h_lo = math.inf, -math.inf
    best = None
    dstate = dual.DirectionState()
    erg = ls.ErgodicState(a=cfg.a)
    reason = "iterations"
    it = 0
    pool = ThreadPoolExecutor(max_workers=2) if cfg.parallel else None

    def sub_budget():
        left = deadline - time.perf_counter()
        return max(1e-3, min(cfg.per_subproblem_budget, left))

    def offer(sched, source):
        nonlocal best, h_up
        if sched is None or not check_feasible(inst, sched).feasible:
            return False
        val = evaluate_objective(inst, sched).scalarized
        if val < h_up - 1e-9:
            best, h_up = sched, val
            trace.record(clock(it), it, h_up, h_lo, source)
            return True
        return False

    try:
        while True:
            if cfg.max_iterations is not None and it >= cfg.max_iterations:
                reason = "iterations"
                break
            if time.perf_counter() >= deadline:
                reason = "budget"
                break
            # line 4: both subproblems
            update_costs(net, mu)
            if pool is not None:
                fx = pool.submit(solve_network, net)
                ys = solve_ys_timeblock(inst, mu, cfg.beta, budget=sub_budget(), backend=cfg.backend)
                xs = fx.result()
            else:
                xs = solve_network(net)
                ys = solve_ys_timeblock(inst, mu, cfg.beta, budget=sub_budget(), backend=cfg.backend)
            if math.isnan(ys.value):  # no incumbent: zero is feasible for the (y, s) model
                ys = replace(ys, value=0.0, lower_bound=min(ys.lower_bound, 0.0))
            candidates = []
            # lines 5-7: local search on the incumbent
            if cfg.local == "Loc" and best is not None and it % (cfg.heu // 2) == 0:
                nb = ls.select_neighborhood(inst, erg.x_tilde, best.x, sigma)
                res = ls.local_search_step(inst, best.x, best.y, nb, sub_budget(), cfg.backend)
                if res.improved:
                    candidates.append(("local_search", res.schedule))
            # line 8: lower bound (a proven bound even if the (y, s) solve stopped early)
            h_mu = xs.value + ys.value
            bound = xs.value + ys.lower_bound
            if bound > h_lo + 1e-12:
                h_lo = min(bound, h_up)
                best_mu = mu
                stall = 0
                trace.record(clock(it), it, h_up, h_lo, "dual")
            else:
                stall += 1
            # lines 9-14: direction
            g = dual.subgradient(xs.x, ys.s)
            if cfg.method == "MDS":
                d, dstate = dual.mds_direction(g, dstate)
                if g.any() and not d.any():  # g exactly opposite d_prev cancels out: restart
                    d, dstate = g, dual.DirectionState(g)
            else:
                d = g
            # lines 15-19: primal heuristic
            if it % cfg.heu == 0:
                sched = _heuristic(inst, ys.y, cfg, sub_budget())
                if sched is not None:
                    candidates.insert(0, ("heuristic", sched))
            for src, sched in candidates:
                offer(sched, src)
            if not g.any():
                # x* = s*: the pair is feasible and its value matches the dual bound
                offer(Schedule(xs.x, derive_switches(inst, xs.x)), "dual")
                it += 1
                reason = "zero_direction"
                break
            if math.isfinite(h_up) and gap(h_up, h_lo) <= cfg.eps:
                it += 1
                reason = "gap"
                break
            # line 20: step length
            if stall >= cfg.theta_patience:
                theta = max(cfg.theta_floor, theta / 2)
                stall = 0
            target = h_up
            if not math.isfinite(target) and cfg.bootstrap == "price_bound":
                target = prior
            tau = dual.polyak_step(theta, target, h_mu, d)
            # lines 21-26: multipliers
            if cfg.update == "Reg":
                mu = dual.projected_update(mu, tau, g, inst)
            else:
                mu = np.where(inst.mask, dual.plain_update(mu, tau, d), 0.0)
            # lines 27-29: ergodic iterate
            if cfg.local == "Loc":
                erg = ls.update_ergodic(erg, xs.x)
            it += 1
    finally:
        if pool is not None:
            pool.shutdown()

    end = clock(it)
    trace.record(end, it, h_up, h_lo, "end")
    return SolveResult(best, h_up, h_lo, gap(h_up, h_lo), it, trace, cfg.variation, reason,
                       time.perf_counter() - t0, best_mu)


def _heuristic(inst: Instance, ybar, cfg: SolverConfig, budget: float):
    if cfg.fill_switches:
        ybar = fill_switch_capacity(inst, ybar)
    if cfg.heuristic == "var-fix-binP":
        res = solve_binpack(inst, ybar, budget, cfg.backend)
        return res.schedule if res.feasible else None
    try:
        res = solve_exact(inst, budget, cfg.backend, y_fixed=ybar, max_vars=cfg.var_fix_max_vars)
    except SizeGuardError:
        return None
    return res.schedule


# ---------------------------------------------------------------- variation grid

@dataclass
class GridRow:
    variation: int
    upper: float
    lower: float
    gap: float
    theta: float
    iterations: int
    reason: str
    upper_dev_pct: float = math.nan  # above the best upper bound, percent
    lower_dev_pct: float = math.nan  # below the best lower bound, percent


def run_variation_grid(inst: Instance, base: SolverConfig, variations, budget: float | None = None
                       ) -> list:
    variations = list(variations)
    if not variations:
        raise ValueError("no variations given")
    rows = []
    for v in variations:
        m, u, h, l = decode_variation(v)
        cfg = replace(base, method=m, update=u, heuristic=h, local=l)
        if budget is not None:
            cfg = replace(cfg, total_budget=budget)
        r = run(inst, cfg)
        t_lim = r.trace.events[-1].elapsed if r.trace.events else 0.0
        rows.append(GridRow(v, r.upper, r.lower, r.gap,
                            primal_dual_integral(r.trace, t_lim).theta, r.iterations, r.reason))
    ups = [r.upper for r in rows if math.isfinite(r.upper)]
    los = [r.lower for r in rows if math.isfinite(r.lower)]
    for r in rows:
        if ups and math.isfinite(r.upper):
            r.upper_dev_pct = 100.0 * (r.upper - min(ups)) / abs(min(ups))
        if los and math.isfinite(r.lower) and max(los) != 0:
            r.lower_dev_pct = 100.0 * (max(los) - r.lower) / abs(max(los))
    return rows


def grid_to_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["variation", "h_upper", "h_lower", "gap", "theta", "iterations", "termination",
                "upper_dev_pct", "lower_dev_pct"])
    for r in rows:
        w.writerow([r.variation, "NA" if not math.isfinite(r.upper) else f"{r.upper:.6f}",
                    f"{r.lower:.6f}", f"{r.gap:.6f}", f"{r.theta:.6f}", r.iterations, r.reason,
                    "NA" if math.isnan(r.upper_dev_pct) else f"{r.upper_dev_pct:.4f}",
                    "NA" if math.isnan(r.lower_dev_pct) else f"{r.lower_dev_pct:.4f}"])
    return out.getvalue()
