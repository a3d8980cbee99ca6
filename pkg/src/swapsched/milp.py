"""Binary linear programs and a small best-first branch and bound.

Programs are built row by row with ProgramBuilder and frozen into a
BinaryProgram (sparse matrix with two-sided row bounds).  `solve` runs the
bundled branch and bound, which uses HiGHS (through scipy.optimize.linprog)
only for the LP relaxations.  External MILP backends can be plugged in with
`register_backend`; `HighsBackend` wraps scipy.optimize.milp.
"""

from __future__ import annotations

import heapq
import itertools
import math
import os
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

INT_TOL = 1e-6
FEAS_TOL = 1e-9
MAX_OPEN_NODES = 10**6

OPTIMAL = "optimal"
FEASIBLE_TIMEOUT = "feasible_timeout"
INFEASIBLE = "infeasible"
NO_SOLUTION_TIMEOUT = "no_solution_timeout"


class ProgramBuildError(ValueError):
    pass


class BackendUnavailableError(RuntimeError):
    pass


@dataclass(frozen=True)
class BinaryProgram:
    names: tuple
    c: np.ndarray
    A: sp.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    var_lo: np.ndarray  # 0/1 bounds, lets callers fix variables
    var_hi: np.ndarray
    warm_start: np.ndarray | None = None

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    def is_feasible(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != self.c.shape or np.any((x < self.var_lo) | (x > self.var_hi)):
            return False
        ax = self.A @ x
        scale = 1.0 + np.abs(ax)
        return bool(np.all(ax >= self.row_lo - FEAS_TOL * scale)
                    and np.all(ax <= self.row_hi + FEAS_TOL * scale))

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ np.asarray(x, dtype=float))


@dataclass
class SolveOutcome:
    status: str
    assignment: np.ndarray | None
    objective: float | None
    lower_bound: float
    elapsed: float
    nodes: int = 0


class ProgramBuilder:
    def __init__(self):
        self._names = []
        self._cost = []
        self._lo = []
        self._hi = []
        self._rows, self._cols, self._vals = [], [], []
        self._rlo, self._rhi = [], []
        self._warm = None

    @property
    def num_vars(self) -> int:
        return len(self._names)

    def add_var(self, name, cost: float = 0.0, lo: int = 0, hi: int = 1) -> int:
        self._names.append(name)
        self._cost.append(float(cost))
        self._lo.append(lo)
        self._hi.append(hi)
        return len(self._names) - 1

    def add_vars(self, names, costs) -> np.ndarray:
        start = len(self._names)
        names = list(names)
        costs = np.broadcast_to(np.asarray(costs, dtype=float), (len(names),))
        self._names.extend(names)
        self._cost.extend(costs.tolist())
        self._lo.extend([0] * len(names))
        self._hi.extend([1] * len(names))
        return np.arange(start, start + len(names))

    def add_row(self, idx, coef, lo=-math.inf, hi=math.inf) -> int:
        idx = np.asarray(idx, dtype=int).ravel()
        coef = np.broadcast_to(np.asarray(coef, dtype=float), idx.shape)
        r = len(self._rlo)
        self._rows.append(np.full(len(idx), r))
        self._cols.append(idx)
        self._vals.append(np.array(coef))
        self._rlo.append(float(lo))
        self._rhi.append(float(hi))
        return r

    def add_constraint(self, idx, coef, sense: str, rhs: float) -> int:
        if sense == "<=":
            return self.add_row(idx, coef, hi=rhs)
        if sense == ">=":
            return self.add_row(idx, coef, lo=rhs)
        if sense == "==":
            return self.add_row(idx, coef, lo=rhs, hi=rhs)
        raise ProgramBuildError(f"unknown comparator {sense!r}")

    def fix(self, var: int, value: int):
        self._lo[var] = self._hi[var] = int(value)

    def set_warm_start(self, x):
        self._warm = np.asarray(x, dtype=float)

    def build(self) -> BinaryProgram:
        n = len(self._names)
        m = len(self._rlo)
        if m:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, dtype=int)
            vals = np.zeros(0)
        if len(cols) and (cols.min() < 0 or cols.max() >= n):
            raise ProgramBuildError("constraint references an undeclared variable")
        c = np.array(self._cost, dtype=float)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(vals))):
            raise ProgramBuildError("non-finite coefficient")
        rlo, rhi = np.array(self._rlo), np.array(self._rhi)
        if np.any(rlo > rhi):
            raise ProgramBuildError("row with lower bound above upper bound")
        A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
        warm = self._warm
        if warm is not None and warm.shape != (n,):
            raise ProgramBuildError("warm start has wrong length")
        return BinaryProgram(tuple(self._names), c, A, rlo, rhi,
                             np.array(self._lo, dtype=float), np.array(self._hi, dtype=float), warm)


# ---------------------------------------------------------------- LP relaxation

class _Relaxation:
    """Fixed linprog data; each node only changes variable bounds."""

    def __init__(self, prog: BinaryProgram):
        A = prog.A
        eq = np.isfinite(prog.row_lo) & (prog.row_lo == prog.row_hi)
        up = np.isfinite(prog.row_hi) & ~eq
        dn = np.isfinite(prog.row_lo) & ~eq
        parts, rhs = [], []
        if up.any():
            parts.append(A[up])
            rhs.append(prog.row_hi[up])
        if dn.any():
            parts.append(-A[dn])
            rhs.append(-prog.row_lo[dn])
        self.A_ub = sp.vstack(parts).tocsr() if parts else None
        self.b_ub = np.concatenate(rhs) if rhs else None
        self.A_eq = A[eq] if eq.any() else None
        self.b_eq = prog.row_lo[eq] if eq.any() else None
        self.c = prog.c

    def solve(self, lo, hi, time_limit=None):
        """Return (status, value, x); status in {'ok', 'infeasible', 'error'}."""
        opts = {"presolve": True}
        if time_limit is not None:
            opts["time_limit"] = max(float(time_limit), 1e-3)
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=np.column_stack([lo, hi]), method="highs", options=opts)
        if res.status == 0:
            return "ok", float(res.fun), res.x
        if res.status == 2:
            return "infeasible", math.inf, None
        return "error", -math.inf, None


def solve_lp(prog: BinaryProgram) -> float:
    """Optimal value of the continuous relaxation (inf if infeasible)."""
    if prog.num_vars == 0:
        return 0.0 if _empty_feasible(prog) else math.inf
    status, val, _ = _Relaxation(prog).solve(prog.var_lo, prog.var_hi)
    if status == "error":
        raise RuntimeError("LP relaxation failed")
    return val


def _empty_feasible(prog):
    return bool(np.all(prog.row_lo <= FEAS_TOL) and np.all(prog.row_hi >= -FEAS_TOL))


# ---------------------------------------------------------------- branch and bound

def _dive(relax, lo, hi, x, deadline):
    """LP diving: fix the largest fractional variable to 1 (or to 0 if that fails), resolve."""
    lo, hi = lo.copy(), hi.copy()
    for _ in range(len(x)):
        frac = np.abs(x - np.round(x))
        cand = np.flatnonzero((frac > INT_TOL) & (lo != hi))
        if len(cand) == 0:
            return x
        v = cand[np.argmax(x[cand])]
        x2 = None
        for val in (1.0, 0.0):
            if time.perf_counter() >= deadline:
                return None
            lo[v] = hi[v] = val
            status, _, x2 = relax.solve(lo, hi, deadline - time.perf_counter())
            if status == "ok":
                break
        else:
            return None
        x = x2
    return x


@dataclass
class _Node:
    bound: float
    depth: int
    fixings: tuple  # ((var, value), ...) accumulated from the root
    x: np.ndarray


def _bounds(prog, fixings):
    lo = prog.var_lo.copy()
    hi = prog.var_hi.copy()
    for v, val in fixings:
        lo[v] = hi[v] = val
    return lo, hi


def solve(prog: BinaryProgram, budget: float = 50.0, target_gap: float = 0.0,
          max_open: int = MAX_OPEN_NODES) -> SolveOutcome:
    """Best-first branch and bound; branches on the lowest-index fractional variable."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    t0 = time.perf_counter()
    deadline = t0 + budget
    n = prog.num_vars
    if n == 0:
        ok = _empty_feasible(prog)
        return SolveOutcome(OPTIMAL if ok else INFEASIBLE, np.zeros(0) if ok else None,
                            0.0 if ok else None, 0.0 if ok else math.inf, 0.0)

    relax = _Relaxation(prog)
    best_x, best_val = None, math.inf

    def offer(x):
        nonlocal best_x, best_val
        x = np.round(x) + 0.0
        if prog.is_feasible(x):
            val = prog.objective(x)
            if val < best_val - 1e-12:
                best_x, best_val = x, val

    if prog.warm_start is not None:
        offer(prog.warm_start)

    def tol(v):
        return FEAS_TOL * (1.0 + abs(v))

    def evaluate(fixings, parent_bound):
        lo, hi = _bounds(prog, fixings)
        status, val, x = relax.solve(lo, hi, deadline - time.perf_counter())
        if status == "infeasible":
            return None
        if status == "error":
            # keep the node with the parent bound and branch on a free variable
            return parent_bound, None
        return val, x

    counter = itertools.count()
    # plunge: depth-first list used until the first incumbent exists
    heap, stack, plunge = [], [], []
    nodes = 0
    root = evaluate((), -math.inf)
    nodes += 1
    if root is None:
        return SolveOutcome(INFEASIBLE, None, None, math.inf, time.perf_counter() - t0, nodes)
    heapq.heappush(heap, (root[0], next(counter), _Node(root[0], 0, (), root[1])))
    if root[1] is not None and best_x is None:
        dived = _dive(relax, prog.var_lo, prog.var_hi, root[1], deadline)
        if dived is not None:
            offer(dived)

    timed_out = False
    while heap or stack or plunge:
        if best_x is not None and plunge:
            for nd in plunge:
                heapq.heappush(heap, (nd.bound, next(counter), nd))
            plunge = []
        open_lb = heap[0][0] if heap else math.inf
        if stack or plunge:
            open_lb = min([open_lb] + [s.bound for s in stack] + [s.bound for s in plunge])
        if best_x is not None and best_val - open_lb <= max(tol(best_val), target_gap * abs(best_val)):
            break
        if time.perf_counter() >= deadline:
            timed_out = True
            break
        if plunge:
            node = plunge.pop()
        elif stack:
            node = stack.pop()
        else:
            node = heapq.heappop(heap)[2]
        if node.bound >= best_val - tol(best_val):
            continue
        if node.x is None:
            fixed = {v for v, _ in node.fixings}
            free = [v for v in range(n) if v not in fixed and prog.var_lo[v] != prog.var_hi[v]]
            if not free:
                continue
            branch = free[0]
        else:
            frac = np.flatnonzero(np.abs(node.x - np.round(node.x)) > INT_TOL)
            if len(frac) == 0:
                offer(node.x)
                continue
            offer(node.x)  # rounding heuristic
            branch = int(frac[0])
        for val in (0, 1):
            fix = node.fixings + ((branch, val),)
            child = evaluate(fix, node.bound)
            nodes += 1
            if child is None:
                continue
            cb, cx = child
            if cb >= best_val - tol(best_val):
                continue
            cnode = _Node(cb, node.depth + 1, fix, cx)
            if best_x is None:
                plunge.append(cnode)  # the 1-branch is popped first
            elif stack or len(heap) >= max_open:
                stack.append(cnode)  # depth-first once the heap is full
            else:
                heapq.heappush(heap, (cb, next(counter), cnode))

    elapsed = time.perf_counter() - t0
    open_bounds = [h[0] for h in heap] + [s.bound for s in stack + plunge]
    if best_x is None:
        if timed_out:
            lb = min(open_bounds) if open_bounds else -math.inf
            return SolveOutcome(NO_SOLUTION_TIMEOUT, None, None, lb, elapsed, nodes)
        return SolveOutcome(INFEASIBLE, None, None, math.inf, elapsed, nodes)
    if not open_bounds or min(open_bounds) >= best_val - tol(best_val):
        return SolveOutcome(OPTIMAL, best_x, best_val, best_val, elapsed, nodes)
    lb = min(min(open_bounds), best_val)
    return SolveOutcome(FEASIBLE_TIMEOUT, best_x, best_val, lb, elapsed, nodes)


# ---------------------------------------------------------------- backends

_BACKENDS: dict = {}


def register_backend(adapter, name: str | None = None):
    """Adapter: object with solve(prog, budget, target_gap) -> SolveOutcome."""
    _BACKENDS[name or getattr(adapter, "name", type(adapter).__name__)] = adapter


def unregister_backend(name: str):
    _BACKENDS.pop(name, None)


def available_backends() -> list:
    return sorted(_BACKENDS)


def solve_via_backend(prog: BinaryProgram, budget: float = 50.0, target_gap: float = 0.0,
                      name: str | None = None) -> SolveOutcome:
    name = name or os.environ.get("SWAPSCHED_BACKEND")
    if not _BACKENDS:
        raise BackendUnavailableError("no MILP backend registered")
    if name is None:
        name = sorted(_BACKENDS)[0]
    if name not in _BACKENDS:
        raise BackendUnavailableError(f"backend {name!r} not registered")
    return _BACKENDS[name].solve(prog, budget, target_gap)


class HighsBackend:
    """scipy.optimize.milp (HiGHS branch and cut)."""

    name = "highs"

    def solve(self, prog: BinaryProgram, budget: float = 50.0, target_gap: float = 0.0):
        from scipy.optimize import Bounds, LinearConstraint, milp

        t0 = time.perf_counter()
        n = prog.num_vars
        if n == 0:
            return solve(prog, budget)
        cons = [LinearConstraint(prog.A, prog.row_lo, prog.row_hi)] if prog.num_rows else []
        res = milp(prog.c, constraints=cons, integrality=np.ones(n),
                   bounds=Bounds(prog.var_lo, prog.var_hi),
                   options={"time_limit": float(budget), "mip_rel_gap": float(target_gap)})
        elapsed = time.perf_counter() - t0
        lb = getattr(res, "mip_dual_bound", None)
        if res.status == 2:
            return SolveOutcome(INFEASIBLE, None, None, math.inf, elapsed)
        if res.x is None:
            return SolveOutcome(NO_SOLUTION_TIMEOUT, None, None,
                                -math.inf if lb is None else float(lb), elapsed)
        x = np.round(res.x) + 0.0
        val = prog.objective(x)
        if lb is None or not np.isfinite(lb):
            lb = val if res.status == 0 else -math.inf
        lb = min(float(lb), val)
        if res.status == 0 and target_gap == 0.0:
            return SolveOutcome(OPTIMAL, x, val, val, elapsed)
        if res.status == 0 and val - lb <= FEAS_TOL * (1 + abs(val)):
            return SolveOutcome(OPTIMAL, x, val, val, elapsed)
        return SolveOutcome(FEASIBLE_TIMEOUT, x, val, lb, elapsed)


def solve_auto(prog: BinaryProgram, budget: float = 50.0, target_gap: float = 0.0,
               backend: str | None = None) -> SolveOutcome:
    """Use the named (or env-selected) backend if given, else the bundled solver."""
    name = backend or os.environ.get("SWAPSCHED_BACKEND")
    if name and name != "bundled":
        if name == "highs" and "highs" not in _BACKENDS:
            register_backend(HighsBackend())
        return solve_via_backend(prog, budget, target_gap, name)
    return solve(prog, budget, target_gap)


# ---------------------------------------------------------------- LP format

def _lp_name(name) -> str:
    if isinstance(name, tuple):
        name = "_".join(str(p) for p in name)
    s = str(name)
    return "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in s)


def _lp_expr(coefs, names) -> str:
    terms = []
    for a, nm in zip(coefs, names):
        if a == 0:
            continue
        sign = "-" if a < 0 else "+"
        terms.append(f"{sign} {abs(a):.12g} {nm}")
    return " ".join(terms) if terms else "0"


def to_lp_format(prog: BinaryProgram) -> str:
    names = [f"v{i}_{_lp_name(nm)}" for i, nm in enumerate(prog.names)]
    lines = ["Minimize", " obj: " + _lp_expr(prog.c, names), "Subject To"]
    A = prog.A.tocsr()
    for r in range(prog.num_rows):
        lo_, hi_ = A.indptr[r], A.indptr[r + 1]
        expr = _lp_expr(A.data[lo_:hi_], [names[i] for i in A.indices[lo_:hi_]])
        lo, hi = prog.row_lo[r], prog.row_hi[r]
        if lo == hi:
            lines.append(f" r{r}: {expr} = {lo:.12g}")
            continue
        if np.isfinite(hi):
            lines.append(f" r{r}_u: {expr} <= {hi:.12g}")
        if np.isfinite(lo):
            lines.append(f" r{r}_l: {expr} >= {lo:.12g}")
    fixed = [i for i in range(prog.num_vars) if prog.var_lo[i] == prog.var_hi[i]]
    if fixed:
        lines.append("Bounds")
        lines += [f" {names[i]} = {prog.var_lo[i]:.0f}" for i in fixed]
    lines.append("Binary")
    lines += [" " + nm for nm in names]
    lines.append("End")
    return "\n".join(lines) + "\n"
