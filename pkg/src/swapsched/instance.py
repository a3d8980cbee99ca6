"""Problem data for battery swapping-station charging schedules.

An instance holds B batteries, N identical charging ports and T periods.
Batteries are grouped into demand windows; a battery in window l must be
charged for exactly p_j periods inside periods 1..n_l (the last window only
needs ceil(alpha * p_j) periods).  A schedule assigns batteries to ports per
period (x) and records port switch events (y) at period boundaries.

Internally all arrays are 0-based: x has shape (B, N, T) with x[j, k, t]
meaning period t+1, and y has shape (N, T-1) with y[k, t] meaning the
boundary between periods t+1 and t+2.  Reported violation indices are 1-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_flow

# tolerance used when rounding alpha * p up to whole periods
_CEIL_EPS = 1e-9


class InstanceError(ValueError):
    """Base class for instance problems."""


class InstanceParseError(InstanceError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InstanceValidationError(InstanceError):
    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Instance:
    num_batteries: int
    num_ports: int
    num_periods: int
    num_windows: int
    window_end: tuple[int, ...]  # 1-based last period of each window
    battery_window: tuple[int, ...]  # 1-based window id per battery
    demand_hours: tuple[int, ...]
    price: tuple[float, ...]
    alpha: float
    gamma: int

    def __post_init__(self):
        for name in ("window_end", "battery_window", "demand_hours", "price"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "price", tuple(float(c) for c in self.price))
        _validate(self)

    # convenience aliases
    @property
    def B(self) -> int:
        return self.num_batteries

    @property
    def N(self) -> int:
        return self.num_ports

    @property
    def T(self) -> int:
        return self.num_periods

    @property
    def L(self) -> int:
        return self.num_windows

    @cached_property
    def prices(self) -> np.ndarray:
        a = np.array(self.price, dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def horizon(self) -> np.ndarray:
        """Last admissible period n_l(j) for each battery."""
        ends = np.array(self.window_end, dtype=int)
        a = ends[np.array(self.battery_window, dtype=int) - 1]
        a.setflags(write=False)
        return a

    @cached_property
    def is_last(self) -> np.ndarray:
        a = np.array(self.battery_window, dtype=int) == self.num_windows
        a.setflags(write=False)
        return a

    @cached_property
    def required(self) -> np.ndarray:
        """Hours each battery must receive (ceil(alpha p) in the last window)."""
        a = np.array([ceil_alpha(self.alpha, p) if last else p
                      for p, last in zip(self.demand_hours, self.is_last)], dtype=int)
        a.setflags(write=False)
        return a

    @cached_property
    def period_mask(self) -> np.ndarray:
        """(B, T) bool, True where battery j may charge in period t."""
        a = np.arange(self.num_periods)[None, :] < self.horizon[:, None]
        a.setflags(write=False)
        return a

    @cached_property
    def mask(self) -> np.ndarray:
        """(B, N, T) bool window mask for x and mu."""
        a = np.broadcast_to(self.period_mask[:, None, :],
                            (self.num_batteries, self.num_ports, self.num_periods))
        return a

    @property
    def x_shape(self) -> tuple[int, int, int]:
        return (self.num_batteries, self.num_ports, self.num_periods)

    @property
    def y_shape(self) -> tuple[int, int]:
        return (self.num_ports, max(self.num_periods - 1, 0))

    def batteries_in(self, window: int) -> np.ndarray:
        return np.flatnonzero(np.array(self.battery_window) == window)


def ceil_alpha(alpha: float, p: int) -> int:
    return int(math.ceil(alpha * p - _CEIL_EPS))


def _validate(inst: Instance):
    B, N, T, L = inst.num_batteries, inst.num_ports, inst.num_periods, inst.num_windows
    if min(B, N, T, L) < 1:
        raise InstanceValidationError("dimensions", "B, N, T and L must be positive")
    if len(inst.window_end) != L:
        raise InstanceValidationError("window_end", f"expected {L} entries")
    if len(inst.battery_window) != B or len(inst.demand_hours) != B:
        raise InstanceValidationError("batteries", f"expected {B} battery entries")
    if len(inst.price) != T:
        raise InstanceValidationError("price", f"expected {T} prices")
    ends = inst.window_end
    if any(b <= a for a, b in zip(ends, ends[1:])) or ends[0] < 1:
        raise InstanceValidationError("window_end", "must be strictly increasing and positive")
    if ends[-1] != T:
        raise InstanceValidationError("window_end", f"last window must end at T={T}, got {ends[-1]}")
    if any(not 1 <= w <= L for w in inst.battery_window):
        raise InstanceValidationError("battery_window", "window id out of range")
    if any(p < 1 for p in inst.demand_hours):
        raise InstanceValidationError("demand_hours", "p_j must be >= 1")
    if not all(math.isfinite(c) and c > 0 for c in inst.price):
        raise InstanceValidationError("price", "prices must be positive and finite")
    if not 0 < inst.alpha <= 1:
        raise InstanceValidationError("alpha", "alpha must lie in (0, 1]")
    if inst.gamma < 0:
        raise InstanceValidationError("gamma", "gamma must be >= 0")
    for j, (w, p) in enumerate(zip(inst.battery_window, inst.demand_hours)):
        n = ends[w - 1]
        need = ceil_alpha(inst.alpha, p) if w == L else p
        if need > n:
            raise InstanceValidationError(
                "demand_fits_window", f"battery {j + 1} needs {need} periods but window ends at {n}")


@dataclass(frozen=True)
class Schedule:
    x: np.ndarray  # (B, N, T) 0/1
    y: np.ndarray  # (N, T-1) 0/1

    def __post_init__(self):
        x = np.array(self.x, dtype=np.int8)
        y = np.array(self.y, dtype=np.int8)
        if x.ndim != 3 or y.ndim != 2:
            raise DimensionError("x must be 3-d and y 2-d")
        if not (np.isin(x, (0, 1)).all() and np.isin(y, (0, 1)).all()):
            raise ValueError("schedule entries must be 0/1")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class ObjectiveValue:
    electricity_cost: float
    switch_count: int
    scalarized: float


@dataclass(frozen=True)
class FeasibilityReport:
    violations: list = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations


def augmentation_weight(inst_or_price, num_periods=None, gamma=None) -> float:
    """w = min c / ((T-1) gamma + 1), so the whole switch term stays below min c."""
    if isinstance(inst_or_price, Instance):
        c, T, g = inst_or_price.price, inst_or_price.num_periods, inst_or_price.gamma
    else:
        c, T, g = inst_or_price, num_periods, gamma
    if len(c) == 0:
        raise InstanceValidationError("price", "empty price vector")
    return min(c) / ((T - 1) * g + 1)


def _check_shapes(inst: Instance, sched: Schedule):
    if sched.x.shape != inst.x_shape or sched.y.shape != inst.y_shape:
        raise DimensionError(
            f"schedule shapes {sched.x.shape}, {sched.y.shape} do not match "
            f"instance {inst.x_shape}, {inst.y_shape}")
    if (sched.x & ~inst.mask).any():
        raise DimensionError("x has entries outside battery windows")


def evaluate_objective(inst: Instance, sched: Schedule) -> ObjectiveValue:
    _check_shapes(inst, sched)
    cost = float(np.einsum("jkt,t->", sched.x.astype(float), inst.prices))
    n_sw = int(sched.y.sum())
    return ObjectiveValue(cost, n_sw, cost + augmentation_weight(inst) * n_sw)


def derive_switches(inst: Instance, x: np.ndarray) -> np.ndarray:
    """Minimal y: a switch wherever the battery set on a port changes."""
    x = np.asarray(x)
    if x.shape != inst.x_shape:
        raise DimensionError(f"x shape {x.shape} != {inst.x_shape}")
    changed = (x[:, :, 1:] != x[:, :, :-1]).any(axis=0)
    return changed.astype(np.int8)


def schedule_from_x(inst: Instance, x: np.ndarray) -> Schedule:
    return Schedule(x, derive_switches(inst, x))


def check_feasible(inst: Instance, sched: Schedule) -> FeasibilityReport:
    _check_shapes(inst, sched)
    x = sched.x.astype(int)
    y = sched.y.astype(int)
    out = []
    hours = x.sum(axis=(1, 2))
    for j in range(inst.num_batteries):
        if inst.is_last[j] and hours[j] < inst.required[j]:
            out.append(("2b", (j + 1,)))
    for j in range(inst.num_batteries):
        if not inst.is_last[j] and hours[j] != inst.required[j]:
            out.append(("2c", (j + 1,)))
    for k, t in np.argwhere(x.sum(axis=0) > 1):
        out.append(("2d", (int(k) + 1, int(t) + 1)))
    for j, t in np.argwhere(x.sum(axis=1) > 1):
        out.append(("2e", (int(j) + 1, int(t) + 1)))
    occ = x.sum(axis=0)  # (N, T)
    for k, t in np.argwhere(occ[:, 1:] - occ[:, :-1] > y):
        out.append(("2f", (int(k) + 1, int(t) + 1)))
    for j, k, t in np.argwhere(x[:, :, :-1] - x[:, :, 1:] > y[None]):
        out.append(("2g", (int(j) + 1, int(k) + 1, int(t) + 1)))
    for t in np.flatnonzero(y.sum(axis=0) > inst.gamma):
        out.append(("2h", (int(t) + 1,)))
    return FeasibilityReport(out)


# ---------------------------------------------------------------- I/O

_KEYS = ("B", "N", "T", "L", "window_end", "battery_window", "p", "c", "alpha", "gamma")


def _int_field(doc, key, minimum=None):
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise InstanceParseError(f"$.{key}", "expected an integer")
    if minimum is not None and v < minimum:
        raise InstanceParseError(f"$.{key}", f"must be >= {minimum}")
    return v


def _int_list(doc, key):
    v = doc[key]
    if not isinstance(v, list):
        raise InstanceParseError(f"$.{key}", "expected a list")
    for i, e in enumerate(v):
        if isinstance(e, bool) or not isinstance(e, int):
            raise InstanceParseError(f"$.{key}[{i}]", "expected an integer")
    return v


def load_instance(text: str) -> Instance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceParseError("$", f"not valid JSON ({e.msg})") from e
    if not isinstance(doc, dict):
        raise InstanceParseError("$", "expected an object")
    for key in _KEYS:
        if key not in doc:
            raise InstanceParseError(f"$.{key}", "missing key")
    extra = set(doc) - set(_KEYS)
    if extra:
        raise InstanceParseError(f"$.{sorted(extra)[0]}", "unknown key")
    B = _int_field(doc, "B", 1)
    N = _int_field(doc, "N", 1)
    T = _int_field(doc, "T", 1)
    L = _int_field(doc, "L", 1)
    gamma = _int_field(doc, "gamma", 0)
    ends = _int_list(doc, "window_end")
    windows = _int_list(doc, "battery_window")
    p = _int_list(doc, "p")
    for i, w in enumerate(windows):
        if not 1 <= w <= L:
            raise InstanceParseError(f"$.battery_window[{i}]", f"window {w} not in 1..{L}")
    c = doc["c"]
    if not isinstance(c, list):
        raise InstanceParseError("$.c", "expected a list")
    for i, e in enumerate(c):
        if isinstance(e, bool) or not isinstance(e, (int, float)):
            raise InstanceParseError(f"$.c[{i}]", "expected a number")
    alpha = doc["alpha"]
    if isinstance(alpha, bool) or not isinstance(alpha, (int, float)):
        raise InstanceParseError("$.alpha", "expected a number")
    return Instance(B, N, T, L, tuple(ends), tuple(windows), tuple(p),
                    tuple(float(e) for e in c), float(alpha), gamma)


def save_instance(inst: Instance) -> str:
    doc = {
        "B": inst.num_batteries, "N": inst.num_ports, "T": inst.num_periods,
        "L": inst.num_windows, "window_end": list(inst.window_end),
        "battery_window": list(inst.battery_window), "p": list(inst.demand_hours),
        "c": list(inst.price), "alpha": inst.alpha, "gamma": inst.gamma,
    }
    return json.dumps(doc, indent=1)


# ---------------------------------------------------------------- generator

# Hourly price shapes (ore per 100 Wh) for a 24-period day.  They are shipped
# defaults, not measured tariffs.
PRICE_PROFILES = {
    # morning peak at hour 8, evening peak at hour 20
    "base": (7.5, 7.2, 7.0, 7.0, 7.3, 8.5, 11.0, 13.8, 12.5, 10.8, 10.0, 9.5,
             9.0, 9.2, 9.6, 10.4, 11.8, 13.0, 14.2, 15.0, 13.6, 11.0, 9.0, 8.0),
    # same morning, afternoon peak stretched from hour 15 to 21
    "extended": (7.5, 7.2, 7.0, 7.0, 7.3, 8.5, 11.0, 13.8, 12.5, 10.8, 10.0, 9.5,
                 9.0, 9.8, 11.5, 13.6, 14.4, 14.8, 15.0, 15.0, 14.6, 12.0, 9.5, 8.0),
    # flat day/night tariff
    "plan1": (11.0,) * 6 + (12.2,) * 16 + (11.0,) * 2,
    # smoothed base profile with a small premium
    "plan2": (9.2, 8.9, 8.7, 8.8, 9.3, 10.1, 11.0, 11.6, 11.9, 11.6, 11.1, 10.5,
              10.2, 10.2, 10.5, 11.2, 12.1, 12.9, 13.4, 13.5, 12.9, 11.8, 10.6, 9.7),
}

DEFAULT_ALPHA = 0.8


def price_profile(profile, T: int) -> tuple[float, ...]:
    """Resample a named 24-hour profile to T periods, or pass a vector through."""
    if isinstance(profile, str):
        if profile not in PRICE_PROFILES:
            raise ValueError(f"unknown price profile {profile!r}")
        day = PRICE_PROFILES[profile]
        hours = [min(23, int((t + 0.5) * 24 / T)) for t in range(T)]
        return tuple(float(day[h]) for h in hours)
    vec = tuple(float(c) for c in profile)
    if len(vec) != T:
        raise ValueError(f"price vector has {len(vec)} entries, expected {T}")
    return vec


def default_window_ends(T: int, L: int) -> tuple[int, ...]:
    if L == 1:
        return (T,)
    if L == 3:
        ends = (math.ceil(14 * T / 24), math.ceil(19 * T / 24), T)
    else:
        ends = tuple(math.ceil(T * (l + 1) / L) for l in range(L))
    if any(b <= a for a, b in zip(ends, ends[1:])):
        raise ValueError(f"T={T} too short for {L} distinct windows")
    return ends


def window_split(B: int, L: int) -> list[int]:
    """Battery counts per window: 40/35/25 for three windows, equal otherwise."""
    shares = [0.40, 0.35, 0.25] if L == 3 else [1.0 / L] * L
    raw = [B * s for s in shares]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(L), key=lambda l: (-(raw[l] - counts[l]), l))
    for l in order[:B - sum(counts)]:
        counts[l] += 1
    # every window gets at least one battery when possible
    for l in range(L):
        if counts[l] == 0:
            donor = max(range(L), key=lambda m: counts[m])
            counts[donor] -= 1
            counts[l] += 1
    return counts


def demand_fits(ends, windows, need, N) -> bool:
    """Whether every battery can get its hours on distinct periods of its window.

    Bipartite max flow: battery (capacity need_j) -> each admissible period
    (capacity 1) -> sink (capacity N per period).
    """
    B, T = len(windows), ends[-1]
    src, snk = 0, 1 + B + T
    rows, cols, caps = [], [], []
    for j, (w, r) in enumerate(zip(windows, need)):
        rows.append(src)
        cols.append(1 + j)
        caps.append(r)
        for t in range(ends[w - 1]):
            rows.append(1 + j)
            cols.append(1 + B + t)
            caps.append(1)
    for t in range(T):
        rows.append(1 + B + t)
        cols.append(snk)
        caps.append(N)
    g = sp.csr_matrix((np.array(caps, dtype=np.int32), (rows, cols)), shape=(snk + 1, snk + 1))
    return maximum_flow(g, src, snk).flow_value == sum(need)


def generate_instance(B: int, N: int, gamma: int, T: int = 24, L: int = 3,
                      price_profile_name="base", seed: int = 0,
                      alpha: float = DEFAULT_ALPHA, max_hours: int = 8) -> Instance:
    if B < L or N < 1 or T < 1:
        raise ValueError("need B >= L, N >= 1, T >= 1")
    rng = np.random.default_rng(seed)
    ends = default_window_ends(T, L)
    counts = window_split(B, L)
    windows = [l + 1 for l, n in enumerate(counts) for _ in range(n)]
    prices = price_profile(price_profile_name, T)
    for _ in range(100):
        p = [int(rng.integers(1, min(max_hours, ends[w - 1]) + 1)) for w in windows]
        need = [ceil_alpha(alpha, pj) if w == L else pj for w, pj in zip(windows, p)]
        if demand_fits(ends, windows, need, N):
            return Instance(B, N, T, L, ends, tuple(windows), tuple(p), prices, alpha, gamma)
    raise InstanceValidationError("capacity", "no feasible demand draw in 100 attempts")
