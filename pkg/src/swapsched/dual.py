"""Multiplier updates: subgradients, deflected directions, Polyak steps, price regression."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .instance import Instance

STEP_FLOOR = 1e-8


class ZeroDirectionError(ArithmeticError):
    """The direction vanished: x and s agree, the copy constraint holds."""


def subgradient(x_star, s_star) -> np.ndarray:
    x_star, s_star = np.asarray(x_star, dtype=float), np.asarray(s_star, dtype=float)
    if x_star.shape != s_star.shape:
        raise ValueError("shape mismatch")
    return x_star - s_star


@dataclass(frozen=True)
class DirectionState:
    d_prev: np.ndarray | None = None


def mds_direction(g, state: DirectionState = DirectionState()):
    """Deflected direction d = g + Y d_prev, Y blending the MGT and ADS weights."""
    g = np.asarray(g, dtype=float)
    d_prev = state.d_prev
    ng = float(np.linalg.norm(g))
    nd = 0.0 if d_prev is None else float(np.linalg.norm(d_prev))
    if d_prev is None or nd == 0.0 or ng == 0.0:
        d = g.copy()
        return d, DirectionState(d)
    dot = float(np.vdot(g, d_prev))
    alpha = max(0.0, -dot / (ng * nd))
    zeta = 1.0 / (2.0 - alpha)
    y_mgt = max(0.0, zeta * dot / nd**2)
    y_ads = ng / nd
    y_mds = (1.0 - alpha) * y_mgt + alpha * y_ads
    d = g + y_mds * d_prev
    return d, DirectionState(d)


def polyak_step(theta: float, h_bar: float, h_mu: float, d, floor: float = STEP_FLOOR) -> float:
    """tau = theta (h_bar - h_mu) / |d|^2, floored; theta / |d|^2 while h_bar is unknown."""
    nd2 = float(np.vdot(d, d))
    if nd2 == 0.0:
        raise ZeroDirectionError("zero direction")
    if not math.isfinite(h_bar):
        return theta / nd2
    return max(theta * (h_bar - h_mu) / nd2, floor)


# ---------------------------------------------------------------- price regression

@dataclass(frozen=True)
class RegressionFit:
    slope: tuple
    intercept: tuple
    r_squared: tuple
    provenance: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.slope)

    def window(self, l: int):
        """Coefficients for 1-based window l; windows past the fitted ones reuse the last."""
        i = min(l, len(self.slope)) - 1
        return self.slope[i], self.intercept[i]

    def to_json(self) -> str:
        doc = {"windows": {str(i + 1): {"slope": s, "intercept": b, "r_squared": r}
                           for i, (s, b, r) in enumerate(zip(self.slope, self.intercept,
                                                             self.r_squared))},
               "provenance": self.provenance}
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RegressionFit":
        doc = json.loads(text)
        ws = doc["windows"]
        keys = sorted(ws, key=int)
        return cls(tuple(float(ws[k]["slope"]) for k in keys),
                   tuple(float(ws[k]["intercept"]) for k in keys),
                   tuple(float(ws[k]["r_squared"]) for k in keys),
                   doc.get("provenance", {}))


COLD_START = RegressionFit((0.0,), (0.0,), (0.0,))


def _ols(c, m):
    if len(c) == 0:
        return 0.0, 0.0, 0.0
    cm, mm = c.mean(), m.mean()
    sxx = float(np.sum((c - cm) ** 2))
    if sxx <= 1e-12 * max(1.0, float(np.sum(c**2))):
        return 0.0, float(mm), 0.0
    slope = float(np.sum((c - cm) * (m - mm)) / sxx)
    icpt = float(mm - slope * cm)
    sst = float(np.sum((m - mm) ** 2))
    if sst == 0.0:
        return slope, icpt, 0.0
    sse = float(np.sum((m - slope * c - icpt) ** 2))
    return slope, icpt, min(1.0, max(0.0, 1.0 - sse / sst))


def _window_points(mu, inst: Instance, l: int):
    js = inst.batteries_in(l)
    n = inst.window_end[l - 1]
    m = np.asarray(mu, dtype=float)[js][:, :, :n]
    c = np.broadcast_to(inst.prices[:n], m.shape)
    return c.ravel(), m.ravel()


def fit_regression(mu, inst: Instance) -> RegressionFit:
    """Per-window least squares of mu[j,k,t] on c_t over the window's batteries and periods."""
    return fit_regression_pooled([(mu, inst)])


def fit_regression_pooled(pairs) -> RegressionFit:
    """One fit per window over the points of several (mu, instance) pairs."""
    pairs = list(pairs)
    L = max(inst.num_windows for _, inst in pairs)
    slopes, icpts, r2 = [], [], []
    for l in range(1, L + 1):
        pts = [_window_points(mu, inst, l) for mu, inst in pairs if l <= inst.num_windows]
        c = np.concatenate([p[0] for p in pts])
        m = np.concatenate([p[1] for p in pts])
        s, b, r = _ols(c, m)
        slopes.append(s)
        icpts.append(b)
        r2.append(r)
    return RegressionFit(tuple(slopes), tuple(icpts), tuple(r2))


def warm_start(inst: Instance, fit: RegressionFit) -> np.ndarray:
    """mu0[j,k,t] = slope_l c_t + intercept_l for battery j in window l (zero outside windows)."""
    coef = np.array([fit.window(l) for l in inst.battery_window])  # (B, 2)
    mu = coef[:, 0, None] * inst.prices[None, :] + coef[:, 1, None]
    mu = np.broadcast_to(mu[:, None, :], inst.x_shape)
    return np.where(inst.mask, mu, 0.0)


def plain_update(mu, tau: float, d) -> np.ndarray:
    return np.asarray(mu, dtype=float) + tau * np.asarray(d, dtype=float)


def projected_update(mu, tau: float, g, inst: Instance) -> np.ndarray:
    """Step along the raw subgradient, then replace mu by its per-window price fit."""
    half = plain_update(mu, tau, g)
    return warm_start(inst, fit_regression(half, inst))


def load_fit(path=None) -> RegressionFit:
    """Read a fit file; without a path, the packaged default."""
    if path is None:
        text = resources.files("swapsched").joinpath("data/warm_start.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return RegressionFit.from_json(text)
