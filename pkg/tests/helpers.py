import numpy as np

from swapsched.instance import Instance, demand_fits

FIG8_PRICES = (13.8, 9.0, 10.8, 13.6, 7.3)
FIG8_HOURS = (1, 2, 2, 3, 2, 1, 1, 2, 1, 2)
# battery per (port, period), 0 = idle; read off the left and right charts
FIG8_LEFT = ((4, 2, 4, 8, 4), (2, 8, 1, 6, 0), (3, 3, 5, 5, 0), (7, 9, 10, 10, 0))
FIG8_RIGHT = ((4, 4, 4, 8, 8), (0, 2, 2, 1, 6), (3, 3, 5, 5, 0), (7, 9, 10, 10, 0))


def fig8_instance(gamma=3):
    return Instance(10, 4, 5, 1, (5,), (1,) * 10, FIG8_HOURS, FIG8_PRICES, 1.0, gamma)


def x_from_layout(inst, layout):
    x = np.zeros(inst.x_shape, dtype=np.int8)
    for k, row in enumerate(layout):
        for t, b in enumerate(row):
            if b:
                x[b - 1, k, t] = 1
    return x


def random_instance(rng, B_max=3, N_max=2, T_max=4, L_max=2, gamma=None, alpha=None):
    """Small random instance that passes the flow capacity check."""
    while True:
        T = int(rng.integers(1, T_max + 1))
        L = int(rng.integers(1, min(L_max, T) + 1))
        B = int(rng.integers(L, max(L, B_max) + 1))
        N = int(rng.integers(1, N_max + 1))
        ends = sorted(rng.choice(np.arange(1, T), size=L - 1, replace=False).tolist()) + [T]
        windows = sorted(rng.integers(1, L + 1, size=B).tolist())
        p = [int(rng.integers(1, ends[w - 1] + 1)) for w in windows]
        a = float(rng.choice([0.5, 0.8, 1.0])) if alpha is None else alpha
        g = int(rng.integers(0, N + 1)) if gamma is None else gamma
        inst = Instance(B, N, T, L, tuple(ends), tuple(windows), tuple(p),
                        tuple(float(v) for v in rng.uniform(1, 15, T).round(1)), a, g)
        if demand_fits(ends, windows, inst.required.tolist(), N):
            return inst
