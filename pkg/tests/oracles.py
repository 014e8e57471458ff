"""Independent reference computations shared by the test modules."""

import math

import numpy as np


class ScriptedIntensity:
    """Known piecewise-exponential intensity revealed in pieces at ``switch`` times.

    ``pieces`` is a list of ``(start, c, w)``: on ``[start, next_start)`` the
    intensity is ``c * exp(w * (t - start))``.
    """

    def __init__(self, pieces):
        self.pieces = list(pieces)
        self.starts = np.array([p[0] for p in self.pieces])

    def rate(self, t):
        k = int(np.searchsorted(self.starts, t, side="right")) - 1
        s, c, w = self.pieces[k]
        return c * math.exp(w * (t - s))

    def cumulative(self, t):
        """Integral over [0, t] by summing per-piece closed forms (w != 0 form and w == 0 form)."""
        total = 0.0
        for k, (s, c, w) in enumerate(self.pieces):
            end = self.pieces[k + 1][0] if k + 1 < len(self.pieces) else math.inf
            if t <= s:
                break
            hi = min(t, end)
            total += c * (hi - s) if w == 0 else c / w * (math.exp(w * (hi - s)) - 1.0)
        return total

    def cdf(self, t):
        return 1.0 - math.exp(-self.cumulative(t))

    def bound(self, t0, t1, grid=2000):
        ts = np.linspace(t0, t1, grid)
        return 1.05 * max(self.rate(t) for t in ts)


def ogata_first_arrivals(intensity, horizon, n, rng):
    """First event times by thinning a dominating homogeneous process (censored at ``horizon``)."""
    lam_max = intensity.bound(0.0, horizon)
    out = np.empty(n)
    for i in range(n):
        t = 0.0
        while True:
            t += rng.exponential(1.0 / lam_max)
            if t >= horizon:
                out[i] = horizon
                break
            if rng.random() * lam_max <= intensity.rate(t):
                out[i] = t
                break
    return out


def ks_censored(samples, cdf, horizon):
    """Two-sided KS distance for samples censored at ``horizon`` (values >= horizon form an atom)."""
    x = np.sort(np.minimum(samples, horizon))
    n = len(x)
    below = x[x < horizon]
    F = np.array([cdf(v) for v in below])
    k = np.arange(1, len(below) + 1)
    d = 0.0
    if len(below):
        d = max(np.max(np.abs(k / n - F)), np.max(np.abs((k - 1) / n - F)))
    d = max(d, abs(len(below) / n - cdf(horizon)))
    return float(d)


def ks_two_sample(a, b):
    a, b = np.sort(a), np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def central_differences(f, x, step=1e-5):
    g = np.zeros_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        g[i] = (f(xp) - f(xm)) / (2 * step)
    return g


def relative_error(a, b, floor=1e-6):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
