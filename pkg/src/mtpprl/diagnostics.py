"""Self-checks exposed by the command line: finite differences and sampler KS."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EpisodeHistory, IntensitySegment, action, feedback
from .policy import TENSOR_NAMES, GradientBundle, PolicyParams, episode_backward, init_params
from .sampler import next_action

QUANTITIES = (("log_lik", "d_log_lik"), ("int_quad", "d_quad"), ("int_entropy", "d_entropy"))


def random_case(trial: int, rng: np.random.Generator, d: int = 3, max_events: int = 10, horizon: float = 5.0):
    """A small random policy and history; marks and the frozen slope toggle with ``trial``."""
    n_marks = (None, 3)[trial % 2]
    n_fb = (0, 4)[(trial // 2) % 2]
    freeze = bool((trial // 4) % 2)
    p = init_params(d, d, n_marks, int(rng.integers(2**31)), 0.5, n_feedback_marks=n_fb,
                    freeze_w_t=freeze, base_rate=0.8)
    if not freeze:
        t = dict(p.tensors)
        t["w_t"] = np.array(rng.uniform(-0.5, 0.5))
        p = p.replace(t)
    times = np.sort(rng.uniform(0.0, horizon, int(rng.integers(0, max_events + 1))))
    events = []
    for t in times:
        if rng.random() < 0.5:
            events.append(action(float(t), int(rng.integers(3)) if n_marks else None))
        else:
            events.append(feedback(float(t), int(rng.integers(4)) if n_fb else None))
    return p, EpisodeHistory(tuple(events), horizon)


def _flat_grad(bundle: GradientBundle, attr: str) -> np.ndarray:
    g = getattr(bundle, attr)
    return np.concatenate([np.ravel(g[n]) for n in TENSOR_NAMES])


def finite_difference_error(params: PolicyParams, history: EpisodeHistory, step: float = 1e-5) -> float:
    """Max relative error of the analytic gradients against central differences."""
    bundle = episode_backward(params, history)
    x0 = params.flat()
    skip = set()
    if params.freeze_w_t:
        k = sum(params[n].size for n in TENSOR_NAMES[:TENSOR_NAMES.index("w_t")])
        skip.add(k)
    worst = 0.0
    fd = np.zeros((3, len(x0)))
    for i in range(len(x0)):
        if i in skip:
            continue
        xp, xm = x0.copy(), x0.copy()
        xp[i] += step
        xm[i] -= step
        bp = episode_backward(params.from_flat(xp), history)
        bm = episode_backward(params.from_flat(xm), history)
        for c, (val, _) in enumerate(QUANTITIES):
            fd[c, i] = (getattr(bp, val) - getattr(bm, val)) / (2 * step)
    for c, (_, attr) in enumerate(QUANTITIES):
        g = _flat_grad(bundle, attr)
        if skip and np.any(g[list(skip)] != 0.0):
            return math.inf
        err = np.abs(g - fd[c]) / np.maximum(np.maximum(np.abs(g), np.abs(fd[c])), 1e-6)
        worst = max(worst, float(err.max()))
    return worst


@dataclass
class GradCheckReport:
    n_configs: int
    max_rel_error: float
    errors: list

    def as_dict(self) -> dict:
        return {"n_configs": self.n_configs, "max_rel_error": self.max_rel_error, "errors": self.errors}


def gradient_check(n_configs: int = 50, seed: int = 0, step: float = 1e-5) -> GradCheckReport:
    rng = np.random.default_rng(seed)
    errors = [finite_difference_error(*random_case(k, rng), step=step) for k in range(n_configs)]
    return GradCheckReport(n_configs, max(errors) if errors else 0.0, errors)


class _PieceView:
    def __init__(self, pieces):
        self.pieces = pieces
        self.starts = np.array([p[0] for p in pieces])

    def segment(self, at_time):
        s, c, w = self.pieces[int(np.searchsorted(self.starts, at_time, side="right")) - 1]
        return IntensitySegment(c * math.exp(w * (at_time - s)), w, at_time)

    def observe(self, event):
        pass


class _SwitchStream:
    def __init__(self, times):
        self.times = list(times)

    def peek_feedback(self):
        return self.times[0] if self.times else math.inf

    def pop_feedback(self):
        return feedback(self.times.pop(0))


def piecewise_cdf(pieces, t: float) -> float:
    total = 0.0
    for k, (s, c, w) in enumerate(pieces):
        if t <= s:
            break
        end = min(t, pieces[k + 1][0] if k + 1 < len(pieces) else math.inf)
        d = end - s
        total += c * d if abs(w * d) < 1e-12 else c * math.expm1(w * d) / w
    return 1.0 - math.exp(-total)


def first_arrivals(pieces, horizon: float, n: int, seed: int) -> np.ndarray:
    """First action times under a scripted intensity revealed through feedback; censored at ``horizon``."""
    rng = np.random.default_rng(seed)
    switches = [p[0] for p in pieces[1:]]
    out = np.empty(n)
    for i in range(n):
        res = next_action(_PieceView(pieces), _SwitchStream(switches), 0.0, horizon, rng)
        out[i] = horizon if res.extinct else res.time
    return out


def ks_statistic(samples: np.ndarray, pieces, horizon: float) -> float:
    x = np.sort(samples)
    n = len(x)
    below = x[x < horizon]
    F = np.array([piecewise_cdf(pieces, v) for v in below])
    k = np.arange(1, len(below) + 1)
    d = abs(len(below) / n - piecewise_cdf(pieces, horizon))
    if len(below):
        d = max(d, float(np.max(np.abs(k / n - F))), float(np.max(np.abs((k - 1) / n - F))))
    return d


DEFAULT_SCRIPTS = {
    "one": [(0.0, 1.0, 0.3)],
    "two_rebase": [(0.0, 0.5, -0.2), (1.0, 2.0, 0.5)],
    "three": [(0.0, 1.2, 0.0), (0.6, 0.3, 1.0), (1.5, 2.5, -1.5)],
    "extinct_rescue": [(0.0, 0.2, -3.0), (1.0, 1.5, 0.0)],
}


def sample_check(n: int = 100_000, seed: int = 0, horizon: float = 3.0, scripts=None) -> dict:
    scripts = DEFAULT_SCRIPTS if scripts is None else scripts
    return {name: ks_statistic(first_arrivals(p, horizon, n, seed + k), p, horizon)
            for k, (name, p) in enumerate(scripts.items())}
