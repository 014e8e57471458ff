"""Reference schedulers and equal-budget calibration.

Every scheduler is a picklable factory: calling it with an environment
returns a fresh per-episode agent exposing ``segment``/``observe``/
``sample_mark``, so the same sampler and rollout loop drive baselines and
learned policies alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .core import SMALL_SLOPE, Event, IntensitySegment
from .envs.memory import recall_probs
from .reinforce import evaluate_episodes


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PiecewiseConstantSegment:
    """Rate ``rates[k]`` on ``[starts[k], starts[k+1])``; the last piece is unbounded."""

    starts: np.ndarray
    rates: np.ndarray

    @property
    def t_ref(self) -> float:
        return float(self.starts[0])

    def _cum(self, t: float) -> float:
        k = int(np.searchsorted(self.starts, t, side="right")) - 1
        widths = np.diff(self.starts[: k + 1])
        return float(np.dot(widths, self.rates[:k])) + self.rates[k] * (t - self.starts[k])

    def compensator(self, t0: float, t1: float) -> float:
        return self._cum(t1) - self._cum(t0)

    def time_to(self, amount: float) -> Optional[float]:
        acc = 0.0
        last = len(self.rates) - 1
        for k, rate in enumerate(self.rates):
            if k == last:
                return None if rate <= 0 else float(self.starts[k] - self.t_ref + (amount - acc) / rate)
            mass = rate * (self.starts[k + 1] - self.starts[k])
            if rate > 0 and acc + mass >= amount:
                return float(self.starts[k] - self.t_ref + (amount - acc) / rate)
            acc += mass
        return None


@dataclass(frozen=True)
class ForgettingSegment:
    """``kappa * sum_i (1 - exp(-n_i (t - eta_i)))`` with unreviewed items at full rate."""

    t_ref: float
    kappa: float
    rates: np.ndarray
    last_review: np.ndarray

    def _mass(self, t0: float, t1: float) -> float:
        dt = t1 - t0
        if dt <= 0:
            return 0.0
        reviewed = ~np.isnan(self.last_review)
        n = self.rates[reviewed]
        x = -n * dt
        ratio = np.where(np.abs(x) < SMALL_SLOPE, 1.0 + 0.5 * x, np.expm1(x) / np.where(x == 0, 1.0, x))
        lost = np.exp(-n * (t0 - self.last_review[reviewed])) * dt * ratio
        return self.kappa * max(len(self.rates) * dt - float(lost.sum()), 0.0)

    def compensator(self, t0: float, t1: float) -> float:
        return self._mass(t0, t1)

    def rate(self, t: float) -> float:
        reviewed = ~np.isnan(self.last_review)
        decay = np.exp(-self.rates[reviewed] * (t - self.last_review[reviewed]))
        return self.kappa * float(len(self.rates) - decay.sum())

    def time_to(self, amount: float) -> Optional[float]:
        hi = 1.0
        while self._mass(self.t_ref, self.t_ref + hi) < amount:
            hi *= 2.0
            if hi > 1e12:
                return None
        return brentq(lambda x: self._mass(self.t_ref, self.t_ref + x) - amount, 0.0, hi, xtol=1e-13, rtol=1e-14)


@dataclass(frozen=True)
class uniform_poisson:
    """Constant ``rate``; marks uniform over the environment's items when it has any."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Poisson rate must be positive")

    def __call__(self, env) -> "_PoissonAgent":
        return _PoissonAgent(self.rate, getattr(env, "n_marks", None))

    def scaled(self, k: float) -> "uniform_poisson":
        return uniform_poisson(k)

    def analytic_scale(self, target: float, horizon: float) -> float:
        return target / horizon


class _PoissonAgent:
    def __init__(self, rate, n_marks):
        self.rate = rate
        self.n_marks = n_marks

    def observe(self, event: Event) -> None:
        pass

    def segment(self, at_time: float) -> IntensitySegment:
        return IntensitySegment(self.rate, 0.0, at_time)

    def sample_mark(self, rng) -> Optional[int]:
        return int(rng.integers(self.n_marks)) if self.n_marks else None


@dataclass(frozen=True)
class redqueen:
    """Intensity ``kappa * r(t)``; ``flavor="chrono"`` ignores priorities, ``"priority"`` uses the wall's rule."""

    kappa: float
    flavor: str = "chrono"

    def __post_init__(self):
        if self.flavor not in ("chrono", "priority"):
            raise ValueError(f"unknown RedQueen flavor {self.flavor!r}")

    def __call__(self, env) -> "_RedQueenAgent":
        return _RedQueenAgent(self.kappa, env.feed if hasattr(env, "feed") else None, self.flavor == "chrono", env)

    def scaled(self, k: float) -> "redqueen":
        return redqueen(k, self.flavor)


class _RedQueenAgent:
    def __init__(self, kappa, feed, chrono, env):
        self.kappa = kappa
        self.chrono = chrono
        self.env = env

    def observe(self, event: Event) -> None:
        pass

    def segment(self, at_time: float) -> PiecewiseConstantSegment:
        starts, ranks = self.env.feed.profile(at_time, chrono=self.chrono)
        return PiecewiseConstantSegment(starts, self.kappa * ranks.astype(float))

    def sample_mark(self, rng) -> None:
        return None


@dataclass(frozen=True)
class memorize:
    """Per-item intensity ``kappa * (1 - recall_i(t))`` read from the true student model."""

    kappa: float

    def __call__(self, env) -> "_MemorizeAgent":
        return _MemorizeAgent(self.kappa, env)

    def scaled(self, k: float) -> "memorize":
        return memorize(k)


class _MemorizeAgent:
    def __init__(self, kappa, env):
        self.kappa = kappa
        self.env = env
        self.t = 0.0

    def observe(self, event: Event) -> None:
        self.t = event.time

    def segment(self, at_time: float) -> ForgettingSegment:
        st = self.env.state
        self.t = at_time
        return ForgettingSegment(at_time, self.kappa, st.rates.copy(), st.last_review.copy())

    def item_rates(self, t: float) -> np.ndarray:
        return self.kappa * (1.0 - recall_probs(self.env.state, t))

    def sample_mark(self, rng) -> int:
        w = self.item_rates(self.t)
        if w.sum() <= 0:
            return int(rng.integers(len(w)))
        return int(min(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(), side="right"), len(w) - 1))


@dataclass
class BudgetCalibration:
    target: float
    achieved: float
    scale: float
    within: bool

    def as_dict(self) -> dict:
        return {"target": self.target, "achieved": self.achieved, "scale": self.scale, "within": self.within}


def mean_count(env, factory, n_episodes: int, seed: int) -> float:
    res = evaluate_episodes(env, factory, n_episodes, seed)
    return float(np.mean([r.n_actions for r in res]))


def calibrate_budget(
    family,
    target: float,
    env,
    n_episodes: int = 200,
    seed: int = 0,
    tol: float = 0.02,
    max_iter: int = 40,
    scale_bounds: tuple = (1e-4, 1e4),
) -> BudgetCalibration:
    """Bisect the family's scale until the mean action count is near ``target``.

    ``family`` is any scheduler with a ``scaled(k)`` constructor; the same
    seeded episodes are reused at every probe so the response is monotone.
    Succeeds when the count is within ``tol`` (relative); the result records
    whether the ±10% equal-budget criterion holds.
    """
    if target <= 0:
        raise ValueError("target count must be positive")
    if hasattr(family, "analytic_scale"):
        k = family.analytic_scale(target, env.horizon)
        got = mean_count(env, family.scaled(k), n_episodes, seed)
        return BudgetCalibration(float(target), float(got), float(k), bool(abs(got - target) <= 0.1 * target))

    def count(k):
        return mean_count(env, family.scaled(k), n_episodes, seed)

    # bracket by doubling outward from unit scale; extreme scales can be very slow to simulate
    lo = hi = 0.0
    c = count(1.0)
    step = math.log(2.0)
    if c < target:
        while c < target:
            lo, hi = hi, hi + step
            if hi > math.log(scale_bounds[1]):
                raise CalibrationError(f"target {target} above achievable counts (reached {c})")
            c = count(math.exp(hi))
    else:
        while c > target:
            lo, hi = lo - step, lo
            if lo < math.log(scale_bounds[0]):
                raise CalibrationError(f"target {target} below achievable counts (reached {c})")
            c = count(math.exp(lo))
    best = (math.inf, None, None)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        c = count(math.exp(mid))
        if abs(c - target) < best[0]:
            best = (abs(c - target), math.exp(mid), c)
        if abs(c - target) <= tol * target:
            break
        if c < target:
            lo = mid
        else:
            hi = mid
    _, k, got = best
    return BudgetCalibration(float(target), float(got), float(k), bool(abs(got - target) <= 0.1 * target))
