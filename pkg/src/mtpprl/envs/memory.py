"""Spaced-repetition environment: exponential forgetting with multiplicative rate updates.

Recall of item ``i`` last reviewed at ``eta`` is ``exp(-n_i * (t - eta))``. A
review draws the recall outcome, then scales ``n_i`` by ``(1 - alpha)`` on
success or ``(1 + beta)`` on failure. Each agent action ("show item y")
triggers the student's feedback immediately afterwards; the episode reward is
the fraction of items recalled in a sampled test at ``T + tau_test``.

Feedback marks encode ``2 * item + recalled``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core import TIE_EPS, Event, PreconditionError, feedback


@dataclass(frozen=True)
class Item:
    id: int
    n0: float

    def __post_init__(self):
        if self.n0 < 0:
            raise PreconditionError("initial forgetting rate must be nonnegative")


@dataclass(frozen=True)
class MemoryConfig:
    items: tuple
    alpha: float = 0.5
    beta: float = 0.2
    horizon: float = 14.0
    tau_test: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not 0.0 <= self.alpha < 1.0 or self.beta < 0:
            raise PreconditionError("need 0 <= alpha < 1 and beta >= 0")
        if self.horizon <= 0 or self.tau_test < 0:
            raise PreconditionError("invalid horizon or test delay")

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def difficulties(self) -> np.ndarray:
        return np.array([it.n0 for it in self.items])


def synthetic_items(n_items: int = 10, seed: int = 0, low: float = 0.01, high: float = 1.0) -> tuple:
    """Items with log-uniform initial forgetting rates (synthetic stand-in for fitted ones)."""
    rng = np.random.default_rng(seed)
    n0 = np.exp(rng.uniform(math.log(low), math.log(high), size=n_items))
    return tuple(Item(i, float(v)) for i, v in enumerate(n0))


def read_items(path) -> tuple:
    """Item file: one ``id n0`` pair per line; ``#`` starts a comment."""
    items = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'id n0'")
        items.append(Item(int(parts[0]), float(parts[1])))
    if [it.id for it in items] != list(range(len(items))):
        raise ValueError(f"{path}: item ids must be 0..n-1 in order")
    return tuple(items)


def write_items(items: Sequence[Item], path) -> None:
    Path(path).write_text("".join(f"{it.id} {it.n0!r}\n" for it in items))


@dataclass
class StudentState:
    rates: np.ndarray
    last_review: np.ndarray  # nan until first review
    now: float = 0.0

    @classmethod
    def fresh(cls, config: MemoryConfig) -> "StudentState":
        return cls(config.difficulties.astype(float), np.full(config.n_items, np.nan))

    def reviewed(self, item: int) -> bool:
        return not math.isnan(self.last_review[item])


def recall_prob(state: StudentState, item: int, t: float) -> float:
    """Probability of recalling ``item`` at ``t``; zero for never-reviewed items."""
    if not state.reviewed(item):
        return 0.0
    elapsed = t - state.last_review[item]
    if elapsed < 0:
        raise PreconditionError(f"recall queried at {t} before last review {state.last_review[item]}")
    return math.exp(-state.rates[item] * elapsed)


def recall_probs(state: StudentState, t: float) -> np.ndarray:
    elapsed = t - state.last_review
    with np.errstate(invalid="ignore"):
        p = np.exp(-state.rates * elapsed)
    return np.where(np.isnan(state.last_review), 0.0, p)


def review(
    state: StudentState,
    item: int,
    t: float,
    rng: np.random.Generator,
    config: MemoryConfig,
    forced: Optional[bool] = None,
) -> Event:
    """Quiz ``item`` at ``t``, update its forgetting rate, return the feedback event."""
    if not 0 <= item < len(state.rates):
        raise KeyError(f"unknown item {item}")
    if state.reviewed(item) and t < state.last_review[item]:
        raise PreconditionError("review precedes the previous review of the item")
    p = recall_prob(state, item, t)
    recalled = bool(rng.random() < p) if forced is None else bool(forced)
    state.rates[item] *= (1.0 - config.alpha) if recalled else (1.0 + config.beta)
    state.last_review[item] = t
    state.now = t
    return feedback(t + TIE_EPS, 2 * item + int(recalled))


def episode_reward(state: StudentState, horizon: float, tau_test: float, rng: np.random.Generator) -> float:
    """Fraction of items recalled in one sampled test at ``horizon + tau_test``."""
    p = recall_probs(state, horizon + tau_test)
    return float(np.mean(rng.random(len(p)) < p))


@dataclass
class MemoryEnv:
    """Episode contract over a single simulated student."""

    config: MemoryConfig
    state: StudentState = field(init=False, repr=False)

    def __post_init__(self):
        self.state = StudentState.fresh(self.config)
        self._pending: list[Event] = []
        self._rng = np.random.default_rng(0)

    @property
    def horizon(self) -> float:
        return self.config.horizon

    @property
    def n_marks(self) -> int:
        return self.config.n_items

    @property
    def n_feedback_marks(self) -> int:
        return 2 * self.config.n_items

    def reset(self, rng: np.random.Generator) -> None:
        self.state = StudentState.fresh(self.config)
        self._pending = []
        self._rng = rng

    def peek_feedback(self) -> float:
        return self._pending[0].time if self._pending else math.inf

    def pop_feedback(self) -> Event:
        return self._pending.pop(0)

    def on_action(self, event: Event) -> None:
        if event.mark is None:
            raise PreconditionError("spaced repetition actions must name an item")
        self._pending.append(review(self.state, event.mark, event.time, self._rng, self.config))

    def reward(self) -> float:
        return episode_reward(self.state, self.config.horizon, self.config.tau_test, self._rng)
