"""Feedback-free environment whose reward depends only on the action count."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..core import Event


@dataclass
class PoissonToyEnv:
    """``reward="count"`` pays N(T); ``reward="target"`` pays ``-(N(T) - target)**2``."""

    horizon: float = 1.0
    reward_kind: str = "count"
    target: float = 0.0

    n_marks = None
    n_feedback_marks = 0

    def __post_init__(self):
        if self.reward_kind not in ("count", "target"):
            raise ValueError(f"unknown toy reward {self.reward_kind!r}")
        self._count = 0

    def reset(self, rng) -> None:
        self._count = 0

    def peek_feedback(self) -> float:
        return math.inf

    def pop_feedback(self) -> Event:
        raise IndexError("toy environment emits no feedback")

    def on_action(self, event: Event) -> None:
        self._count += 1

    def reward(self) -> float:
        if self.reward_kind == "count":
            return float(self._count)
        return -float(self._count - self.target) ** 2
