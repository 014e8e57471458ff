"""Event histories, piecewise-exponential intensities and point-process likelihoods."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

# |w * dt| below this uses the first-order series for the exponential integral.
SMALL_SLOPE = 1e-8
# Exact ties are broken by pushing the later arrival forward by this much.
TIE_EPS = 1e-9


class PreconditionError(ValueError):
    """Raised when an operation is called outside its documented domain."""


class CoverageError(ValueError):
    """Raised when an action time falls outside the supplied intensity segments."""


class Kind(enum.IntEnum):
    ACTION = 0
    FEEDBACK = 1


@dataclass(frozen=True, slots=True)
class Event:
    time: float
    kind: Kind
    mark: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.time) or self.time < 0:
            raise PreconditionError(f"event time must be finite and >= 0, got {self.time}")

    @property
    def is_action(self) -> bool:
        return self.kind == Kind.ACTION


def action(time: float, mark: Optional[int] = None) -> Event:
    return Event(float(time), Kind.ACTION, mark)


def feedback(time: float, mark: Optional[int] = None) -> Event:
    return Event(float(time), Kind.FEEDBACK, mark)


@dataclass(frozen=True)
class EpisodeHistory:
    """Time-ordered actions and feedback observed over ``[0, horizon]``.

    Times must strictly increase; use :meth:`ingest` to build a history from
    raw records that may contain exact ties.
    """

    events: tuple[Event, ...]
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.horizon > 0:
            raise PreconditionError("horizon must be positive")
        prev = -math.inf
        for ev in self.events:
            if ev.time <= prev:
                raise PreconditionError(f"event times must strictly increase ({prev} then {ev.time})")
            if ev.time > self.horizon:
                raise PreconditionError(f"event at {ev.time} beyond horizon {self.horizon}")
            prev = ev.time

    @classmethod
    def ingest(cls, events: Iterable[Event], horizon: float) -> "EpisodeHistory":
        """Build a history, perturbing exact ties forward in arrival order."""
        out: list[Event] = []
        for ev in sorted(events, key=lambda e: e.time):
            if out and ev.time <= out[-1].time:
                t = out[-1].time + TIE_EPS
                log.warning("tied event time %.12g moved to %.12g", ev.time, t)
                ev = Event(t, ev.kind, ev.mark)
            out.append(ev)
        return cls(tuple(out), horizon)

    def __len__(self):
        return len(self.events)

    @property
    def actions(self) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.kind == Kind.ACTION)

    @property
    def feedbacks(self) -> tuple[Event, ...]:
        return tuple(e for e in self.events if e.kind == Kind.FEEDBACK)

    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events], dtype=float)

    def to_records(self) -> list[dict]:
        return [
            {"t": e.time, "kind": "action" if e.is_action else "feedback", "mark": e.mark}
            for e in self.events
        ]


def expm1_ratio(x: float) -> float:
    """``(e^x - 1) / x`` with the removable singularity filled in."""
    if abs(x) < SMALL_SLOPE:
        return 1.0 + 0.5 * x
    return math.expm1(x) / x


@dataclass(frozen=True, slots=True)
class IntensitySegment:
    """``lambda(t) = c * exp(w * (t - t_ref))``."""

    c: float
    w: float
    t_ref: float

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise PreconditionError(f"segment scale must be positive and finite, got {self.c}")
        if not math.isfinite(self.w) or self.t_ref < 0:
            raise PreconditionError("invalid segment slope or reference time")

    def __call__(self, t):
        return self.c * np.exp(self.w * (np.asarray(t, dtype=float) - self.t_ref))

    def compensator(self, t0: float, t1: float) -> float:
        return segment_compensator(self, t0, t1)

    def rebased(self, at_time: float) -> "IntensitySegment":
        """The same intensity with its reference moved to ``at_time``."""
        return IntensitySegment(self.c * math.exp(self.w * (at_time - self.t_ref)), self.w, at_time)


def segment_compensator(seg: IntensitySegment, t0: float, t1: float) -> float:
    """Integral of the segment's intensity over ``[t0, t1]``."""
    if t1 < t0 or t0 < seg.t_ref:
        raise PreconditionError(f"need t_ref <= t0 <= t1, got {seg.t_ref}, {t0}, {t1}")
    dt = t1 - t0
    if dt == 0:
        return 0.0
    start = seg.c * math.exp(seg.w * (t0 - seg.t_ref))
    return start * dt * expm1_ratio(seg.w * dt)


@dataclass(frozen=True)
class MarkPmf:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or np.any(p > 1) or abs(p.sum() - 1.0) > 1e-12:
            raise PreconditionError("mark pmf must be a probability vector")
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return len(self.probs)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


def episode_log_likelihood(
    actions: Sequence[Event],
    segments: Sequence[tuple[float, float, IntensitySegment]],
    horizon: float,
    mark_pmfs: Optional[Sequence[MarkPmf]] = None,
) -> float:
    """Log-likelihood of an action sequence under a piecewise intensity.

    ``segments`` is a list of ``(start, end, segment)`` tuples partitioning
    ``[0, horizon]``. Returns ``-inf`` when a pmf gives the realised mark
    probability zero.
    """
    spans = sorted(segments, key=lambda s: s[0])
    if not spans or spans[0][0] != 0 or spans[-1][1] != horizon:
        raise CoverageError("segments must cover [0, horizon]")
    for (_, e0, _), (s1, _, _) in zip(spans, spans[1:]):
        if e0 != s1:
            raise CoverageError(f"gap or overlap between segments at {e0}/{s1}")
    starts = [s[0] for s in spans]
    if mark_pmfs is not None and len(mark_pmfs) != len(actions):
        raise PreconditionError("need one mark pmf per action")

    total = 0.0
    for i, ev in enumerate(actions):
        if not ev.is_action:
            raise PreconditionError("likelihood is over action events only")
        k = int(np.searchsorted(starts, ev.time, side="right")) - 1
        # an event exactly on a boundary belongs to the segment that ends there
        if k > 0 and ev.time == starts[k]:
            k -= 1
        if k < 0 or not (spans[k][0] <= ev.time <= spans[k][1]):
            raise CoverageError(f"action at {ev.time} not covered")
        total += math.log(float(spans[k][2](ev.time)))
        if mark_pmfs is not None:
            p = mark_pmfs[i].probs[ev.mark]
            if p == 0:
                return -math.inf
            total += math.log(p)
    for s, e, seg in spans:
        total -= segment_compensator(seg, s, e)
    return total
