"""Inverse-transform sampling of the next action time from a partially known intensity.

A single uniform ``u`` is drawn per action. While waiting for the provisional
time, feedback may change the intensity; the draw is then rebased by the
survival probability of the elapsed stretch and re-inverted against the new
intensity, so one draw still yields an exact sample.

The retained draw is stored as ``log(1 - u)`` which keeps the rebase
``u' = 1 - (1 - u) / Q`` exact in floating point for long feedback runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .core import Event, IntensitySegment, PreconditionError

# |w| below this is treated as a homogeneous segment.
FLAT_SLOPE = 1e-9


class ConsistencyError(RuntimeError):
    """A rebase was requested although the pending sample already fired."""


class Segment(Protocol):
    t_ref: float

    def compensator(self, t0: float, t1: float) -> float: ...


@dataclass(frozen=True, slots=True)
class SampleOutcome:
    time: Optional[float]

    @property
    def extinct(self) -> bool:
        return self.time is None


EXTINCT = SampleOutcome(None)


@dataclass(frozen=True)
class SamplerState:
    log_survival: float  # log(1 - u_effective), always <= 0
    seg: Segment

    @classmethod
    def from_uniform(cls, u: float, seg: Segment) -> "SamplerState":
        if not 0.0 <= u < 1.0:
            raise PreconditionError("uniform draw must lie in [0, 1)")
        return cls(math.log1p(-u), seg)

    @property
    def u_effective(self) -> float:
        return -math.expm1(self.log_survival)


def invert_cdf(state: SamplerState) -> SampleOutcome:
    """First time after ``seg.t_ref`` at which the survival drops to ``1 - u``."""
    seg = state.seg
    need = -state.log_survival
    if need <= 0.0:
        return SampleOutcome(seg.t_ref)
    if not isinstance(seg, IntensitySegment):
        dt = seg.time_to(need)
        return EXTINCT if dt is None else SampleOutcome(seg.t_ref + dt)
    c, w = seg.c, seg.w
    if abs(w) <= FLAT_SLOPE:
        return SampleOutcome(seg.t_ref + need / c)
    a = (w / c) * need  # log(a) with a = 1 - (w/c) log(1-u) = 1 + this
    if a <= -1.0:
        return EXTINCT
    return SampleOutcome(seg.t_ref + math.log1p(a) / w)


def rebase_on_feedback(state: SamplerState, s: float, new_seg: Segment) -> SamplerState:
    """Carry the pending draw across ``[t_ref, s]`` and switch to ``new_seg``."""
    old = state.seg
    if s < old.t_ref:
        raise PreconditionError(f"rebase time {s} precedes reference {old.t_ref}")
    if new_seg.t_ref != s:
        raise PreconditionError("new segment must be referenced at the rebase time")
    g = state.log_survival + old.compensator(old.t_ref, s)
    if g > 1e-9 * max(1.0, -state.log_survival):
        raise ConsistencyError(
            f"pending sample fired before rebase time {s} (log survival would be {g:.3g})"
        )
    return SamplerState(min(g, 0.0), new_seg)


class PolicyView(Protocol):
    def segment(self, at_time: float) -> Segment: ...

    def observe(self, event: Event) -> None: ...


class FeedbackStream(Protocol):
    def peek_feedback(self) -> float: ...

    def pop_feedback(self) -> Event: ...


def next_action(
    policy: PolicyView,
    stream: FeedbackStream,
    t_now: float,
    horizon: float,
    rng: np.random.Generator,
    on_feedback=None,
) -> SampleOutcome:
    """Sample the next action time, folding in feedback that arrives first.

    Feedback arriving before the provisional time is popped from ``stream``,
    shown to ``policy`` (and to ``on_feedback``) and the draw is rebased.
    Returns :data:`EXTINCT` when no action occurs before ``horizon``; in that
    case every feedback event before ``horizon`` has been consumed.
    """
    if not t_now < horizon:
        raise PreconditionError("sampling start must precede the horizon")
    state = SamplerState.from_uniform(rng.random(), policy.segment(t_now))
    while True:
        out = invert_cdf(state)
        t = math.inf if out.extinct else out.time
        s = stream.peek_feedback()
        if s < min(t, horizon):
            ev = stream.pop_feedback()
            policy.observe(ev)
            if on_feedback is not None:
                on_feedback(ev)
            state = rebase_on_feedback(state, ev.time, policy.segment(ev.time))
            continue
        return out if t < horizon else EXTINCT
