import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtpprl.core import IntensitySegment, feedback, segment_compensator
from mtpprl.sampler import (
    ConsistencyError,
    SamplerState,
    invert_cdf,
    next_action,
    rebase_on_feedback,
)

from oracles import ScriptedIntensity, ks_censored, ks_two_sample, ogata_first_arrivals


class ScriptedView:
    """Reveals a scripted intensity one piece at a time, through feedback at piece starts."""

    def __init__(self, intensity: ScriptedIntensity):
        self.intensity = intensity
        self.seen = []

    def segment(self, at_time):
        k = int(np.searchsorted(self.intensity.starts, at_time, side="right")) - 1
        s, c, w = self.intensity.pieces[k]
        return IntensitySegment(c * math.exp(w * (at_time - s)), w, at_time)

    def observe(self, event):
        self.seen.append(event)


class ListStream:
    def __init__(self, times):
        self.events = [feedback(t) for t in times]

    def peek_feedback(self):
        return self.events[0].time if self.events else math.inf

    def pop_feedback(self):
        return self.events.pop(0)


def first_arrivals(intensity, horizon, n, seed):
    rng = np.random.default_rng(seed)
    out = np.empty(n)
    switches = [p[0] for p in intensity.pieces[1:]]
    for i in range(n):
        res = next_action(ScriptedView(intensity), ListStream(switches), 0.0, horizon, rng)
        out[i] = horizon if res.extinct else res.time
    return out


def test_zero_quantile_is_reference_time():
    st_ = SamplerState.from_uniform(0.0, IntensitySegment(3.0, -1.0, 5.0))
    assert invert_cdf(st_).time == 5.0


def test_homogeneous_quantile():
    u = 1 - math.exp(-2.0)
    out = invert_cdf(SamplerState.from_uniform(u, IntensitySegment(2.0, 0.0, 0.0)))
    # exponential quantile: -log(1-u)/rate
    assert out.time == pytest.approx(-math.log(1 - u) / 2.0, abs=1e-12)
    assert out.time == pytest.approx(1.0, abs=1e-12)


def test_extinct_when_mass_insufficient():
    # total mass of 0.5 e^{-t} is 0.5 < -log(1 - 0.5)
    assert 1 + (1 / 0.5) * math.log(0.5) < 0
    assert invert_cdf(SamplerState.from_uniform(0.5, IntensitySegment(0.5, -1.0, 0.0))).extinct


@given(st.floats(0.05, 5), st.floats(-2, 2), st.floats(0.001, 0.999))
def test_inverse_is_cdf_inverse(c, w, u):
    seg = IntensitySegment(c, w, 0.0)
    out = invert_cdf(SamplerState.from_uniform(u, seg))
    if out.extinct:
        assert w < 0 and c / -w < -math.log1p(-u)
    else:
        assert out.time > 0
        assert 1 - math.exp(-segment_compensator(seg, 0.0, out.time)) == pytest.approx(u, rel=1e-9)


def test_rebase_with_unchanged_intensity_keeps_sample():
    seg = IntensitySegment(1.3, 0.4, 0.0)
    state = SamplerState.from_uniform(0.8, seg)
    before = invert_cdf(state).time
    s = 0.5 * before
    after = invert_cdf(rebase_on_feedback(state, s, seg.rebased(s))).time
    assert abs(after - before) < 1e-10


def test_rebase_at_reference_is_identity():
    seg = IntensitySegment(1.3, 0.4, 2.0)
    state = SamplerState.from_uniform(0.3, seg)
    new = rebase_on_feedback(state, 2.0, seg)
    assert new.u_effective == pytest.approx(0.3, abs=1e-15)


def test_successive_rebases_compose():
    seg = IntensitySegment(0.7, -0.3, 0.0)
    state = SamplerState.from_uniform(0.9, seg)
    two = rebase_on_feedback(rebase_on_feedback(state, 0.4, seg.rebased(0.4)), 1.1, seg.rebased(1.1))
    one = rebase_on_feedback(state, 1.1, seg.rebased(1.1))
    assert abs(two.u_effective - one.u_effective) < 1e-10
    assert abs(invert_cdf(two).time - invert_cdf(one).time) < 1e-10


def test_rebase_after_sample_fired_is_rejected():
    seg = IntensitySegment(2.0, 0.0, 0.0)
    state = SamplerState.from_uniform(0.5, seg)
    t = invert_cdf(state).time
    with pytest.raises(ConsistencyError):
        rebase_on_feedback(state, t + 1.0, seg.rebased(t + 1.0))


@settings(max_examples=60, deadline=None)
@given(
    st.floats(0.1, 3), st.floats(-1, 1), st.floats(0.01, 0.99),
    st.lists(st.floats(0.01, 4), min_size=1, max_size=6),
)
def test_more_pieces_never_move_the_sample(c, w, u, cuts):
    pieces = [(0.0, c, w)] + [(s, c * math.exp(w * s), w) for s in sorted(set(cuts))]
    view = ScriptedView(ScriptedIntensity(pieces))
    rng = _FixedU(u)
    whole = next_action(ScriptedView(ScriptedIntensity([(0.0, c, w)])), ListStream([]), 0.0, 50.0, _FixedU(u))
    split = next_action(view, ListStream([p[0] for p in pieces[1:]]), 0.0, 50.0, rng)
    assert whole.extinct == split.extinct
    if not whole.extinct:
        assert abs(whole.time - split.time) < 1e-10


class _FixedU:
    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def test_no_feedback_reduces_to_exponential():
    rng = np.random.default_rng(3)
    view = ScriptedView(ScriptedIntensity([(0.0, 2.0, 0.0)]))
    draws = [next_action(view, ListStream([]), 0.0, 1e9, rng).time for _ in range(20_000)]
    assert np.mean(draws) == pytest.approx(0.5, rel=0.03)


def test_feedback_that_keeps_intensity_does_not_move_action():
    base = ScriptedIntensity([(0.0, 1.0, 0.5)])
    twin = ScriptedIntensity([(0.0, 1.0, 0.5), (0.3, math.exp(0.15), 0.5)])
    a = next_action(ScriptedView(base), ListStream([]), 0.0, 10.0, np.random.default_rng(5))
    b = next_action(ScriptedView(twin), ListStream([0.3]), 0.0, 10.0, np.random.default_rng(5))
    assert abs(a.time - b.time) < 1e-10


def test_extinct_sample_is_rescued_by_later_intensity():
    # decaying piece alone goes extinct for u = 0.9; a later strong piece revives the same draw
    u = 0.9
    first = IntensitySegment(0.2, -3.0, 0.0)
    assert invert_cdf(SamplerState.from_uniform(u, first)).extinct
    pieces = [(0.0, 0.2, -3.0), (1.0, 1.5, 0.0)]
    out = next_action(ScriptedView(ScriptedIntensity(pieces)), ListStream([1.0]), 0.0, 10.0, _FixedU(u))
    lam1 = 0.2 / 3.0 * (1 - math.exp(-3.0))
    expected = 1.0 + (-math.log1p(-u) - lam1) / 1.5
    assert out.time == pytest.approx(expected, abs=1e-12)


def test_feedback_is_consumed_and_reported():
    view = ScriptedView(ScriptedIntensity([(0.0, 1e-6, 0.0), (0.5, 1e-6, 0.0)]))
    stream = ListStream([0.5, 0.7])
    seen = []
    out = next_action(view, stream, 0.0, 1.0, np.random.default_rng(0), on_feedback=seen.append)
    assert out.extinct
    assert [e.time for e in seen] == [0.5, 0.7]
    assert stream.events == []


@pytest.mark.parametrize(
    "pieces",
    [
        [(0.0, 1.0, 0.3)],
        [(0.0, 0.5, -0.2), (1.0, 2.0, 0.5)],
        [(0.0, 1.2, 0.0), (0.6, 0.3, 1.0), (1.5, 2.5, -1.5)],
    ],
    ids=["one", "two", "three"],
)
def test_first_arrival_distribution_small(pieces):
    intensity = ScriptedIntensity(pieces)
    samples = first_arrivals(intensity, 3.0, 20_000, seed=1)
    assert ks_censored(samples, intensity.cdf, 3.0) < 0.02
    assert np.all(samples > 0)
