import math

import numpy as np
import pytest

from mtpprl.core import EpisodeHistory, action, feedback
from mtpprl.diagnostics import finite_difference_error, random_case
from mtpprl.policy import (
    TENSOR_NAMES,
    ConfigurationError,
    HiddenState,
    RNNPolicy,
    episode_backward,
    init_params,
    initial_state,
    intensity_segment,
    load_checkpoint,
    mark_pmf,
    save_checkpoint,
    step_hidden,
    tensor_shapes,
)

from oracles import central_differences, relative_error


def test_init_is_seeded_and_shaped():
    a = init_params(4, 5, 3, seed=7, init_scale=0.1, n_feedback_marks=2)
    b = init_params(4, 5, 3, seed=7, init_scale=0.1, n_feedback_marks=2)
    shapes = tensor_shapes(4, 5, 3, 2)
    for name in TENSOR_NAMES:
        assert a[name].shape == shapes[name]
        assert np.array_equal(a[name], b[name])
    assert float(a["b_lam"]) == 0.0
    assert not np.array_equal(a["W_h"], init_params(4, 5, 3, 8, 0.1, n_feedback_marks=2)["W_h"])


def test_params_are_read_only():
    p = init_params(2, 2, None, 0, 0.1)
    with pytest.raises(ValueError):
        p["W_h"][0, 0] = 1.0


def test_frozen_slope_must_be_zero():
    p = init_params(2, 2, None, 0, 0.1, freeze_w_t=True)
    t = dict(p.tensors)
    t["w_t"] = np.array(0.1)
    with pytest.raises(ConfigurationError):
        p.replace(t)


def test_initial_state():
    p = init_params(3, 4, 2, 0, 0.1)
    s = initial_state(p)
    assert np.array_equal(s.h, np.zeros(4)) and s.t_last_action == 0.0


def _direct_step(P, h, dt, is_action, mark, marked, n_fb):
    # straight-line restatement of the hidden update
    tau = [P["W_t"][i] * dt + P["b_t"][i] for i in range(len(P["b_t"]))]
    e = 0.0 if is_action else 1.0
    b = [P["W_a"][i] * (1 - e) + P["W_f"][i] * e + P["b_b"][i] for i in range(len(P["b_b"]))]
    D = len(h)
    y = np.zeros(P["W_2"].shape[1])
    z = np.zeros(P["W_3"].shape[1])
    if mark is not None and is_action and marked:
        y = P["W_y"][:, mark] + P["b_y"]
    if mark is not None and not is_action and n_fb:
        z = P["W_z"][:, mark] + P["b_z"]
    out = np.empty(D)
    for r in range(D):
        acc = P["b_h"][r]
        acc += sum(P["W_h"][r, c] * h[c] for c in range(D))
        acc += sum(P["W_1"][r, c] * tau[c] for c in range(len(tau)))
        acc += sum(P["W_2"][r, c] * y[c] for c in range(len(y)))
        acc += sum(P["W_3"][r, c] * z[c] for c in range(len(z)))
        acc += sum(P["W_4"][r, c] * b[c] for c in range(len(b)))
        out[r] = math.tanh(acc)
    return out


def test_step_hidden_matches_direct_formula():
    p = init_params(3, 4, 3, 1, 0.7, n_feedback_marks=4)
    state = initial_state(p)
    h = np.zeros(4)
    prev = 0.0
    for ev in [action(0.4, 2), feedback(0.9, 3), feedback(1.0, 0), action(2.5, 0)]:
        expect = _direct_step(p.tensors, h, ev.time - prev, ev.is_action, ev.mark, True, 4)
        state = step_hidden(p, state, ev, prev)
        assert np.max(np.abs(state.h - expect)) < 1e-12
        h, prev = expect, ev.time
    assert state.t_last_action == 2.5


def test_intensity_follows_time_since_last_action():
    p = init_params(2, 3, None, 2, 0.5)
    t = dict(p.tensors)
    t["w_t"] = np.array(-0.4)
    p = p.replace(t)
    state = HiddenState(np.array([0.1, -0.2, 0.3]), 1.0)
    seg = intensity_segment(p, state, 1.0)
    for probe in (1.0, 1.7, 4.0):
        direct = math.exp(float(p["b_lam"]) + float(p["V_lam"] @ state.h) - 0.4 * (probe - 1.0))
        assert seg(probe) == pytest.approx(direct, rel=1e-13)
        assert intensity_segment(p, state, probe).c == pytest.approx(direct, rel=1e-13)


def test_mark_pmf_and_markless_policy():
    p = init_params(2, 3, 4, 0, 0.5)
    pmf = mark_pmf(p, HiddenState(np.array([0.3, 0.1, -0.5]), 0.0))
    assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(pmf.probs > 0)
    with pytest.raises(ConfigurationError):
        mark_pmf(init_params(2, 3, None, 0, 0.5), initial_state(init_params(2, 3, None, 0, 0.5)))


def test_driver_agrees_with_functional_steps():
    p = init_params(3, 4, 3, 5, 0.6, n_feedback_marks=2)
    pol = RNNPolicy(p)
    state, prev = initial_state(p), 0.0
    for ev in [feedback(0.3, 1), action(0.8, 2), feedback(1.1, 0)]:
        pol.observe(ev)
        state = step_hidden(p, state, ev, prev)
        prev = ev.time
        assert np.allclose(pol.state.h, state.h, atol=1e-14, rtol=0)
    assert pol.segment(2.0).c == pytest.approx(intensity_segment(p, state, 2.0).c, rel=1e-13)


def test_gradient_values_match_direct_likelihood():
    p = init_params(2, 3, 2, 3, 0.5)
    hist = EpisodeHistory((action(0.5, 1), action(1.5, 0)), 2.0)
    b = episode_backward(p, hist)
    # direct: sum log-intensity + log mark prob - compensator
    state, prev, ll = initial_state(p), 0.0, 0.0
    comp = 0.0
    for ev in hist.events:
        seg = intensity_segment(p, state, prev)
        comp += seg.compensator(prev, ev.time)
        ll += math.log(seg(ev.time)) + math.log(mark_pmf(p, state).probs[ev.mark])
        state = step_hidden(p, state, ev, prev)
        prev = ev.time
    comp += intensity_segment(p, state, prev).compensator(prev, 2.0)
    assert b.log_lik == pytest.approx(ll - comp, rel=1e-12)


@pytest.mark.parametrize("trial", range(8))
def test_gradients_match_central_differences(trial):
    rng = np.random.default_rng(100 + trial)
    params, hist = random_case(trial, rng)
    assert finite_difference_error(params, hist) <= 1e-4


def test_independent_finite_difference_on_log_likelihood():
    rng = np.random.default_rng(4)
    params, hist = random_case(3, rng)
    x0 = params.flat()
    g = episode_backward(params, hist).d_log_lik
    flat = np.concatenate([np.ravel(g[n]) for n in TENSOR_NAMES])
    fd = central_differences(lambda x: episode_backward(params.from_flat(x), hist).log_lik, x0)
    assert relative_error(flat, fd).max() <= 1e-4


def test_frozen_slope_gradient_is_exactly_zero():
    p = init_params(3, 3, 2, 0, 0.5, freeze_w_t=True)
    hist = EpisodeHistory((action(0.5, 1), feedback(0.7), action(1.5, 0)), 2.0)
    b = episode_backward(p, hist)
    for g in (b.d_log_lik, b.d_quad, b.d_entropy):
        assert float(g["w_t"]) == 0.0


def test_backward_is_deterministic():
    rng = np.random.default_rng(9)
    params, hist = random_case(5, rng)
    a, b = episode_backward(params, hist), episode_backward(params, hist)
    for n in TENSOR_NAMES:
        assert np.array_equal(a.d_log_lik[n], b.d_log_lik[n])


def test_overflow_is_reported_not_propagated():
    p = init_params(2, 2, None, 0, 0.1)
    t = dict(p.tensors)
    t["b_lam"] = np.array(800.0)
    with pytest.raises(FloatingPointError):
        episode_backward(p.replace(t), EpisodeHistory((), 1.0))


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    p = init_params(3, 4, 5, 11, 0.3, n_feedback_marks=6, base_rate=2.0)
    path = tmp_path / "ck.npz"
    save_checkpoint(p, path, iteration=3)
    q = load_checkpoint(path)
    assert (q.d_in, q.d_hidden, q.n_marks, q.n_feedback_marks, q.base_rate) == (3, 4, 5, 6, 2.0)
    for n in TENSOR_NAMES:
        assert q[n].tobytes() == p[n].tobytes()
