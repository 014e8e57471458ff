"""Recurrent marked point-process policy and its exact gradients.

The hidden state is updated at every event (action or feedback)::

    tau = W_t * dt + b_t
    y   = W_y[:, mark] + b_y          (actions with a mark, else zero)
    z   = W_z[:, mark] + b_z          (feedback with a mark, else zero)
    b   = W_a * (1 - e) + W_f * e + b_b
    h'  = tanh(W_h h + W_1 tau + W_2 y + W_3 z + W_4 b + b_h)

and between events the policy acts with intensity
``exp(b_lam + V_lam . h + w_t * (t - t_last_action))`` and mark
distribution ``softmax(V_y h)``.

Gradients are accumulated by hand in one reverse sweep over the episode; the
interval integrals are closed forms, so no autodiff framework is involved.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import EpisodeHistory, Event, IntensitySegment, Kind, MarkPmf, PreconditionError

CHECKPOINT_VERSION = 1

TENSOR_NAMES = (
    "W_t", "b_t", "W_y", "b_y", "W_z", "b_z", "W_a", "W_f", "b_b",
    "W_h", "W_1", "W_2", "W_3", "W_4", "b_h",
    "V_lam", "b_lam", "w_t", "V_y",
)


class ConfigurationError(ValueError):
    pass


def tensor_shapes(d_in: int, d_hidden: int, n_marks: int, n_feedback: int) -> dict[str, tuple]:
    return {
        "W_t": (d_in,), "b_t": (d_in,),
        "W_y": (d_in, n_marks), "b_y": (d_in,),
        "W_z": (d_in, n_feedback), "b_z": (d_in,),
        "W_a": (d_in,), "W_f": (d_in,), "b_b": (d_in,),
        "W_h": (d_hidden, d_hidden),
        "W_1": (d_hidden, d_in), "W_2": (d_hidden, d_in),
        "W_3": (d_hidden, d_in), "W_4": (d_hidden, d_in),
        "b_h": (d_hidden,),
        "V_lam": (d_hidden,), "b_lam": (), "w_t": (),
        "V_y": (n_marks, d_hidden),
    }


@dataclass(frozen=True)
class PolicyParams:
    """All trainable tensors plus the fixed architecture description.

    ``n_marks`` is ``None`` for a markless (intensity-only) policy;
    ``n_feedback_marks`` is the size of the feedback-mark vocabulary (0 when
    feedback carries no mark).
    """

    d_in: int
    d_hidden: int
    n_marks: Optional[int]
    n_feedback_marks: int
    tensors: dict
    freeze_w_t: bool = False
    base_rate: float = 1.0

    def __post_init__(self):
        shapes = tensor_shapes(self.d_in, self.d_hidden, self.n_marks or 0, self.n_feedback_marks)
        if set(self.tensors) != set(TENSOR_NAMES):
            raise ConfigurationError("tensor set does not match the architecture")
        frozen = {}
        for name in TENSOR_NAMES:
            arr = np.array(self.tensors[name], dtype=float)
            if arr.shape != shapes[name]:
                raise ConfigurationError(f"{name} has shape {arr.shape}, expected {shapes[name]}")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            frozen[name] = arr
        if self.freeze_w_t and frozen["w_t"] != 0.0:
            raise ConfigurationError("freeze_w_t requires w_t == 0")
        object.__setattr__(self, "tensors", frozen)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def marked(self) -> bool:
        return self.n_marks is not None

    def replace(self, tensors: dict) -> "PolicyParams":
        return PolicyParams(
            self.d_in, self.d_hidden, self.n_marks, self.n_feedback_marks,
            tensors, self.freeze_w_t, self.base_rate,
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.tensors[n].ravel() for n in TENSOR_NAMES])

    def from_flat(self, vec: np.ndarray) -> "PolicyParams":
        out, k = {}, 0
        for n in TENSOR_NAMES:
            shape = self.tensors[n].shape
            size = int(np.prod(shape))
            out[n] = np.asarray(vec[k:k + size]).reshape(shape)
            k += size
        return self.replace(out)

    def zeros(self) -> dict:
        return {n: np.zeros_like(a) for n, a in self.tensors.items()}


def init_params(
    d_in: int,
    d_hidden: int,
    n_marks: Optional[int],
    seed: int,
    init_scale: float,
    *,
    n_feedback_marks: int = 0,
    base_rate: float = 1.0,
    freeze_w_t: bool = False,
) -> PolicyParams:
    """Uniform ``[-init_scale, init_scale]`` weights with ``b_lam = log(base_rate)``."""
    if d_in < 1 or d_hidden < 1:
        raise ConfigurationError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    shapes = tensor_shapes(d_in, d_hidden, n_marks or 0, n_feedback_marks)
    tensors = {n: rng.uniform(-init_scale, init_scale, size=shapes[n]) for n in TENSOR_NAMES}
    tensors["b_lam"] = np.array(math.log(base_rate))
    if freeze_w_t:
        tensors["w_t"] = np.array(0.0)
    return PolicyParams(d_in, d_hidden, n_marks, n_feedback_marks, tensors, freeze_w_t, base_rate)


@dataclass(frozen=True)
class HiddenState:
    h: np.ndarray
    t_last_action: float = 0.0


def initial_state(params: PolicyParams) -> HiddenState:
    return HiddenState(np.zeros(params.d_hidden), 0.0)


def step_hidden(params: PolicyParams, state: HiddenState, event: Event, prev_time: float) -> HiddenState:
    if event.time < prev_time:
        raise PreconditionError(f"event at {event.time} precedes previous event at {prev_time}")
    P = params.tensors
    tau = P["W_t"] * (event.time - prev_time) + P["b_t"]
    e = float(event.kind)
    kind = P["W_a"] * (1.0 - e) + P["W_f"] * e + P["b_b"]
    pre = P["W_h"] @ state.h + P["W_1"] @ tau + P["W_4"] @ kind + P["b_h"]
    if event.mark is not None:
        if event.is_action and params.marked:
            pre = pre + P["W_2"] @ (P["W_y"][:, event.mark] + P["b_y"])
        elif not event.is_action and params.n_feedback_marks:
            pre = pre + P["W_3"] @ (P["W_z"][:, event.mark] + P["b_z"])
    t_last = event.time if event.is_action else state.t_last_action
    return HiddenState(np.tanh(pre), t_last)


def intensity_segment(params: PolicyParams, state: HiddenState, at_time: float) -> IntensitySegment:
    """Current intensity, referenced at ``at_time``."""
    if at_time < state.t_last_action:
        raise PreconditionError("query time precedes the last action")
    w = float(params["w_t"])
    log_c = float(params["b_lam"]) + float(params["V_lam"] @ state.h) + w * (at_time - state.t_last_action)
    return IntensitySegment(math.exp(log_c), w, at_time)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=-1, keepdims=True)


def mark_pmf(params: PolicyParams, state: HiddenState) -> MarkPmf:
    if not params.marked:
        raise ConfigurationError("policy has no mark head")
    return MarkPmf(_softmax(params["V_y"] @ state.h))


class _Fused:
    """Per-snapshot products that turn one hidden update into a single matvec."""

    def __init__(self, params: PolicyParams):
        P = params.tensors
        self.W_h = P["W_h"]
        self.dt = P["W_1"] @ P["W_t"]
        self.base = P["W_1"] @ P["b_t"] + P["b_h"]
        self.ymap = P["W_2"] @ (P["W_y"] + P["b_y"][:, None])
        self.zmap = P["W_3"] @ (P["W_z"] + P["b_z"][:, None])
        self.kind = (P["W_4"] @ (P["W_a"] + P["b_b"]), P["W_4"] @ (P["W_f"] + P["b_b"]))
        self.marked = params.marked
        self.n_feedback = params.n_feedback_marks

    def pre(self, h, dt, kind, mark):
        out = self.W_h @ h + self.dt * dt + self.base + self.kind[kind]
        if mark is not None:
            if kind == Kind.ACTION and self.marked:
                out = out + self.ymap[:, mark]
            elif kind == Kind.FEEDBACK and self.n_feedback:
                out = out + self.zmap[:, mark]
        return out


class RNNPolicy:
    """Episode-confined driver of a parameter snapshot (the sampler's policy view)."""

    def __init__(self, params: PolicyParams):
        self.params = params
        self._fused = _Fused(params)
        self._b_lam = float(params["b_lam"])
        self._v_lam = params["V_lam"]
        self._w = float(params["w_t"])
        self.reset()

    def reset(self):
        self.h = np.zeros(self.params.d_hidden)
        self.t_last_action = 0.0
        self.t_last_event = 0.0

    @property
    def state(self) -> HiddenState:
        return HiddenState(self.h.copy(), self.t_last_action)

    def observe(self, event: Event) -> None:
        dt = event.time - self.t_last_event
        self.h = np.tanh(self._fused.pre(self.h, dt, event.kind, event.mark))
        self.t_last_event = event.time
        if event.is_action:
            self.t_last_action = event.time

    def segment(self, at_time: float) -> IntensitySegment:
        log_c = self._b_lam + float(self._v_lam @ self.h) + self._w * (at_time - self.t_last_action)
        return IntensitySegment(math.exp(log_c), self._w, at_time)

    def sample_mark(self, rng: np.random.Generator) -> Optional[int]:
        if not self.params.marked:
            return None
        p = _softmax(self.params["V_y"] @ self.h)
        return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), len(p) - 1))


@dataclass(frozen=True)
class RegularizerSpec:
    quadratic: bool = True
    entropy: bool = True


@dataclass
class GradientBundle:
    """Values and parameter gradients of the three per-episode quantities.

    ``log_lik`` is the action log-likelihood, ``int_quad`` the integral of the
    squared intensity and ``int_entropy`` the integral of the mark entropy.
    """

    log_lik: float
    int_quad: float
    int_entropy: float
    d_log_lik: dict = field(repr=False)
    d_quad: dict = field(repr=False)
    d_entropy: dict = field(repr=False)


def _e1(x):
    """(e^x - 1)/x, elementwise."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + 0.5 * x, np.expm1(safe) / safe)


def _e2(x):
    """Integral of v * e^{x v} over [0, 1], elementwise."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.5
    safe = np.where(small, 1.0, x)
    with np.errstate(over="ignore", invalid="ignore"):
        direct = (np.exp(safe) * (safe - 1.0) + 1.0) / (safe * safe)
    series = np.zeros_like(x)
    term = np.ones_like(x)  # x^k / k!
    for k in range(18):
        series = series + term / (k + 2)
        term = term * x / (k + 1)
    return np.where(small, series, direct)


def exp_interval_integrals(log_scale, w, d0, d1):
    """Integrals of ``e^{log_scale + w s}`` and ``s e^{log_scale + w s}`` over ``[d0, d1]``."""
    delta = d1 - d0
    x = w * delta
    with np.errstate(over="ignore"):
        start = np.exp(log_scale + w * d0)
    e1 = _e1(x)
    mass = start * delta * e1
    moment = start * (d0 * delta * e1 + delta * delta * _e2(x))
    return mass, moment


def episode_backward(
    params: PolicyParams, history: EpisodeHistory, spec: RegularizerSpec = RegularizerSpec()
) -> GradientBundle:
    """Exact gradients of log-likelihood, integral of lambda^2 and integral of mark entropy."""
    P = params.tensors
    fused = _Fused(params)
    events = history.events
    n = len(events)
    D = params.d_hidden
    w = float(P["w_t"])

    times = np.empty(n + 2)
    times[0] = 0.0
    times[1:n + 1] = [e.time for e in events]
    times[n + 1] = history.horizon
    kinds = np.array([int(e.kind) for e in events], dtype=int)
    is_action = kinds == Kind.ACTION

    H = np.zeros((n + 1, D))
    a_ref = np.zeros(n + 1)
    for j, ev in enumerate(events, start=1):
        H[j] = np.tanh(fused.pre(H[j - 1], times[j] - times[j - 1], ev.kind, ev.mark))
        a_ref[j] = ev.time if ev.is_action else a_ref[j - 1]

    # interval j spans [times[j], times[j+1]] with hidden state H[j]
    u = float(P["b_lam"]) + H @ P["V_lam"]
    d0 = times[:n + 1] - a_ref
    d1 = times[1:] - a_ref
    delta = d1 - d0
    mass, moment = exp_interval_integrals(u, w, d0, d1)
    qmass, qmoment = exp_interval_integrals(2.0 * u, 2.0 * w, d0, d1)

    act_next = np.zeros(n + 1, dtype=bool)
    act_next[:n] = is_action

    du = np.zeros((3, n + 1))
    dw = np.zeros(3)
    log_lik = float(np.sum(u[act_next] + w * d1[act_next]) - mass.sum())
    du[0] = act_next - mass
    dw[0] = float(d1[act_next].sum() - moment.sum())
    int_quad = float(qmass.sum()) if spec.quadratic else 0.0
    if spec.quadratic:
        du[1] = 2.0 * qmass
        dw[1] = 2.0 * float(qmoment.sum())

    dh_direct = du[:, :, None] * P["V_lam"][None, None, :]
    int_entropy = 0.0
    dlogits = None
    if params.marked:
        K = params.n_marks
        logits = H @ P["V_y"].T
        z = logits - logits.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp)
        dlogits = np.zeros((3, n + 1, K))
        for j in np.flatnonzero(act_next):
            mark = events[j].mark
            if mark is None:
                continue
            log_lik += float(logp[j, mark])
            dlogits[0, j] = -p[j]
            dlogits[0, j, mark] += 1.0
        if spec.entropy:
            ent = -(p * logp).sum(axis=1)
            int_entropy = float(ent @ delta)
            dlogits[2] = -delta[:, None] * p * (logp + ent[:, None])
        dh_direct = dh_direct + dlogits @ P["V_y"]

    # reverse sweep through the recursion, three objectives at once
    da = np.zeros((n + 1, 3, D))
    carry = np.zeros((3, D))
    W_h = P["W_h"]
    for j in range(n, 0, -1):
        da[j] = (dh_direct[:, j] + carry) * (1.0 - H[j] * H[j])
        carry = da[j] @ W_h
    dts = np.diff(times[:n + 1])
    da_ev = da[1:]

    g = {name: np.zeros((3,) + P[name].shape) for name in TENSOR_NAMES}
    g["W_h"] = np.einsum("jcd,je->cde", da_ev, H[:-1])
    g["V_lam"] = np.einsum("cj,jd->cd", du, H)
    g["b_lam"] = du.sum(axis=1)
    g["w_t"] = dw.copy()
    if params.freeze_w_t:
        g["w_t"][:] = 0.0
    if dlogits is not None:
        g["V_y"] = np.einsum("cjk,jd->ckd", dlogits, H)

    d_dt = np.einsum("jcd,j->cd", da_ev, dts)
    d_base = da_ev.sum(axis=0)
    d_kind = np.zeros((2, 3, D))
    for k in (0, 1):
        sel = kinds == k
        if sel.any():
            d_kind[k] = da_ev[sel].sum(axis=0)
    d_ymap = np.zeros((3, D, params.n_marks or 0))
    d_zmap = np.zeros((3, D, params.n_feedback_marks))
    for j, ev in enumerate(events):
        if ev.mark is None:
            continue
        if ev.is_action and params.marked:
            d_ymap[:, :, ev.mark] += da_ev[j]
        elif not ev.is_action and params.n_feedback_marks:
            d_zmap[:, :, ev.mark] += da_ev[j]

    W_1, W_2, W_3, W_4 = P["W_1"], P["W_2"], P["W_3"], P["W_4"]
    g["W_1"] = np.einsum("cd,i->cdi", d_dt, P["W_t"]) + np.einsum("cd,i->cdi", d_base, P["b_t"])
    g["W_t"] = d_dt @ W_1
    g["b_t"] = d_base @ W_1
    g["b_h"] = d_base
    ky = P["W_y"] + P["b_y"][:, None]
    g["W_2"] = np.einsum("cdk,ik->cdi", d_ymap, ky)
    g["W_y"] = np.einsum("di,cdk->cik", W_2, d_ymap)
    g["b_y"] = g["W_y"].sum(axis=2)
    kz = P["W_z"] + P["b_z"][:, None]
    g["W_3"] = np.einsum("cdk,ik->cdi", d_zmap, kz)
    g["W_z"] = np.einsum("di,cdk->cik", W_3, d_zmap)
    g["b_z"] = g["W_z"].sum(axis=2)
    g["W_4"] = np.einsum("cd,i->cdi", d_kind[0], P["W_a"] + P["b_b"]) + np.einsum(
        "cd,i->cdi", d_kind[1], P["W_f"] + P["b_b"]
    )
    g["W_a"] = d_kind[0] @ W_4
    g["W_f"] = d_kind[1] @ W_4
    g["b_b"] = g["W_a"] + g["W_f"]

    for name in TENSOR_NAMES:
        if not np.all(np.isfinite(g[name])):
            raise FloatingPointError(f"non-finite gradient for {name}")
    if not all(map(math.isfinite, (log_lik, int_quad, int_entropy))):
        raise FloatingPointError("non-finite episode integral (intensity overflow via b_lam/V_lam/w_t)")

    split = [{name: g[name][c] for name in TENSOR_NAMES} for c in range(3)]
    return GradientBundle(log_lik, int_quad, int_entropy, *split)


def save_checkpoint(params: PolicyParams, path, **meta) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "d_in": params.d_in,
        "d_hidden": params.d_hidden,
        "n_marks": params.n_marks,
        "n_feedback_marks": params.n_feedback_marks,
        "freeze_w_t": params.freeze_w_t,
        "base_rate": params.base_rate,
        "meta": meta,
    }
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **params.tensors)


def load_checkpoint(path) -> PolicyParams:
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["__header__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint version {header.get('version')}")
        tensors = {n: data[n].copy() for n in TENSOR_NAMES}
    return PolicyParams(
        header["d_in"], header["d_hidden"], header["n_marks"], header["n_feedback_marks"],
        tensors, header["freeze_w_t"], header["base_rate"],
    )
