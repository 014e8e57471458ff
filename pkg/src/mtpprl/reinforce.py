"""Batch REINFORCE with intensity/mark regularizers, Adam ascent, rollouts and evaluation."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .core import EpisodeHistory, Event, action
from .policy import (
    TENSOR_NAMES,
    GradientBundle,
    PolicyParams,
    RegularizerSpec,
    RNNPolicy,
    episode_backward,
    save_checkpoint,
)
from .sampler import next_action

log = logging.getLogger(__name__)


class Environment(Protocol):
    """Episode contract seen by the trainer; the feedback law stays a black box."""

    horizon: float

    def reset(self, rng: np.random.Generator) -> None: ...

    def peek_feedback(self) -> float: ...

    def pop_feedback(self) -> Event: ...

    def on_action(self, event: Event) -> None: ...

    def reward(self) -> float: ...


class Agent(Protocol):
    def observe(self, event: Event) -> None: ...

    def segment(self, at_time: float): ...

    def sample_mark(self, rng: np.random.Generator) -> Optional[int]: ...


class RolloutError(RuntimeError):
    pass


@dataclass(frozen=True)
class LRSchedule:
    """``base / (1 + decay * i)``."""

    base: float
    decay: float = 0.0

    def __call__(self, i: int) -> float:
        return self.base / (1.0 + self.decay * i)


@dataclass(frozen=True)
class TrainConfig:
    n_iterations: int
    n_episodes: int
    lr: LRSchedule = LRSchedule(0.02, 2e-3)
    q_l: float = 0.0
    q_m: float = 0.0
    seed: int = 0
    use_mean_baseline: bool = False
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    workers: int = 1
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.n_iterations < 0 or self.n_episodes < 1:
            raise ValueError("need n_iterations >= 0 and n_episodes >= 1")
        if self.q_l < 0 or self.q_m < 0:
            raise ValueError("regularizer coefficients must be nonnegative")
        if not (self.lr.base > 0 and self.lr.decay >= 0):
            raise ValueError("learning rate must stay positive")


@dataclass
class EpisodeResult:
    history: EpisodeHistory
    reward: float
    bundle: Optional[GradientBundle] = None

    @property
    def n_actions(self) -> int:
        return len(self.history.actions)


@dataclass
class TrainingStats:
    iteration: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)
    mean_actions: list = field(default_factory=list)
    penalized_objective: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)

    COLUMNS = ("iteration", "mean_reward", "mean_actions", "penalized_objective", "grad_norm")

    def append(self, **row):
        for k in self.COLUMNS:
            getattr(self, k).append(row[k])

    def __len__(self):
        return len(self.iteration)

    def rows(self):
        return [dict(zip(self.COLUMNS, vals)) for vals in zip(*(getattr(self, k) for k in self.COLUMNS))]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            writer.writeheader()
            for row in self.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def episode_rngs(seed: int, iteration: int, episode: int):
    """Independent (agent, environment) Philox streams keyed by run coordinates."""
    ss = np.random.SeedSequence([seed, iteration, episode])
    a, e = ss.spawn(2)
    return np.random.Generator(np.random.Philox(a)), np.random.Generator(np.random.Philox(e))


def run_episode(env: Environment, agent: Agent, agent_rng, env_rng) -> tuple[EpisodeHistory, float]:
    """Roll one episode: sample actions, interleave feedback, collect the terminal reward."""
    env.reset(env_rng)
    T = env.horizon
    events: list[Event] = []
    t = 0.0
    while True:
        out = next_action(agent, env, t, T, agent_rng, on_feedback=events.append)
        if out.extinct:
            break
        t = out.time
        ev = action(t, agent.sample_mark(agent_rng))
        events.append(ev)
        agent.observe(ev)
        env.on_action(ev)
    return EpisodeHistory(tuple(events), T), float(env.reward())


@dataclass(frozen=True)
class policy_agent:
    """Agent factory for a fixed parameter snapshot."""

    params: PolicyParams

    def __call__(self, env) -> RNNPolicy:
        return RNNPolicy(self.params)


def _rollout_job(args):
    env, params, seed, iteration, episode, spec = args
    a_rng, e_rng = episode_rngs(seed, iteration, episode)
    try:
        hist, reward = run_episode(env, RNNPolicy(params), a_rng, e_rng)
    except Exception as exc:  # noqa: BLE001 - rethrown with context
        raise RolloutError(f"episode {episode} of iteration {iteration} failed: {exc}") from exc
    return EpisodeResult(hist, reward, episode_backward(params, hist, spec))


def rollout_batch(env, params, seed, iteration, n, spec, pool=None) -> list[EpisodeResult]:
    jobs = [(env, params, seed, iteration, k, spec) for k in range(n)]
    if pool is None:
        return [_rollout_job(j) for j in jobs]
    return list(pool.map(_rollout_job, jobs))


def penalized_rewards(batch: Sequence[EpisodeResult], q_l: float, q_m: float) -> np.ndarray:
    return np.array([r.reward - q_l * r.bundle.int_quad - q_m * r.bundle.int_entropy for r in batch])


def estimate_gradient(
    batch: Sequence[EpisodeResult], q_l: float, q_m: float, use_mean_baseline: bool = False
) -> dict:
    """Batch-mean score-function gradient of the penalized reward (ascent direction)."""
    if not batch:
        raise ValueError("empty batch")
    pen = penalized_rewards(batch, q_l, q_m)
    if use_mean_baseline and len(pen) > 1:
        # leave-one-out mean keeps the baseline independent of each episode's own score
        pen = (pen - pen.mean()) * len(pen) / (len(pen) - 1)
    out = {n: np.zeros_like(batch[0].bundle.d_log_lik[n]) for n in TENSOR_NAMES}
    for weight, res in zip(pen, batch):
        b = res.bundle
        for n in TENSOR_NAMES:
            out[n] += weight * b.d_log_lik[n] - q_l * b.d_quad[n] - q_m * b.d_entropy[n]
    for n in TENSOR_NAMES:
        out[n] /= len(batch)
    return out


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params: PolicyParams) -> "AdamState":
        return cls(params.zeros(), params.zeros(), 0)


def adam_step(
    params: PolicyParams,
    grad: dict,
    state: AdamState,
    iteration: int,
    lr: Callable[[int], float],
    betas=(0.9, 0.999),
    eps: float = 1e-8,
) -> tuple[PolicyParams, AdamState]:
    """One Adam ascent step with step size ``lr(iteration)``."""
    for n in TENSOR_NAMES:
        if not np.all(np.isfinite(grad[n])):
            raise FloatingPointError(f"non-finite gradient for {n} at iteration {iteration}")
    b1, b2 = betas
    t = state.t + 1
    step = lr(iteration)
    new_p, new_m, new_v = {}, {}, {}
    for n in TENSOR_NAMES:
        g = grad[n]
        if n == "w_t" and params.freeze_w_t:
            g = np.zeros_like(g)
        m = b1 * state.m[n] + (1 - b1) * g
        v = b2 * state.v[n] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p[n] = params[n] + step * m_hat / (np.sqrt(v_hat) + eps)
        new_m[n], new_v[n] = m, v
    return params.replace(new_p), AdamState(new_m, new_v, t)


def _grad_norm(grad: dict) -> float:
    return float(math.sqrt(sum(float(np.sum(g * g)) for g in grad.values())))


def train(
    env: Environment,
    params: PolicyParams,
    config: TrainConfig,
    *,
    spec: RegularizerSpec = RegularizerSpec(),
    checkpoint_dir=None,
    stats_path=None,
    progress: Optional[Callable[[int, dict], None]] = None,
) -> tuple[PolicyParams, TrainingStats]:
    """Run ``n_iterations`` batches of rollouts, each followed by one Adam step."""
    stats = TrainingStats()
    adam = AdamState.zeros(params)
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    csv_fh = None
    if stats_path is not None:
        csv_fh = open(stats_path, "w", newline="")
        writer = csv.DictWriter(csv_fh, fieldnames=TrainingStats.COLUMNS)
        writer.writeheader()
    try:
        for i in range(config.n_iterations):
            batch = rollout_batch(env, params, config.seed, i, config.n_episodes, spec, pool)
            grad = estimate_gradient(batch, config.q_l, config.q_m, config.use_mean_baseline)
            row = dict(
                iteration=i,
                mean_reward=float(np.mean([r.reward for r in batch])),
                mean_actions=float(np.mean([r.n_actions for r in batch])),
                penalized_objective=float(penalized_rewards(batch, config.q_l, config.q_m).mean()),
                grad_norm=_grad_norm(grad),
            )
            params, adam = adam_step(params, grad, adam, i, config.lr, config.adam_betas, config.adam_eps)
            stats.append(**row)
            if csv_fh is not None:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
                csv_fh.flush()
            if progress is not None:
                progress(i, row)
            if checkpoint_dir is not None and config.checkpoint_every and (i + 1) % config.checkpoint_every == 0:
                save_checkpoint(params, Path(checkpoint_dir) / f"ckpt-{i + 1:06d}.npz", iteration=i + 1)
    finally:
        if pool is not None:
            pool.shutdown()
        if csv_fh is not None:
            csv_fh.close()
    return params, stats


def _eval_job(args):
    env, make_agent, seed, k = args
    a_rng, e_rng = episode_rngs(seed, 0, k)
    hist, reward = run_episode(env, make_agent(env), a_rng, e_rng)
    return EpisodeResult(hist, reward)


def evaluate_episodes(env, make_agent, n_episodes: int, seed: int, workers: int = 1) -> list[EpisodeResult]:
    jobs = [(env, make_agent, seed, k) for k in range(n_episodes)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_eval_job, jobs))
    return [_eval_job(j) for j in jobs]


def summarize(values) -> dict:
    x = np.asarray(values, dtype=float)
    q25, med, q75 = np.percentile(x, [25, 50, 75])
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return {"mean": float(x.mean()), "median": float(med), "q25": float(q25), "q75": float(q75),
            "std": float(x.std(ddof=1)) if len(x) > 1 else 0.0, "se": se, "n": int(len(x))}


def evaluate(env, make_agent, n_episodes: int, seed: int, workers: int = 1) -> dict:
    """Summary statistics of reward and action count over seeded test episodes.

    ``make_agent`` maps the environment to a fresh per-episode agent, e.g.
    ``policy_agent(params)`` or a baseline scheduler factory.
    """
    results = evaluate_episodes(env, make_agent, n_episodes, seed, workers)
    return {
        "reward": summarize([r.reward for r in results]),
        "actions": summarize([r.n_actions for r in results]),
        "rewards": [r.reward for r in results],
        "counts": [r.n_actions for r in results],
    }


def stats_summary(stats: TrainingStats, tail: int = 50) -> dict:
    if not len(stats):
        return {"iterations": 0}
    k = min(tail, len(stats))
    return {
        "iterations": len(stats),
        "final_mean_reward": float(np.mean(stats.mean_reward[-k:])),
        "final_mean_actions": float(np.mean(stats.mean_actions[-k:])),
        "final_penalized_objective": float(np.mean(stats.penalized_objective[-k:])),
    }


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(type(o))
