"""Smart-broadcasting environment: one follower wall, replayed competitor posts.

The agent's visibility is the rank ``r(t)`` of its most recent post, i.e. the
number of competitor posts shown above it. Two wall orderings are supported:

* reverse chronological (newest first);
* a priority queue: posts younger than ``dwell`` form a top section ordered
  by poster priority (equal priorities newest first), older posts form a
  reverse-chronological bulk section underneath.

Rank is piecewise constant, so both rewards are computed exactly by
evaluating the rank once inside each interval between change points (posts
and the moments posts age out of the top section).

At episode start the agent is treated as having just posted (rank 0).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core import Event, PreconditionError, feedback

AGENT = "__agent__"


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class ReverseChrono:
    pass


@dataclass(frozen=True)
class PriorityQueue:
    dwell: float

    def __post_init__(self):
        if self.dwell < 0:
            raise ValueError("dwell must be nonnegative")


@dataclass(frozen=True)
class Post:
    time: float
    source: str
    priority: float = 0.0


def _dwell(rule) -> Optional[float]:
    return rule.dwell if isinstance(rule, PriorityQueue) else None


def ranks_at(xs, agent_times, comp_times, comp_prio, agent_prio, rule) -> np.ndarray:
    """Rank of the agent's latest post at each query time in ``xs``.

    ``agent_times`` must be sorted and start at or before ``min(xs)``;
    ``comp_times`` sorted with matching ``comp_prio``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    agent_times = np.asarray(agent_times, dtype=float)
    comp_times = np.asarray(comp_times, dtype=float)
    idx = np.searchsorted(agent_times, xs, side="right") - 1
    if np.any(idx < 0):
        raise PreconditionError("rank queried before the agent's first post")
    last = agent_times[idx]
    dwell = _dwell(rule)
    if dwell is None or dwell == 0 or len(comp_times) == 0:
        newer = np.searchsorted(comp_times, xs, side="right") - np.searchsorted(comp_times, last, side="right")
        return newer.astype(int)
    prio = np.asarray(comp_prio, dtype=float)[None, :]
    C = comp_times[None, :]
    X = xs[:, None]
    A = last[:, None]
    present = C <= X
    top = present & (C > X - dwell)
    agent_top = (xs - last) < dwell
    above_top = top & ((prio > agent_prio) | ((prio == agent_prio) & (C > A)))
    above_bulk = top | (present & (C > A))
    return np.where(agent_top, above_top.sum(axis=1), above_bulk.sum(axis=1)).astype(int)


def rank_chrono_at(xs, agent_times, comp_times) -> np.ndarray:
    return ranks_at(xs, agent_times, comp_times, None, 0.0, ReverseChrono())


def rank_trace(agent_times, comp_times, comp_prio, agent_prio, rule, horizon, probes=()):
    """Change points and constant rank values of ``r(t)`` over ``[0, horizon]``.

    Returns ``(edges, values)`` where ``values[k]`` holds on
    ``[edges[k], edges[k+1])``. ``probes`` adds extra (no-op) split points.
    """
    agent_times = np.asarray(agent_times, dtype=float)
    comp_times = np.asarray(comp_times, dtype=float)
    pts = [np.array([0.0, horizon]), agent_times, comp_times, np.asarray(probes, dtype=float)]
    dwell = _dwell(rule)
    if dwell:
        pts += [agent_times + dwell, comp_times + dwell]
    edges = np.unique(np.clip(np.concatenate(pts), 0.0, horizon))
    if len(edges) < 2:
        return edges, np.zeros(0, dtype=int)
    mids = 0.5 * (edges[:-1] + edges[1:])
    return edges, ranks_at(mids, agent_times, comp_times, comp_prio, agent_prio, rule)


def integral_rank(edges, values) -> float:
    return float(np.dot(np.diff(edges), values))


def integral_top(edges, values) -> float:
    return float(np.dot(np.diff(edges), values < 1))


def reward_rank(agent_times, comp_times, comp_prio, agent_prio, rule, horizon, probes=()) -> float:
    """Integral of the rank over ``[0, horizon]`` (lower is better)."""
    return integral_rank(*rank_trace(agent_times, comp_times, comp_prio, agent_prio, rule, horizon, probes))


def reward_time_at_top(agent_times, comp_times, comp_prio, agent_prio, rule, horizon, probes=()) -> float:
    """Total time the agent's latest post holds rank 0."""
    return integral_top(*rank_trace(agent_times, comp_times, comp_prio, agent_prio, rule, horizon, probes))


@dataclass
class FeedState:
    """Incrementally built wall of one follower."""

    rule: object
    agent_priority: float = 0.0
    agent_times: list = field(default_factory=lambda: [0.0])
    comp_times: list = field(default_factory=list)
    comp_prio: list = field(default_factory=list)

    def add_competitor(self, t: float, priority: float) -> None:
        self.comp_times.append(t)
        self.comp_prio.append(priority)

    def add_agent(self, t: float) -> None:
        self.agent_times.append(t)

    def rank(self, t: float, chrono: bool = False) -> int:
        rule = ReverseChrono() if chrono else self.rule
        return int(ranks_at([t], self.agent_times, self.comp_times, self.comp_prio, self.agent_priority, rule)[0])

    def profile(self, t: float, chrono: bool = False):
        """Rank from ``t`` onwards assuming no new posts: ``(starts, values)``."""
        rule = ReverseChrono() if chrono else self.rule
        dwell = _dwell(rule)
        starts = [t]
        if dwell:
            ages = np.concatenate([np.asarray(self.comp_times), [self.agent_times[-1]]]) + dwell
            starts += sorted(set(float(a) for a in ages if a > t))
        starts = np.array(starts)
        # evaluate just inside each piece; the last piece is unbounded
        probe = np.append(0.5 * (starts[:-1] + starts[1:]), starts[-1] + 1.0)
        vals = ranks_at(probe, self.agent_times, self.comp_times, self.comp_prio, self.agent_priority, rule)
        return starts, vals


@dataclass(frozen=True)
class ReplayLog:
    """Competitor posts ``(time, source)`` with train/test windows."""

    times: np.ndarray
    sources: tuple
    train: tuple = (0.0, 0.0)
    test: tuple = (0.0, 0.0)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sources", tuple(self.sources))
        if len(t) != len(self.sources):
            raise IngestionError("times and sources differ in length")
        if np.any(np.diff(t) < 0):
            raise IngestionError("replay log times must be sorted")

    def __len__(self):
        return len(self.times)

    def window(self, start: float, end: float) -> tuple[np.ndarray, tuple]:
        """Posts in ``[start, end)`` shifted so the window starts at zero."""
        lo, hi = np.searchsorted(self.times, [start, end], side="left")
        return self.times[lo:hi] - start, self.sources[lo:hi]

    def source_names(self) -> list:
        return sorted(set(self.sources))

    def counts(self, start: float, end: float) -> dict:
        _, src = self.window(start, end)
        out = {s: 0 for s in self.source_names()}
        for s in src:
            out[s] += 1
        return out

    def write(self, path, manifest_path=None) -> None:
        with open(path, "w") as fh:
            for t, s in zip(self.times, self.sources):
                fh.write(json.dumps({"t": float(t), "src": s}) + "\n")
        if manifest_path is not None:
            Path(manifest_path).write_text(json.dumps(self.manifest(), sort_keys=True) + "\n")

    def manifest(self) -> dict:
        if self.train == (0.0, 0.0) and self.test == (0.0, 0.0):
            return {}
        return {"train": list(self.train), "test": list(self.test)}

    @classmethod
    def read(cls, path, manifest_path=None) -> "ReplayLog":
        times, sources = [], []
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise IngestionError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
                if not isinstance(rec, dict) or set(rec) != {"t", "src"}:
                    raise IngestionError(f"{path}:{lineno}: expected exactly the fields 't' and 'src'")
                t, s = rec["t"], rec["src"]
                if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t < 0:
                    raise IngestionError(f"{path}:{lineno}: 't' must be a finite nonnegative number")
                if not isinstance(s, str):
                    raise IngestionError(f"{path}:{lineno}: 'src' must be a string")
                if times and t < times[-1]:
                    raise IngestionError(f"{path}:{lineno}: records not sorted by 't'")
                times.append(float(t))
                sources.append(s)
        train = test = (0.0, 0.0)
        if manifest_path is not None:
            man = json.loads(Path(manifest_path).read_text())
            if man:
                if set(man) != {"train", "test"}:
                    raise IngestionError(f"{manifest_path}: expected exactly 'train' and 'test'")
                train, test = tuple(map(float, man["train"])), tuple(map(float, man["test"]))
        return cls(np.array(times), tuple(sources), train, test)


@dataclass(frozen=True)
class CompetitorSpec:
    """Synthetic competitor: homogeneous Poisson ``rate`` plus optional scripted ``bursts``."""

    name: str
    rate: float = 0.0
    bursts: tuple = ()


def synth_competitors(specs: Sequence[CompetitorSpec], horizon: float, seed: int) -> ReplayLog:
    rng = np.random.default_rng(seed)
    recs = []
    for spec in specs:
        if spec.rate < 0:
            raise ValueError("competitor rate must be nonnegative")
        n = rng.poisson(spec.rate * horizon)
        recs += [(float(t), spec.name) for t in rng.uniform(0.0, horizon, n)]
        recs += [(float(t), spec.name) for t in spec.bursts if 0 <= t < horizon]
    recs.sort()
    return ReplayLog(np.array([r[0] for r in recs]), tuple(r[1] for r in recs), (0.0, horizon), (0.0, 0.0))


def activity_priorities(counts: dict) -> dict:
    """Priority decreasing in activity: ``1/(1+count)`` rescaled to ``[0, 1]``."""
    if not counts:
        return {}
    raw = {s: 1.0 / (1.0 + c) for s, c in counts.items()}
    lo, hi = min(raw.values()), max(raw.values())
    if hi == lo:
        return {s: 1.0 for s in raw}
    return {s: (v - lo) / (hi - lo) for s, v in raw.items()}


@dataclass
class BroadcastEnv:
    """Replays competitor posts on one wall and scores the agent's visibility.

    Episodes draw a window of length ``horizon`` either uniformly from the
    log's training range (``mode="train"``), take the fixed test window
    (``mode="test"``), or synthesize fresh competitors from ``competitors``
    (``mode="synthetic"``). ``reward_kind`` is ``"rank"`` (returns minus the
    rank integral) or ``"top"`` (time at the top).
    """

    horizon: float
    rule: object = field(default_factory=ReverseChrono)
    reward_kind: str = "rank"
    log: Optional[ReplayLog] = None
    mode: str = "train"
    competitors: tuple = ()
    priorities: Optional[dict] = None

    n_marks = None

    def __post_init__(self):
        if self.reward_kind not in ("rank", "top"):
            raise ValueError(f"unknown reward {self.reward_kind!r}")
        if self.mode not in ("train", "test", "synthetic"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "synthetic":
            if not self.competitors:
                raise ValueError("synthetic mode needs competitor specs")
            self.competitors = tuple(self.competitors)
            names = sorted(c.name for c in self.competitors)
            counts = {c.name: c.rate * self.horizon + len(c.bursts) for c in self.competitors}
        else:
            if self.log is None:
                raise ValueError("replay modes need a log")
            names = self.log.source_names()
            counts = self.log.counts(*self.log.train)
        self.sources = names
        self._index = {s: i for i, s in enumerate(names)}
        if self.priorities is None:
            self.priorities = activity_priorities(counts)
        prio = sorted(self.priorities.values())
        self.agent_priority = float(np.median(prio)) if prio else 0.0
        self._window = (np.zeros(0), ())
        self.feed = FeedState(self.rule, self.agent_priority)
        self._k = 0

    @property
    def n_feedback_marks(self) -> int:
        return len(self.sources) + 1  # last index is "other"

    def source_index(self, src: str) -> int:
        return self._index.get(src, len(self.sources))

    def reset(self, rng: np.random.Generator) -> None:
        if self.mode == "synthetic":
            log = synth_competitors(self.competitors, self.horizon, int(rng.integers(2**63 - 1)))
            times, srcs = log.times, log.sources
        elif self.mode == "test":
            times, srcs = self.log.window(self.log.test[0], self.log.test[0] + self.horizon)
        else:
            lo, hi = self.log.train
            if hi - lo < self.horizon:
                raise ValueError("training range shorter than the episode horizon")
            start = lo + rng.uniform(0.0, hi - lo - self.horizon)
            times, srcs = self.log.window(start, start + self.horizon)
        self.load_window(times, srcs)

    def load_window(self, times, sources) -> None:
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) <= 0):
            # strictly increasing wall times; exact ties nudged forward
            times = times.copy()
            for k in range(1, len(times)):
                if times[k] <= times[k - 1]:
                    times[k] = times[k - 1] + 1e-9
        keep = times < self.horizon
        self._window = (times[keep], tuple(s for s, k in zip(sources, keep) if k))
        self.feed = FeedState(self.rule, self.agent_priority)
        self._k = 0

    def peek_feedback(self) -> float:
        times = self._window[0]
        return times[self._k] if self._k < len(times) else math.inf

    def pop_feedback(self) -> Event:
        t = float(self._window[0][self._k])
        src = self._window[1][self._k]
        self._k += 1
        self.feed.add_competitor(t, self.priorities.get(src, self.agent_priority))
        return feedback(t, self.source_index(src))

    def on_action(self, event: Event) -> None:
        self.feed.add_agent(event.time)

    def competitor_arrays(self):
        times, srcs = self._window
        prio = np.array([self.priorities.get(s, self.agent_priority) for s in srcs])
        return times, prio

    def trace(self, agent_times=None):
        times, prio = self.competitor_arrays()
        agent = self.feed.agent_times if agent_times is None else agent_times
        return rank_trace(agent, times, prio, self.agent_priority, self.rule, self.horizon)

    def reward(self) -> float:
        edges, vals = self.trace()
        if self.reward_kind == "rank":
            return -integral_rank(edges, vals)
        return integral_top(edges, vals)


def replay_episode(times, sources, make_agent, env: BroadcastEnv, seed: int):
    """Replay a fixed competitor window against an agent; returns ``(history, reward)``."""
    from ..reinforce import episode_rngs, run_episode

    fixed = _FixedWindow(env, np.asarray(times, dtype=float), tuple(sources))
    a_rng, e_rng = episode_rngs(seed, 0, 0)
    return run_episode(fixed, make_agent(fixed), a_rng, e_rng)


class _FixedWindow:
    """Wraps an environment so every reset replays the same window."""

    def __init__(self, env: BroadcastEnv, times, sources):
        self._env = env
        self._times = times
        self._sources = sources

    def __getattr__(self, name):
        return getattr(self._env, name)

    def reset(self, rng) -> None:
        self._env.load_window(self._times, self._sources)
