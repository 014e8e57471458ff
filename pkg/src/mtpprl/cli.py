"""Command-line entry point: ``mtpprl <command> ...``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure. Every command that writes artifacts stages them in a scratch
directory and moves them into place only on success.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .baselines import CalibrationError, calibrate_budget, memorize, redqueen, uniform_poisson
from .diagnostics import gradient_check, sample_check
from .envs.broadcast import (
    BroadcastEnv,
    CompetitorSpec,
    IngestionError,
    PriorityQueue,
    ReplayLog,
    ReverseChrono,
)
from .envs.memory import MemoryConfig, MemoryEnv, read_items, synthetic_items
from .envs.toy import PoissonToyEnv
from .policy import ConfigurationError, init_params, load_checkpoint, save_checkpoint
from .reinforce import (
    LRSchedule,
    RolloutError,
    TrainConfig,
    dump_json,
    evaluate,
    evaluate_episodes,
    policy_agent,
    stats_summary,
    train,
)
from .sampler import ConsistencyError

log = logging.getLogger("mtpprl")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
GRAD_TOL = 1e-4
KS_TOL = 0.01


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# Schema with defaults. Per-environment training defaults follow the
# reference settings for each benchmark; ``None`` marks values filled in by ``resolve``.
SCHEMA = {
    "seed": 0,
    "workers": 1,
    "env": {
        "kind": "memory",
        "memory": {
            "n_items": 10, "items_file": "", "items_seed": 0,
            "alpha": 0.5, "beta": 0.2, "horizon": 14.0, "tau_test": 1.0,
        },
        "broadcast": {
            "horizon": 10.0, "rule": "priority", "dwell": None, "reward": "rank",
            "mode": "synthetic", "log": "", "split": "", "competitors": [],
        },
        "toy": {"horizon": 1.0, "reward": "count", "target": 0.0},
    },
    "policy": {
        "d_in": 8, "d_hidden": 8, "init_scale": 0.1, "base_rate": 1.0,
        "freeze_w_t": False, "init_seed": 0,
    },
    "train": {
        "n_iterations": None, "n_episodes": None, "lr_base": None, "lr_decay": None,
        "q_l": None, "q_m": None, "mean_baseline": False, "checkpoint_every": 0,
        "adam_beta1": 0.9, "adam_beta2": 0.999, "adam_eps": 1e-8,
    },
    "eval": {
        "n_episodes": 1000, "seed": 12345, "policy": "trained", "checkpoint": "",
        "budget": 0.0, "calibration_episodes": 200, "normalize": True, "traces": 0,
    },
}

TRAIN_DEFAULTS = {
    "memory": dict(n_iterations=5000, n_episodes=32, lr_base=0.02, lr_decay=2e-3, q_l=1e-2, q_m=5e-3),
    # q_l = 0.33 for time at the top and 100 for average rank
    "broadcast": dict(n_iterations=1000, n_episodes=16, lr_base=1e-2, lr_decay=1e-4, q_l=None, q_m=0.0),
    "toy": dict(n_iterations=1000, n_episodes=32, lr_base=0.05, lr_decay=1e-3, q_l=0.1, q_m=0.0),
}
COMPETITOR_KEYS = {"name", "rate", "bursts"}
POLICIES = ("trained", "uniform", "memorize", "redqueen", "rq-star")


def _merge(schema: dict, given: dict, where: str = "") -> dict:
    out = copy.deepcopy(schema)
    for key, val in given.items():
        path = f"{where}{key}"
        if key not in schema:
            raise ConfigError(f"unknown config key '{path}'")
        if isinstance(schema[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"'{path}' must be a table")
            out[key] = _merge(schema[key], val, path + ".")
        else:
            out[key] = val
    return out


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _apply_override(cfg: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override '{item}' is not key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override '{key}' walks through a non-table")
    node[parts[-1]] = _parse_value(text.strip())


def read_config(path) -> dict:
    """Raw config from a TOML file or from a run manifest (JSON)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        if path.suffix == ".json":
            doc = json.loads(path.read_text())
            return doc["config"] if "config" in doc and "command" in doc else doc
        return tomllib.loads(path.read_text())
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def resolve(raw: dict, overrides=()) -> dict:
    """Strictly merge ``raw`` and ``overrides`` into the schema and fill environment defaults."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        _apply_override(raw, item)
    cfg = _merge(SCHEMA, raw)
    kind = cfg["env"]["kind"]
    if kind not in TRAIN_DEFAULTS:
        raise ConfigError(f"env.kind must be one of {sorted(TRAIN_DEFAULTS)}, got {kind!r}")
    bc = cfg["env"]["broadcast"]
    defaults = dict(TRAIN_DEFAULTS[kind])
    if kind == "broadcast":
        defaults["q_l"] = 0.33 if bc["reward"] == "top" else 100.0
        if bc["dwell"] is None:
            bc["dwell"] = 0.1 * float(bc["horizon"])
    for key, val in defaults.items():
        if cfg["train"][key] is None:
            cfg["train"][key] = val
    for spec in bc["competitors"]:
        if not isinstance(spec, dict) or not set(spec) <= COMPETITOR_KEYS or "name" not in spec:
            raise ConfigError(f"competitor entries take keys {sorted(COMPETITOR_KEYS)} with a name")
    if cfg["eval"]["policy"] not in POLICIES:
        raise ConfigError(f"eval.policy must be one of {POLICIES}")
    _check_types(cfg)
    return cfg


def _check_types(cfg: dict) -> None:
    positive_int = [("train", "n_iterations", 0), ("train", "n_episodes", 1), ("policy", "d_in", 1),
                    ("policy", "d_hidden", 1), ("eval", "n_episodes", 1), ("eval", "calibration_episodes", 1),
                    ("eval", "traces", 0)]
    for sec, key, lo in positive_int:
        v = cfg[sec][key]
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            raise ConfigError(f"{sec}.{key} must be an integer >= {lo}")
    for sec, key in [("train", "q_l"), ("train", "q_m"), ("train", "lr_base"), ("train", "lr_decay")]:
        v = cfg[sec][key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0 or not math.isfinite(v):
            raise ConfigError(f"{sec}.{key} must be a finite nonnegative number")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer")


def build_env(cfg: dict):
    kind = cfg["env"]["kind"]
    try:
        if kind == "memory":
            m = cfg["env"]["memory"]
            if m["items_file"]:
                try:
                    items = read_items(_input(m["items_file"]))
                except ValueError as exc:
                    if isinstance(exc, ConfigError):
                        raise
                    raise DataError(str(exc)) from None
            else:
                items = synthetic_items(m["n_items"], m["items_seed"])
            return MemoryEnv(MemoryConfig(items, m["alpha"], m["beta"], m["horizon"], m["tau_test"]))
        if kind == "toy":
            t = cfg["env"]["toy"]
            return PoissonToyEnv(t["horizon"], t["reward"], t["target"])
        b = cfg["env"]["broadcast"]
        if b["rule"] == "priority":
            rule = PriorityQueue(float(b["dwell"]))
        elif b["rule"] == "chrono":
            rule = ReverseChrono()
        else:
            raise ConfigError("env.broadcast.rule must be 'priority' or 'chrono'")
        replay = None
        if b["mode"] != "synthetic":
            if not b["log"]:
                raise ConfigError("replay modes need env.broadcast.log")
            replay = ReplayLog.read(_input(b["log"]), _input(b["split"]) if b["split"] else None)
        comps = tuple(CompetitorSpec(c["name"], float(c.get("rate", 0.0)), tuple(c.get("bursts", ())))
                      for c in b["competitors"])
        return BroadcastEnv(float(b["horizon"]), rule, b["reward"], replay, b["mode"], comps)
    except (IngestionError, DataError):
        raise
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _input(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input file {p} does not exist")
    return p


def build_params(cfg: dict, env):
    p = cfg["policy"]
    n_marks = getattr(env, "n_marks", None)
    return init_params(p["d_in"], p["d_hidden"], n_marks, p["init_seed"], p["init_scale"],
                       n_feedback_marks=env.n_feedback_marks, base_rate=p["base_rate"],
                       freeze_w_t=p["freeze_w_t"])


def train_config(cfg: dict) -> TrainConfig:
    t = cfg["train"]
    return TrainConfig(
        t["n_iterations"], t["n_episodes"], LRSchedule(float(t["lr_base"]), float(t["lr_decay"])),
        q_l=float(t["q_l"]), q_m=float(t["q_m"]), seed=cfg["seed"], use_mean_baseline=t["mean_baseline"],
        adam_betas=(t["adam_beta1"], t["adam_beta2"]), adam_eps=t["adam_eps"], workers=cfg["workers"],
        checkpoint_every=t["checkpoint_every"],
    )


class Staging:
    """Scratch directory whose contents replace ``out`` files only on success."""

    def __init__(self, out):
        self.out = Path(out)

    def __enter__(self) -> Path:
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.out.mkdir(parents=True, exist_ok=True)
            for item in sorted(self.tmp.iterdir()):
                dest = self.out / item.name
                if dest.is_dir():
                    shutil.rmtree(dest)
                item.replace(dest)
        shutil.rmtree(self.tmp, ignore_errors=True)
        return False


def write_manifest(stage: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    doc = {"command": command, "version": __version__, "config": cfg}
    if extra:
        doc.update(extra)
    dump_json(doc, stage / "run-manifest.json")


def write_episodes(path, result: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "reward", "actions"])
        for k, (r, n) in enumerate(zip(result["rewards"], result["counts"])):
            w.writerow([k, repr(float(r)), n])


def write_traces(path, results) -> None:
    """One JSON line per event: episode index, time, kind and mark."""
    with open(path, "w") as fh:
        for k, res in enumerate(results):
            for e in res.history.events:
                rec = {"episode": k, "t": e.time, "kind": e.kind.name.lower(), "mark": e.mark}
                fh.write(json.dumps(rec) + "\n")


def cmd_train(cfg: dict, out: Path) -> dict:
    env = build_env(cfg)
    params = build_params(cfg, env)
    conf = train_config(cfg)
    with Staging(out) as stage:
        write_manifest(stage, "train", cfg)
        ck = stage / "checkpoints"
        ck.mkdir()
        params, stats = train(env, params, conf, checkpoint_dir=ck, stats_path=stage / "stats.csv",
                              progress=_progress(conf.n_iterations))
        save_checkpoint(params, ck / "final.npz", iteration=conf.n_iterations)
        ev = cfg["eval"]
        res = evaluate(env, policy_agent(params), ev["n_episodes"], ev["seed"], cfg["workers"])
        summary = {"training": stats_summary(stats), "evaluation": _public(res),
                   "w_t": float(params["w_t"]), "b_lam": float(params["b_lam"])}
        if cfg["env"]["kind"] == "toy" and cfg["env"]["toy"]["reward"] == "count" and conf.q_l > 0:
            rate = res["actions"]["mean"] / env.horizon
            optimum = 1.0 / (2.0 * conf.q_l)
            summary["toy"] = {"converged_intensity": rate, "analytic_optimum": optimum,
                              "relative_error": abs(rate - optimum) / optimum,
                              "within_tolerance": abs(rate - optimum) <= 0.1 * optimum}
        write_episodes(stage / "episodes.csv", res)
        dump_json(summary, stage / "summary.json")
    return summary


def _public(res: dict) -> dict:
    return {"reward": res["reward"], "actions": res["actions"]}


def _progress(n):
    step = max(1, n // 20)

    def report(i, row):
        if i % step == 0 or i == n - 1:
            log.info("iteration %d/%d reward %.4g actions %.3g", i + 1, n, row["mean_reward"], row["mean_actions"])
    return report


def _family(name: str, env):
    if name == "uniform":
        return uniform_poisson(1.0)
    if name == "memorize":
        if not isinstance(env, MemoryEnv):
            raise ConfigError("memorize needs the memory environment")
        return memorize(1.0)
    if not isinstance(env, BroadcastEnv):
        raise ConfigError(f"{name} needs the broadcast environment")
    return redqueen(1.0, "chrono" if name == "redqueen" else "priority")


def cmd_eval(cfg: dict, out: Path) -> dict:
    env = build_env(cfg)
    ev = cfg["eval"]
    n, seed, workers = ev["n_episodes"], ev["seed"], cfg["workers"]
    budget = float(ev["budget"])
    trained = None
    if ev["checkpoint"]:
        trained = evaluate(env, policy_agent(load_checkpoint(_input(ev["checkpoint"]))), n, seed, workers)
        if budget <= 0:
            budget = trained["actions"]["mean"]
    name = ev["policy"]
    calib = {}
    if name == "trained":
        if trained is None:
            raise ConfigError("eval.policy = 'trained' needs eval.checkpoint")
        res, agent = trained, policy_agent(load_checkpoint(_input(ev["checkpoint"])))
    else:
        if budget <= 0:
            raise ConfigError("baselines need eval.budget > 0 or a checkpoint to match")
        cal = calibrate_budget(_family(name, env), budget, env, ev["calibration_episodes"], seed + 1)
        calib = cal.as_dict()
        agent = _family(name, env).scaled(cal.scale)
        res = evaluate(env, agent, n, seed, workers)
    summary = {"policy": name, "budget": budget, "calibration": calib, "evaluation": _public(res)}
    if ev["normalize"]:
        if name == "uniform":
            ref = res["reward"]["mean"]
        else:
            ref_scale = uniform_poisson(1.0).analytic_scale(res["actions"]["mean"], env.horizon)
            ref = evaluate(env, uniform_poisson(ref_scale), n, seed, workers)["reward"]["mean"]
        summary["normalized"] = _normalized(res, ref)
    with Staging(out) as stage:
        write_manifest(stage, "eval", cfg)
        write_episodes(stage / "episodes.csv", res)
        if ev["traces"]:
            # episodes are keyed by index, so the first ones replay exactly
            write_traces(stage / "traces.jsonl", evaluate_episodes(env, agent, min(ev["traces"], n), seed))
        dump_json(summary, stage / "summary.json")
    return summary


def _normalized(res: dict, ref: float) -> dict:
    """Rewards divided by the uniform Poisson mean; rank rewards are reported as positive ratios."""
    if ref == 0:
        return {"reference": ref, "mean": None, "median": None}
    vals = np.asarray(res["rewards"]) / ref
    return {"reference": ref, "mean": float(vals.mean()), "median": float(np.median(vals))}


def cmd_calibrate(cfg: dict, out: Path, target: float) -> dict:
    env = build_env(cfg)
    ev = cfg["eval"]
    if ev["policy"] == "trained":
        raise ConfigError("calibrate works on baseline policies")
    cal = calibrate_budget(_family(ev["policy"], env), target, env, ev["calibration_episodes"], ev["seed"] + 1)
    summary = {"policy": ev["policy"], **cal.as_dict()}
    with Staging(out) as stage:
        write_manifest(stage, "calibrate", cfg, {"target": target})
        dump_json(summary, stage / "summary.json")
    return summary


def read_raw_events(path) -> list[tuple[float, str]]:
    """Raw events: JSON lines ``{"t","src"}`` or ``time source`` text lines, any order."""
    recs, problems = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("{"):
                doc = json.loads(line)
                if set(doc) != {"t", "src"}:
                    raise ValueError("expected fields 't' and 'src'")
                t, s = float(doc["t"]), str(doc["src"])
            else:
                parts = line.replace(",", " ").split()
                if len(parts) != 2:
                    raise ValueError("expected 'time source'")
                t, s = float(parts[0]), parts[1]
            if not math.isfinite(t) or t < 0:
                raise ValueError("time must be finite and nonnegative")
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
            continue
        recs.append((t, s))
    if problems:
        head = "\n  ".join(problems[:20])
        more = f"\n  ... {len(problems) - 20} more" if len(problems) > 20 else ""
        raise DataError(f"{path}: {len(problems)} malformed records\n  {head}{more}")
    return recs


def split_windows(times: np.ndarray, target_events: float, max_rounds: int = 50):
    """Train/test windows with the test window at the end, sized for ``target_events`` expected events."""
    start, end = float(times[0]), float(times[-1])
    span = end - start
    if span <= 0:
        raise DataError("events span zero time; cannot estimate a rate")
    length = target_events * span / len(times)
    for _ in range(max_rounds):
        if length >= span:
            raise DataError(f"log too short: {len(times)} events cannot cover a {target_events}-event test window")
        cut = end - length
        n_train = int(np.searchsorted(times, cut, side="left"))
        if n_train == 0:
            raise DataError("training window is empty")
        new = target_events * (cut - start) / n_train
        if new == length:
            break
        length = new
    cut = end - length
    return (start, cut), (cut, end)


def cmd_replay_convert(raw, out: Path, target_events: float) -> dict:
    recs = read_raw_events(_input(str(raw)))
    recs.sort(key=lambda r: r[0])
    times = np.array([r[0] for r in recs])
    if len(times) > 1 and np.mean(np.diff(times) == 0) > 0.5:
        raise DataError(f"{raw}: more than half the records share a timestamp with their predecessor")
    with Staging(out) as stage:
        if not recs:
            log.warning("no events in %s; writing an empty log", raw)
            ReplayLog(np.zeros(0), ()).write(stage / "log.jsonl", stage / "split.json")
            summary = {"events": 0, "train": None, "test": None}
        else:
            train_w, test_w = split_windows(times, target_events)
            replay = ReplayLog(times, tuple(r[1] for r in recs), train_w, test_w)
            replay.write(stage / "log.jsonl", stage / "split.json")
            n_train = int(np.sum(times < train_w[1]))
            summary = {"events": len(times), "train": list(train_w), "test": list(test_w),
                       "train_rate": n_train / (train_w[1] - train_w[0]),
                       "test_events": int(len(times) - n_train), "target_events": target_events}
        dump_json(summary, stage / "summary.json")
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mtpprl", description="Train and evaluate point-process policies.")
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="only log warnings and errors")
    ap.add_argument("-q", "--quiet", action="store_true", help=argparse.SUPPRESS)
    sub = ap.add_subparsers(dest="command", required=True)
    add = sub.add_parser

    def sub_parser(name, **kw):
        return add(name, parents=[common], **kw)

    def with_config(p):
        p.add_argument("config", help="TOML config or a run-manifest.json")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    with_config(sub_parser("train", help="train a policy"))
    p = sub_parser("eval", help="evaluate a trained policy or a budget-matched baseline")
    with_config(p)
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--checkpoint")
    p = sub_parser("calibrate", help="fit a baseline's scale to a target action count")
    with_config(p)
    p.add_argument("--policy", choices=POLICIES[1:], required=True)
    p.add_argument("--target", type=float, required=True)
    p = sub_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p = sub_parser("sample-check", help="KS test of the sampler against analytic CDFs")
    p.add_argument("--n", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=KS_TOL)
    p = sub_parser("grad-check", help="finite-difference check of the exact gradients")
    p.add_argument("--configs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=GRAD_TOL)
    p = sub_parser("replay-convert", help="turn a raw event file into a replay log and split")
    p.add_argument("raw")
    p.add_argument("--out", required=True)
    p.add_argument("--target-events", type=float, default=200.0)
    return ap


def _dispatch(args) -> int:
    if args.command == "sample-check":
        ks = sample_check(args.n, args.seed)
        for name, d in ks.items():
            print(f"{name:16s} KS = {d:.5f}")
        worst = max(ks.values())
        print(f"max KS = {worst:.5f} (tolerance {args.tol})")
        return EXIT_OK if worst < args.tol else EXIT_NUMERIC
    if args.command == "grad-check":
        rep = gradient_check(args.configs, args.seed)
        print(f"max relative error = {rep.max_rel_error:.3e} over {rep.n_configs} configurations")
        return EXIT_OK if rep.max_rel_error <= args.tol else EXIT_NUMERIC
    if args.command == "replay-convert":
        summary = cmd_replay_convert(args.raw, Path(args.out), args.target_events)
        print(json.dumps(summary, sort_keys=True))
        return EXIT_OK
    if args.command == "rerun":
        doc = json.loads(Path(args.manifest).read_text())
        if set(doc) - {"command", "version", "config", "target"} or "command" not in doc:
            raise ConfigError(f"{args.manifest} is not a run manifest")
        cfg = resolve(doc["config"])
        if doc["command"] == "train":
            summary = cmd_train(cfg, Path(args.out))
        elif doc["command"] == "eval":
            summary = cmd_eval(cfg, Path(args.out))
        elif doc["command"] == "calibrate":
            summary = cmd_calibrate(cfg, Path(args.out), float(doc["target"]))
        else:
            raise ConfigError(f"cannot rerun command {doc['command']!r}")
        print(json.dumps(summary, sort_keys=True, default=float))
        return EXIT_OK

    overrides = list(args.set)
    if getattr(args, "policy", None):
        overrides.append(f'eval.policy="{args.policy}"')
    if getattr(args, "checkpoint", None):
        overrides.append(f"eval.checkpoint={json.dumps(args.checkpoint)}")
    cfg = resolve(read_config(args.config), overrides)
    if args.command == "train":
        summary = cmd_train(cfg, Path(args.out))
    elif args.command == "eval":
        summary = cmd_eval(cfg, Path(args.out))
    else:
        summary = cmd_calibrate(cfg, Path(args.out), args.target)
    print(json.dumps(summary, sort_keys=True, default=float))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return _dispatch(args)
    except (ConfigError, ConfigurationError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (DataError, IngestionError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (FloatingPointError, ConsistencyError, CalibrationError, OverflowError, RolloutError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
