import json
from importlib.resources import files

import numpy as np
import pytest

from mtpprl.cli import main, read_config, resolve, split_windows
from mtpprl.envs.broadcast import ReplayLog

CONFIGS = files("mtpprl") / "configs"


def run(*argv):
    return main(["-q", *map(str, argv)])


def test_bundled_configs_resolve():
    for name in ("toy", "memory", "broadcast_priority", "broadcast_chrono"):
        cfg = resolve(read_config(CONFIGS / f"{name}.toml"))
        assert cfg["train"]["n_iterations"] >= 1


def test_table_defaults_fill_missing_values():
    mem = resolve({"env": {"kind": "memory"}})["train"]
    assert (mem["n_iterations"], mem["n_episodes"], mem["q_l"], mem["q_m"]) == (5000, 32, 1e-2, 5e-3)
    assert (mem["lr_base"], mem["lr_decay"]) == (0.02, 2e-3)
    top = resolve({"env": {"kind": "broadcast", "broadcast": {"reward": "top"}}})
    rank = resolve({"env": {"kind": "broadcast"}})
    assert top["train"]["q_l"] == 0.33 and rank["train"]["q_l"] == 100.0
    assert rank["train"]["n_episodes"] == 16 and rank["env"]["broadcast"]["dwell"] == pytest.approx(1.0)


def test_unknown_keys_are_config_errors(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text('[train]\nq_lambda = 0.1\n')
    assert run("train", bad, "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists()
    assert run("train", CONFIGS / "toy.toml", "--out", tmp_path / "o", "--set", "policy.width=3") == 2


def test_missing_input_file_is_config_error(tmp_path):
    assert run("train", tmp_path / "nope.toml", "--out", tmp_path / "o") == 2


def test_train_toy_and_rerun_bit_exact(tmp_path):
    out = tmp_path / "run"
    args = ["--set", "train.n_iterations=15", "--set", "eval.n_episodes=40"]
    assert run("train", CONFIGS / "toy.toml", "--out", out, *args) == 0
    for name in ("run-manifest.json", "stats.csv", "summary.json", "episodes.csv", "checkpoints/final.npz"):
        assert (out / name).exists()
    assert run("rerun", out / "run-manifest.json", "--out", tmp_path / "again") == 0
    for name in ("stats.csv", "summary.json", "episodes.csv"):
        assert (out / name).read_bytes() == (tmp_path / "again" / name).read_bytes()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["toy"]["analytic_optimum"] == 5.0


def test_parallel_rollouts_reproduce_serial(tmp_path):
    args = ["--set", "train.n_iterations=4", "--set", "eval.n_episodes=20"]
    assert run("train", CONFIGS / "toy.toml", "--out", tmp_path / "a", *args) == 0
    assert run("train", CONFIGS / "toy.toml", "--out", tmp_path / "b", *args, "--set", "workers=2") == 0
    assert (tmp_path / "a" / "stats.csv").read_bytes() == (tmp_path / "b" / "stats.csv").read_bytes()


def test_eval_uniform_normalizes_to_one(tmp_path):
    out = tmp_path / "ev"
    code = run("eval", CONFIGS / "broadcast_priority.toml", "--out", out, "--policy", "uniform",
               "--set", "eval.budget=8.0", "--set", "eval.n_episodes=50", "--set", "eval.calibration_episodes=20")
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["normalized"]["mean"] == pytest.approx(1.0, abs=1e-12)


def test_eval_trained_needs_checkpoint(tmp_path):
    assert run("eval", CONFIGS / "toy.toml", "--out", tmp_path / "e") == 2


def test_baseline_environment_mismatch(tmp_path):
    assert run("eval", CONFIGS / "toy.toml", "--out", tmp_path / "e", "--policy", "memorize",
               "--set", "eval.budget=3.0") == 2


def test_calibrate_command(tmp_path):
    assert run("calibrate", CONFIGS / "toy.toml", "--out", tmp_path / "c", "--policy", "uniform",
               "--target", "4") == 0
    s = json.loads((tmp_path / "c" / "summary.json").read_text())
    assert s["scale"] == 2.0


def test_grad_check_passes(capsys):
    assert run("grad-check", "--configs", "4") == 0
    assert "max relative error" in capsys.readouterr().out


def test_grad_check_fails_above_tolerance():
    assert run("grad-check", "--configs", "2", "--tol", "0") == 4


def test_sample_check_small(capsys):
    assert run("sample-check", "--n", "2000", "--tol", "0.05") == 0
    assert "max KS" in capsys.readouterr().out


def test_replay_convert_sizes_test_window(tmp_path):
    rng = np.random.default_rng(0)
    rate = 4.0
    times = np.cumsum(rng.exponential(1 / rate, 3000))
    raw = tmp_path / "raw.txt"
    raw.write_text("".join(f"{float(t)!r} {'ab'[k % 2]}\n" for k, t in enumerate(rng.permutation(times))))
    out = tmp_path / "conv"
    assert run("replay-convert", raw, "--out", out) == 0
    log = ReplayLog.read(out / "log.jsonl", out / "split.json")
    length = log.test[1] - log.test[0]
    assert length == pytest.approx(200 / rate, rel=0.1)
    assert np.all(np.diff(log.times) >= 0)
    # converting twice, or converting the output, gives byte-identical files
    assert run("replay-convert", raw, "--out", tmp_path / "conv2") == 0
    assert run("replay-convert", out / "log.jsonl", "--out", tmp_path / "conv3") == 0
    for name in ("log.jsonl", "split.json"):
        assert (out / name).read_bytes() == (tmp_path / "conv2" / name).read_bytes()
        assert (out / name).read_bytes() == (tmp_path / "conv3" / name).read_bytes()


def test_replay_convert_empty_input(tmp_path, caplog):
    raw = tmp_path / "empty.txt"
    raw.write_text("")
    assert main(["replay-convert", str(raw), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "log.jsonl").read_text() == ""
    assert json.loads((tmp_path / "o" / "split.json").read_text()) == {}
    assert "no events" in caplog.text


def test_replay_convert_reports_bad_lines(tmp_path, caplog):
    raw = tmp_path / "bad.txt"
    raw.write_text("1.0 a\nxx a\n2.0\n3.0 b\n")
    assert main(["replay-convert", str(raw), "--out", str(tmp_path / "o")]) == 3
    assert "line 2" in caplog.text and "line 3" in caplog.text
    assert not (tmp_path / "o").exists()


def test_replay_convert_rejects_duplicate_heavy(tmp_path):
    raw = tmp_path / "dups.txt"
    raw.write_text("".join(f"1.0 s{k}\n" for k in range(10)) + "2.0 a\n")
    assert run("replay-convert", raw, "--out", tmp_path / "o") == 3


def test_split_window_fixed_point():
    times = np.linspace(0.0, 100.0, 1001)
    train, test = split_windows(times, 200.0)
    assert train[1] == test[0] and test[1] == 100.0
    assert test[1] - test[0] == pytest.approx(20.0, rel=0.02)


def test_replay_training_from_converted_log(tmp_path):
    rng = np.random.default_rng(1)
    times = np.sort(rng.uniform(0, 400, 1600))
    raw = tmp_path / "raw.txt"
    raw.write_text("".join(f"{float(t)!r} {'xyz'[k % 3]}\n" for k, t in enumerate(times)))
    assert run("replay-convert", raw, "--out", tmp_path / "log") == 0
    cfg = tmp_path / "replay.toml"
    cfg.write_text(
        '[env]\nkind = "broadcast"\n[env.broadcast]\nhorizon = 5.0\nmode = "train"\n'
        f'log = "{tmp_path / "log" / "log.jsonl"}"\nsplit = "{tmp_path / "log" / "split.json"}"\n'
        "[policy]\nd_in = 2\nd_hidden = 2\n[train]\nn_iterations = 2\nn_episodes = 2\nq_l = 0.33\n"
        "[eval]\nn_episodes = 5\n"
    )
    assert run("train", cfg, "--out", tmp_path / "run") == 0
    assert run("train", cfg, "--out", tmp_path / "run2", "--set", 'env.broadcast.log="missing.jsonl"') == 2


def test_eval_writes_event_traces(tmp_path):
    out = tmp_path / "ev"
    assert run("eval", CONFIGS / "memory.toml", "--out", out, "--policy", "uniform", "--set", "eval.budget=5.0",
               "--set", "eval.n_episodes=20", "--set", "eval.calibration_episodes=20", "--set", "eval.traces=3") == 0
    recs = [json.loads(line) for line in (out / "traces.jsonl").read_text().splitlines()]
    assert {r["episode"] for r in recs} <= {0, 1, 2}
    acts = [r for r in recs if r["kind"] == "action"]
    # every review is answered by the student's recall outcome for the same item
    assert len(acts) == sum(r["kind"] == "feedback" for r in recs)
    assert all(r["mark"] // 2 == a["mark"] for a, r in zip(acts, [r for r in recs if r["kind"] == "feedback"]))
    counts = [int(line.split(",")[2]) for line in (out / "episodes.csv").read_text().splitlines()[1:4]]
    assert [sum(a["episode"] == k for a in acts) for k in range(3)] == counts
