"""Acceptance criteria 1-11, one test each, at their stated tolerances.

Every test prints one ``[PASS]`` / ``[FAIL]`` line (visible without ``-s``).
Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""
import json
import sys
import time

import numpy as np
import pytest
import yaml

from relsar import cli
from relsar import tensor as T
from relsar.augment import AugmentConfig
from relsar.byol import (ByolConfig, ByolState, byol_loss_term, params_without_predictor,
                         pretrain, symmetric_loss, train_step)
from relsar.checkpoint import load_checkpoint
from relsar.gradcheck import end_to_end_byol, op_suite
from relsar.model import EncoderConfig, count_params, estimate_flops
from relsar.skeleton import (DEFAULT_JOINT_MAP, PoseFrame, load_split, normalize,
                             read_keypoints, sample_windows, select_permute, write_keypoints)
from relsar.supervised import FROZEN, TrainRecipe, run_recipe, semi_supervised
from relsar.synth import SynthSpec, synth_dataset
from relsar.tensor import Tensor, backward

PAPER = EncoderConfig(F=192, K=3, L=6, H=3, D_model=192, T=30, J=15)
SHRUNK = EncoderConfig(F=32, L=2, H=2, D_model=32, T=30, J=15)
BYOL = ByolConfig(epochs=30, batch_size=16, proj_hidden=64, proj_dim=32)
AUG = AugmentConfig(noise_std=0.1)
SEEDS = (0, 1, 2)
BUDGETS = (1, 5, 20, 50)


@pytest.fixture
def report(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(n, ok, detail, elapsed=None, budget=None):
        if elapsed is not None:
            ok = ok and elapsed < budget
            detail += f" [{elapsed:.1f}s, budget {budget:.0f}s]"
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {detail}"
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        assert ok, line
    return emit


# ---------------------------------------------------------------- 1-2: model size

def test_c01_parameter_count(report):
    n = count_params(PAPER)
    report(1, 2.52e6 <= n <= 3.08e6, f"count_params = {n / 1e6:.3f}M in [2.52M, 3.08M]")


def test_c02_flops(report):
    f = estimate_flops(PAPER)
    report(2, 0.135e9 <= f <= 0.225e9, f"estimate_flops = {f / 1e9:.4f}G in [0.135G, 0.225G]")


# ---------------------------------------------------------------- 3: gradients

def test_c03_gradient_suite(report):
    t0 = time.perf_counter()
    with T.default_dtype(np.float64):
        ops = op_suite(0) + op_suite(1)
        e2e = end_to_end_byol(0)
    bad = [name for name, err, tol in ops if not err < tol]
    worst_op = max(err / tol for _, err, tol in ops)
    worst_e2e = max(e2e.values())
    ok = not bad and worst_e2e < 1e-3
    report(3, ok, f"{len(ops)} op checks (worst err/tol {worst_op:.1e}), "
                  f"{len(e2e)} end-to-end params (worst {worst_e2e:.1e} < 1e-3)",
           time.perf_counter() - t0, 60)


# ---------------------------------------------------------------- 4: BYOL invariants

def test_c04_byol_invariants(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    enc = EncoderConfig(F=8, L=1, H=2, D_model=8, T=12, J=4, dropout=0.0)
    checks = {}
    with T.default_dtype(np.float64):
        state = ByolState(enc, ByolConfig(proj_hidden=16, proj_dim=8), rng)
        x_i, x_j = rng.standard_normal((2, 4, 12, 4, 2)) * 0.3
        a = symmetric_loss(state, x_i, x_j).item()
        b = symmetric_loss(state, x_j, x_i).item()
        checks["swap"] = abs(a - b) < 1e-6
        state.zero_grad()
        backward(symmetric_loss(state, x_i, x_j))
        checks["stop-grad"] = all(p.grad is None or not p.grad.any()
                                  for p in state.target_params().values())
        q, z = rng.standard_normal((2, 64, 8))
        base = byol_loss_term(q, z).data
        scaled = byol_loss_term(3.7 * q, 0.02 * z).data
        checks["scale"] = np.abs(scaled - base).max() < 1e-6
    state = ByolState(enc, ByolConfig(proj_hidden=16, proj_dim=8), rng)
    ema_ok, bounds_ok = True, True
    for _ in range(50):
        prev = {k: p.data.copy() for k, p in state.target_params().items()}
        out = train_step(state, *(rng.standard_normal((2, 4, 12, 4, 2)) * 0.3), lr=0.05, rng=rng)
        terms = np.concatenate([out["term_a"], out["term_b"]])
        bounds_ok &= bool(np.all((terms >= -1e-6) & (terms <= 4 + 1e-6)))
        theta = params_without_predictor(state.online_params())
        for k, p in state.target_params().items():
            expect = state.tau * prev[k] + (1 - state.tau) * theta[k].data
            ema_ok &= bool(np.allclose(p.data, expect, rtol=1e-6, atol=1e-7))
    checks["ema x50"], checks["bounds"] = ema_ok, bounds_ok
    report(4, all(checks.values()), ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()),
           time.perf_counter() - t0, 30)


# ---------------------------------------------------------------- 5: non-collapse

@pytest.fixture(scope="module")
def c5_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("c5")
    t0 = time.perf_counter()
    m = synth_dataset(out / "data", SynthSpec(classes=4, samples_per_class=50, T=30, seed=7))
    windows = np.concatenate([load_split(m, "train").x, load_split(m, "test").x])
    res = pretrain(windows, SHRUNK, AUG, BYOL, seed=0, out_dir=out / "byol")
    return res, time.perf_counter() - t0


def test_c05_noncollapse_and_learning_signal(report, c5_run):
    res, elapsed = c5_run
    losses = res.epoch_losses()
    final = res.history[-1]["collapse_metric"]
    ok = len(losses) == 30 and losses[19] < losses[0] and final > 1e-3
    report(5, ok, f"200 samples: epoch-1 loss {losses[0]:.3f} -> epoch-20 {losses[19]:.3f}; "
                  f"collapse metric {final:.4f} > 1e-3 (initial {res.initial_collapse_metric:.4f})",
           elapsed, 300)


# ---------------------------------------------------------------- 6 and 11: shared pre-training

@pytest.fixture(scope="module")
def seeded_runs(tmp_path_factory):
    """Per seed: a synthetic 4-class set (80 videos per class) and a BYOL encoder."""
    runs = {}
    for seed in SEEDS:
        t0 = time.perf_counter()
        out = tmp_path_factory.mktemp(f"seed{seed}")
        m = synth_dataset(out / "data", SynthSpec(classes=4, samples_per_class=80, T=30, seed=seed))
        train, test = load_split(m, "train"), load_split(m, "test")
        res = pretrain(train, SHRUNK, AUG, BYOL, seed=seed, out_dir=out / "byol")
        runs[seed] = (train, test, load_checkpoint(res.encoder_checkpoint), time.perf_counter() - t0)
    return runs


def test_c06_byol_probe_beats_random_probe(report, seeded_runs):
    t0 = time.perf_counter()
    gaps, rows = [], []
    for seed, (train, test, ckpt, _) in seeded_runs.items():
        probe = TrainRecipe.linear_probe()
        rand = run_recipe(train, test, SHRUNK, probe, seed, 4).report.window_accuracy
        byol = run_recipe(train, test, SHRUNK, probe, seed, 4, init=ckpt).report.window_accuracy
        gaps.append(byol - rand)
        rows.append(f"s{seed}: {byol:.3f} vs {rand:.3f}")
    gap = float(np.median(gaps))
    pre = sum(r[3] for r in seeded_runs.values())
    report(6, gap >= 0.10, f"median gap {100 * gap:.1f} points >= 10 ({'; '.join(rows)})",
           time.perf_counter() - t0 + pre, 600)


def test_c11_semi_supervised_monotone(report, seeded_runs):
    t0 = time.perf_counter()
    acc = np.array([[semi_supervised((train, test), v, ckpt, seed).report.video_accuracy
                     for v in BUDGETS] for seed, (train, test, ckpt, _) in seeded_runs.items()])
    med = np.median(acc, axis=0)
    ok = bool(np.all(np.diff(med) >= 0))
    report(11, ok, "median video accuracy over budgets {1,5,20,50}: "
                   + " <= ".join(f"{a:.3f}" for a in med), time.perf_counter() - t0, 600)


# ---------------------------------------------------------------- 7: freezing contract

def test_c07_freezing_contract(report, c5_run, tmp_path):
    t0 = time.perf_counter()
    res, _ = c5_run
    ckpt = load_checkpoint(res.encoder_checkpoint)
    state = ckpt.module_state("encoder")
    m = synth_dataset(tmp_path, SynthSpec(classes=4, samples_per_class=20, T=30, seed=11))
    train, test = load_split(m, "train"), load_split(m, "test")
    checks = {}
    for mode in ("freeze_conv1", "freeze_conv2", "full_finetune"):
        recipe = TrainRecipe(mode=mode, epochs=5, batch_size=16, init=res.encoder_checkpoint)
        enc = run_recipe(train, test, SHRUNK, recipe, 0, 4, init=ckpt).encoder
        names = FROZEN.get(mode, FROZEN["freeze_conv1"] + FROZEN["freeze_conv2"])
        same = [np.array_equal(enc.params[k].data, state[f"param/{k}"]) for k in names]
        if mode in FROZEN:
            b = mode[-1]
            same += [np.array_equal(enc.buffers[f"bn{b}.{s}"], state[f"buffer/bn{b}.{s}"])
                     for s in ("mean", "var")]
            checks[mode] = all(same)
        else:
            checks[mode] = not any(same)
    report(7, all(checks.values()), ", ".join(
        f"{k}: {'frozen bitwise' if k in FROZEN else 'all changed'} {'ok' if v else 'FAIL'}"
        for k, v in checks.items()), time.perf_counter() - t0, 120)


# ---------------------------------------------------------------- 8: overfit

def test_c08_supervised_overfit(report, tmp_path):
    t0 = time.perf_counter()
    m = synth_dataset(tmp_path, SynthSpec(classes=4, samples_per_class=50, T=30, seed=3, noise=0.005))
    train, test = load_split(m, "train"), load_split(m, "test")
    res = run_recipe(train, test, SHRUNK, TrainRecipe(mode="baseline", epochs=100), 0, 4)
    acc = res.train_report.window_accuracy
    report(8, acc >= 0.99, f"baseline train accuracy {acc:.3f} >= 0.99 after 100 epochs "
                           f"(test {res.report.window_accuracy:.3f})", time.perf_counter() - t0, 300)


# ---------------------------------------------------------------- 9: data layer

def test_c09_data_layer(report, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    checks = {}
    k = np.arange(25.0)
    frame = PoseFrame(0, np.stack([k, 2 * k, np.ones(25)], axis=1))
    out = select_permute(frame, DEFAULT_JOINT_MAP)
    idx = DEFAULT_JOINT_MAP.indices
    checks["select_permute"] = out.shape == (15, 2) and np.array_equal(out, np.stack([idx, 2 * idx], 1))
    seq = rng.uniform(0, 640, (30, 15, 2))
    base = normalize(seq, DEFAULT_JOINT_MAP.root)
    checks["normalize"] = (
        np.abs(normalize(seq + [100, 40], DEFAULT_JOINT_MAP.root) - base).max() < 1e-6
        and np.abs(normalize(3 * seq, DEFAULT_JOINT_MAP.root) - base).max() < 1e-6
        and np.abs(normalize(base, DEFAULT_JOINT_MAP.root) - base).max() < 1e-6)
    counts = [(30, 30, None, 1), (12, 12, None, 1), (40, 30, 5, 3), (100, 30, 15, 5)]
    checks["windows"] = all(len(sample_windows(list(range(n)), t, s)) == c for n, t, s, c in counts) \
        and [w[0] for w in sample_windows(list(range(40)), 30, 5)] == [0, 5, 10]
    frames = [PoseFrame(i, np.concatenate([rng.uniform(0, 640, (25, 2)).round(3),
                                           rng.uniform(0, 1, (25, 1)).round(3)], 1)) for i in range(8)]
    write_keypoints(tmp_path / "a.jsonl", frames)
    write_keypoints(tmp_path / "b.jsonl", read_keypoints(tmp_path / "a.jsonl"))
    checks["jsonl round trip"] = (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    report(9, all(checks.values()), ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()),
           time.perf_counter() - t0, 10)


# ---------------------------------------------------------------- 10: determinism

def _pipeline(root, config):
    root.mkdir()
    cfg_path = root / "exp.yaml"
    cfg_path.write_text(yaml.safe_dump({**config, "output_dir": str(root / "runs")}))
    c = ["--config", str(cfg_path)]
    assert cli.main(["synth", *c]) == 0
    assert cli.main(["pretrain", *c]) == 0
    (pre,) = (root / "runs").glob("pretrain-*")
    assert cli.main(["finetune", *c, "--checkpoint", str(pre / "encoder.npz")]) == 0
    (ft,) = (root / "runs").glob("finetune-*")
    assert cli.main(["eval", *c, "--checkpoint", str(ft / "00-full_finetune" / "model.npz")]) == 0
    (ev,) = (root / "runs").glob("eval-*")
    return (ev / "report_test.json").read_text()


def test_c10_determinism(report, tmp_path, capsys):
    t0 = time.perf_counter()
    config = {
        "seed": 5,
        "dataset": {"synth": {"classes": 4, "samples_per_class": 20, "T": 30, "seed": 5}},
        "encoder": {"F": 32, "L": 2, "H": 2, "D_model": 32},
        "augment": {"noise_std": 0.1},
        "byol": {"epochs": 5, "batch_size": 16, "proj_hidden": 64, "proj_dim": 32},
        "recipes": [{"mode": "full_finetune", "epochs": 10, "init": "checkpoint"}],
    }
    a = _pipeline(tmp_path / "a", config)
    b = _pipeline(tmp_path / "b", config)
    capsys.readouterr()
    acc = json.loads(a)["video_accuracy"]
    report(10, a == b, f"synth -> pretrain -> finetune -> eval twice: EvalReport JSON "
                       f"{'identical' if a == b else 'DIFFERS'} (video acc {acc:.3f})",
           time.perf_counter() - t0, 600)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
