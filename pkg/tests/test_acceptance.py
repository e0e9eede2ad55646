"""Acceptance criteria, each checked at its stated tolerance.

Every test records a one-line verdict that ``conftest.py`` prints in the
terminal summary.  The two end-to-end experiments drive the CLI exactly as
a user would and take a few minutes on one core.
"""
import json
import math
import time

import numpy as np
import pytest

from loco import cli, dataset, hilbert, pbd, props, rnn, synth
from loco import evaluation as ev
from loco import train as trainer
from loco.config import default_config_text, load_config


def run_cli(*argv):
    code = cli.main([str(a) for a in argv])
    assert code == 0, f"loco {' '.join(map(str, argv))} exited {code}"


def test_oracle_equivalence(record_criterion):
    t0 = time.perf_counter()
    res = props.check_oracle_equivalence(np.random.default_rng(101), 1000)
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 10.0
    record_criterion(1, "oracle equivalence", ok, f"max bin error {res.worst:.2e} (<= 1e-12), {elapsed:.2f} s (< 10 s)")
    assert ok


def test_gradient_exactness(record_criterion):
    t0 = time.perf_counter()
    oracle = props.check_gradient_oracle(np.random.default_rng(102), 1000)
    worst_pipeline = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        params = rnn.ModelParams.init(5, 6, 2, seed=seed, omega=0.5, t_ref=12)
        for v in params.tensors.values():
            v += rng.normal(0.0, 0.3, size=v.shape)
        x = rng.normal(size=(12, 5))
        y = rng.integers(0, 4, size=2)
        worst_pipeline = max(worst_pipeline, rnn.grad_check(params, (x, y)))
    elapsed = time.perf_counter() - t0
    ok = oracle.passed and worst_pipeline <= 1e-5 and elapsed < 60.0
    record_criterion(2, "gradient exactness", ok,
                     f"oracle abs {oracle.worst:.2e} (<= 1e-12), pipeline rel {worst_pipeline:.2e} (<= 1e-5), "
                     f"{elapsed:.1f} s (< 60 s)")
    assert ok


def test_lemma_invariants(record_criterion):
    rng = np.random.default_rng(103)
    worst_max = worst_var = worst_bound = 0.0
    for _ in range(1000):
        p = rng.uniform(size=int(rng.integers(1, 201)))
        rep = pbd.diagnostics(p)
        if p.size > 1:
            worst_max = max(worst_max, float(np.max(np.diff(rep.running_max))))
            worst_var = max(worst_var, float(-np.min(np.diff(rep.variance_series))))
        worst_bound = max(worst_bound, rep.running_max[-1] - min(rep.first_upper_bound, rep.lecam_bound))
    example = pbd.lecam_bound(np.full(100, 0.01))
    example_err = abs(example - (1.0 / math.e + 0.02))
    ok = max(worst_max, worst_var, worst_bound) <= 1e-12 and example_err <= 1e-9
    record_criterion(3, "lemma invariants", ok,
                     f"max increase {worst_max:.1e}, variance decrease {worst_var:.1e}, "
                     f"bound excess {worst_bound:.1e} (<= 1e-12); 1/e + 0.02 error {example_err:.1e} (<= 1e-9)")
    assert ok


def test_initialization(record_criterion):
    res = props.check_init_grid()
    record_criterion(4, "initialization", res.passed, f"max |Pr(Y=0) - omega| {res.worst:.2e} (<= 1e-9)")
    assert res.passed


def test_truncation(record_criterion):
    res = props.check_truncation(np.random.default_rng(105), 1000)
    norm = props.check_normalization(np.random.default_rng(106), 1000)
    ok = res.passed and norm.passed
    record_criterion(5, "truncation", ok, f"bin agreement {res.worst:.2e}, normalization {norm.worst:.2e} (<= 1e-12)")
    assert ok


@pytest.fixture(scope="module")
def run_1d(tmp_path_factory):
    root = tmp_path_factory.mktemp("e2e_1d")
    cfg_path = root / "run.ini"
    cfg_path.write_text(default_config_text("synthetic-1d").replace("n_test = 200", "n_test = 500"))
    t0 = time.perf_counter()
    run_cli("gen", "--config", cfg_path, "--out", root / "data")
    run_cli("train", "--config", cfg_path, "--data", root / "data", "--out", root / "model")
    run_cli("eval", "--checkpoint", root / "model" / "model.ckpt", "--data", root / "data", "--out", root / "eval")
    elapsed = time.perf_counter() - t0
    summary = json.loads((root / "eval" / "summary.json").read_text())
    return root, load_config(cfg_path), summary, elapsed


@pytest.mark.slow
def test_end_to_end_1d(run_1d, record_criterion):
    _, _, s, elapsed = run_1d
    ok = s["f1"] >= 0.90 and s["count_accuracy"] >= 0.90 and elapsed <= 15 * 60
    record_criterion(6, "end-to-end 1D", ok,
                     f"F1 {s['f1']:.4f} at +-{s['tolerance']} (>= 0.90), count accuracy {s['count_accuracy']:.4f} "
                     f"(>= 0.90), {elapsed:.0f} s (<= 900 s)")
    assert ok


@pytest.mark.slow
def test_sharpness(run_1d, record_criterion):
    root, cfg, s, _ = run_1d
    from loco import checkpoint
    params, _, _ = checkpoint.load(root / "model" / "model.ckpt")
    samples = dataset.read_split(root / "data", "test")
    truth = dataset.read_truth(root / "data", "test", len(samples), cfg.synth_config().channels)
    tcfg, tol = cfg.train_config(), cfg["eval"]["tolerance"]
    on, off = [], []
    for p, times in zip(trainer.predict(params, samples, tcfg.eps_p), truth):
        dec = ev.decode(p, cfg["eval"]["threshold"], cfg.eval_min_separation(), tcfg.k_max)
        for c in range(p.shape[1]):
            on.extend(p[dec.times[c], c])
            near = np.zeros(len(p), dtype=bool)
            for t in times[c]:
                near[max(0, t - tol): t + tol + 1] = True
            off.extend(p[~near, c])
    on_frac = float(np.mean(np.asarray(on) > 0.9))
    off_frac = float(np.mean(np.asarray(off) < 0.1))
    ok = on_frac >= 0.90 and off_frac >= 0.95
    record_criterion(7, "sharpness", ok,
                     f"{100 * on_frac:.2f}% of decoded-event p > 0.9 (>= 90%), "
                     f"{100 * off_frac:.2f}% of off-event p < 0.1 (>= 95%)")
    assert ok


HILBERT_2D = """
[run]
task = hilbert-2d
n_train = 2000
n_test = 500
[canvas]
width = 64
height = 64
window = 8
classes = 2
min_glyphs = 1
max_glyphs = 3
[model]
hidden = 32
[train]
epochs = 15
"""


@pytest.mark.slow
def test_end_to_end_2d(tmp_path, record_criterion):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(HILBERT_2D)
    t0 = time.perf_counter()
    run_cli("gen", "--config", cfg_path, "--out", tmp_path / "data")
    run_cli("train", "--config", cfg_path, "--data", tmp_path / "data", "--out", tmp_path / "model")
    run_cli("eval", "--checkpoint", tmp_path / "model" / "model.ckpt", "--data", tmp_path / "data",
            "--out", tmp_path / "eval")
    elapsed = time.perf_counter() - t0
    s = json.loads((tmp_path / "eval" / "summary.json").read_text())
    assert json.loads((tmp_path / "data" / "manifest.json").read_text())["curve"]["order"] == 3
    ok = s["count_accuracy"] >= 0.85 and s["center_error"] <= 1.5 * 8 and elapsed <= 20 * 60
    record_criterion(8, "end-to-end 2D", ok,
                     f"count accuracy {s['count_accuracy']:.4f} (>= 0.85), mean center error "
                     f"{s['center_error']:.2f} px (<= 12 px), {elapsed:.0f} s (<= 1200 s)")
    assert ok


def test_hilbert_exhaustive(record_criterion):
    t0 = time.perf_counter()
    res = props.check_hilbert(max_order=6)
    elapsed = time.perf_counter() - t0
    ok = res.passed and elapsed < 1.0
    record_criterion(9, "hilbert exhaustive", ok, f"{int(res.worst)} violations for n <= 6, {elapsed:.3f} s (< 1 s)")
    assert ok


REPRO = """
[run]
seed = 11
n_train = 200
n_test = 20
checkpoint_every = 1
[data]
T_min = 100
T_max = 200
[train]
epochs = 3
"""


def test_reproducibility(tmp_path, record_criterion):
    cfg_path = tmp_path / "run.ini"
    cfg_path.write_text(REPRO)
    run_cli("gen", "--config", cfg_path, "--out", tmp_path / "data")
    for name in ("a", "b"):
        run_cli("train", "--config", cfg_path, "--data", tmp_path / "data", "--out", tmp_path / name)
    files = sorted(f.name for f in (tmp_path / "a").iterdir())
    same = files == sorted(f.name for f in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    record_criterion(10, "reproducibility", same, f"{len(files)} artifacts byte-identical across two runs")
    assert same
