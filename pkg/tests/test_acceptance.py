"""Acceptance gate: one test per shipped behavioral guarantee.

Run with ``pytest -v tests/test_acceptance.py`` -- the verbose line for each
``test_criterion_NN_*`` test is the pass/fail line for that criterion.
Timed criteria assert their wall-clock budget as part of the test.
"""

import math
import os
import statistics
import time

import numpy as np
import pytest

from xmargin.cli import cmd_cv, cmd_loss_curve, main
from xmargin.config import load_config
from xmargin.data_pipeline import Dataset, Scaling, repeated_cv
from xmargin.loss_core import (LossParams, gamma, loss_and_grad_vec,
                               xtreme_margin_loss, xtreme_margin_loss_vec,
                               xtreme_margin_subgrad)
from xmargin.metrics import auc, auc_brute, conditional_accuracy
from xmargin.network import (Activation, Layer, MlpModel, backward,
                             build_boundary_model, build_experiment_model, forward,
                             forward_single_layer, predict_proba)
from xmargin.optimizer import (Method, OptimizerConfig, train,
                               verify_subgradient)

ROOT = os.path.join(os.path.dirname(__file__), "..")
PRESET = os.path.join(ROOT, "presets", "sonar_table1.cfg")
REAL_SONAR = os.path.join(ROOT, "data", "sonar.all-data")


def sonar_overrides():
    """Prefer the real benchmark file when the user has dropped it in."""
    if os.path.exists(REAL_SONAR):
        print("using real benchmark file data/sonar.all-data")
        return ["repeats=5", f"dataset={REAL_SONAR}"]
    print("using shipped stand-in data/sonar_standin.csv")
    return ["repeats=5"]


def test_criterion_01_misclassified_equals_exponential():
    """10^5 random misclassified tuples match e^{|y_true - y|} to 1e-12
    relative, in under a second."""
    rng = np.random.default_rng(42)
    n = 100_000
    y_true = rng.integers(0, 2, n)
    # uniform over the misclassified piece of each label
    u = rng.random(n) * 0.5
    y = np.where(y_true == 1, u, 0.5 + u)
    lam1 = rng.random(n).mean() * 10  # arbitrary fixed lambdas
    started = time.perf_counter()
    vals = xtreme_margin_loss_vec(y, y_true, lam1, 3.7)
    elapsed = time.perf_counter() - started
    expected = np.exp(np.abs(y_true - y))
    assert np.max(np.abs(vals - expected) / expected) <= 1e-12
    # the scalar entry point agrees with the vectorized kernel
    p = LossParams(lam1, 3.7)
    for i in range(0, n, n // 1000):
        scalar = xtreme_margin_loss(float(y[i]), int(y_true[i]), p).value
        assert abs(scalar - vals[i]) <= 1e-12 * scalar
    assert elapsed < 1.0, f"took {elapsed:.3f}s"


def test_criterion_02_range_fuzz():
    """10^6 random tuples stay in (0, e]; the observed maximum approaches e
    (far-endpoint prediction present); under five seconds."""
    rng = np.random.default_rng(7)
    n = 1_000_000
    y = rng.random(n)
    y_true = rng.integers(0, 2, n)
    started = time.perf_counter()
    vals = xtreme_margin_loss_vec(y, y_true, 2.0, 5.0)
    elapsed = time.perf_counter() - started
    assert float(vals.min()) > 0.0
    assert float(vals.max()) <= math.e
    assert float(vals.max()) >= math.e - 1e-3
    worst = int(np.argmax(vals))
    assert abs(y[worst] - (1 - y_true[worst])) <= 1e-3  # far endpoint
    assert elapsed < 5.0, f"took {elapsed:.3f}s"


def test_criterion_03_lambda_limit():
    """Cranking lambda2 to 1e9 drives a confident correct default
    prediction's loss below 1e-8."""
    v = xtreme_margin_loss(0.9, 1, LossParams(1.0, 1e9)).value
    assert v < 1e-8, f"loss was {v}"


def test_criterion_04_worked_gamma_value():
    """gamma(0.80, 1) with lambda2 = 1 equals 0.36 exactly as double
    precision evaluates that arithmetic."""
    got = gamma(0.80, 1, LossParams(1.0, 1.0))
    assert got == (0.80 - (1 - 0.80)) ** 2
    assert abs(got - 0.36) < 1e-15


def test_criterion_05_finite_difference_audit():
    """Central finite differences confirm the loss derivative (1e-6 rel) and
    the full-network gradient (1e-4 rel) at 10^3 sampled points each,
    excluding 1e-3 neighborhoods of the branch boundaries; under 30s."""
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    h = 1e-6
    checked = 0
    while checked < 1000:
        y = float(rng.uniform(2e-3, 1 - 2e-3))
        if abs(y - 0.5) < 1e-3 + h:
            continue
        y_true = int(rng.integers(0, 2))
        p = LossParams(float(rng.uniform(0.1, 10)), float(rng.uniform(0.1, 10)))
        fd = (xtreme_margin_loss(y + h, y_true, p).value
              - xtreme_margin_loss(y - h, y_true, p).value) / (2 * h)
        g = xtreme_margin_subgrad(y, y_true, p)
        scale = max(abs(fd), abs(g), 1e-8)
        assert abs(g - fd) / scale <= 1e-6, (y, y_true, g, fd)
        checked += 1

    # network gradient: 10^3 sampled parameter coordinates of the deep model
    model = build_experiment_model(10, seed=5)
    X = rng.normal(size=(5, 10))
    yt = rng.integers(0, 2, 5)
    params = LossParams(2.0, 3.0)
    theta = np.concatenate([p.ravel() for p in model.parameters()])

    def set_theta(vec):
        pos = 0
        for p in model.parameters():
            p[...] = vec[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def total_loss(vec):
        set_theta(vec)
        vals, _ = loss_and_grad_vec(forward(model, X).output, yt, params)
        return float(np.mean(vals))

    trace = forward(model, X)
    _, dvals = loss_and_grad_vec(trace.output, yt, params)
    grads = backward(trace, model, dvals / len(yt))
    analytic = np.concatenate([np.concatenate([dw.ravel(), db.ravel()])
                               for dw, db in grads])
    hn = 1e-6
    for idx in rng.choice(theta.size, size=1000, replace=False):
        plus = theta.copy(); plus[idx] += hn
        minus = theta.copy(); minus[idx] -= hn
        fd = (total_loss(plus) - total_loss(minus)) / (2 * hn)
        scale = max(abs(fd), abs(analytic[idx]), 1e-6)
        assert abs(analytic[idx] - fd) / scale <= 1e-4, (idx, analytic[idx], fd)
    set_theta(theta)
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_criterion_06_subgradient_inequality_check():
    """The inequality checker passes the real derivative at 10^3 interior
    points of the misclassified piece and rejects a planted non-subgradient
    (g = 2 for |x| at 0)."""
    p = LossParams(1.0, 1.0)
    # the piece e^{1-y} on y in [0, 0.5) is convex; probe within the piece
    probes = [[t] for t in np.linspace(0.0, 0.4995, 40)]

    def f(th):
        return xtreme_margin_loss(float(th[0]), 1, p).value

    for y0 in np.linspace(0.001, 0.498, 1000):
        g = xtreme_margin_subgrad(float(y0), 1, p)
        ok, worst = verify_subgradient(f, [float(y0)], [g], probes)
        assert ok, (y0, worst)

    ok, worst = verify_subgradient(lambda th: abs(float(th[0])), [0.0], [2.0],
                                   [[t] for t in np.linspace(-1, 1, 21)])
    assert not ok and worst < -1e-3


def test_criterion_07_convex_toy_convergence():
    """On a one-effective-parameter toy (the same input with conflicting
    labels, lambdas 0), the best-so-far training loss lands within 1e-2 of
    the minimum of a 10^4-point parameter grid; under five seconds."""
    started = time.perf_counter()
    X = np.array([[1.0], [1.0]])
    y = np.array([1, 0])
    model = MlpModel(layers=[Layer(np.array([[2.0]]), np.array([0.0]),
                                   Activation.SIGMOID)])
    params = LossParams(0.0, 0.0)
    res = train(model, X, y, params,
                OptimizerConfig(method=Method.SUBGRADIENT, alpha=0.05),
                epochs=200, batch_size=2, rng=np.random.default_rng(0))

    def objective(t):
        prob = forward_single_layer(np.array([t]), np.array([1.0]))
        return 0.5 * (xtreme_margin_loss(prob, 1, params).value
                      + xtreme_margin_loss(prob, 0, params).value)

    w = res.model.layers[0].weights[0, 0]
    b = res.model.layers[0].biases[0]
    best = objective(w + b)
    grid_min = min(objective(t) for t in np.linspace(-4.0, 4.0, 10_000))
    elapsed = time.perf_counter() - started
    assert abs(best - grid_min) <= 1e-2, (best, grid_min)
    assert elapsed < 5.0, f"took {elapsed:.1f}s"


def test_criterion_08_auc_matches_brute_force():
    """The rank-statistic AUC equals the all-pairs definition exactly on
    10^3 instances with heavy ties."""
    rng = np.random.default_rng(11)
    scores = np.round(rng.random(1000), 2)  # 2-decimal grid forces ties
    labels = rng.integers(0, 2, 1000)
    pos, neg = scores[labels == 1], scores[labels == 0]
    assert auc(pos, neg) == auc_brute(pos, neg)


def test_criterion_09_lambda_class_bias():
    """On an overlapping 2-D problem the lambda asymmetry steers per-class
    accuracy in both directions (medians over 5 seeds); under two minutes."""
    started = time.perf_counter()

    def run(seed, lam1, lam2):
        rng = np.random.default_rng(seed)
        d = 1.68  # ~20% class overlap for unit Gaussians
        X = np.vstack([rng.normal(-d / 2, 1.0, size=(100, 2)),
                       rng.normal(d / 2, 1.0, size=(100, 2))])
        yv = np.array([0] * 100 + [1] * 100)
        model = build_boundary_model(2, seed)
        res = train(model, X, yv, LossParams(lam1, lam2),
                    OptimizerConfig(alpha=0.001), epochs=40, batch_size=16,
                    rng=np.random.default_rng(seed))
        preds = (predict_proba(res.model, X) >= 0.5).astype(int)
        return (conditional_accuracy(preds, yv, 0),
                conditional_accuracy(preds, yv, 1))

    seeds = [1, 2, 3, 4, 5]
    heavy2 = [run(s, 1.0, 50.0) for s in seeds]   # penalize default-class margin
    heavy1 = [run(s, 50.0, 1.0) for s in seeds]   # penalize non-default margin
    med = lambda vals, i: statistics.median(v[i] for v in vals)
    # weighting lambda2 pushes the model toward class 1, and vice versa
    assert med(heavy2, 1) > med(heavy1, 1), (heavy2, heavy1)
    assert med(heavy1, 0) > med(heavy2, 0), (heavy2, heavy1)
    elapsed = time.perf_counter() - started
    assert elapsed < 120.0, f"took {elapsed:.1f}s"


def test_criterion_10_benchmark_cv_envelopes():
    """Repeated-CV accuracy envelopes on the sonar-shaped benchmark land in
    the published bands: the tunable loss at lambdas (1,1) within
    [0.70, 0.90] and binary cross-entropy within [0.75, 0.92] (5 repeats)."""
    cfg = load_config(PRESET, sonar_overrides())
    xm = cmd_cv(cfg)
    lo, hi = xm["mean_envelope"]
    print(f"xtreme-margin envelope [{lo:.4f}, {hi:.4f}]")
    assert 0.70 <= lo and hi <= 0.90, xm["mean_envelope"]

    cfg_bce = load_config(PRESET, sonar_overrides() + ["loss_family=bce"])
    bce = cmd_cv(cfg_bce)
    lo, hi = bce["mean_envelope"]
    print(f"bce envelope [{lo:.4f}, {hi:.4f}]")
    assert 0.75 <= lo and hi <= 0.92, bce["mean_envelope"]


def test_criterion_11_diagonal_grid_argmax():
    """Over the diagonal lambda grid {1, 10, 100, 1000} (5 repeats) the
    selected cell's mean CV accuracy is no worse than the (1,1) cell's mean
    minus 0.01."""
    from xmargin.cli import _accuracy_metric, _load_dataset, _train_predictor_fn
    import dataclasses

    cfg = load_config(PRESET, sonar_overrides())
    data = _load_dataset(cfg)
    means = {}
    for lam in (1.0, 10.0, 100.0, 1000.0):
        cell_cfg = dataclasses.replace(cfg, lambda1=lam, lambda2=lam)
        rep = repeated_cv(data, cfg.k, cfg.repeats, _train_predictor_fn(cell_cfg),
                          _accuracy_metric, cfg.seed, scaling=cfg.scaling)
        means[lam] = float(np.mean(rep.repeat_means))
        print(f"lambda {lam:g}: mean CV accuracy {means[lam]:.4f}")
    best = max(means.values())
    assert best >= means[1.0] - 0.01, means


def test_criterion_12_loss_curve_structure(tmp_path):
    """The exported loss-vs-probability table shows the non-convex correct
    piece (interior maximum at 0.5), the exponential misclassified piece,
    and the exact endpoint values 1/2 and e."""
    cfg_path = tmp_path / "curve.cfg"
    cfg_path.write_text(
        "lambda1 = 1\nlambda2 = 1\nseed = 1\n"
        f"output_dir = {tmp_path / 'out'}\n")
    cfg = load_config(cfg_path)
    cmd_loss_curve(cfg, y_true=1, samples=201)
    rows = [(r.split(",")) for r in
            (tmp_path / "out" / "loss_curve.csv").read_text().splitlines()[1:]]
    y = np.array([float(r[0]) for r in rows])
    loss = np.array([float(r[1]) for r in rows])
    correct = np.array([float(r[3]) for r in rows])
    mis = np.array([float(r[4]) for r in rows])

    # endpoints of the fixed-label curve
    assert abs(loss[0] - math.e) <= 1e-12       # y = 0, wrong by the full gap
    assert abs(loss[-1] - 0.5) <= 1e-12         # y = 1, lambda2 = 1
    # misclassified piece is exactly exponential in the gap
    assert np.max(np.abs(mis - np.exp(np.abs(1.0 - y)))) <= 1e-12
    # the reduced correct piece rises to an interior maximum at 0.5 and
    # falls on both sides: non-monotone, hence non-convex
    peak = int(np.argmax(correct))
    assert abs(y[peak] - 0.5) <= 0.005
    assert correct[peak] > correct[0] and correct[peak] > correct[-1]
    assert np.all(np.diff(correct[:peak + 1]) > 0)
    assert np.all(np.diff(correct[peak:]) < 0)


def test_criterion_13_cli_payloads_byte_identical(tmp_path):
    """Re-running every command with a fixed config reproduces each payload
    file byte for byte (timing lives in the separate meta file)."""
    data = tmp_path / "toy.csv"
    rng = np.random.default_rng(0)
    lines = []
    for cls in (0, 1):
        for _ in range(20):
            x = rng.normal(cls * 1.5, 1.0, size=4)
            lines.append(",".join(f"{v:.6f}" for v in x)
                         + "," + ("pos" if cls else "neg"))
    data.write_text("\n".join(lines) + "\n")
    out = tmp_path / "out"
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        f"dataset = {data}\ndefault_label = pos\nlambda1 = 1\nlambda2 = 1\n"
        "alpha = 0.01\nepochs = 2\nbatch_size = 8\nk = 2\nrepeats = 2\n"
        f"seed = 7\ntest_fraction = 0.3\noutput_dir = {out}\n")

    commands = {
        "train": (["train"], ["report.txt", "curves.csv"]),
        "cv": (["cv"], ["report.txt"]),
        "grid": (["grid", "--lambda-grid", "1,1;10,10"],
                 ["report.txt", "grid.csv"]),
        "boundary": (["boundary", "--features", "0,1", "--resolution", "4"],
                     ["report.txt", "boundary_grid.csv", "boundary_points.csv"]),
        "loss-curve": (["loss-curve", "--samples", "21"],
                       ["report.txt", "loss_curve.csv"]),
        "bias": (["bias", "--variants", "xm:1:50,bce", "--ensemble-size", "2"],
                 ["report.txt", "bias.csv"]),
        "risk": (["risk", "--confidence", "0.3,0.7"],
                 ["report.txt", "risk.csv"]),
    }
    for name, (args, payloads) in commands.items():
        argv = [args[0], "--config", str(cfg)] + args[1:]
        assert main(argv) == 0, name
        first = {p: (out / p).read_bytes() for p in payloads}
        assert main(argv) == 0, name
        for p, blob in first.items():
            assert (out / p).read_bytes() == blob, f"{name}: {p} changed"
