"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict with the measured numbers; the
lines are repeated in the terminal summary after the run.
"""
import time
from dataclasses import replace

import numpy as np
import pytest

from oracles import (
    brute_simplex,
    brute_soft_threshold,
    brute_sparse_group,
    central_difference,
    kernel_ridge_fit_predict,
    lasso_coordinate_descent,
    lasso_objective,
)
from rkmv import model, simdata
from rkmv.cli import main
from rkmv.optimizer import FitConfig, fit, gamma_objective_grad, update_loadings
from rkmv.outcome import build_optimal_scores
from rkmv.prox import GroupStructure, PenaltySpec, fista, project_simplex, prox_sparse_group, soft_threshold
from rkmv.randfeatures import (
    RandomFeatureMap,
    approximate_gram,
    exact_gaussian_gram,
    feature_map,
    median_heuristic_bandwidth,
)

SEEDS = range(10)


def kernel_error(X, nu, M, seed):
    Z = RandomFeatureMap.create(X.shape[1], M, nu, seed=seed).transform(X)
    return np.mean(np.abs(approximate_gram(Z) - exact_gaussian_gram(X, nu)))


def test_1_kernel_approximation(record):
    start = time.perf_counter()
    at_2000, ratios = [], []
    for seed in SEEDS:
        X = np.random.default_rng(seed).standard_normal((300, 5))
        nu = median_heuristic_bandwidth(X, seed=seed)
        at_2000.append(kernel_error(X, nu, 2000, seed))
        ratios.append(kernel_error(X, nu, 100, seed) / kernel_error(X, nu, 1600, seed))
    elapsed = time.perf_counter() - start
    ok = max(at_2000) <= 0.05 and np.mean(ratios) >= 2.5 and elapsed < 10
    assert record(
        1, ok,
        f"max MAE at M=2000 {max(at_2000):.4f} (<= 0.05), mean error ratio M=100/M=1600 "
        f"{np.mean(ratios):.2f} (>= 2.5), {elapsed:.1f}s (< 10s)",
    )


def test_2_prox_oracles(record):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = {"simplex": 0.0, "soft": 0.0, "group": 0.0}
    for _ in range(100):
        p = int(rng.integers(1, 5))
        v = rng.uniform(-1.5, 1.5, p)
        worst["simplex"] = max(worst["simplex"], np.abs(project_simplex(v) - brute_simplex(v)).max())
        rho = rng.uniform(0, 1)
        worst["soft"] = max(worst["soft"], np.abs(soft_threshold(v, rho) - brute_soft_threshold(v, rho)).max())
        groups = GroupStructure(np.arange(p) // 2)
        spec = PenaltySpec("group", rho=rng.uniform(0, 0.8), eta=rng.uniform(), groups=groups)
        ref = brute_sparse_group(v, spec.eta1, spec.eta2, groups.members)
        worst["group"] = max(worst["group"], np.abs(prox_sparse_group(v, spec) - ref).max())
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 0.01 + 1e-12 and elapsed < 60
    detail = ", ".join(f"{k} {v:.4f}" for k, v in worst.items())
    assert record(2, ok, f"max deviation from grid minimizers: {detail} (<= 0.01), {elapsed:.1f}s (< 60s)")


def test_3_fista_lasso(record):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    gaps = []
    for _ in range(25):
        X, y = rng.standard_normal((20, 5)), rng.standard_normal(20)
        rho = rng.uniform(0.01, 0.5)
        w = fista(
            lambda w: 0.5 * np.sum((y - X @ w) ** 2) / 20,
            lambda w: -X.T @ (y - X @ w) / 20,
            lambda v, step: soft_threshold(v, rho * step),
            np.zeros(5),
            penalty=lambda w: rho * np.abs(w).sum(),
            max_iter=20_000,
            tol=1e-12,
        )
        ref = lasso_coordinate_descent(X, y, rho)
        gaps.append(abs(lasso_objective(X, y, w, rho) - lasso_objective(X, y, ref, rho)))
    elapsed = time.perf_counter() - start
    ok = max(gaps) <= 1e-6 and elapsed < 10
    assert record(3, ok, f"max objective gap to coordinate descent {max(gaps):.2e} (<= 1e-6), {elapsed:.1f}s (< 10s)")


def test_4_gradient_check(record):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        X = rng.standard_normal((5, 4))
        fmap = RandomFeatureMap.create(4, 6, rng.uniform(0.5, 2), seed=int(rng.integers(1 << 30)))
        A = rng.standard_normal((6, 2))
        G, _ = np.linalg.qr(rng.standard_normal((5, 2)))
        gamma = rng.uniform(0.1, 1.5, 4)

        def value(t):
            Z = feature_map(X, fmap.epsilon, fmap.b, t)
            return np.sum((G - Z @ A) ** 2) / 10

        fd = central_difference(value, gamma, h=1e-6)
        g = gamma_objective_grad(gamma, X, fmap.epsilon, fmap.b, A, G)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    assert record(4, worst <= 1e-5, f"max relative error vs central differences {worst:.2e} (<= 1e-5)")


def test_5_monotone_fits(record):
    worst_step, worst_orth = -np.inf, 0.0
    for seed in SEEDS:
        data = simdata.gen_binary(seed=seed)
        orth = []
        state = fit(
            data.views, data.y, "categorical", FitConfig(M=100, r=3, seed=seed),
            callback=lambda it, s: orth.append(np.abs(s.G.T @ s.G - np.eye(3)).max()),
        )
        worst_step = max(worst_step, np.diff(state.objective_trace).max())
        worst_orth = max(worst_orth, max(orth))
    ok = worst_step <= 1e-8 and worst_orth <= 1e-8
    assert record(
        5, ok, f"largest objective increase {worst_step:.2e} (<= 1e-8), max |G'G - I| {worst_orth:.2e} (<= 1e-8)"
    )


def test_6_optimal_scoring(record):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        K = int(rng.integers(2, 6))
        labels = np.concatenate([np.arange(1, K + 1), rng.integers(1, K + 1, size=int(rng.integers(0, 60)))])
        rng.shuffle(labels)
        Yb = build_optimal_scores(labels).Ybar
        n = labels.size
        worst = max(worst, np.abs(Yb.T @ Yb - n * np.eye(K - 1)).max(), np.abs(Yb.sum(axis=0)).max())
    balanced = build_optimal_scores(np.array([1, 2] * 5))
    exact = np.array_equal(balanced.B, [[1.0], [-1.0]])
    assert record(6, worst <= 1e-8 and exact, f"max constraint violation {worst:.2e} (<= 1e-8), balanced K=2 +-1 coding {exact}")


def binary_run(seed):
    """Cross-validated group fit on one training draw, scored on an independent draw."""
    train, test = simdata.gen_binary(seed=seed), simdata.gen_binary(seed=seed + 1000)
    config = FitConfig(M=300, r=5, max_outer_iter=150, outer_tol=1e-7, fista_max_iter=5, seed=seed)
    grid = model.relative_rho_grid(train, config, [0.0075, 0.01])
    best, _ = model.cross_validate(train, model.CvPlan(grid, folds=3, search=(model.RANDOM, 2), seed=seed),
                                   replace(config, max_outer_iter=30))
    fitted = model.fit_model(train, replace(config, penalty=model.penalties_for(best, train, 0.5)))
    error = model.prediction_error(fitted, model.predict(test.views, fitted), test.y)
    reports = [simdata.selection_metrics(g, range(simdata.SIGNAL_COUNT)) for g in fitted.gammas]
    return error, np.mean([r.tpr for r in reports]), np.mean([r.fpr for r in reports])


def test_7_binary_simulation(record):
    start = time.perf_counter()
    results = np.array([binary_run(seed) for seed in SEEDS])
    elapsed = time.perf_counter() - start
    error, tpr, fpr = results.mean(axis=0)
    ok = error <= 0.15 and tpr >= 0.8 and fpr <= 0.2 and elapsed < 900
    assert record(
        7, ok,
        f"mean held-out error {error:.4f} (<= 0.15), TPR {tpr:.3f} (>= 0.8), FPR {fpr:.3f} (<= 0.2), "
        f"{elapsed:.0f}s (< 900s)",
    )


def continuous_run(seed):
    data = simdata.gen_continuous(seed=seed)
    train, test = simdata.train_test_split(data, 1 / 3, seed=seed)
    config = FitConfig(M=model.choose_M(train.n), r=3, seed=seed)
    fitted = model.fit_model(train, config)
    mse = model.prediction_error(fitted, model.predict(test.views, fitted), test.y)
    # the best any estimator can do is the noiseless mean itself
    floor = np.mean((data.meta["mean"][test.meta["rows"]] - test.y) ** 2)
    return mse / np.var(test.y), floor / np.var(test.y)


def test_8_continuous_simulation(record):
    start = time.perf_counter()
    results = np.array([continuous_run(seed) for seed in SEEDS])
    elapsed = time.perf_counter() - start
    ratio, floor = results.mean(axis=0)
    ok = ratio <= 0.5 and elapsed < 600
    assert record(
        8, ok,
        f"mean held-out MSE / Var(y_test) {ratio:.3f} (<= 0.5; noiseless-mean predictor scores {floor:.3f}), "
        f"{elapsed:.0f}s (< 600s)",
    )


def test_9_exact_kernel_consistency(record):
    rng = np.random.default_rng(9)
    X, X_new = rng.standard_normal((60, 3)), rng.standard_normal((30, 3))
    target = np.column_stack([np.sin(X[:, 0]) + X[:, 1] ** 2 / 2, np.cos(X[:, 2])])
    target = (target - target.mean(axis=0)) / target.std(axis=0)
    nu = median_heuristic_bandwidth(X)
    M, lam = 4096, 0.01
    fmap = RandomFeatureMap.create(3, M, nu, seed=9)
    # features are unnormalized, so the ridge weight carries a factor M
    A = update_loadings(fmap.transform(X), target, M * lam)
    points = np.vstack([X, X_new])
    approx = fmap.transform(points) @ A
    exact = kernel_ridge_fit_predict(exact_gaussian_gram(X, nu), exact_gaussian_gram(points, nu, X), target, lam)
    mad = np.mean(np.abs(approx - exact))
    assert record(9, mad <= 0.05, f"mean absolute deviation from kernel ridge {mad:.4f} (<= 0.05)")


def test_10_cli_determinism(record, tmp_path):
    fast = ["--M", "30", "--r", "2", "--max-outer-iter", "5", "--fista-max-iter", "5"]

    def run_all(root):
        sim, test = root / "sim", root / "test"
        main(["simulate", "--out", str(sim), "--seed", "7", "--n1", "60", "--n2", "40", "--p", "25"])
        main(["simulate", "--out", str(test), "--seed", "8", "--n1", "60", "--n2", "40", "--p", "25"])
        data = ["--view", str(sim / "view1.csv"), "--view", str(sim / "view2.csv"),
                "--outcome", str(sim / "outcome.csv"), "--outcome-kind", "categorical",
                "--groups", f"1:{sim / 'groups1.csv'}", "--groups", f"2:{sim / 'groups2.csv'}"]
        held = ["--view", str(test / "view1.csv"), "--view", str(test / "view2.csv"),
                "--outcome", str(test / "outcome.csv"), "--outcome-kind", "categorical"]
        codes = [
            main(["fit", *data, "--penalty", "group", "--rho", "0.01", "--model", str(root / "model.json"), *fast]),
            main(["predict", *held[:4], "--model", str(root / "model.json"), "--out", str(root / "pred.csv")]),
            main(["cv", *data, "--rho", "0.001,0.01", "--folds", "3", "--out", str(root / "cv.csv"), *fast]),
            main(["evaluate", *held, "--model", str(root / "model.json"), "--out", str(root / "report.json"),
                  "--truth", str(test / "truth.json")]),
        ]
        assert codes == [0, 0, 0, 0]
        return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}

    first, second = run_all(tmp_path / "a"), run_all(tmp_path / "b")
    differing = sorted(str(k) for k in first if first[k] != second.get(k))
    ok = first.keys() == second.keys() and not differing
    assert record(10, ok, f"{len(first)} artifacts from simulate/fit/predict/cv/evaluate, byte-identical: {not differing}")
