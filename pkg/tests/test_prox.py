import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from oracles import (
    brute_simplex,
    brute_soft_threshold,
    brute_sparse_group,
    lasso_coordinate_descent,
    lasso_objective,
    sparse_group_objective,
)
from rkmv.errors import GroupMismatch, InvalidSpec, NonFiniteObjective
from rkmv.prox import (
    GroupStructure,
    PenaltySpec,
    fista,
    make_prox,
    project_simplex,
    prox_sparse_group,
    soft_threshold,
)

vectors = arrays(np.float64, st.integers(1, 8), elements=st.floats(-10, 10))


class TestProjectSimplex:
    @pytest.mark.parametrize(
        "v, expected",
        [
            ([0.5, 0.5], [0.5, 0.5]),
            ([1.0, 1.0], [0.5, 0.5]),
            ([0.8, 0.3, -0.2], [0.75, 0.25, 0.0]),
            ([3.0], [1.0]),
        ],
    )
    def test_examples(self, v, expected):
        assert_allclose(project_simplex(np.array(v)), expected, atol=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(vectors)
    def test_kkt(self, v):
        w = project_simplex(v)
        assert np.all(w >= 0)
        assert abs(w.sum() - 1) <= 1e-12
        support = w > 0
        tau = np.mean((v - w)[support])
        assert_allclose(w, np.maximum(v - tau, 0), atol=1e-9)

    def test_matches_grid(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            v = rng.uniform(-1, 1.5, size=3)
            assert np.max(np.abs(project_simplex(v) - brute_simplex(v))) <= 0.01 + 1e-12


class TestSoftThreshold:
    def test_examples(self):
        assert soft_threshold(np.array([2.0]), 0.5)[0] == 1.5
        assert soft_threshold(np.array([-0.3]), 0.5)[0] == 0.0
        assert_allclose(soft_threshold(np.array([1.0, -2.0, 0.1]), 1.0), [0.0, -1.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(vectors, st.floats(0, 5))
    def test_shrinks(self, v, rho):
        out = soft_threshold(v, rho)
        assert np.all(np.abs(out) <= np.abs(v))
        assert np.all(out * v >= 0)

    def test_matches_grid(self):
        rng = np.random.default_rng(1)
        v = rng.uniform(-2, 2, 6)
        assert np.max(np.abs(soft_threshold(v, 0.4) - brute_soft_threshold(v, 0.4))) <= 0.01


class TestSparseGroup:
    def test_group_shrink_example(self):
        # eta = 0 gives a pure group penalty; eta2 * sqrt(2) = 2.5
        spec = PenaltySpec("group", rho=2.5 / np.sqrt(2), eta=0.0)
        assert_allclose(prox_sparse_group(np.array([3.0, 4.0]), spec), [1.5, 2.0])

    def test_zero_group(self):
        spec = PenaltySpec("group", rho=1.5, eta=0.0, groups=[0])
        assert_allclose(prox_sparse_group(np.array([1.0]), spec), [0.0])

    def test_zero_penalty_is_identity(self):
        v = np.array([0.3, -1.2, 4.0])
        assert_allclose(prox_sparse_group(v, PenaltySpec("group", rho=0.0, groups=[0, 0, 1])), v)

    def test_step_scales_thresholds(self):
        spec = PenaltySpec("group", rho=1.0, eta=0.5, groups=[0, 0])
        v = np.array([2.0, -3.0])
        assert_allclose(prox_sparse_group(v, spec, step=0.5), prox_sparse_group(v, spec.with_rho(0.5)))

    def test_group_mismatch(self):
        with pytest.raises(GroupMismatch):
            prox_sparse_group(np.ones(3), PenaltySpec("group", rho=1.0, groups=[0, 1]))

    def test_invalid_penalty(self):
        with pytest.raises(InvalidSpec):
            PenaltySpec("group", rho=-1.0)
        with pytest.raises(InvalidSpec):
            PenaltySpec("lasso")

    def test_matches_grid(self):
        rng = np.random.default_rng(2)
        groups = GroupStructure([0, 0, 1, 1])
        for _ in range(5):
            v = rng.uniform(-1, 1, 4)
            spec = PenaltySpec("group", rho=rng.uniform(0, 0.6), eta=rng.uniform(), groups=groups)
            got = prox_sparse_group(v, spec)
            ref = brute_sparse_group(v, spec.eta1, spec.eta2, groups.members)
            assert np.max(np.abs(got - ref)) <= 0.01 + 1e-12
            f = sparse_group_objective(np.vstack([got, ref]), v, spec.eta1, spec.eta2, groups.members)
            assert f[0] <= f[1] + 1e-12

    @settings(max_examples=100, deadline=None)
    @given(
        arrays(np.float64, 6, elements=st.floats(-5, 5)),
        arrays(np.float64, 6, elements=st.floats(-5, 5)),
        st.floats(0, 3),
        st.floats(0, 1),
    )
    def test_nonexpansive(self, u, v, rho, eta):
        spec = PenaltySpec("group", rho=rho, eta=eta, groups=[0, 0, 1, 1, 1, 2])
        gap = np.linalg.norm(prox_sparse_group(u, spec) - prox_sparse_group(v, spec))
        assert gap <= np.linalg.norm(u - v) + 1e-12

    def test_penalty_value(self):
        spec = PenaltySpec("group", rho=2.0, eta=0.25, groups=[0, 0, 1])
        g = np.array([3.0, -4.0, 1.0])
        assert spec.value(g) == pytest.approx(0.5 * 8.0 + 1.5 * (np.sqrt(2) * 5.0 + 1.0))
        assert PenaltySpec("simplex").value(g) == pytest.approx(0.0)


def test_group_structure():
    gs = GroupStructure([2, 0, 2, 1])
    assert gs.group_count == 3
    assert list(gs.group_sizes) == [1, 1, 2]
    assert gs.p == 4


class TestFista:
    def test_quadratic(self):
        x = fista(lambda x: 0.5 * (x[0] - 3) ** 2, lambda x: x - 3, lambda v, step: v, np.zeros(1), tol=1e-10)
        assert_allclose(x, [3.0], atol=1e-6)

    def test_one_dimensional_lasso(self):
        x = fista(
            lambda x: 0.5 * (x[0] - 2) ** 2,
            lambda x: x - 2,
            lambda v, step: soft_threshold(v, step),
            np.zeros(1),
            penalty=lambda x: abs(x[0]),
            tol=1e-12,
        )
        assert_allclose(x, [1.0], atol=1e-9)

    def test_lasso_against_coordinate_descent(self):
        rng = np.random.default_rng(3)
        X, y, rho = rng.standard_normal((20, 5)), rng.standard_normal(20), 0.1
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
        assert abs(lasso_objective(X, y, w, rho) - lasso_objective(X, y, ref, rho)) <= 1e-6

    def test_monotone_from_far_start(self):
        rng = np.random.default_rng(4)
        Q = rng.standard_normal((6, 6))
        Q = Q @ Q.T + 0.01 * np.eye(6)
        values = []

        def value(x):
            v = 0.5 * x @ Q @ x
            values.append(v)
            return v

        x0 = 10 * rng.standard_normal(6)
        _, info = fista(value, lambda x: Q @ x, lambda v, step: v, x0, L0=1e-3, max_iter=300, full_output=True)
        assert info.objective <= value(x0) + 1e-12
        assert info.L > 1e-3

    def test_composite_never_exceeds_start(self):
        spec = PenaltySpec("group", rho=0.3, eta=0.5, groups=[0, 0, 1])
        prox = make_prox(spec)
        start = np.array([1.0, -1.0, 2.0])
        x, info = fista(
            lambda x: 0.5 * np.sum((x - 1) ** 2),
            lambda x: x - 1,
            prox,
            start,
            penalty=spec.value,
            full_output=True,
        )
        assert info.objective <= 0.5 * np.sum((start - 1) ** 2) + spec.value(start) + 1e-12

    def test_simplex_prox(self):
        c = np.array([0.2, 0.9, -0.4])
        x = fista(lambda x: 0.5 * np.sum((x - c) ** 2), lambda x: x - c, make_prox(PenaltySpec()), np.ones(3) / 3)
        assert_allclose(x, project_simplex(c), atol=1e-6)

    def test_non_finite(self):
        with pytest.raises(NonFiniteObjective):
            fista(lambda x: np.nan, lambda x: x, lambda v, s: v, np.zeros(2))

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            fista(lambda x: 0.0, lambda x: x, lambda v, s: v, np.zeros(1), L0=0.0)
