"""Alternating minimization of the joint multiview objective.

    L(Y, G, Theta) + (1/2n) sum_d ||G - Z^d A^d||_F^2
                   + sum_d lambda_d / 2 ||A^d||_F^2 + sum_d P(gamma^d),
    subject to G^T G = I_r,

where ``Z^d`` are random Fourier features of view ``d`` scaled by
``gamma^d``.  One outer cycle updates every ``gamma^d`` (FISTA), then every
``A^d`` (ridge), then ``G`` (Procrustes), then ``Theta`` (least squares).
Each block update is exact or monotone, so the objective never increases.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .data import derive_seed
from .errors import DimensionMismatch, InvalidSpec, RankDeficient, SingularSystem
from .outcome import Outcome, loss, prepare_outcome
from .prox import GROUP, SIMPLEX, PenaltySpec, fista, project_simplex, prox_sparse_group
from .randfeatures import SQRT2, RandomFeatureMap, median_heuristic_bandwidth, projection

logger = logging.getLogger(__name__)


@dataclass
class FitConfig:
    M: int = 300
    r: int = 3
    lam: object = 1.0
    penalty: object = None
    max_outer_iter: int = 200
    outer_tol: float = 1e-5
    fista_max_iter: int = 100
    fista_tol: float = 1e-6
    L0: object = None
    seed: int = 0
    max_pairs: int = 500_000
    nu: object = None
    bandwidth_on_scaled: bool = True

    def __post_init__(self):
        if self.r < 1 or self.M < 1 or self.M < self.r:
            raise InvalidSpec(f"need M >= r >= 1, got M={self.M}, r={self.r}")
        if self.max_outer_iter < 1 or self.fista_max_iter < 1:
            raise InvalidSpec("iteration caps must be positive")

    def lambdas(self, D):
        lam = np.broadcast_to(np.asarray(self.lam, dtype=np.float64), (D,))
        if np.any(lam < 0):
            raise InvalidSpec("lambda must be nonnegative")
        return [float(v) for v in lam]

    def penalties(self, D):
        pen = self.penalty
        if pen is None:
            pen = PenaltySpec()
        if isinstance(pen, PenaltySpec):
            return [pen] * D
        pen = list(pen)
        if len(pen) != D:
            raise InvalidSpec(f"{len(pen)} penalties for {D} views")
        return pen

    def bandwidths(self, D):
        if self.nu is None:
            return [None] * D
        return [float(v) for v in np.broadcast_to(np.asarray(self.nu, dtype=np.float64), (D,))]


@dataclass
class ModelState:
    G: np.ndarray
    A: list
    Theta: np.ndarray
    maps: list
    outcome: Outcome
    lam: list
    penalties: list
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0

    @property
    def gammas(self):
        return [m.gamma for m in self.maps]


# ---------------------------------------------------------------------------
# block updates


def update_loadings(Z, G, lam):
    """Ridge solution of ``(Z^T Z / n + lam I) A = Z^T G / n``."""
    n, M = Z.shape
    lhs = Z.T @ Z / n
    lhs[np.diag_indices(M)] += lam
    rhs = Z.T @ G / n
    try:
        if lam > 0:
            return scipy.linalg.solve(lhs, rhs, assume_a="pos")
        with np.errstate(all="raise"):
            if np.linalg.matrix_rank(lhs) < M:
                raise SingularSystem("Z^T Z is singular and lambda = 0")
            return np.linalg.solve(lhs, rhs)
    except (np.linalg.LinAlgError, FloatingPointError) as exc:
        raise SingularSystem(str(exc)) from exc


def procrustes(C):
    """Orthonormal-column maximizer of ``tr(C^T G)``: ``U V^T`` from the thin SVD of C."""
    if not np.any(C):
        raise RankDeficient("cannot orient G against an all-zero matrix")
    U, _, Vt = np.linalg.svd(C, full_matrices=False)
    return U @ Vt


def update_shared(Y_target, Theta, ZA_list):
    """Procrustes update of G from ``(Y Theta^T + sum_d Z^d A^d) / n``."""
    n = ZA_list[0].shape[0]
    C = Y_target @ Theta.T
    for ZA in ZA_list:
        C = C + ZA
    return procrustes(C / n)


def update_theta(G, target):
    """Least squares ``(G^T G)^{-1} G^T target``."""
    return np.linalg.solve(G.T @ G, G.T @ target)


class GammaProblem:
    """Smooth part ``(1/2n) ||G - Z(gamma) A||_F^2`` of one view's gamma step.

    Value and gradient at the same point share one evaluation of the phases.
    In simplex mode the linear term ``1^T gamma`` is included.
    """

    def __init__(self, X, epsilon, b, A, G, linear_term=False):
        self.X, self.epsilon, self.b, self.A, self.G = X, epsilon, b, A, G
        self.n = X.shape[0]
        self.linear_term = linear_term
        self._key = None

    def _evaluate(self, gamma):
        key = gamma.tobytes()
        if key != self._key:
            phase = projection(self.X, self.epsilon, self.b, gamma)
            Z = SQRT2 * np.cos(phase)
            resid = self.G - Z @ self.A
            self._key = key
            self._phase = phase
            self._resid = resid
            self._value = float(np.sum(resid**2) / (2.0 * self.n))
        return self._value

    def value(self, gamma):
        v = self._evaluate(gamma)
        return v + gamma.sum() if self.linear_term else v

    def grad(self, gamma):
        self._evaluate(gamma)
        S = np.sin(self._phase)
        S *= self._resid @ self.A.T
        g = np.einsum("is,is->s", self.X, S @ self.epsilon) * (SQRT2 / self.n)
        return g + 1.0 if self.linear_term else g


def gamma_objective_grad(gamma, X, epsilon, b, A, G):
    """Gradient in ``gamma`` of ``(1/2n) ||G - Z(gamma) A||_F^2``."""
    return GammaProblem(X, epsilon, b, A, G).grad(np.asarray(gamma, dtype=np.float64))


def nonneg_prox(spec):
    """Prox of the sparse group penalty restricted to ``gamma >= 0``."""
    return lambda v, step: prox_sparse_group(np.maximum(v, 0.0), spec, step)


def curvature_estimate(problem, gamma, floor=1e-12):
    """Secant estimate of the gradient's Lipschitz constant near ``gamma``."""
    g0 = problem.grad(gamma)
    norm = np.linalg.norm(g0)
    if norm == 0:
        return floor
    h = 1e-2 * max(np.linalg.norm(gamma), 1e-6)
    g1 = problem.grad(gamma + (h / norm) * g0)
    # leave the cache at gamma, where the caller starts
    problem.value(gamma)
    return max(float(np.linalg.norm(g1 - g0) / h), floor)


def gamma_step_setup(X, fmap, A, G, spec):
    if spec.mode == SIMPLEX:
        problem = GammaProblem(X, fmap.epsilon, fmap.b, A, G, linear_term=True)
        return problem, (lambda v, step: project_simplex(v)), None
    problem = GammaProblem(X, fmap.epsilon, fmap.b, A, G)
    return problem, nonneg_prox(spec), spec.value


def initial_step(problem, gamma, config):
    """Starting L for a gamma step: the configured L0, or a curvature estimate."""
    if config.L0 is None:
        return curvature_estimate(problem, gamma)
    return config.L0


def update_gamma(X, fmap, A, G, spec, config):
    """Run FISTA on one view's scaling vector, warm-started at the current value."""
    problem, prox, penalty = gamma_step_setup(X, fmap, A, G, spec)
    return fista(
        problem.value,
        problem.grad,
        prox,
        fmap.gamma,
        L0=initial_step(problem, fmap.gamma, config),
        max_iter=config.fista_max_iter,
        tol=config.fista_tol,
        penalty=penalty,
    )


# ---------------------------------------------------------------------------
# initialization and objective


def initial_gamma(p, spec):
    gamma = np.full(p, 1.0 / p)
    if spec.mode == GROUP:
        groups = spec.resolve_groups(p)
        for m in groups.members:
            gamma[m] /= np.sqrt(m.size)
    return gamma


def _view_terms(views, state, Z=None):
    total = 0.0
    Z = Z or [None] * len(views)
    for X, Zd, fmap, A, lam, spec in zip(views, Z, state.maps, state.A, state.lam, state.penalties):
        if Zd is None:
            Zd = fmap.transform(X)
        total += np.sum((state.G - Zd @ A) ** 2) / (2.0 * X.shape[0])
        total += 0.5 * lam * np.sum(A**2)
        total += spec.value(fmap.gamma)
    return total


def objective(state, views, Z=None):
    """Full objective value at ``state`` for the training ``views``.

    ``Z`` may carry the current feature matrices to avoid rebuilding them.
    """
    return loss(state.outcome.target, state.G, state.Theta) + float(_view_terms(views, state, Z))


def _check_views(views, outcome_n):
    views = [np.asarray(X, dtype=np.float64) for X in views]
    n = views[0].shape[0]
    if any(X.shape[0] != n for X in views) or outcome_n != n:
        raise DimensionMismatch("views and outcome must share the same number of rows")
    return views


def initialize(views, outcome, config):
    """Starting state: simplex gammas, fresh random features, orthonormal G, zero Theta."""
    D = len(views)
    n = views[0].shape[0]
    penalties = config.penalties(D)
    lam = config.lambdas(D)
    maps = []
    for d, (X, spec, nu) in enumerate(zip(views, penalties, config.bandwidths(D))):
        gamma = initial_gamma(X.shape[1], spec)
        if nu is None:
            # the kernel acts on gamma * x, so the heuristic sees the initial scaling
            basis = X * gamma if config.bandwidth_on_scaled else X
            nu = median_heuristic_bandwidth(basis, config.max_pairs, derive_seed(config.seed, "bandwidth", d))
        fmap = RandomFeatureMap.create(
            X.shape[1], config.M, nu, derive_seed(config.seed, "frequencies", d), gamma=gamma
        )
        maps.append(fmap)
    rng = np.random.default_rng(derive_seed(config.seed, "G_init"))
    G, _ = np.linalg.qr(rng.standard_normal((n, config.r)))
    rng = np.random.default_rng(derive_seed(config.seed, "A_init"))
    A = []
    for _ in range(D):
        A0 = rng.standard_normal((config.M, config.r))
        A.append(A0 / np.linalg.norm(A0))
    Theta = np.zeros((config.r, outcome.width))
    return ModelState(G=G, A=A, Theta=Theta, maps=maps, outcome=outcome, lam=lam, penalties=penalties)


def fit(views, y, kind, config, groups=None, callback=None):
    """Fit the joint model.  Returns a :class:`ModelState`.

    ``groups`` optionally overrides the group structure of each view's
    penalty.  Hitting ``max_outer_iter`` is not an error; ``converged`` is
    then False.
    """
    outcome = y if isinstance(y, Outcome) else prepare_outcome(y, kind)
    views = _check_views(views, outcome.n)
    if groups is not None:
        penalties = [
            replace(spec, groups=g) if g is not None and spec.mode == GROUP else spec
            for spec, g in zip(config.penalties(len(views)), groups)
        ]
        config = replace(config, penalty=penalties)
    state = initialize(views, outcome, config)
    return run(views, state, config, callback=callback)


def _update_closed_form(state, Z, target):
    state.A = [update_loadings(Zd, state.G, lam) for Zd, lam in zip(Z, state.lam)]
    state.G = update_shared(target, state.Theta, [Zd @ Ad for Zd, Ad in zip(Z, state.A)])
    state.Theta = update_theta(state.G, target)


def run(views, state, config, callback=None, warm_up=True):
    """Alternating updates from ``state`` until convergence or the iteration cap.

    With ``warm_up`` the closed-form blocks (A, G, Theta) are solved once for
    the initial gammas before the first cycle, so that the first gamma step
    sees loadings fitted to data rather than random ones.
    """
    n = views[0].shape[0]
    target = state.outcome.target
    Z = [fmap.transform(X) for X, fmap in zip(views, state.maps)]
    state.objective_trace = [objective(state, views, Z)]
    if warm_up:
        _update_closed_form(state, Z, target)
        state.objective_trace.append(objective(state, views, Z))
    prev = state.objective_trace[-1]

    for it in range(1, config.max_outer_iter + 1):
        for d, (X, fmap, spec) in enumerate(zip(views, state.maps, state.penalties)):
            fmap.gamma = update_gamma(X, fmap, state.A[d], state.G, spec, config)
            Z[d] = fmap.transform(X)
        _update_closed_form(state, Z, target)

        current = objective(state, views, Z)
        state.objective_trace.append(current)
        state.n_iter = it
        if callback is not None:
            callback(it, state)
        change = abs(prev - current) / max(1.0, abs(prev))
        logger.debug("iteration %d objective %.10g change %.3g", it, current, change)
        if change <= config.outer_tol:
            state.converged = True
            break
        prev = current
    return state


def rho_max(X, fmap, A, G, spec, L0=None):
    """Smallest rho at which the first gamma prox step zeroes every group.

    The first step from the current gamma uses step ``1/L0`` (by default the
    same curvature estimate the gamma step starts from); with the
    nonnegative sparse group prox, group l is zeroed when
    ``||S(max(v_l, 0), eta rho / L0)|| <= (1 - eta) rho sqrt(p_l) / L0``,
    ``v = gamma - grad / L0``.  The same test is applied at gamma = 0 so that
    zero is also a fixed point of the prox-gradient map.  The larger of the
    two values is returned.
    """
    groups = spec.resolve_groups(X.shape[1])
    problem = GammaProblem(X, fmap.epsilon, fmap.b, A, G)
    if L0 is None:
        L0 = curvature_estimate(problem, fmap.gamma)
    candidates = []
    for gamma in (fmap.gamma, np.zeros(X.shape[1])):
        v = np.maximum(L0 * gamma - problem.grad(gamma), 0.0)
        for m in groups.members:
            candidates.append(_group_zero_threshold(v[m], spec.eta))
    return float(max(candidates))


def _group_zero_threshold(v, eta):
    """Smallest rho with ``||S(v, eta rho)|| <= (1 - eta) rho sqrt(len(v))`` for v >= 0."""
    if not np.any(v > 0):
        return 0.0
    if eta >= 1.0:
        return float(v.max())
    root = np.sqrt(v.size)

    def excess(rho):
        return np.linalg.norm(np.maximum(v - eta * rho, 0.0)) - (1.0 - eta) * rho * root

    hi = np.linalg.norm(v) / ((1.0 - eta) * root)
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * hi:
            break
    return hi
