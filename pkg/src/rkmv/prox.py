"""Proximal maps and a monotone FISTA driver with backtracking.

The scaling vectors are updated either on the probability simplex
(individual selection) or under a sparse group lasso penalty

    P(g) = eta1 * ||g||_1 + eta2 * sum_l sqrt(p_l) * ||g_l||_2,

with ``eta1 = eta * rho`` and ``eta2 = (1 - eta) * rho``.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import BacktrackingFailed, GroupMismatch, InvalidSpec, NonFiniteObjective

SIMPLEX = "simplex"
GROUP = "group"


def project_simplex(v):
    """Euclidean projection onto ``{w : w >= 0, sum(w) = 1}``.

    Sort-and-threshold algorithm: find the largest k with
    ``u_k - (sum_{j<=k} u_j - 1) / k > 0`` on the sorted values.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    w = np.maximum(v - tau, 0.0)
    # renormalize the support to wash out cumsum rounding
    return w / w.sum()


def soft_threshold(v, rho):
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - rho, 0.0)


@dataclass
class GroupStructure:
    """Non-overlapping partition of the variables of one view."""

    group_id: np.ndarray
    labels: np.ndarray = field(init=False)
    members: list = field(init=False, repr=False)

    def __post_init__(self):
        self.group_id = np.asarray(self.group_id)
        if self.group_id.ndim != 1 or self.group_id.size == 0:
            raise GroupMismatch("group_id must be a non-empty 1-D label vector")
        self.labels = np.unique(self.group_id)
        self.members = [np.flatnonzero(self.group_id == g) for g in self.labels]

    @classmethod
    def single(cls, p):
        return cls(np.zeros(p, dtype=int))

    @property
    def p(self):
        return self.group_id.size

    @property
    def group_sizes(self):
        return np.array([m.size for m in self.members])

    @property
    def group_count(self):
        return len(self.members)


@dataclass
class PenaltySpec:
    mode: str = SIMPLEX
    rho: float = 0.0
    eta: float = 0.5
    groups: GroupStructure = None

    def __post_init__(self):
        if self.mode not in (SIMPLEX, GROUP):
            raise InvalidSpec(f"unknown penalty mode {self.mode!r}")
        if self.mode == GROUP:
            if self.rho < 0 or not 0 <= self.eta <= 1:
                raise InvalidSpec(f"need rho >= 0 and eta in [0, 1], got {self.rho}, {self.eta}")
            if self.groups is not None and not isinstance(self.groups, GroupStructure):
                self.groups = GroupStructure(self.groups)

    @property
    def eta1(self):
        return self.eta * self.rho

    @property
    def eta2(self):
        return (1.0 - self.eta) * self.rho

    def with_rho(self, rho):
        return PenaltySpec(mode=self.mode, rho=float(rho), eta=self.eta, groups=self.groups)

    def resolve_groups(self, p):
        groups = self.groups if self.groups is not None else GroupStructure.single(p)
        if groups.p != p:
            raise GroupMismatch(f"group labels cover {groups.p} variables, expected {p}")
        return groups

    def value(self, gamma):
        """Penalty value; on the simplex this is the linear term ``1^T gamma``."""
        gamma = np.asarray(gamma, dtype=np.float64)
        if self.mode == SIMPLEX:
            return float(gamma.sum())
        groups = self.resolve_groups(gamma.size)
        group_norms = sum(np.sqrt(m.size) * np.linalg.norm(gamma[m]) for m in groups.members)
        return float(self.eta1 * np.abs(gamma).sum() + self.eta2 * group_norms)


def prox_sparse_group(v, spec, step=1.0):
    """Proximal map of ``step * P`` for the sparse group lasso penalty.

    Soft-threshold at ``step * eta1``, then shrink each group by
    ``max(1 - step * eta2 * sqrt(p_l) / ||g_l||, 0)``; a group whose norm
    after the first stage is at most ``step * eta2 * sqrt(p_l)`` is zeroed.
    """
    v = np.asarray(v, dtype=np.float64)
    groups = spec.resolve_groups(v.size)
    out = soft_threshold(v, step * spec.eta1)
    for m in groups.members:
        norm = np.linalg.norm(out[m])
        limit = step * spec.eta2 * np.sqrt(m.size)
        if norm <= limit:
            out[m] = 0.0
        else:
            out[m] *= 1.0 - limit / norm
    return out


def make_prox(spec):
    """Return ``prox(v, step)`` for the given penalty."""
    if spec.mode == SIMPLEX:
        return lambda v, step: project_simplex(v)
    return lambda v, step: prox_sparse_group(v, spec, step)


@dataclass
class FistaInfo:
    n_iter: int
    L: float
    converged: bool
    objective: float
    fallbacks: int


def fista(
    smooth_value,
    smooth_grad,
    prox,
    x0,
    L0=1.0,
    max_iter=500,
    tol=1e-6,
    penalty=None,
    max_backtracks=60,
    full_output=False,
):
    """Minimize ``smooth_value(x) + penalty(x)`` by monotone FISTA.

    ``prox(v, step)`` must return the proximal point of ``step * penalty``
    at ``v``.  The Lipschitz estimate ``L`` starts at ``L0`` and doubles until
    the quadratic upper bound holds.  When the accelerated point would raise
    the composite objective, a plain proximal-gradient step from the current
    iterate is taken instead, so accepted iterates never increase it.
    Stops once ``max|x_t - x_{t-1}| <= tol``.
    """
    if not L0 > 0:
        raise ValueError("L0 must be positive")
    penalty = penalty or (lambda x: 0.0)

    def composite(f_x, x):
        return f_x + penalty(x)

    def prox_step(y, L):
        f_y = smooth_value(y)
        if not np.isfinite(f_y):
            raise NonFiniteObjective(f"smooth objective is {f_y}")
        g_y = smooth_grad(y)
        if not np.all(np.isfinite(g_y)):
            raise NonFiniteObjective("gradient has non-finite entries")
        slack = 1e-12 * max(1.0, abs(f_y))
        for _ in range(max_backtracks + 1):
            z = prox(y - g_y / L, 1.0 / L)
            f_z = smooth_value(z)
            d = z - y
            if np.isfinite(f_z) and f_z <= f_y + g_y @ d + 0.5 * L * (d @ d) + slack:
                return z, L, f_z
            L *= 2.0
        raise BacktrackingFailed(f"no sufficient decrease after {max_backtracks} doublings")

    x = np.array(x0, dtype=np.float64)
    x_prev = x.copy()
    F_x = composite(smooth_value(x), x)
    if not np.isfinite(F_x):
        raise NonFiniteObjective(f"objective at the starting point is {F_x}")
    y = x.copy()
    L = float(L0)
    beta = 1.0
    converged = False
    fallbacks = 0
    t = 0

    for t in range(1, max_iter + 1):
        z, L, f_z = prox_step(y, L)
        F_z = composite(f_z, z)
        if F_z > F_x:
            fallbacks += 1
            z, L, f_z = prox_step(x, L)
            F_z = composite(f_z, z)
            if F_z > F_x:
                # rounding-level ascent only; keep the current iterate
                z, F_z = x, F_x
        beta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * beta**2))
        x_prev, x, F_x = x, z, F_z
        y = x + ((beta - 1.0) / beta_next) * (x - x_prev)
        beta = beta_next
        if np.max(np.abs(x - x_prev)) <= tol:
            converged = True
            break

    if full_output:
        return x, FistaInfo(n_iter=t, L=L, converged=converged, objective=F_x, fallbacks=fallbacks)
    return x
