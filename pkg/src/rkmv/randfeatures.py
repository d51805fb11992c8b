"""Random Fourier features for the Gaussian kernel, with per-variable scaling.

Each view gets a frozen draw of frequencies ``epsilon`` (M x p) and phases
``b`` (M,).  A nonnegative scaling vector ``gamma`` multiplies the inputs
before projection, so that ``w_m = epsilon_m * gamma`` and zeros in
``gamma`` switch variables off in every feature at once.

Features are stored unscaled, ``sqrt(2) * cos(.)``; the kernel estimate
between two rows is ``z(x) @ z(x') / M``.
"""
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import AllRowsIdentical, DimensionMismatch, InvalidDimension, NonFiniteInput

SQRT2 = np.sqrt(2.0)
DEFAULT_MAX_PAIRS = 500_000


def check_view(X, name="X"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidDimension(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return X


def _lower_median(values):
    values = np.sort(values)
    return values[(values.size - 1) // 2]


def median_heuristic_bandwidth(X, max_pairs=DEFAULT_MAX_PAIRS, seed=0):
    """Median pairwise Euclidean distance between rows of ``X``.

    All pairs are used when there are at most ``max_pairs`` of them;
    otherwise ``max_pairs`` distinct pairs are drawn uniformly with ``seed``.
    The lower median is taken.  If it is zero, the smallest positive distance
    is returned instead.
    """
    X = check_view(X)
    n = X.shape[0]
    if n < 2:
        raise InvalidDimension("median heuristic needs at least two rows")
    if max_pairs < 1:
        raise InvalidDimension("max_pairs must be >= 1")

    if n * (n - 1) // 2 <= max_pairs:
        dist = pdist(X)
    else:
        rng = np.random.default_rng(seed)
        i = rng.integers(0, n, size=max_pairs)
        # offset in [1, n-1] guarantees j != i
        j = (i + rng.integers(1, n, size=max_pairs)) % n
        dist = np.sqrt(np.sum((X[i] - X[j]) ** 2, axis=1))

    nu = _lower_median(dist)
    if nu > 0:
        return float(nu)
    positive = dist[dist > 0]
    if positive.size == 0:
        raise AllRowsIdentical("every pairwise distance is zero")
    return float(positive.min())


def sample_frequencies(p, M, nu, seed):
    """Draw ``epsilon ~ N(0, I / nu^2)`` (M x p) and ``b ~ U[0, 2 pi)`` (M,)."""
    if p < 1 or M < 1:
        raise InvalidDimension(f"need p >= 1 and M >= 1, got p={p}, M={M}")
    if not (np.isfinite(nu) and nu > 0):
        raise InvalidDimension(f"bandwidth must be positive, got {nu}")
    rng = np.random.default_rng(seed)
    epsilon = rng.normal(0.0, 1.0 / nu, size=(M, p))
    b = rng.uniform(0.0, 2.0 * np.pi, size=M)
    return epsilon, b


def projection(X, epsilon, b, gamma):
    """Phase matrix ``U[i, m] = epsilon_m . (gamma * x_i) + b_m``.

    Columns with zero scaling are dropped before the product, so appending
    switched-off variables cannot change the result even in the last bit.
    """
    active = gamma != 0
    if not active.all():
        X, epsilon, gamma = X[:, active], epsilon[:, active], gamma[active]
    return (X * gamma) @ epsilon.T + b


def feature_map(X, epsilon, b, gamma):
    X = np.asarray(X, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != gamma.shape[0] or epsilon.shape[1] != gamma.shape[0]:
        raise DimensionMismatch(
            f"X has {X.shape[-1]} columns, gamma has {gamma.shape[0]}, "
            f"epsilon has {epsilon.shape[1]}"
        )
    return SQRT2 * np.cos(projection(X, epsilon, b, gamma))


def approximate_gram(Z, Z_other=None):
    Z_other = Z if Z_other is None else Z_other
    return Z @ Z_other.T / Z.shape[1]


def exact_gaussian_gram(X, nu, Y=None):
    """``K[i, j] = exp(-||x_i - y_j||^2 / (2 nu^2))``."""
    X = check_view(X)
    if not nu > 0:
        raise InvalidDimension(f"bandwidth must be positive, got {nu}")
    Y = X if Y is None else check_view(Y, "Y")
    sq = cdist(X, Y, "sqeuclidean")
    return np.exp(-sq / (2.0 * nu**2))


@dataclass
class RandomFeatureMap:
    """Frozen frequencies and phases for one view plus its learnable scaling."""

    epsilon: np.ndarray
    b: np.ndarray
    nu: float
    gamma: np.ndarray

    @classmethod
    def create(cls, p, M, nu, seed, gamma=None):
        epsilon, b = sample_frequencies(p, M, nu, seed)
        if gamma is None:
            gamma = np.ones(p)
        return cls(epsilon=epsilon, b=b, nu=float(nu), gamma=np.asarray(gamma, dtype=np.float64))

    @property
    def M(self):
        return self.epsilon.shape[0]

    @property
    def p(self):
        return self.epsilon.shape[1]

    def transform(self, X, gamma=None):
        return feature_map(X, self.epsilon, self.b, self.gamma if gamma is None else gamma)
