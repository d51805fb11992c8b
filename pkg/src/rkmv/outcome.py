"""Outcome handling: continuous targets, optimal scoring for classes, nearest centroid."""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyClass, InvalidDimension, NonFiniteInput, SingleClass

CONTINUOUS = "continuous"
MULTI = "multi"
CATEGORICAL = "categorical"
KINDS = (CONTINUOUS, MULTI, CATEGORICAL)


def _check_labels(labels, K=None):
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise InvalidDimension("labels must be a 1-D vector")
    if not np.issubdtype(labels.dtype, np.integer):
        as_int = labels.astype(np.int64)
        if not np.array_equal(as_int, labels):
            raise InvalidDimension("labels must be integers in 1..K")
        labels = as_int
    K = int(labels.max()) if K is None else K
    if labels.min() < 1 or labels.max() > K:
        raise InvalidDimension(f"labels must lie in 1..{K}")
    counts = np.bincount(labels, minlength=K + 1)[1:]
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0) + 1
        raise EmptyClass(f"classes {missing.tolist()} have no samples")
    return labels, K, counts


@dataclass
class OptimalScoring:
    B: np.ndarray
    Ybar: np.ndarray
    class_counts: np.ndarray
    cumulative: np.ndarray

    @property
    def K(self):
        return self.B.shape[0]


def build_optimal_scores(labels):
    """Score matrix ``B`` (K x K-1) and transformed response ``Ybar = W B``.

    Column ``l`` (1-based) puts ``sqrt(n n_{l+1} / (s_l s_{l+1}))`` on classes
    ``1..l``, ``-sqrt(n s_l / (n_{l+1} s_{l+1}))`` on class ``l+1`` and zero
    below, where ``s_k`` is the cumulative class count.  Then
    ``Ybar^T Ybar = n I`` and ``Ybar^T 1 = 0``.
    """
    labels, K, counts = _check_labels(labels)
    if K < 2:
        raise SingleClass("optimal scoring needs at least two classes")
    n = labels.size
    cumulative = np.cumsum(counts)
    B = np.zeros((K, K - 1))
    for l in range(1, K):
        s_l, s_next, n_next = cumulative[l - 1], cumulative[l], counts[l]
        B[:l, l - 1] = np.sqrt(n * n_next / (s_l * s_next))
        B[l, l - 1] = -np.sqrt(n * s_l / (n_next * s_next))
    Ybar = B[labels - 1]
    return OptimalScoring(B=B, Ybar=Ybar, class_counts=counts, cumulative=cumulative)


@dataclass
class Outcome:
    """Outcome prepared for fitting.

    ``target`` is the matrix the shared representation regresses onto:
    the centered response for continuous kinds, ``Ybar`` for classes.
    """

    kind: str
    values: np.ndarray
    target: np.ndarray
    center: np.ndarray = None
    scoring: OptimalScoring = None

    @property
    def n(self):
        return self.target.shape[0]

    @property
    def width(self):
        return self.target.shape[1]

    @property
    def labels(self):
        return self.values if self.kind == CATEGORICAL else None


def prepare_outcome(values, kind):
    if kind not in KINDS:
        raise ValueError(f"unknown outcome kind {kind!r}; expected one of {KINDS}")
    if kind == CATEGORICAL:
        labels, _, _ = _check_labels(np.asarray(values).ravel())
        scoring = build_optimal_scores(labels)
        return Outcome(kind=kind, values=labels, target=scoring.Ybar, scoring=scoring)

    values = np.asarray(values, dtype=np.float64)
    if kind == CONTINUOUS:
        if values.ndim == 2 and values.shape[1] != 1:
            raise DimensionMismatch("single continuous outcome must have one column")
        values = values.reshape(-1)
        matrix = values[:, None]
    else:
        matrix = values.reshape(values.shape[0], -1) if values.ndim == 1 else values
    if not np.all(np.isfinite(matrix)):
        raise NonFiniteInput("outcome contains non-finite values")
    center = matrix.mean(axis=0)
    return Outcome(kind=kind, values=values, target=matrix - center, center=center)


def loss(target, G, Theta):
    """``(1/2n) ||target - G Theta||_F^2``."""
    target = np.asarray(target, dtype=np.float64)
    if target.ndim == 1:
        target = target[:, None]
    Theta = np.asarray(Theta, dtype=np.float64)
    if Theta.ndim == 1:
        Theta = Theta[:, None]
    if G.shape[0] != target.shape[0] or G.shape[1] != Theta.shape[0] or Theta.shape[1] != target.shape[1]:
        raise DimensionMismatch(
            f"incompatible shapes target {target.shape}, G {G.shape}, Theta {Theta.shape}"
        )
    resid = target - G @ Theta
    return float(np.sum(resid**2) / (2.0 * target.shape[0]))


def class_centroids(U_train, train_labels, K=None):
    train_labels, K, _ = _check_labels(train_labels, K)
    U_train = np.asarray(U_train, dtype=np.float64).reshape(train_labels.size, -1)
    return np.stack([U_train[train_labels == k].mean(axis=0) for k in range(1, K + 1)])


def nearest_centroid(U_target, U_train, train_labels):
    """Assign each target row to the class with the closest training centroid.

    Ties go to the smallest class index.
    """
    U_train = np.asarray(U_train, dtype=np.float64)
    U_target = np.asarray(U_target, dtype=np.float64)
    if U_train.ndim == 1:
        U_train = U_train[:, None]
    if U_target.ndim == 1:
        U_target = U_target[:, None]
    if U_train.shape[1] != U_target.shape[1]:
        raise DimensionMismatch("target and training scores differ in column count")
    centroids = class_centroids(U_train, train_labels)
    dist = ((U_target[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(dist, axis=1) + 1
