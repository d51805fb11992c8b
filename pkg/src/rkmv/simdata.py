"""Two-view simulation designs with 20 nonlinear signal variables.

Binary design: per class, a grid ``theta`` of half-class length and the
curve ``s`` stacked from two branches; column 1 is the duplicated grid,
columns 2..20 repeat ``s``, the rest are pure noise.  View 2 is
``5 * X1 + sigma2 * E``.  The continuous design uses the class-one
construction for all n samples and sets ``y = 5 G theta + sigma_y e``
with ``G`` the top three left singular vectors of ``[X1, X2]``.
"""
from dataclasses import dataclass

import numpy as np

from .data import MultiviewDataset
from .errors import InvalidSpec

SIGNAL_COUNT = 20
BINARY = "binary"
CONTINUOUS = "continuous"


@dataclass
class SimSpec:
    scenario: str = BINARY
    n1: int = 500
    n2: int = 200
    n: int = 500
    p: int = 50
    sigma1: float = 0.1
    sigma2: float = 0.2
    sigma_y: float = 0.3
    seed: int = 0

    def validate(self):
        if self.scenario not in (BINARY, CONTINUOUS):
            raise InvalidSpec(f"unknown scenario {self.scenario!r}")
        if self.p < SIGNAL_COUNT:
            raise InvalidSpec(f"need p >= {SIGNAL_COUNT}, got {self.p}")
        sizes = (self.n1, self.n2) if self.scenario == BINARY else (self.n,)
        for size in sizes:
            if size < 4 or size % 2:
                raise InvalidSpec(f"sample sizes must be even and >= 4, got {size}")
        if min(self.sigma1, self.sigma2, self.sigma_y) < 0:
            raise InvalidSpec("noise scales must be nonnegative")


def _noise(rng, n, p):
    # drawn column-major so the first columns do not depend on p
    return rng.standard_normal((p, n)).T


def _signal_block(theta, s, p):
    block = np.zeros((2 * theta.size, p))
    block[:, 0] = np.concatenate([theta, theta])
    block[:, 1:SIGNAL_COUNT] = s[:, None]
    return block


def class_one_block(m, p):
    theta = np.linspace(0.6, 2.5, m // 2)
    s = np.concatenate([(theta - 1) ** 2, (theta + 0.1) ** 2 - 2 * (theta - 1) ** 2])
    return _signal_block(theta, s, p)


def class_two_block(m, p):
    theta = np.linspace(0.96, 1.67, m // 2)
    s = np.concatenate([
        (theta - 1) ** 2 + 0.25,
        (theta + 0.1) ** 2 - 3.5 * (theta - 1) ** 2 + 0.25,
    ])
    return _signal_block(theta, s, p)


def _streams(seed, count):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def signal_groups(p):
    """Oracle two-group structure: signal variables versus noise variables."""
    groups = np.ones(p, dtype=int)
    groups[:SIGNAL_COUNT] = 0
    return groups


def gen_binary(spec=None, **overrides):
    spec = spec or SimSpec(scenario=BINARY)
    spec = SimSpec(**{**spec.__dict__, **overrides, "scenario": BINARY})
    spec.validate()
    e11, e12, e2 = _streams(spec.seed, 3)
    X11 = class_one_block(spec.n1, spec.p) + spec.sigma1 * _noise(e11, spec.n1, spec.p)
    X12 = class_two_block(spec.n2, spec.p) + spec.sigma1 * _noise(e12, spec.n2, spec.p)
    X1 = np.vstack([X11, X12])
    n = spec.n1 + spec.n2
    X2 = 5.0 * X1 + spec.sigma2 * _noise(e2, n, spec.p)
    labels = np.concatenate([np.ones(spec.n1, dtype=int), np.full(spec.n2, 2)])
    groups = signal_groups(spec.p)
    return MultiviewDataset(
        views=[X1, X2],
        y=labels,
        kind="categorical",
        groups=[groups, groups.copy()],
        meta={"signal": list(range(SIGNAL_COUNT)), "spec": dict(spec.__dict__)},
    )


def gen_continuous(spec=None, theta=None, **overrides):
    spec = spec or SimSpec(scenario=CONTINUOUS)
    spec = SimSpec(**{**spec.__dict__, **overrides, "scenario": CONTINUOUS})
    spec.validate()
    e1, e2, ey, et = _streams(spec.seed, 4)
    X1 = class_one_block(spec.n, spec.p) + spec.sigma1 * _noise(e1, spec.n, spec.p)
    X2 = 5.0 * X1 + spec.sigma2 * _noise(e2, spec.n, spec.p)
    U, _, _ = np.linalg.svd(np.hstack([X1, X2]), full_matrices=False)
    G = U[:, :3]
    theta = et.uniform(0.0, 1.0, size=3) if theta is None else np.asarray(theta, dtype=np.float64)
    y = 5.0 * G @ theta + spec.sigma_y * ey.standard_normal(spec.n)
    groups = signal_groups(spec.p)
    return MultiviewDataset(
        views=[X1, X2],
        y=y,
        kind="continuous",
        groups=[groups, groups.copy()],
        meta={
            "signal": list(range(SIGNAL_COUNT)),
            "spec": dict(spec.__dict__),
            "G": G,
            "theta": theta,
            "mean": 5.0 * G @ theta,
        },
    )


def train_test_split(data, test_fraction, seed, stratify=None):
    """Random split into (train, test) datasets; stratified on labels when given."""
    rng = np.random.default_rng(seed)
    n = data.n
    if stratify is None:
        perm = rng.permutation(n)
        n_test = int(round(test_fraction * n))
        test = np.sort(perm[:n_test])
    else:
        test = []
        for label in np.unique(stratify):
            rows = rng.permutation(np.flatnonzero(stratify == label))
            test.extend(rows[: int(round(test_fraction * rows.size))])
        test = np.sort(np.array(test, dtype=int))
    train = np.setdiff1d(np.arange(n), test)
    return data.subset(train), data.subset(test)


@dataclass
class SelectionReport:
    tpr: float
    fpr: float
    selected: list
    threshold: float
    rule: str


def selected_variables(gamma, rule):
    """Indices counted as selected: ``gamma > 0`` (group) or ``gamma > 1/p`` (simplex)."""
    gamma = np.asarray(gamma, dtype=np.float64)
    threshold = 0.0 if rule == "group" else 1.0 / gamma.size
    return np.flatnonzero(gamma > threshold), threshold


def selection_metrics(gamma, signal_set, rule="group"):
    gamma = np.asarray(gamma, dtype=np.float64)
    p = gamma.size
    signal = np.zeros(p, dtype=bool)
    signal[np.asarray(list(signal_set), dtype=int)] = True
    chosen, threshold = selected_variables(gamma, rule)
    picked = np.zeros(p, dtype=bool)
    picked[chosen] = True
    n_signal, n_noise = signal.sum(), (~signal).sum()
    tpr = (picked & signal).sum() / n_signal if n_signal else 0.0
    fpr = (picked & ~signal).sum() / n_noise if n_noise else 0.0
    return SelectionReport(
        tpr=float(tpr), fpr=float(fpr), selected=chosen.tolist(), threshold=threshold, rule=rule
    )
