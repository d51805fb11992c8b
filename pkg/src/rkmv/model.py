"""Estimator API: heuristics, fitting, prediction, cross-validation, persistence."""
import base64
import itertools
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import optimizer
from .data import MultiviewDataset, derive_seed
from .errors import (
    DimensionMismatch,
    FormatVersionMismatch,
    InvalidSpec,
    ParseError,
    RKMVError,
    UnfittedModel,
)
from .outcome import CATEGORICAL, CONTINUOUS, nearest_centroid
from .prox import GROUP, SIMPLEX, GroupStructure, PenaltySpec
from .randfeatures import RandomFeatureMap, check_view, exact_gaussian_gram, median_heuristic_bandwidth

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# hyperparameter heuristics


def components_from_spectrum(eigenvalues, threshold=0.1):
    """Number of components read off a spectrum by its first small relative gap.

    With eigenvalues sorted in decreasing order, find the first ``k >= 2``
    where ``(lam_{k-1} - lam_k) / lam_{k-1} < threshold`` and return
    ``k - 1``, the components kept before the spectrum flattens.  A spectrum
    with no such gap keeps every component.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=np.float64))[::-1]
    if lam.size < 2 or np.ptp(lam) <= 1e-12 * max(abs(lam[0]), 1.0):
        return 1
    for k in range(1, lam.size):
        prev = lam[k - 1]
        if prev <= 0:
            return max(k, 1)
        if (prev - lam[k]) / prev < threshold:
            return max(k, 1)
    return lam.size


def select_components(views, threshold=0.1, max_rows=1000, seed=0):
    """Latent dimension ``r`` from the eigen-gap of each view's Gaussian Gram.

    Views with more than ``max_rows`` rows are subsampled (seeded) before the
    Gram matrix is formed.  The smallest per-view choice wins.
    """
    choices = []
    for d, X in enumerate(views):
        X = check_view(X, f"view {d + 1}")
        if X.shape[0] > max_rows:
            rng = np.random.default_rng(derive_seed(seed, "components", d))
            X = X[np.sort(rng.choice(X.shape[0], max_rows, replace=False))]
        nu = median_heuristic_bandwidth(X, seed=derive_seed(seed, "bandwidth", d))
        eigenvalues = np.linalg.eigvalsh(exact_gaussian_gram(X, nu))
        choices.append(components_from_spectrum(eigenvalues, threshold))
    return max(1, min(choices))


def choose_M(n):
    """Number of random features: 300 for n > 1000, otherwise n // 2 (at least 2)."""
    if n < 2:
        raise InvalidSpec(f"need n >= 2, got {n}")
    return 300 if n > 1000 else max(2, n // 2)


# ---------------------------------------------------------------------------
# fitted model


@dataclass
class FittedModel:
    """Everything needed to embed and predict new samples.

    ``view_center``/``view_scale`` hold an optional column standardization
    that is applied to every input view before the feature maps.
    """

    maps: list
    A: list
    G: np.ndarray
    Theta: np.ndarray
    kind: str
    U_train: np.ndarray
    labels: np.ndarray = None
    outcome_center: np.ndarray = None
    label_names: list = None
    view_center: list = None
    view_scale: list = None
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    n_iter: int = 0
    config: dict = field(default_factory=dict)

    @property
    def n_train(self):
        return self.G.shape[0]

    @property
    def D(self):
        return len(self.maps)

    @property
    def gammas(self):
        return [m.gamma for m in self.maps]

    @property
    def selection_rules(self):
        modes = [pen.get("mode", SIMPLEX) for pen in self.config.get("penalty", [])]
        return [GROUP if mode == GROUP else SIMPLEX for mode in modes] or [SIMPLEX] * self.D

    def preprocess(self, views):
        """Validate target views and apply the stored standardization."""
        if len(views) != self.D:
            raise DimensionMismatch(f"model has {self.D} views, got {len(views)}")
        out = []
        for d, (X, fmap) in enumerate(zip(views, self.maps)):
            X = check_view(X, f"view {d + 1}")
            if X.shape[1] != fmap.p:
                raise DimensionMismatch(f"view {d + 1} has {X.shape[1]} columns, model expects {fmap.p}")
            if self.view_center is not None:
                X = (X - self.view_center[d]) / self.view_scale[d]
            out.append(X)
        return out


def config_echo(config):
    """JSON-ready description of a FitConfig (penalties expanded per view)."""
    echo = {f.name: getattr(config, f.name) for f in fields(config) if f.name != "penalty"}
    for key in ("lam", "nu", "L0"):
        value = echo[key]
        if value is not None and np.ndim(value) > 0:
            echo[key] = [float(v) for v in value]
        elif value is not None:
            echo[key] = float(value)
    return echo


def _penalty_echo(spec):
    out = {"mode": spec.mode, "rho": float(spec.rho), "eta": float(spec.eta)}
    if spec.groups is not None:
        out["groups"] = [int(g) for g in spec.groups.group_id]
    return out


def standardization(views):
    """Column means and standard deviations; constant columns get scale 1."""
    centers, scales = [], []
    for X in views:
        X = np.asarray(X, dtype=np.float64)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        centers.append(X.mean(axis=0))
        scales.append(scale)
    return centers, scales


def fit_model(data, config, standardize=False, callback=None):
    """Fit on a :class:`MultiviewDataset` and wrap the result as a FittedModel."""
    views = data.views
    view_center = view_scale = None
    if standardize:
        view_center, view_scale = standardization(views)
        views = [(X - c) / s for X, c, s in zip(views, view_center, view_scale)]
    state = optimizer.fit(views, data.y, data.kind, config, groups=data.groups, callback=callback)
    echo = config_echo(config)
    echo["penalty"] = [_penalty_echo(spec) for spec in state.penalties]
    return FittedModel(
        maps=state.maps,
        A=state.A,
        G=state.G,
        Theta=state.Theta,
        kind=data.kind,
        U_train=state.G @ state.Theta,
        labels=state.outcome.labels,
        outcome_center=state.outcome.center,
        label_names=data.label_names,
        view_center=view_center,
        view_scale=view_scale,
        objective_trace=list(state.objective_trace),
        converged=state.converged,
        n_iter=state.n_iter,
        config=echo,
    )


def embed_target(views, model):
    """Orthonormal target representation closest to ``sum_d Z_target^d A^d``."""
    if model is None or model.G is None:
        raise UnfittedModel("model has not been fitted")
    views = model.preprocess(views)
    C = sum(fmap.transform(X) @ A for X, fmap, A in zip(views, model.maps, model.A))
    return optimizer.procrustes(C)


def predict(views, model):
    """Predictions for target views.

    The target representation is orthonormal over the target rows, so it is
    rescaled by ``sqrt(n_target / n_train)`` to put its rows on the training
    scale before applying ``Theta``; with as many target rows as training
    rows this factor is one.  Continuous outcomes get the training mean added
    back; categorical outcomes are assigned to the nearest training centroid.
    """
    G_target = embed_target(views, model)
    U_target = np.sqrt(G_target.shape[0] / model.n_train) * (G_target @ model.Theta)
    if model.kind == CATEGORICAL:
        return nearest_centroid(U_target, model.U_train, model.labels)
    pred = U_target + model.outcome_center
    return pred[:, 0] if model.kind == CONTINUOUS else pred


def prediction_error(model, y_pred, y_true):
    """Misclassification rate for classes, otherwise mean squared error."""
    y_pred, y_true = np.asarray(y_pred), np.asarray(y_true)
    if model.kind == CATEGORICAL:
        return float(np.mean(y_pred != y_true))
    return float(np.mean((y_pred.astype(np.float64) - y_true.astype(np.float64)) ** 2))


# ---------------------------------------------------------------------------
# cross-validation

GRID = "grid"
RANDOM = "random"


@dataclass
class CvPlan:
    """Candidate rho values per view and how to search their combinations.

    ``search`` is ``"grid"`` or ``("random", k)``.
    """

    rho_grid: list
    eta: float = 0.5
    folds: int = 3
    search: object = GRID
    seed: int = 0

    def __post_init__(self):
        self.rho_grid = [[float(r) for r in np.atleast_1d(g)] for g in self.rho_grid]
        if not self.rho_grid or any(len(g) == 0 for g in self.rho_grid):
            raise InvalidSpec("every view needs a non-empty rho grid")
        if any(r < 0 for g in self.rho_grid for r in g):
            raise InvalidSpec("rho values must be nonnegative")
        if self.folds < 2:
            raise InvalidSpec(f"need at least 2 folds, got {self.folds}")
        if self.search != GRID:
            kind, k = self.search
            if kind != RANDOM or not 1 <= int(k) <= self.total:
                raise InvalidSpec(f"random search needs 1 <= k <= {self.total}, got {self.search!r}")
            self.search = (RANDOM, int(k))

    @property
    def total(self):
        return int(np.prod([len(g) for g in self.rho_grid]))

    def combinations(self):
        combos = list(itertools.product(*self.rho_grid))
        if self.search == GRID:
            return combos
        rng = np.random.default_rng(derive_seed(self.seed, "cv_search"))
        keep = np.sort(rng.choice(len(combos), self.search[1], replace=False))
        return [combos[i] for i in keep]


@dataclass
class CvRow:
    rho: tuple
    fold_scores: list
    failed: bool = False
    message: str = ""

    @property
    def mean(self):
        return float(np.mean(self.fold_scores)) if not self.failed else float("nan")


def fold_assignment(n, folds, seed, labels=None):
    """Fold index per sample; classes are spread evenly across folds when labels are given."""
    rng = np.random.default_rng(derive_seed(seed, "cv_folds"))
    assign = np.empty(n, dtype=int)
    if labels is None:
        perm = rng.permutation(n)
        assign[perm] = np.arange(n) % folds
        return assign
    labels = np.asarray(labels)
    offset = 0
    for label in np.unique(labels):
        rows = rng.permutation(np.flatnonzero(labels == label))
        # continue the round robin across classes so fold sizes stay balanced
        assign[rows] = (offset + np.arange(rows.size)) % folds
        offset += rows.size
    return assign


def penalties_for(rho, data, eta):
    return [
        PenaltySpec(GROUP, rho=r, eta=eta, groups=None if g is None else GroupStructure(g))
        for r, g in zip(rho, data.groups)
    ]


def cross_validate(data, plan, config, standardize=False):
    """Pick the rho combination with the lowest average held-out error.

    Returns ``(best_rho, table)``.  Fits that raise a package error mark the
    whole combination as failed; ties go to the larger total rho.
    """
    if len(plan.rho_grid) != data.D:
        raise InvalidSpec(f"plan has {len(plan.rho_grid)} rho grids for {data.D} views")
    labels = data.y if data.is_categorical else None
    assign = fold_assignment(data.n, plan.folds, plan.seed, labels)
    table = []
    for rho in plan.combinations():
        fold_config = replace(config, penalty=penalties_for(rho, data, plan.eta))
        row = CvRow(rho=tuple(rho), fold_scores=[])
        for k in range(plan.folds):
            train, test = data.subset(assign != k), data.subset(assign == k)
            try:
                model = fit_model(train, fold_config, standardize=standardize)
                row.fold_scores.append(prediction_error(model, predict(test.views, model), test.y))
            except (RKMVError, np.linalg.LinAlgError) as exc:
                logger.warning("rho %s fold %d failed: %s", rho, k, exc)
                row.failed, row.message = True, f"fold {k}: {exc}"
                break
        table.append(row)
    usable = [row for row in table if not row.failed]
    if not usable:
        raise RKMVError("every rho combination failed during cross-validation")
    best = min(usable, key=lambda row: (row.mean, -sum(row.rho)))
    return best.rho, table


def relative_rho_grid(data, config, fractions, standardize=False):
    """Per-view rho candidates as fractions of that view's ``rho_max``.

    ``rho_max`` is taken at the state reached after the closed-form warm-up
    pass from the initial scaling, i.e. where the first gamma step starts.
    """
    views = data.views
    if standardize:
        centers, scales = standardization(views)
        views = [(X - c) / s for X, c, s in zip(views, centers, scales)]
    probe = replace(config, penalty=penalties_for([0.0] * data.D, data, 0.5))
    outcome = optimizer.prepare_outcome(data.y, data.kind)
    state = optimizer.initialize(views, outcome, probe)
    Z = [fmap.transform(X) for X, fmap in zip(views, state.maps)]
    optimizer._update_closed_form(state, Z, outcome.target)
    grids = []
    for X, fmap, A, spec in zip(views, state.maps, state.A, state.penalties):
        top = optimizer.rho_max(X, fmap, A, state.G, spec, config.L0)
        grids.append([float(f) * top for f in fractions])
    return grids


# ---------------------------------------------------------------------------
# persistence


def _encode(array):
    array = np.ascontiguousarray(array, dtype="<f8")
    return {"shape": list(array.shape), "data": base64.b64encode(array.tobytes()).decode("ascii")}


def _decode(blob):
    raw = base64.b64decode(blob["data"].encode("ascii"), validate=True)
    return np.frombuffer(raw, dtype="<f8").reshape(blob["shape"]).astype(np.float64)


def _maybe(value, fn):
    return None if value is None else fn(value)


def model_document(model):
    """The canonical JSON-ready dictionary stored in a model file."""
    return {
        "format_version": FORMAT_VERSION,
        "config": model.config,
        "outcome_meta": {
            "kind": model.kind,
            "center": _maybe(model.outcome_center, _encode),
            "label_names": model.label_names,
        },
        "views": [
            {
                "nu": float(fmap.nu),
                "gamma": _encode(fmap.gamma),
                "epsilon": _encode(fmap.epsilon),
                "b": _encode(fmap.b),
                "A": _encode(A),
                "center": None if model.view_center is None else _encode(model.view_center[d]),
                "scale": None if model.view_scale is None else _encode(model.view_scale[d]),
            }
            for d, (fmap, A) in enumerate(zip(model.maps, model.A))
        ],
        "G": _encode(model.G),
        "Theta": _encode(model.Theta),
        "U_train": _encode(model.U_train),
        "labels": _maybe(model.labels, _encode),
        "objective_trace": [float(v) for v in model.objective_trace],
        "converged": bool(model.converged),
        "n_iter": int(model.n_iter),
    }


def dumps_model(model):
    return json.dumps(model_document(model), sort_keys=True, indent=1) + "\n"


def save_model(model, path):
    """Write the model atomically: a partial file never replaces a good one."""
    text = dumps_model(model)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".model-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def loads_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc}", row=exc.lineno, col=exc.colno) from exc
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        found = doc.get("format_version") if isinstance(doc, dict) else None
        raise FormatVersionMismatch(f"expected format_version {FORMAT_VERSION}, found {found!r}")
    try:
        views = doc["views"]
        maps = [
            RandomFeatureMap(
                epsilon=_decode(v["epsilon"]), b=_decode(v["b"]), nu=float(v["nu"]), gamma=_decode(v["gamma"])
            )
            for v in views
        ]
        has_scaling = all(v["center"] is not None for v in views)
        meta = doc["outcome_meta"]
        labels = _maybe(doc["labels"], _decode)
        return FittedModel(
            maps=maps,
            A=[_decode(v["A"]) for v in views],
            G=_decode(doc["G"]),
            Theta=_decode(doc["Theta"]),
            kind=meta["kind"],
            U_train=_decode(doc["U_train"]),
            labels=None if labels is None else labels.astype(np.int64),
            outcome_center=_maybe(meta["center"], _decode),
            label_names=meta["label_names"],
            view_center=[_decode(v["center"]) for v in views] if has_scaling else None,
            view_scale=[_decode(v["scale"]) for v in views] if has_scaling else None,
            objective_trace=[float(v) for v in doc["objective_trace"]],
            converged=bool(doc["converged"]),
            n_iter=int(doc["n_iter"]),
            config=doc["config"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model file: {exc!r}") from exc


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


def as_dataset(views, y, kind, groups=None):
    """Convenience wrapper building a :class:`MultiviewDataset`."""
    return MultiviewDataset(views=list(views), y=y, kind=kind, groups=groups)
