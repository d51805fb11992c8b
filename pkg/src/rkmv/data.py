"""In-memory multiview dataset and reproducible seed derivation."""
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidDimension, RowCountMismatch
from .outcome import CATEGORICAL, KINDS
from .randfeatures import check_view

# Fixed offsets per subsystem; a view index is appended where relevant.
SEED_LABELS = {
    "bandwidth": 11,
    "frequencies": 23,
    "G_init": 37,
    "A_init": 41,
    "components": 53,
    "cv_folds": 67,
    "cv_search": 71,
    "simulate": 83,
}


def derive_seed(seed, label, index=0):
    """Child seed for ``label`` (and an optional view index) under ``seed``."""
    ss = np.random.SeedSequence([int(seed), SEED_LABELS[label], int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class MultiviewDataset:
    """D views on the same n samples plus an outcome.

    ``groups`` holds one group-label vector per view (or ``None`` for a view
    without group structure).  Categorical outcomes are integer labels 1..K;
    ``label_names`` maps them back to the original labels when known.
    """

    views: list
    y: np.ndarray
    kind: str
    groups: list = None
    view_names: list = None
    variable_names: list = None
    label_names: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.views) < 1:
            raise InvalidDimension("need at least one view")
        self.views = [check_view(X, f"view {d + 1}") for d, X in enumerate(self.views)]
        if self.kind not in KINDS:
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        self.y = np.asarray(self.y)
        n = self.views[0].shape[0]
        for d, X in enumerate(self.views):
            if X.shape[0] != n:
                raise RowCountMismatch(f"view {d + 1} has {X.shape[0]} rows, view 1 has {n}")
        if self.y.shape[0] != n:
            raise RowCountMismatch(f"outcome has {self.y.shape[0]} rows, views have {n}")
        if self.groups is None:
            self.groups = [None] * len(self.views)
        if len(self.groups) != len(self.views):
            raise DimensionMismatch("one group vector (or None) is required per view")

    @property
    def n(self):
        return self.views[0].shape[0]

    @property
    def D(self):
        return len(self.views)

    @property
    def dims(self):
        return [X.shape[1] for X in self.views]

    def subset(self, rows):
        """Dataset restricted to ``rows``; ``meta["rows"]`` maps back to the source rows."""
        rows = np.asarray(rows)
        source = np.arange(self.n)[rows]
        if "rows" in self.meta:
            source = np.asarray(self.meta["rows"])[source]
        return MultiviewDataset(
            views=[X[rows] for X in self.views],
            y=self.y[rows],
            kind=self.kind,
            groups=self.groups,
            view_names=self.view_names,
            variable_names=self.variable_names,
            label_names=self.label_names,
            meta={**self.meta, "rows": source},
        )

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL
