"""Randomized-kernel multiview learning with outcome-guided variable selection."""
from .data import MultiviewDataset
from .errors import RKMVError
from .model import (
    CvPlan,
    FittedModel,
    choose_M,
    cross_validate,
    embed_target,
    fit_model,
    load_model,
    predict,
    save_model,
    select_components,
)
from .optimizer import FitConfig, fit
from .prox import GroupStructure, PenaltySpec
from .simdata import SimSpec, gen_binary, gen_continuous

__all__ = [
    "CvPlan",
    "FitConfig",
    "FittedModel",
    "GroupStructure",
    "MultiviewDataset",
    "PenaltySpec",
    "RKMVError",
    "SimSpec",
    "choose_M",
    "cross_validate",
    "embed_target",
    "fit",
    "fit_model",
    "gen_binary",
    "gen_continuous",
    "load_model",
    "predict",
    "save_model",
    "select_components",
]
