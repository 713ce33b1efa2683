"""Candidate learners, stacking and cross-fitted nuisance estimation."""

from .base import (
    DEFAULT_BINARY_MENU,
    DEFAULT_REGRESSION_MENU,
    LIGHT_BINARY_MENU,
    LIGHT_REGRESSION_MENU,
    GlmLearner,
    LearnerSpec,
    SampleMean,
    parse_learner,
    parse_menu,
)
from .boosting import BoostedTrees
from .nuisance import (
    PI_BOUNDS,
    Q_BOUNDS,
    FoldAssignment,
    LearnerMenu,
    NuisanceFits,
    fit_nuisances,
    make_folds,
)
from .stacking import EnsembleFit, fit_superlearner, project_simplex, simplex_weights, stacking_risk

__all__ = [
    "BoostedTrees",
    "DEFAULT_BINARY_MENU",
    "DEFAULT_REGRESSION_MENU",
    "EnsembleFit",
    "FoldAssignment",
    "GlmLearner",
    "LIGHT_BINARY_MENU",
    "LIGHT_REGRESSION_MENU",
    "LearnerMenu",
    "LearnerSpec",
    "NuisanceFits",
    "PI_BOUNDS",
    "Q_BOUNDS",
    "SampleMean",
    "fit_nuisances",
    "fit_superlearner",
    "make_folds",
    "parse_learner",
    "parse_menu",
    "project_simplex",
    "simplex_weights",
    "stacking_risk",
]
