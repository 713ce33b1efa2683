"""Covariate-adjusted log-fold differences for zero-heavy compositional data.

Typical use::

    from folddiff import load_dataset, IngestSchema, make_folds, fit_nuisances
    from folddiff import tmle_target, estimate_tmle2, center_estimate, parse_centering, infer

    d = load_dataset("counts.csv", "meta.csv", IngestSchema("case", ["age", "site"]))
    nuis = fit_nuisances(d, make_folds(d.n, 5, d.A, seed=1), seed=1)
    est = center_estimate(estimate_tmle2(d, tmle_target(d, nuis)), parse_centering("smedian:0.1"))
    res = infer(est.psi, est.IF, alpha=0.05, B=10_000, seed=1)
"""

from .adjusted import (
    AdjustedEstimate,
    TargetedNuisances,
    center_estimate,
    eif_psi2,
    estimate_adjusted,
    estimate_onestep2,
    estimate_plugin2,
    estimate_psi2_centered,
    estimate_tmle2,
    phibar,
    tmle_target,
)
from .centering import CenteringSpec, apply_centering, center_gradient, center_value, parse_centering
from .data import (
    CategoryStatus,
    DataError,
    Dataset,
    IngestSchema,
    StatusReason,
    estimable_mask,
    load_dataset,
    validate,
    write_dataset,
)
from .inference import InferenceResult, covariance_from_if, infer, maxT_critical, simultaneous_intervals, wald_intervals
from .learners import LearnerMenu, NuisanceFits, fit_nuisances, fit_superlearner, make_folds
from .unadjusted import UnadjustedEstimate, estimate_psi1, estimate_psi1_centered

__version__ = "0.1.0"

__all__ = [
    "AdjustedEstimate",
    "CategoryStatus",
    "CenteringSpec",
    "DataError",
    "Dataset",
    "InferenceResult",
    "IngestSchema",
    "LearnerMenu",
    "NuisanceFits",
    "StatusReason",
    "TargetedNuisances",
    "UnadjustedEstimate",
    "apply_centering",
    "center_estimate",
    "center_gradient",
    "center_value",
    "covariance_from_if",
    "eif_psi2",
    "estimable_mask",
    "estimate_adjusted",
    "estimate_onestep2",
    "estimate_plugin2",
    "estimate_psi1",
    "estimate_psi1_centered",
    "estimate_psi2_centered",
    "estimate_tmle2",
    "fit_nuisances",
    "fit_superlearner",
    "infer",
    "load_dataset",
    "make_folds",
    "maxT_critical",
    "parse_centering",
    "phibar",
    "simultaneous_intervals",
    "tmle_target",
    "validate",
    "wald_intervals",
    "write_dataset",
]
