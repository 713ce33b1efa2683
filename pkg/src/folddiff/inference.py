"""Influence-function based covariance, Wald intervals and max-T calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

DEFAULT_B = 10_000


@dataclass
class InferenceResult:
    psi: np.ndarray
    sigma: np.ndarray
    se: np.ndarray
    ci_marginal: np.ndarray
    ci_simultaneous: np.ndarray
    p_values: np.ndarray
    crit_marginal: float
    crit_simultaneous: float
    alpha: float
    B: int
    n: int


def covariance_from_if(IF) -> np.ndarray:
    """Uncentered second-moment matrix (1/n) sum_i IF_i IF_i^T."""
    IF = np.asarray(IF, dtype=float)
    return IF.T @ IF / IF.shape[0]


def wald_intervals(psi, sigma, n: int, alpha: float = 0.05):
    """Marginal Wald intervals and two-sided p-values for H0: parameter = 0.

    A zero variance gives the degenerate interval [psi, psi] and a p-value
    of 0 (psi != 0) or 1 (psi == 0).
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    psi = np.asarray(psi, dtype=float)
    se = np.sqrt(np.maximum(np.diag(np.asarray(sigma, dtype=float)), 0.0) / n)
    z = norm.ppf(1 - alpha / 2)
    ci = np.column_stack([psi - z * se, psi + z * se])
    with np.errstate(divide="ignore", invalid="ignore"):
        p = 2 * norm.sf(np.abs(psi) / se)
    degenerate = se == 0
    p[degenerate] = np.where(psi[degenerate] == 0, 1.0, 0.0)
    p[~np.isfinite(psi)] = np.nan
    ci[~np.isfinite(psi)] = np.nan
    return ci, p


def maxT_critical(IF, B: int = DEFAULT_B, alpha: float = 0.05, seed: int = 0, columns=None) -> float:
    """(1 - alpha) quantile of max_j |z_j| for z ~ N(0, corr(IF)).

    ``columns`` selects the categories that take part (default: all columns
    with positive variance).  With fewer than two such columns the marginal
    normal quantile is returned.  The result is never below that quantile.
    """
    IF = np.asarray(IF, dtype=float)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    z_marg = float(norm.ppf(1 - alpha / 2))
    cols = np.arange(IF.shape[1]) if columns is None else np.flatnonzero(np.asarray(columns))
    sub = IF[:, cols]
    if not np.all(np.isfinite(sub)):
        raise ValueError("non-finite influence function entries")
    sigma = covariance_from_if(sub)
    var = np.diag(sigma)
    keep = var > 0
    if keep.sum() < 2:
        return z_marg
    sigma = sigma[np.ix_(keep, keep)]
    sd = np.sqrt(np.diag(sigma))
    corr = sigma / np.outer(sd, sd)
    if not np.all(np.isfinite(corr)):
        raise ValueError("non-finite correlation matrix")
    evals, evecs = np.linalg.eigh(corr)
    root = evecs * np.sqrt(np.maximum(evals, 0.0))
    rng = np.random.Generator(np.random.Philox(seed))
    draws = rng.standard_normal((B, corr.shape[0])) @ root.T
    crit = float(np.quantile(np.abs(draws).max(axis=1), 1 - alpha))
    return max(crit, z_marg)


def simultaneous_intervals(psi, se, crit: float) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    se = np.asarray(se, dtype=float)
    return np.column_stack([psi - crit * se, psi + crit * se])


def infer(psi, IF, alpha: float = 0.05, B: int = DEFAULT_B, seed: int = 0) -> InferenceResult:
    """Marginal and simultaneous inference over the estimable categories."""
    psi = np.asarray(psi, dtype=float)
    IF = np.asarray(IF, dtype=float)
    n = IF.shape[0]
    ok = np.isfinite(psi)
    IF = np.where(ok[None, :], IF, 0.0)
    sigma = covariance_from_if(IF)
    ci, p = wald_intervals(psi, sigma, n, alpha)
    se = np.sqrt(np.maximum(np.diag(sigma), 0.0) / n)
    se[~ok] = np.nan
    crit = maxT_critical(IF, B, alpha, seed, columns=ok)
    ci_sim = simultaneous_intervals(psi, se, crit)
    return InferenceResult(psi, sigma, se, ci, ci_sim, p, float(norm.ppf(1 - alpha / 2)), crit, alpha, B, n)
