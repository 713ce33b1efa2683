"""Unadjusted log-fold difference: log ratio of arm-wise sample means.

The influence function is evaluated at the plug-in quantities, so each of its
columns averages to zero exactly (up to rounding).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .centering import CenteringSpec, apply_centering
from .data import CategoryStatus, Dataset, estimable_mask, validate


@dataclass
class UnadjustedEstimate:
    psi: np.ndarray  # NaN where undefined
    IF: np.ndarray
    arm_means: np.ndarray  # row 0: A=0, row 1: A=1
    status: list[CategoryStatus]
    centering: CenteringSpec | None = None

    @property
    def estimable(self) -> np.ndarray:
        return np.isfinite(self.psi)


def estimate_psi1(d: Dataset) -> UnadjustedEstimate:
    status = validate(d)
    ok = estimable_mask(status)
    A = d.A
    p_hat = A.mean()
    means = np.vstack([d.W[A == 0].mean(axis=0), d.W[A == 1].mean(axis=0)])
    psi = np.full(d.J, np.nan)
    IF = np.zeros((d.n, d.J))
    mu0, mu1 = means[0, ok], means[1, ok]
    psi[ok] = np.log(mu1 / mu0)
    W = d.W[:, ok]
    IF[:, ok] = (A / p_hat)[:, None] * (W - mu1) / mu1 - ((1 - A) / (1 - p_hat))[:, None] * (W - mu0) / mu0
    return UnadjustedEstimate(psi, IF, means, status)


def estimate_psi1_centered(d: Dataset, g: CenteringSpec) -> UnadjustedEstimate:
    est = estimate_psi1(d)
    psi_g, IF_g = apply_centering(est.psi, est.IF, g)
    return UnadjustedEstimate(psi_g, IF_g, est.arm_means, est.status, g)
