"""Covariate-adjusted log-fold difference of marginalized category means.

For each category the target is ``log(E[mu(1, X)] / E[mu(0, X)])`` with
``mu(a, x) = E[W | A=a, X=x] = m(a, x) q(a, x)``: the mean among positive
values times the presence probability.  Three estimators share the
cross-fitted nuisances:

* plug-in: marginalize the fitted means over the empirical covariate law;
* one-step: plug-in plus the fold-wise mean of the efficient influence
  function, averaged over folds;
* TMLE: rescale the fitted means so the influence function has empirical
  mean zero, then plug in.  In two-stage mode ``m`` is rescaled on the
  positive rows and ``q`` is shifted on the logit scale, using
  ``w - m q = (w - 1{w>0} m) + m (1{w>0} - q)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .centering import CenteringSpec, apply_centering
from .data import CategoryStatus, Dataset, estimable_mask, validate
from .glm import COEF_CAP, solve_fluct_logistic, solve_fluct_poisson
from .learners.nuisance import NuisanceFits

METHODS = ("tmle", "onestep", "plugin")
MODES = ("two_stage", "single_stage")


@dataclass
class TargetedNuisances:
    base: NuisanceFits
    mode: str
    poisson_fluct: np.ndarray  # (2, J) multipliers exp(beta)
    logistic_fluct: np.ndarray  # (2, J) logit shifts; zero in single-stage mode
    flags: np.ndarray  # (2, J) bool
    notes: list = field(default_factory=list)

    @property
    def pi(self):
        return self.base.pi

    @property
    def mu(self) -> np.ndarray:
        """Targeted conditional means, shape (2, n, J)."""
        c = self.poisson_fluct[:, None, :]
        if self.mode == "single_stage":
            return c * self.base.mu
        q_star = expit(logit(self.base.q) + self.logistic_fluct[:, None, :])
        return (c * self.base.m) * q_star


@dataclass
class AdjustedEstimate:
    psi: np.ndarray
    IF: np.ndarray | None
    g_computation: np.ndarray  # (2, J)
    method: str
    status: list[CategoryStatus]
    flags: list[str]
    centering: CenteringSpec | None = None
    targeted: TargetedNuisances | None = None

    @property
    def estimable(self) -> np.ndarray:
        return np.isfinite(self.psi)


def _arm_weights(A, pi):
    """Inverse-propensity weights 1{A=a}/pi_a(X), shape (2, n)."""
    return np.vstack([(1 - A) / (1 - pi), A / pi])


def phibar(d: Dataset, pi, mu, g_computation) -> np.ndarray:
    """Influence functions of the two G-computation means, shape (2, n, J)."""
    return _phibar(d.W, d.A, pi, mu, g_computation)


def _phibar(W, A, pi, mu, g_computation):
    mu_obs = np.where(A[:, None] == 1, mu[1], mu[0])
    w = _arm_weights(A, np.asarray(pi))
    return w[:, :, None] * (W - mu_obs)[None] + mu - np.asarray(g_computation)[:, None, :]


def _eif_from(W, A, pi, mu, gcomp, ok):
    IF = np.zeros(W.shape)
    pb = _phibar(W[:, ok], A, pi, mu[:, :, ok], gcomp[:, ok]) if ok.any() else None
    if pb is not None:
        IF[:, ok] = pb[1] / gcomp[1, ok] - pb[0] / gcomp[0, ok]
    return IF


def eif_psi2(d: Dataset, nuisances, g_computation=None) -> np.ndarray:
    """Efficient influence function of the adjusted log-fold difference.

    ``nuisances`` is a :class:`NuisanceFits` or :class:`TargetedNuisances`;
    ``g_computation`` defaults to the empirical marginalized means.  Columns
    with a nonpositive marginalized mean are returned as zeros.
    """
    mu = nuisances.mu
    gcomp = mu.mean(axis=1) if g_computation is None else np.asarray(g_computation, dtype=float)
    ok = np.all(gcomp > 0, axis=0) & np.all(np.isfinite(gcomp), axis=0)
    return _eif_from(d.W, d.A, nuisances.pi, mu, gcomp, ok)


def _log_ratio(gcomp, ok):
    psi = np.full(gcomp.shape[1], np.nan)
    good = ok & np.all(gcomp > 0, axis=0) & np.all(np.isfinite(gcomp), axis=0)
    psi[good] = np.log(gcomp[1, good] / gcomp[0, good])
    return psi, good


def _flag_text(status, good, extra=None):
    out = []
    for j, s in enumerate(status):
        if not s.estimable:
            out.append(s.reason.value)
        elif extra is not None and extra[j]:
            out.append(extra[j])
        elif not good[j]:
            out.append("nonpositive_marginal_mean")
        else:
            out.append("")
    return out


def estimate_plugin2(d: Dataset, nuisances: NuisanceFits) -> AdjustedEstimate:
    status = validate(d)
    gcomp = nuisances.mu.mean(axis=1)
    psi, good = _log_ratio(gcomp, estimable_mask(status))
    return AdjustedEstimate(psi, None, gcomp, "plugin", status, _flag_text(status, good))


def estimate_onestep2(d: Dataset, nuisances: NuisanceFits) -> AdjustedEstimate:
    """Fold-averaged one-step estimator.

    Each fold contributes its plug-in (marginalized over that fold's rows)
    plus the mean influence function over the same rows.  The returned
    influence rows use their own fold's marginalized means.
    """
    status = validate(d)
    ok = estimable_mask(status)
    folds = nuisances.folds
    mu, pi = nuisances.mu, nuisances.pi
    K = folds.K
    fold_est = np.full((K, d.J), np.nan)
    fold_ok = np.ones((K, d.J), dtype=bool)
    IF = np.zeros((d.n, d.J))
    gcomp_all = mu.mean(axis=1)
    for k in range(K):
        rows = folds.rows(k)
        if rows.size == 0:
            continue
        mu_k = mu[:, rows, :]
        gk = mu_k.mean(axis=1)
        plug, good = _log_ratio(gk, ok)
        fold_ok[k] = good
        IF_k = _eif_from(d.W[rows], d.A[rows], pi[rows], mu_k, gk, good)
        IF[rows] = IF_k
        fold_est[k, good] = plug[good] + IF_k[:, good].mean(axis=0)
    good = ok & fold_ok.all(axis=0)
    psi = np.where(good, fold_est.mean(axis=0), np.nan)
    IF[:, ~good] = 0.0
    extra = ["fold_nonpositive_marginal_mean" if ok[j] and not good[j] else "" for j in range(d.J)]
    return AdjustedEstimate(psi, IF, gcomp_all, "onestep", status, _flag_text(status, good, extra))


def tmle_target(d: Dataset, nuisances: NuisanceFits, mode: str = "two_stage") -> TargetedNuisances:
    if mode not in MODES:
        raise ValueError(f"unknown TMLE mode {mode!r}")
    ok = estimable_mask(validate(d))
    J = d.J
    w_arm = _arm_weights(d.A, nuisances.pi)
    c = np.ones((2, J))
    beta = np.zeros((2, J))
    flags = np.zeros((2, J), dtype=bool)
    notes = []
    present = d.W > 0
    mu0 = nuisances.mu if mode == "single_stage" else None
    for j in range(J):
        if not ok[j]:
            flags[:, j] = True
            continue
        for a in (0, 1):
            w = w_arm[a]
            if mode == "single_stage":
                c[a, j] = solve_fluct_poisson(d.W[:, j], mu0[a, :, j], w)
            else:
                pos = present[:, j] & (w > 0)
                if pos.any():
                    c[a, j] = solve_fluct_poisson(d.W[pos, j], nuisances.m[a, pos, j], w[pos])
                else:
                    c[a, j] = 1.0
                    flags[a, j] = True
                    notes.append((a, j, "no positive rows"))
                m_star = c[a, j] * nuisances.m[a, :, j]
                if np.isfinite(c[a, j]):
                    beta[a, j] = solve_fluct_logistic(present[:, j], logit(nuisances.q[a, :, j]), w * m_star)
                else:
                    beta[a, j] = np.nan
                all_present = np.all(present[w > 0, j])
                if all_present and beta[a, j] == COEF_CAP:
                    # boundary root q* -> 1: the score is exactly zero, not a failure
                    notes.append((a, j, "presence fluctuation at +cap (arm always present)"))
                elif not np.isfinite(beta[a, j]) or abs(beta[a, j]) >= COEF_CAP:
                    flags[a, j] = True
                    notes.append((a, j, "presence fluctuation capped or undefined"))
            if not (np.isfinite(c[a, j]) and c[a, j] > 0):
                flags[a, j] = True
                notes.append((a, j, "mean fluctuation undefined"))
    return TargetedNuisances(nuisances, mode, c, beta, flags, notes)


def estimate_tmle2(d: Dataset, targeted: TargetedNuisances) -> AdjustedEstimate:
    status = validate(d)
    mu = targeted.mu
    gcomp = mu.mean(axis=1)
    ok = estimable_mask(status) & ~targeted.flags.any(axis=0)
    psi, good = _log_ratio(gcomp, ok)
    IF = _eif_from(d.W, d.A, targeted.pi, mu, gcomp, good)
    extra = ["targeting_failed" if targeted.flags[:, j].any() else "" for j in range(d.J)]
    return AdjustedEstimate(psi, IF, gcomp, "tmle", status, _flag_text(status, good, extra), targeted=targeted)


def estimate_psi2_centered(d: Dataset, targeted: TargetedNuisances, g: CenteringSpec) -> AdjustedEstimate:
    return center_estimate(estimate_tmle2(d, targeted), g)


def center_estimate(est: AdjustedEstimate, g: CenteringSpec) -> AdjustedEstimate:
    psi_g, IF_g = apply_centering(est.psi, est.IF, g)
    flags = list(est.flags)
    for j in range(len(flags)):
        if np.isfinite(est.psi[j]) and not np.isfinite(psi_g[j]):
            flags[j] = "centering_undefined"
    return AdjustedEstimate(psi_g, IF_g, est.g_computation, est.method, est.status, flags, g, est.targeted)


def estimate_adjusted(d: Dataset, nuisances: NuisanceFits, method: str = "tmle", mode: str = "two_stage") -> AdjustedEstimate:
    if method == "tmle":
        return estimate_tmle2(d, tmle_target(d, nuisances, mode))
    if method == "onestep":
        return estimate_onestep2(d, nuisances)
    if method == "plugin":
        return estimate_plugin2(d, nuisances)
    raise ValueError(f"unknown method {method!r}")
