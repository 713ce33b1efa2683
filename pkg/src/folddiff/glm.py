"""Weighted Poisson-log and Bernoulli-logit GLMs with offsets and ridge.

Used in two places: as nuisance learners (arbitrary design) and as the
one-parameter fluctuation solvers of the targeting step.  The fitting routine
is damped Newton (IRLS) with step-halving, so the penalized objective never
increases from one iteration to the next.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log1p

COEF_CAP = 40.0
MAX_ITER = 100
MAX_HALVINGS = 30
SCORE_TOL = 1e-10


@dataclass
class GlmFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    final_score_norm: float
    singular: bool = False
    objective_path: list = field(default_factory=list, repr=False)

    def linear_predictor(self, design, offset=None):
        eta = np.asarray(design, dtype=float) @ self.coefficients
        return eta if offset is None else eta + offset


def _poisson_parts(eta, y, w):
    mu = np.exp(eta)
    nll = np.sum(w * (mu - y * eta))
    return nll, mu, mu


def _logistic_parts(eta, y, w):
    mu = expit(eta)
    # log(1 + e^eta) evaluated stably
    softplus = np.where(eta > 0, eta + log1p(np.exp(-np.abs(eta))), log1p(np.exp(eta)))
    nll = np.sum(w * (softplus - y * eta))
    return nll, mu, mu * (1.0 - mu)


def _fit(parts, design, y, weights, offset, ridge, start=None) -> GlmFit:
    X = np.asarray(design, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, d = X.shape
    y = np.asarray(y, dtype=float)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    if y.shape != (n,) or w.shape != (n,) or off.shape != (n,):
        raise ValueError("design, response, weights and offset disagree in length")
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative with positive sum")
    if ridge < 0:
        raise ValueError("ridge penalty must be nonnegative")

    pen = np.full(d, float(ridge))
    pen[0] = 0.0  # intercept first, unpenalized
    tol = SCORE_TOL * w.sum()

    def objective(beta):
        nll, mu, var = parts(X @ beta + off, y, w)
        return nll + 0.5 * np.sum(pen * beta**2), mu, var

    beta = np.zeros(d) if start is None else np.array(start, dtype=float)
    obj, mu, var = objective(beta)
    path = [obj]
    singular = False
    converged = False
    score_norm = np.inf
    it = 0
    for it in range(1, MAX_ITER + 1):
        grad = X.T @ (w * (mu - y)) + pen * beta
        score_norm = float(np.linalg.norm(grad))
        hess = (X * (w * var)[:, None]).T @ X + np.diag(pen)
        try:
            step = -np.linalg.solve(hess, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            singular = True
            step = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        small_step = np.max(np.abs(step)) <= 1e-8 * (1.0 + np.max(np.abs(beta)))
        if score_norm <= tol and small_step:
            converged = True
            break

        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            cand = np.clip(beta + t * step, -COEF_CAP, COEF_CAP)
            cand_obj, cand_mu, cand_var = objective(cand)
            if np.isfinite(cand_obj) and cand_obj <= obj + 1e-12 * abs(obj):
                break
            t *= 0.5
        else:
            break
        if np.array_equal(cand, beta):
            break
        beta, obj, mu, var = cand, cand_obj, cand_mu, cand_var
        path.append(obj)
    else:
        grad = X.T @ (w * (mu - y)) + pen * beta
        score_norm = float(np.linalg.norm(grad))

    if np.any(np.abs(beta) >= COEF_CAP):
        converged = False
    return GlmFit(beta, converged, it, score_norm, singular, path)


def _poisson_link(ybar, off, w):
    den = np.sum(w * np.exp(np.clip(off, -COEF_CAP, COEF_CAP))) / w.sum()
    return np.log(ybar / den) if ybar > 0 else -10.0


def _logit_link(ybar, off, w):
    p = min(max(ybar, 1e-4), 1 - 1e-4)
    return np.log(p / (1 - p)) - np.sum(w * off) / w.sum()


def _intercept_start(design, y, weights, offset, link):
    X = np.asarray(design, dtype=float)
    d = 1 if X.ndim == 1 else X.shape[1]
    n = X.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
    start = np.zeros(d)
    if w.sum() > 0:
        start[0] = np.clip(link(np.sum(w * np.asarray(y, dtype=float)) / w.sum(), off, w), -COEF_CAP, COEF_CAP)
    return start


def fit_weighted_poisson(design, y, weights=None, offset=None, ridge: float = 0.0, start=None) -> GlmFit:
    """Weighted Poisson regression with log link, offset and ridge penalty."""
    if np.any(np.asarray(y) < 0):
        raise ValueError("Poisson response must be nonnegative")
    if start is None:
        start = _intercept_start(design, y, weights, offset, _poisson_link)
    return _fit(_poisson_parts, design, y, weights, offset, ridge, start)


def fit_weighted_logistic(design, y, weights=None, offset=None, ridge: float = 0.0, start=None) -> GlmFit:
    """Weighted logistic regression; response may be any value in [0, 1]."""
    y = np.asarray(y, dtype=float)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("logistic response must lie in [0, 1]")
    if start is None:
        start = _intercept_start(design, y, weights, offset, _logit_link)
    return _fit(_logistic_parts, design, y, weights, offset, ridge, start)


def poisson_objective(beta, design, y, weights, offset, ridge):
    beta = np.asarray(beta, dtype=float)
    nll = _poisson_parts(np.asarray(design) @ beta + offset, y, weights)[0]
    return nll + 0.5 * ridge * np.sum(beta[1:] ** 2)


def logistic_objective(beta, design, y, weights, offset, ridge):
    beta = np.asarray(beta, dtype=float)
    nll = _logistic_parts(np.asarray(design) @ beta + offset, y, weights)[0]
    return nll + 0.5 * ridge * np.sum(beta[1:] ** 2)


def solve_fluct_poisson(y, offset_mean, weights) -> float:
    """Multiplier exp(beta) rooting sum_i w_i (y_i - exp(beta) m_i) = 0.

    Returns NaN when the weighted offset mass is zero.
    """
    w = np.asarray(weights, dtype=float)
    den = np.sum(w * np.asarray(offset_mean, dtype=float))
    if not den > 0:
        return float("nan")
    return float(np.sum(w * np.asarray(y, dtype=float)) / den)


def solve_fluct_logistic(y, offset_logit, weights) -> float:
    """Intercept shift beta rooting sum_i w_i (y_i - expit(o_i + beta)) = 0.

    A degenerate weighted response (all 0 or all 1) returns -40 / +40.
    """
    y = np.asarray(y, dtype=float)
    o = np.asarray(offset_logit, dtype=float)
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        return float("nan")
    target = np.sum(w * y)
    if target <= 0:
        return -COEF_CAP
    if target >= total:
        return COEF_CAP

    def score(b):
        return target - np.sum(w * expit(o + b))

    lo, hi = -COEF_CAP, COEF_CAP
    if score(lo) <= 0:
        return lo
    if score(hi) >= 0:
        return hi
    beta = 0.0
    for _ in range(200):
        s = score(beta)
        if s > 0:
            lo = beta
        elif s < 0:
            hi = beta
        else:
            return beta
        p = expit(o + beta)
        slope = np.sum(w * p * (1.0 - p))
        cand = beta + s / slope if slope > 0 else 0.5 * (lo + hi)
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        if abs(cand - beta) <= 1e-15 * (1.0 + abs(beta)):
            beta = cand
            break
        beta = cand
    return float(beta)
