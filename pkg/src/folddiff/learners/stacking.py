"""Cross-validated convex stacking of candidate learners."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .base import LearnerSpec

log = logging.getLogger(__name__)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} (sort-based, exact)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


@numba.njit(cache=True)
def _project_simplex_nb(v):
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(v.size):
        css += u[k]
        t = (css - 1.0) / (k + 1.0)
        if u[k] - t > 0:
            theta = t
    return np.maximum(v - theta, 0.0)


@numba.njit(cache=True)
def _fista(Q, b, lip, max_iter, tol):
    L = b.size
    w = np.full(L, 1.0 / L)
    z = w.copy()
    t = 1.0
    for _ in range(max_iter):
        w_new = _project_simplex_nb(z - 2.0 * (Q @ z - b) / lip)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = w_new + ((t - 1.0) / t_new) * (w_new - w)
        done = np.max(np.abs(w_new - w)) <= tol
        w = w_new
        t = t_new
        if done:
            break
    return w


def stacking_risk(weights, cv_predictions, response, obs_weights=None) -> float:
    Z = np.asarray(cv_predictions, dtype=float)
    r = np.ones(Z.shape[0]) if obs_weights is None else np.asarray(obs_weights, dtype=float)
    resid = np.asarray(response, dtype=float) - Z @ np.asarray(weights, dtype=float)
    return float(np.sum(r * resid**2) / np.sum(r))


def simplex_weights(cv_predictions, response, obs_weights=None, max_iter=20000, tol=1e-13) -> np.ndarray:
    """Minimize weighted mean squared error of ``Z w`` over the simplex.

    Accelerated projected gradient; the result is never worse than the best
    single column.
    """
    Z = np.asarray(cv_predictions, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    L = Z.shape[1]
    if L == 1:
        return np.ones(1)
    y = np.asarray(response, dtype=float)
    r = np.ones(Z.shape[0]) if obs_weights is None else np.asarray(obs_weights, dtype=float)
    r = r / r.sum()
    # rescale so the step size is well conditioned across response scales
    scale = max(np.sqrt(np.sum(r * y**2)), np.max(np.abs(Z)) if Z.size else 0.0, 1e-300)
    Zs, ys = Z / scale, y / scale
    Q = (Zs * r[:, None]).T @ Zs
    b = (Zs * r[:, None]).T @ ys
    lip = 2.0 * np.linalg.eigvalsh(Q)[-1]
    vertex_risk = np.array([stacking_risk(np.eye(L)[l], Zs, ys, r) for l in range(L)])
    if not lip > 0:
        return np.eye(L)[int(np.argmin(vertex_risk))]

    w = _fista(np.ascontiguousarray(Q), b, lip, max_iter, tol)

    raw_vertex = [stacking_risk(np.eye(L)[l], Z, y, r) for l in range(L)]
    best = int(np.argmin(raw_vertex))
    if stacking_risk(w, Z, y, r) > raw_vertex[best]:
        w = np.eye(L)[best]
    return w


@dataclass
class EnsembleFit:
    task: str
    specs: list
    weights: np.ndarray
    learners: list
    cv_risk: np.ndarray  # per candidate
    ensemble_cv_risk: float
    failed: list = field(default_factory=list)
    y_range: tuple = (0.0, np.inf)

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for wt, learner in zip(self.weights, self.learners):
            if wt > 0:
                out += wt * _clip_pred(learner.predict(X), self.task, self.y_range)
        return out


def _response_range(y, w):
    """Observed range of the response over rows with positive weight."""
    y = y[w > 0] if np.any(w > 0) else y
    return float(max(y.min(), 0.0)), float(y.max())


def _clip_pred(pred, task, y_range=(0.0, np.inf)):
    # a conditional mean lies inside the response's range, so regression
    # predictions are truncated to the training range (log-link fits on a
    # handful of rows can otherwise extrapolate by many orders of magnitude)
    pred = np.asarray(pred, dtype=float)
    if task == "binary":
        return np.clip(pred, 0.0, 1.0)
    return np.clip(pred, *y_range)


def _inner_folds(n, V, rng):
    perm = rng.permutation(n)
    fold = np.empty(n, dtype=int)
    fold[perm] = np.arange(n) % V
    return fold


def fit_superlearner(
    task: str,
    candidates: Sequence[LearnerSpec],
    X,
    y,
    weights=None,
    V: int = 5,
    rng: np.random.Generator | None = None,
) -> EnsembleFit:
    """Stack ``candidates`` by V-fold cross-validated squared error.

    ``task`` is ``"regression"`` (nonnegative response) or ``"binary"``.
    A candidate that raises while fitting gets weight 0.
    """
    if task not in ("regression", "binary"):
        raise ValueError(f"unknown task {task!r}")
    if not candidates:
        raise ValueError("need at least one candidate learner")
    if V < 2:
        raise ValueError("need V >= 2 inner folds")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, L = y.size, len(candidates)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng

    failed = set()
    V_eff = min(V, n)
    cv_pred = np.zeros((n, L))
    if V_eff >= 2:
        fold = _inner_folds(n, V_eff, rng)
        for v in range(V_eff):
            tr, te = fold != v, fold == v
            for l, spec in enumerate(candidates):
                if l in failed:
                    continue
                try:
                    pred = spec.build().fit(X[tr], y[tr], w[tr]).predict(X[te])
                    cv_pred[te, l] = _clip_pred(pred, task, _response_range(y[tr], w[tr]))
                except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                    log.debug("candidate %s failed: %s", spec, exc)
                    failed.add(l)
        cv_pred[~np.isfinite(cv_pred)] = 0.0

    learners = []
    for l, spec in enumerate(candidates):
        learner = None
        if l not in failed:
            try:
                learner = spec.build().fit(X, y, w)
            except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
                log.debug("candidate %s failed on refit: %s", spec, exc)
                failed.add(l)
        learners.append(learner)

    ok = np.array([l not in failed for l in range(L)])
    if not ok.any():
        raise RuntimeError("every candidate learner failed")
    cv_risk = np.full(L, np.nan)
    weights_out = np.zeros(L)
    if V_eff >= 2:
        cv_risk[ok] = [stacking_risk(np.eye(ok.sum())[i], cv_pred[:, ok], y, w) for i in range(ok.sum())]
        weights_out[ok] = simplex_weights(cv_pred[:, ok], y, w)
        ens_risk = stacking_risk(weights_out, cv_pred, y, w)
    else:
        # too few rows to cross-validate: fall back to the first usable candidate
        weights_out[int(np.flatnonzero(ok)[0])] = 1.0
        ens_risk = float("nan")
    return EnsembleFit(task, list(candidates), weights_out, learners, cv_risk, ens_risk, sorted(failed),
                       _response_range(y, w))
