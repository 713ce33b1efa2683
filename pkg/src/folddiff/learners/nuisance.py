"""Cross-fitted nuisance estimates: propensity, presence probability and
positive-part mean, each trained out of fold by a SuperLearner."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..data import Dataset, estimable_mask, validate
from .base import DEFAULT_BINARY_MENU, DEFAULT_REGRESSION_MENU
from .stacking import EnsembleFit, fit_superlearner

PI_BOUNDS = (0.025, 0.975)
Q_BOUNDS = (1e-6, 1.0 - 1e-6)

# task ids for RNG stream derivation
_PROPENSITY, _PRESENCE, _POSITIVE_MEAN = 0, 1, 2


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    K: int
    fold_of: np.ndarray
    seed: int

    def rows(self, k):
        return np.flatnonzero(self.fold_of == k)


def make_folds(n: int, K: int, A, seed: int) -> FoldAssignment:
    """Stratified-by-exposure K-fold partition, deterministic in ``seed``."""
    A = np.asarray(A)
    if K < 2 or n < K:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    if A.shape != (n,):
        raise ValueError("exposure vector has the wrong length")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7919]))
    fold_of = np.empty(n, dtype=int)
    start = 0
    for arm in (0, 1):
        idx = np.flatnonzero(A == arm)
        if 0 < idx.size < K:
            warnings.warn(f"exposure arm {arm} has {idx.size} members for {K} folds", stacklevel=2)
        idx = rng.permutation(idx)
        fold_of[idx] = (start + np.arange(idx.size)) % K
        start = (start + idx.size) % K
    return FoldAssignment(K, fold_of, seed)


@dataclass
class LearnerMenu:
    propensity: tuple = DEFAULT_BINARY_MENU
    presence: tuple = DEFAULT_BINARY_MENU
    positive_mean: tuple = DEFAULT_REGRESSION_MENU


@dataclass
class NuisanceFits:
    """Out-of-fold nuisance predictions for every row and both arms.

    ``pi[i]`` is the propensity from the fit excluding row i's fold;
    ``m[a, i, j]`` and ``q[a, i, j]`` are that fold's positive-part mean and
    presence probability evaluated at ``(a, X_i)``.
    """

    folds: FoldAssignment
    pi: np.ndarray
    m: np.ndarray
    q: np.ndarray
    m_fallback: np.ndarray = None  # (K, 2, J) bool
    propensity_fits: list = field(default_factory=list)
    presence_fits: list = field(default_factory=list)  # [k][j]
    positive_mean_fits: list = field(default_factory=list)  # [k][j]
    fallback_value: np.ndarray = None  # (K, 2, J)
    n_features: int = 0

    def __post_init__(self):
        n, J = self.m.shape[1:]
        if self.m_fallback is None:
            self.m_fallback = np.zeros((self.folds.K, 2, J), dtype=bool)

    @classmethod
    def from_arrays(cls, pi, m, q, folds: FoldAssignment | None = None, clip: bool = True):
        """Wrap given nuisance values (e.g. oracle or constant fits)."""
        m = np.asarray(m, dtype=float)
        q = np.asarray(q, dtype=float)
        n = m.shape[1]
        pi = np.broadcast_to(np.asarray(pi, dtype=float), (n,)).copy()
        if folds is None:
            folds = FoldAssignment(1, np.zeros(n, dtype=int), 0)
        if clip:
            pi = np.clip(pi, *PI_BOUNDS)
            q = np.clip(q, *Q_BOUNDS)
            m = np.maximum(m, 0.0)
        return cls(folds, pi, m, q)

    @property
    def mu(self) -> np.ndarray:
        return self.m * self.q

    @property
    def n(self):
        return self.pi.size

    @property
    def J(self):
        return self.m.shape[2]

    def predict(self, k: int, X, a: int, j: int):
        """Fold-k fitted functions evaluated at new covariates (pi, m, q)."""
        if not self.propensity_fits:
            raise ValueError("these nuisances carry no fitted functions")
        X = np.asarray(X, dtype=float).reshape(-1, self.n_features)
        Z = np.column_stack([np.full(X.shape[0], float(a)), X])
        pi = np.clip(self.propensity_fits[k].predict(X), *PI_BOUNDS)
        q = np.clip(self.presence_fits[k][j].predict(Z), *Q_BOUNDS)
        if self.m_fallback[k, a, j] or self.positive_mean_fits[k][j] is None:
            m = np.full(X.shape[0], self.fallback_value[k, a, j])
        else:
            m = np.maximum(self.positive_mean_fits[k][j].predict(Z), 0.0)
        return pi, m, q

    def weights_table(self, category_names=None):
        """Rows of (task, fold, category, learner, weight, cv_risk)."""
        rows = []

        def add(task, k, j, fit):
            if fit is None:
                return
            name = "" if j is None else (category_names[j] if category_names else str(j + 1))
            for spec, wt, risk in zip(fit.specs, fit.weights, fit.cv_risk):
                rows.append((task, k + 1, name, str(spec), float(wt), float(risk)))

        for k, fit in enumerate(self.propensity_fits):
            add("propensity", k, None, fit)
        for k, fits in enumerate(self.presence_fits):
            for j, fit in enumerate(fits):
                add("presence", k, j, fit)
        for k, fits in enumerate(self.positive_mean_fits):
            for j, fit in enumerate(fits):
                add("positive_mean", k, j, fit)
        return rows


def _rng(seed, k, j, task):
    return np.random.default_rng(np.random.SeedSequence([seed, k, j + 1, task]))


def _fit_category(d: Dataset, train, test, k, j, menu: LearnerMenu, V, seed):
    """Presence and positive-part fits for one (fold, category)."""
    n = d.n
    Z = np.column_stack([d.A, d.X])
    Z_arm = [np.column_stack([np.full(n, float(a)), d.X]) for a in (0, 1)]
    present = (d.W[:, j] > 0).astype(float)

    q_fit = fit_superlearner("binary", menu.presence, Z[train], present[train], V=V, rng=_rng(seed, k, j, _PRESENCE))
    q_pred = np.stack([np.clip(q_fit.predict(Z_arm[a][test]), *Q_BOUNDS) for a in (0, 1)])

    pos = train & (d.W[:, j] > 0)
    fallback = np.zeros(2, dtype=bool)
    fb_value = np.zeros(2)
    m_fit = None
    if not pos.any():
        fallback[:] = True
    else:
        grand = float(d.W[pos, j].mean())
        for a in (0, 1):
            if not np.any(pos & (d.A == a)):
                fallback[a] = True
                fb_value[a] = grand
        m_fit = fit_superlearner(
            "regression", menu.positive_mean, Z[pos], d.W[pos, j], V=V, rng=_rng(seed, k, j, _POSITIVE_MEAN)
        )
    m_pred = np.zeros((2, test.sum()))
    for a in (0, 1):
        if fallback[a]:
            m_pred[a] = fb_value[a]
        else:
            m_pred[a] = np.maximum(m_fit.predict(Z_arm[a][test]), 0.0)
    return q_fit, q_pred, m_fit, m_pred, fallback, fb_value


def fit_nuisances(
    d: Dataset,
    folds: FoldAssignment,
    menu: LearnerMenu | None = None,
    V: int = 5,
    seed: int = 0,
    n_jobs: int = 1,
) -> NuisanceFits:
    """Cross-fit propensity, presence and positive-part mean for all folds.

    Categories flagged non-estimable by :func:`validate` are skipped and get
    zero nuisances.  Every (fold, category) task draws from its own RNG
    stream, so ``n_jobs`` does not change the result.
    """
    menu = menu or LearnerMenu()
    n, J, K = d.n, d.J, folds.K
    ok = estimable_mask(validate(d))
    pi = np.empty(n)
    m = np.zeros((2, n, J))
    q = np.full((2, n, J), Q_BOUNDS[0])
    m_fallback = np.zeros((K, 2, J), dtype=bool)
    fb_value = np.zeros((K, 2, J))
    prop_fits: list[EnsembleFit] = []
    pres_fits = [[None] * J for _ in range(K)]
    posm_fits = [[None] * J for _ in range(K)]

    for k in range(K):
        train, test = folds.fold_of != k, folds.fold_of == k
        fit = fit_superlearner("binary", menu.propensity, d.X[train], d.A[train], V=V, rng=_rng(seed, k, -1, _PROPENSITY))
        prop_fits.append(fit)
        pi[test] = np.clip(fit.predict(d.X[test]), *PI_BOUNDS)

    tasks = [(k, j) for k in range(K) for j in range(J) if ok[j]]
    masks = {k: (folds.fold_of != k, folds.fold_of == k) for k in range(K)}

    def run(k, j):
        return _fit_category(d, *masks[k], k, j, menu, V, seed)

    if n_jobs == 1 or len(tasks) < 2:
        results = [run(k, j) for k, j in tasks]
    else:
        from joblib import Parallel, delayed

        results = Parallel(n_jobs=n_jobs)(delayed(run)(k, j) for k, j in tasks)

    for (k, j), (q_fit, q_pred, m_fit, m_pred, fallback, fbv) in zip(tasks, results):
        test = masks[k][1]
        pres_fits[k][j], posm_fits[k][j] = q_fit, m_fit
        q[:, test, j] = q_pred
        m[:, test, j] = m_pred
        m_fallback[k, :, j] = fallback
        fb_value[k, :, j] = fbv

    return NuisanceFits(folds, pi, m, q, m_fallback, prop_fits, pres_fits, posm_fits, fb_value, d.p)
