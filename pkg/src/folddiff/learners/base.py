"""Candidate learners and their configuration strings.

A learner is anything with ``fit(X, y, w) -> self`` and ``predict(X)``.
Regression learners predict conditional means of a nonnegative response;
binary learners predict probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..glm import fit_weighted_logistic, fit_weighted_poisson
from .boosting import BoostedTrees

REGRESSION_IDS = ("sample_mean", "glm_log_link", "glm_log_link_ridge", "boosted_stumps")
BINARY_IDS = ("sample_mean", "logistic_glm", "logistic_ridge", "logistic_boosted_stumps")

_DEFAULTS = {
    "glm_log_link_ridge": {"lambda": 1.0},
    "logistic_ridge": {"lambda": 1.0},
    "boosted_stumps": {"T": 200, "D": 2, "eta": 0.1},
    "logistic_boosted_stumps": {"T": 200, "D": 2, "eta": 0.1},
}


@dataclass(frozen=True)
class LearnerSpec:
    id: str
    params: tuple = field(default_factory=tuple)  # sorted (key, value) pairs

    def __post_init__(self):
        if self.id not in REGRESSION_IDS + BINARY_IDS:
            raise ValueError(f"unknown learner {self.id!r}")
        merged = dict(_DEFAULTS.get(self.id, {}))
        merged.update(dict(self.params))
        unknown = set(merged) - set(_DEFAULTS.get(self.id, {}))
        if unknown:
            raise ValueError(f"learner {self.id} does not take {sorted(unknown)}")
        for k, v in merged.items():
            if not v > 0:
                raise ValueError(f"learner {self.id}: {k} must be positive")
        object.__setattr__(self, "params", tuple(sorted(merged.items())))

    @property
    def kwargs(self) -> dict:
        return dict(self.params)

    def __str__(self):
        if not self.params:
            return self.id
        return self.id + ":" + ",".join(f"{k}={v:g}" for k, v in self.params)

    def supports(self, task: str) -> bool:
        return self.id in (REGRESSION_IDS if task == "regression" else BINARY_IDS)

    def build(self):
        kw = self.kwargs
        if self.id == "sample_mean":
            return SampleMean()
        if self.id == "glm_log_link":
            return GlmLearner("poisson")
        if self.id == "glm_log_link_ridge":
            return GlmLearner("poisson", ridge=kw["lambda"])
        if self.id == "logistic_glm":
            return GlmLearner("logistic")
        if self.id == "logistic_ridge":
            return GlmLearner("logistic", ridge=kw["lambda"])
        loss = "logistic" if self.id.startswith("logistic") else "squared"
        return BoostedTrees(int(kw["T"]), int(kw["D"]), float(kw["eta"]), loss=loss)


def parse_learner(text) -> LearnerSpec:
    """``name`` or ``name:key=value,key=value`` (also accepts a mapping)."""
    if isinstance(text, LearnerSpec):
        return text
    if isinstance(text, dict):
        params = {k: v for k, v in text.items() if k != "id"}
        return LearnerSpec(text["id"], tuple(params.items()))
    name, _, rest = str(text).strip().partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        params[key.strip()] = float(val)
    return LearnerSpec(name.strip(), tuple(params.items()))


def parse_menu(items, task: str) -> list[LearnerSpec]:
    if isinstance(items, str):
        items = [s for s in items.split(";") if s.strip()]
    menu = [parse_learner(s) for s in items]
    if not menu:
        raise ValueError("learner menu is empty")
    for spec in menu:
        if not spec.supports(task):
            raise ValueError(f"learner {spec.id} cannot be used for a {task} task")
    return menu


DEFAULT_REGRESSION_MENU = tuple(parse_learner(s) for s in REGRESSION_IDS)
DEFAULT_BINARY_MENU = tuple(parse_learner(s) for s in BINARY_IDS)
LIGHT_REGRESSION_MENU = tuple(parse_learner(s) for s in ("sample_mean", "glm_log_link", "glm_log_link_ridge"))
LIGHT_BINARY_MENU = tuple(parse_learner(s) for s in ("sample_mean", "logistic_glm", "logistic_ridge"))


class SampleMean:
    def fit(self, X, y, w=None):
        y = np.asarray(y, dtype=float)
        w = np.ones(y.size) if w is None else np.asarray(w, dtype=float)
        self.value_ = float(np.sum(w * y) / np.sum(w))
        return self

    def predict(self, X):
        return np.full(np.asarray(X).shape[0], self.value_)


class GlmLearner:
    """Poisson-log or logistic GLM on standardized features plus intercept.

    Constant columns are dropped; the ridge penalty acts on standardized
    coefficients.
    """

    def __init__(self, family: str, ridge: float = 0.0):
        self.family = family
        self.ridge = ridge

    def _design(self, X):
        Z = (np.asarray(X, dtype=float)[:, self.keep_] - self.center_) / self.scale_
        return np.column_stack([np.ones(Z.shape[0]), Z])

    def fit(self, X, y, w=None):
        X = np.asarray(X, dtype=float)
        w = np.ones(X.shape[0]) if w is None else np.asarray(w, dtype=float)
        if X.shape[1]:
            mean = np.sum(w[:, None] * X, axis=0) / w.sum()
            sd = np.sqrt(np.sum(w[:, None] * (X - mean) ** 2, axis=0) / w.sum())
        else:
            mean = sd = np.empty(0)
        self.keep_ = np.flatnonzero(sd > 1e-12 * (1.0 + np.abs(mean)))
        self.center_, self.scale_ = mean[self.keep_], sd[self.keep_]
        solver = fit_weighted_poisson if self.family == "poisson" else fit_weighted_logistic
        self.fit_ = solver(self._design(X), y, w, ridge=self.ridge)
        return self

    def predict(self, X):
        eta = self._design(X) @ self.fit_.coefficients
        if self.family == "poisson":
            return np.exp(np.clip(eta, -700, 700))
        return expit(eta)
