"""Gradient-boosted shallow regression trees.

Trees are grown greedily to a fixed depth with exact weighted split search.
Regression boosts squared error; classification boosts the Bernoulli
log-likelihood with Newton leaf values on the logit scale.

The tree kernels are compiled with numba: fits happen thousands of times per
analysis on small samples, where interpreter overhead would dominate.
"""

from __future__ import annotations

import numba
import numpy as np
from scipy.special import expit

MIN_LEAF = 2
LOGIT_LEAF_CAP = 10.0


@numba.njit(cache=True)
def _grow_tree(X, order, g, h, depth, leaf_cap, feature, threshold, value, node_of):
    """Grow one tree in heap layout (children of i are 2i+1, 2i+2).

    ``feature[i] == -1`` marks a leaf, ``-2`` an unused slot.  Fills
    ``node_of`` with each row's leaf and returns the per-row fitted values.
    """
    n, p = X.shape
    n_nodes = feature.size
    for i in range(n_nodes):
        feature[i] = -2
        threshold[i] = 0.0
        value[i] = 0.0
    G = np.zeros(n_nodes)
    H = np.zeros(n_nodes)
    C = np.zeros(n_nodes, dtype=np.int64)
    for r in range(n):
        node_of[r] = 0 if h[r] > 0 else -1
    feature[0] = -1

    for level in range(depth + 1):
        first = (1 << level) - 1
        last = (1 << (level + 1)) - 1
        G[:] = 0.0
        H[:] = 0.0
        C[:] = 0
        for r in range(n):
            nd = node_of[r]
            if nd >= first and nd < last:
                G[nd] += g[r]
                H[nd] += h[r]
                C[nd] += 1
        for nd in range(first, last):
            if feature[nd] == -1:
                v = G[nd] / H[nd] if H[nd] > 0 else 0.0
                if leaf_cap > 0:
                    v = min(max(v, -leaf_cap), leaf_cap)
                value[nd] = v
        if level == depth:
            break

        best_gain = np.zeros(n_nodes)
        best_feat = np.full(n_nodes, -1)
        best_thr = np.zeros(n_nodes)
        cg = np.zeros(n_nodes)
        ch = np.zeros(n_nodes)
        cc = np.zeros(n_nodes, dtype=np.int64)
        lastx = np.zeros(n_nodes)
        for f in range(p):
            cg[:] = 0.0
            ch[:] = 0.0
            cc[:] = 0
            for t in range(n):
                r = order[f, t]
                nd = node_of[r]
                if nd < first or nd >= last:
                    continue
                x = X[r, f]
                if cc[nd] >= MIN_LEAF and C[nd] - cc[nd] >= MIN_LEAF and x > lastx[nd]:
                    hl = ch[nd]
                    hr = H[nd] - hl
                    if hl > 0 and hr > 0:
                        gl = cg[nd]
                        gr = G[nd] - gl
                        gain = gl * gl / hl + gr * gr / hr - G[nd] * G[nd] / H[nd]
                        if gain > best_gain[nd] + 1e-12 * max(abs(G[nd] * G[nd] / H[nd]), 1.0):
                            best_gain[nd] = gain
                            best_feat[nd] = f
                            best_thr[nd] = 0.5 * (lastx[nd] + x)
                cg[nd] += g[r]
                ch[nd] += h[r]
                cc[nd] += 1
                lastx[nd] = x

        any_split = False
        for nd in range(first, last):
            if feature[nd] == -1 and best_feat[nd] >= 0:
                feature[nd] = best_feat[nd]
                threshold[nd] = best_thr[nd]
                feature[2 * nd + 1] = -1
                feature[2 * nd + 2] = -1
                any_split = True
        if not any_split:
            break
        for r in range(n):
            nd = node_of[r]
            if nd >= first and nd < last and feature[nd] >= 0:
                if X[r, feature[nd]] <= threshold[nd]:
                    node_of[r] = 2 * nd + 1
                else:
                    node_of[r] = 2 * nd + 2

    out = np.zeros(n)
    for r in range(n):
        if node_of[r] >= 0:
            out[r] = value[node_of[r]]
    return out


@numba.njit(cache=True)
def _predict_trees(X, features, thresholds, values, eta, init):
    n = X.shape[0]
    out = np.full(n, init)
    for t in range(features.shape[0]):
        for r in range(n):
            nd = 0
            while features[t, nd] >= 0:
                if X[r, features[t, nd]] <= thresholds[t, nd]:
                    nd = 2 * nd + 1
                else:
                    nd = 2 * nd + 2
            out[r] += eta * values[t, nd]
    return out


class BoostedTrees:
    """Boosted depth-``depth`` trees, ``n_trees`` rounds, shrinkage ``eta``."""

    def __init__(self, n_trees=200, depth=2, eta=0.1, loss="squared"):
        if n_trees < 1 or depth < 1 or not eta > 0:
            raise ValueError("boosting hyperparameters must be positive")
        if loss not in ("squared", "logistic"):
            raise ValueError(f"unknown loss {loss!r}")
        self.n_trees, self.depth, self.eta, self.loss = int(n_trees), int(depth), float(eta), loss

    def fit(self, X, y, w=None):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, p = X.shape
        w = np.ones(n) if w is None else np.asarray(w, dtype=float)
        ybar = np.sum(w * y) / w.sum()
        if self.loss == "squared":
            self.init_ = float(ybar)
        else:
            pbar = min(max(ybar, 1e-6), 1 - 1e-6)
            self.init_ = float(np.log(pbar / (1 - pbar)))

        n_nodes = 2 ** (self.depth + 1) - 1
        feats = np.full((self.n_trees, n_nodes), -2, dtype=np.int64)
        thrs = np.zeros((self.n_trees, n_nodes))
        vals = np.zeros((self.n_trees, n_nodes))
        if p == 0:
            self.features_, self.thresholds_, self.values_ = feats[:0], thrs[:0], vals[:0]
            return self
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        node_of = np.empty(n, dtype=np.int64)
        F = np.full(n, self.init_)
        used = 0
        for t in range(self.n_trees):
            if self.loss == "squared":
                g, h, cap = w * (y - F), w, 0.0
            else:
                prob = expit(F)
                g, h, cap = w * (y - prob), w * prob * (1 - prob), LOGIT_LEAF_CAP
            fitted = _grow_tree(X, order, g, h, self.depth, cap, feats[t], thrs[t], vals[t], node_of)
            used = t + 1
            if feats[t, 0] < 0 and abs(vals[t, 0]) < 1e-14:
                used = t
                break
            F = F + self.eta * fitted
        self.features_, self.thresholds_, self.values_ = feats[:used], thrs[:used], vals[:used]
        return self

    def decision_function(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return _predict_trees(X, self.features_, self.thresholds_, self.values_, self.eta, self.init_)

    def predict(self, X):
        F = self.decision_function(X)
        return expit(F) if self.loss == "logistic" else F
