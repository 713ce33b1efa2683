"""Shift-equivariant centering functions and their delta-method maps.

Every centering g here satisfies ``g(y + z*1) = g(y) + z``.  Centered
estimates are ``psi - g(psi)`` and centered influence rows are
``IF - (IF @ grad g) 1^T``.

Entries that are NaN (non-estimable categories) are ignored when g is
evaluated, i.e. the gradient puts zero weight on them.  For a reference
centering at a NaN entry every centered value is undefined.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

KINDS = ("none", "reference", "mean", "smoothed_median")

_NEWTON_TOL = 1e-12
_NEWTON_MAXITER = 100


@dataclass(frozen=True)
class CenteringSpec:
    kind: str = "mean"
    reference: int | None = None  # 0-based category index
    eps: float = 0.1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown centering kind {self.kind!r}")
        if self.kind == "reference" and (self.reference is None or self.reference < 0):
            raise ValueError("reference centering needs a nonnegative index")
        if self.kind == "smoothed_median" and not self.eps > 0:
            raise ValueError("smoothed median needs eps > 0")

    def __str__(self):
        if self.kind == "reference":
            return f"ref:{self.reference + 1}"
        if self.kind == "smoothed_median":
            return f"smedian:{self.eps:g}"
        return self.kind


def parse_centering(text: str, category_names: Sequence[str] | None = None) -> CenteringSpec:
    """Parse ``none``, ``mean``, ``ref:<name-or-1-based-index>`` or ``smedian:<eps>``."""
    text = text.strip()
    if text in ("none", "mean"):
        return CenteringSpec(text)
    if text == "smedian":
        return CenteringSpec("smoothed_median")
    head, _, arg = text.partition(":")
    if head == "smedian":
        return CenteringSpec("smoothed_median", eps=float(arg))
    if head == "ref":
        if category_names is not None and arg in category_names:
            return CenteringSpec("reference", reference=list(category_names).index(arg))
        try:
            idx = int(arg)
        except ValueError:
            raise ValueError(f"unknown reference category {arg!r}") from None
        if idx < 1 or (category_names is not None and idx > len(category_names)):
            raise ValueError(f"reference index {idx} out of range")
        return CenteringSpec("reference", reference=idx - 1)
    raise ValueError(f"cannot parse centering {text!r}")


def _rho_d1(u, eps):
    return u / np.sqrt(1.0 + (u / eps) ** 2)


def _rho_d2(u, eps):
    return (1.0 + (u / eps) ** 2) ** -1.5


def _smoothed_median(y: np.ndarray, eps: float) -> float:
    """Root of sum_j rho'(y_j - m) = 0 for the pseudo-Huber rho."""
    m = float(np.median(y))
    lo, hi = float(y.min()), float(y.max())
    for _ in range(_NEWTON_MAXITER):
        score = _rho_d1(y - m, eps).sum()
        if abs(score) <= _NEWTON_TOL:
            return m
        # score is decreasing in m
        if score > 0:
            lo = m
        else:
            hi = m
        step = score / _rho_d2(y - m, eps).sum()
        cand = m + step
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        if cand == m:
            return m
        m = cand
    # bisection fallback
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _rho_d1(y - mid, eps).sum() > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def _check(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 1:
        raise ValueError("centering needs a nonempty vector")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite input to centering function")
    return y


def center_value(g: CenteringSpec, y) -> float:
    y = _check(y)
    if g.kind == "none":
        return 0.0
    if g.kind == "reference":
        if g.reference >= y.size:
            raise ValueError("reference index out of range")
        return float(y[g.reference])
    if g.kind == "mean":
        return float(y.mean())
    return _smoothed_median(y, g.eps)


def center_gradient(g: CenteringSpec, y) -> np.ndarray:
    y = _check(y)
    if g.kind == "none":
        return np.zeros_like(y)
    if g.kind == "reference":
        grad = np.zeros_like(y)
        grad[g.reference] = 1.0
        return grad
    if g.kind == "mean":
        return np.full_like(y, 1.0 / y.size)
    m = _smoothed_median(y, g.eps)
    h = _rho_d2(y - m, g.eps)
    return h / h.sum()


def apply_centering(psi, IF, g: CenteringSpec):
    """Return ``(psi - g(psi) 1, IF (I - 1 grad^T)^T)``.

    ``IF`` may be None (plug-in estimates with no influence function).
    """
    psi = np.asarray(psi, dtype=float)
    if g.kind == "none":
        return psi.copy(), None if IF is None else np.array(IF, dtype=float)

    ok = np.isfinite(psi)
    out = np.full_like(psi, np.nan)
    grad = np.zeros_like(psi)
    if g.kind == "reference" and not ok[g.reference]:
        IF_g = None if IF is None else np.full(np.shape(IF), np.nan)
        return out, IF_g
    if ok.any():
        sub = CenteringSpec(g.kind, reference=None if g.kind != "reference" else int(ok[: g.reference].sum()), eps=g.eps)
        grad[ok] = center_gradient(sub, psi[ok])
        out[ok] = psi[ok] - center_value(sub, psi[ok])
    if IF is None:
        return out, None
    IF = np.asarray(IF, dtype=float)
    IF_g = IF - np.outer(IF @ grad, np.ones(psi.size))
    IF_g[:, ~ok] = 0.0
    return out, IF_g
