"""Observed-data container, delimited-file ingestion and estimability checks.

Only the triple (W, A, X) is observed.  W is an n x J matrix of nonnegative
category levels, A a binary exposure and X an n x p covariate matrix.  Latent
sample and category effects never appear here; they live in the simulator.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class StatusReason(str, enum.Enum):
    OK = "ok"
    ALL_ZERO_IN_ARM0 = "all_zero_in_arm0"
    ALL_ZERO_IN_ARM1 = "all_zero_in_arm1"
    ALL_ZERO = "all_zero"


@dataclass(frozen=True)
class CategoryStatus:
    category_index: int
    reason: StatusReason

    @property
    def estimable(self) -> bool:
        return self.reason is StatusReason.OK


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable (W, A, X) sample with labels.

    Arrays are copied and marked read-only on construction.
    """

    W: np.ndarray
    A: np.ndarray
    X: np.ndarray
    category_names: tuple[str, ...] = ()
    sample_ids: tuple[str, ...] = ()
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        A = np.array(self.A)
        if W.ndim != 2:
            raise DataError("W must be a 2-d matrix")
        n, J = W.shape
        X = np.array(self.X, dtype=float) if self.X is not None else np.empty((n, 0))
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if n < 2 or J < 1:
            raise DataError(f"need n >= 2 and J >= 1, got n={n}, J={J}")
        if A.shape != (n,) or X.shape[0] != n:
            raise DataError("W, A and X must have the same number of rows")
        if not np.all(np.isfinite(W)) or np.any(W < 0):
            raise DataError("W entries must be finite and nonnegative")
        if not np.all(np.isfinite(X)):
            raise DataError("X entries must be finite")
        if not np.all(np.isin(A, (0, 1))):
            raise DataError("exposure not binary")
        A = A.astype(float)
        if A.sum() < 1 or (1 - A).sum() < 1:
            raise DataError("both exposure arms must be nonempty")

        names = tuple(self.category_names) or tuple(f"cat{j + 1}" for j in range(J))
        ids = tuple(self.sample_ids) or tuple(f"s{i + 1}" for i in range(n))
        cov = tuple(self.covariate_names) or tuple(f"x{k + 1}" for k in range(X.shape[1]))
        if len(names) != J or len(ids) != n or len(cov) != X.shape[1]:
            raise DataError("label lengths do not match data dimensions")
        if len(set(ids)) != n:
            raise DataError("duplicate sample ids")

        for arr in (W, A, X):
            arr.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "category_names", tuple(map(str, names)))
        object.__setattr__(self, "sample_ids", tuple(map(str, ids)))
        object.__setattr__(self, "covariate_names", tuple(map(str, cov)))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def J(self) -> int:
        return self.W.shape[1]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(
            self.W[rows], self.A[rows], self.X[rows], self.category_names,
            tuple(np.asarray(self.sample_ids)[rows]), self.covariate_names,
        )


@dataclass
class IngestSchema:
    exposure: str
    covariates: Sequence[str] = ()
    sample_id: str | None = None  # defaults to the metadata's first column
    categorical: Sequence[str] | None = None  # None: infer non-numeric columns
    exposure_level: str | None = None  # value mapped to A=1 for non-numeric exposure
    delimiter: str = ","
    extra: dict = field(default_factory=dict)


def _read_table(path, delimiter: str) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    return pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)


def _is_missing(col: pd.Series) -> pd.Series:
    return col.str.strip().str.upper().isin(["", "NA", "NAN", "NULL", "NONE"])


def expand_categorical(values: Sequence[str], name: str) -> tuple[np.ndarray, list[str]]:
    """Indicator columns for every level except the first (sorted) one."""
    levels = sorted(set(values))
    cols = np.array([[v == lev for lev in levels[1:]] for v in values], dtype=float)
    cols = cols.reshape(len(values), len(levels) - 1)
    return cols, [f"{name}={lev}" for lev in levels[1:]]


def load_dataset(outcome_path, metadata_path, schema: IngestSchema) -> Dataset:
    counts = _read_table(outcome_path, schema.delimiter)
    meta = _read_table(metadata_path, schema.delimiter)
    if counts.shape[1] < 2:
        raise DataError("outcome file needs a sample-id column and at least one category")

    id_col = counts.columns[0]
    meta_id = schema.sample_id or meta.columns[0]
    if meta_id not in meta.columns:
        raise DataError(f"metadata has no sample-id column {meta_id!r}")
    for frame, col, label in ((counts, id_col, "outcome"), (meta, meta_id, "metadata")):
        if _is_missing(frame[col]).any():
            raise DataError(f"missing sample id in {label} file")
        if frame[col].duplicated().any():
            dup = frame[col][frame[col].duplicated()].iloc[0]
            raise DataError(f"duplicate sample id {dup!r} in {label} file")
    missing = set(counts[id_col]) ^ set(meta[meta_id])
    if missing:
        raise DataError(f"sample ids not matched between files: {sorted(missing)[:5]}")

    ids = list(counts[id_col])
    meta = meta.set_index(meta_id).loc[ids]

    cat_cols = list(counts.columns[1:])
    W = np.empty((len(ids), len(cat_cols)))
    for j, c in enumerate(cat_cols):
        col = counts[c]
        if _is_missing(col).any():
            raise DataError(f"missing value in outcome column {c!r}")
        try:
            W[:, j] = col.astype(float).to_numpy()
        except ValueError:
            raise DataError(f"non-numeric outcome cell in column {c!r}") from None
    if np.any(~np.isfinite(W)) or np.any(W < 0):
        raise DataError("outcome cells must be finite and nonnegative")

    if schema.exposure not in meta.columns:
        raise DataError(f"metadata has no exposure column {schema.exposure!r}")
    expo = meta[schema.exposure]
    if _is_missing(expo).any():
        raise DataError("missing value in exposure column")
    if schema.exposure_level is not None:
        A = (expo == schema.exposure_level).to_numpy(dtype=float)
    else:
        try:
            A = expo.astype(float).to_numpy()
        except ValueError:
            raise DataError("exposure not binary") from None
        if not np.all(np.isin(A, (0.0, 1.0))):
            raise DataError("exposure not binary")

    blocks, names = [], []
    for c in schema.covariates:
        if c not in meta.columns:
            raise DataError(f"metadata has no covariate column {c!r}")
        col = meta[c]
        if _is_missing(col).any():
            raise DataError(f"missing value in covariate column {c!r}")
        categorical = c in schema.categorical if schema.categorical is not None else None
        if categorical is None:
            try:
                col.astype(float)
                categorical = False
            except ValueError:
                categorical = True
        if categorical:
            block, bnames = expand_categorical(list(col), c)
        else:
            block, bnames = col.astype(float).to_numpy().reshape(-1, 1), [c]
        blocks.append(block)
        names.extend(bnames)
    X = np.hstack(blocks) if blocks else np.empty((len(ids), 0))

    return Dataset(W, A, X, tuple(cat_cols), tuple(ids), tuple(names))


def write_dataset(d: Dataset, outcome_path, metadata_path, exposure: str = "exposure") -> None:
    """Write the interchange files read back by :func:`load_dataset`.

    Values are written with ``repr`` precision so a reload is bit-exact.
    """
    counts = pd.DataFrame(d.W, columns=list(d.category_names))
    counts.insert(0, "sample_id", list(d.sample_ids))
    meta = pd.DataFrame(d.X, columns=list(d.covariate_names))
    meta.insert(0, exposure, d.A.astype(int))
    meta.insert(0, "sample_id", list(d.sample_ids))
    counts.to_csv(outcome_path, index=False, float_format="%.17g")
    meta.to_csv(metadata_path, index=False, float_format="%.17g")


def validate(d: Dataset) -> list[CategoryStatus]:
    arm1 = d.A == 1
    pos1 = np.any(d.W[arm1] > 0, axis=0)
    pos0 = np.any(d.W[~arm1] > 0, axis=0)
    out = []
    for j in range(d.J):
        if not pos0[j] and not pos1[j]:
            reason = StatusReason.ALL_ZERO
        elif not pos0[j]:
            reason = StatusReason.ALL_ZERO_IN_ARM0
        elif not pos1[j]:
            reason = StatusReason.ALL_ZERO_IN_ARM1
        else:
            reason = StatusReason.OK
        out.append(CategoryStatus(j, reason))
    return out


def estimable_mask(statuses: Sequence[CategoryStatus]) -> np.ndarray:
    return np.array([s.estimable for s in statuses], dtype=bool)
