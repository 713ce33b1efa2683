"""Result tables: writing, reading back, and diagnostic summaries."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .data import Dataset
from .learners.nuisance import PI_BOUNDS

FLOAT_FORMAT = "%.17g"


@dataclass
class ResultRow:
    category: str
    estimate: float
    se: float
    ci_lower: float
    ci_upper: float
    sim_lower: float
    sim_upper: float
    p_value: float
    flags: str = ""


@dataclass
class EstimateReport:
    estimand: str
    method: str
    centering: str
    alpha: float
    B: int
    n: int
    crit_marginal: float
    crit_simultaneous: float
    rows: list[ResultRow] = field(default_factory=list)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.rows], columns=[f.name for f in fields(ResultRow)])

    def write_csv(self, path) -> None:
        self.frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="NA", lineterminator="\n")

    def to_json(self) -> dict:
        head = {f.name: _clean(getattr(self, f.name)) for f in fields(self) if f.name != "rows"}
        head["results"] = [{k: _clean(v) for k, v in asdict(r).items()} for r in self.rows]
        return head

    def write_json(self, path) -> None:
        Path(path).write_text(dumps(self.to_json()))


def _clean(v):
    """JSON-safe scalar: NaN and infinities become null."""
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n"


def read_results_csv(path) -> list[ResultRow]:
    df = pd.read_csv(path, dtype={"category": str, "flags": str}, keep_default_na=False, na_values=["NA"],
                     float_precision="round_trip")
    out = []
    for rec in df.to_dict("records"):
        rec["flags"] = "" if pd.isna(rec["flags"]) else rec["flags"]
        out.append(ResultRow(**{k: (float(v) if k not in ("category", "flags") else v) for k, v in rec.items()}))
    return out


def read_results_json(path) -> EstimateReport:
    doc = json.loads(Path(path).read_text())
    rows = [ResultRow(**{k: (math.nan if v is None else v) for k, v in r.items()}) for r in doc.pop("results")]
    doc = {k: (math.nan if v is None else v) for k, v in doc.items()}
    return EstimateReport(**doc, rows=rows)


def propensity_summary(pi, A) -> pd.DataFrame:
    """Distribution of cross-fitted propensities by exposure arm."""
    pi, A = np.asarray(pi), np.asarray(A)
    rows = []
    for label, sel in (("unexposed", A == 0), ("exposed", A == 1), ("all", np.ones(A.size, dtype=bool))):
        v = pi[sel]
        q = np.quantile(v, [0, 0.25, 0.5, 0.75, 1]) if v.size else [np.nan] * 5
        rows.append(dict(
            group=label, n=int(v.size), mean=float(v.mean()) if v.size else np.nan,
            min=q[0], q25=q[1], median=q[2], q75=q[3], max=q[4],
            at_lower_bound=int(np.sum(v <= PI_BOUNDS[0])), at_upper_bound=int(np.sum(v >= PI_BOUNDS[1])),
        ))
    return pd.DataFrame(rows)


def depth_summary(d: Dataset) -> pd.DataFrame:
    """Per-sample total (sequencing depth) summarized by exposure arm.

    A large difference between arms hints at a sample-level effect that
    centering is meant to absorb.
    """
    depth = d.W.sum(axis=1)
    rows = []
    for label, a in (("unexposed", 0), ("exposed", 1)):
        v = depth[d.A == a]
        pos = v[v > 0]
        rows.append(dict(
            group=label, n=int(v.size), mean=float(v.mean()), median=float(np.median(v)),
            sd=float(v.std(ddof=1)) if v.size > 1 else np.nan, min=float(v.min()), max=float(v.max()),
            mean_log_depth=float(np.log(pos).mean()) if pos.size else np.nan,
        ))
    return pd.DataFrame(rows)


def write_frame(df: pd.DataFrame, path) -> None:
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="NA", lineterminator="\n")
