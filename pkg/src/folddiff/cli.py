"""Command-line front end: ``folddiff estimate | simulate | validate``.

Every option can also be set in a YAML config file (``--config``) under the
same name with dashes replaced by underscores; flags override file values.
A run manifest written by ``estimate`` or ``simulate`` is itself a valid
config file, so ``--config out/manifest.json`` reproduces a run.
"""

from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .adjusted import center_estimate, estimate_adjusted
from .centering import CenteringSpec, apply_centering, parse_centering
from .data import DataError, IngestSchema, estimable_mask, load_dataset, validate
from .inference import infer
from .learners.base import LIGHT_BINARY_MENU, LIGHT_REGRESSION_MENU, parse_menu
from .learners.nuisance import LearnerMenu, fit_nuisances, make_folds
from .report import (
    EstimateReport,
    ResultRow,
    depth_summary,
    dumps,
    propensity_summary,
    write_frame,
)
from .unadjusted import estimate_psi1

log = logging.getLogger("folddiff")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
ESTIMANDS = ("psi1", "psi1g", "psi2", "psi2g")
PAPER_SCALE = {"j": 51, "reps": 500}

_DATA_KEYS = {
    "counts": None, "meta": None, "exposure": None, "exposure_level": None, "covariates": [],
    "categorical": None, "sample_id": None, "delimiter": ",",
}
_LEARNER_KEYS = {"menu": "default", "propensity_learners": None, "presence_learners": None, "mean_learners": None}
DEFAULTS = {
    "estimate": {
        **_DATA_KEYS, **_LEARNER_KEYS,
        "estimand": "psi2g", "center": "smedian:0.1", "method": None, "tmle_mode": "two-stage",
        "k": 5, "v": 5, "alpha": 0.05, "b": 10_000, "seed": 1, "out": None, "threads": None,
    },
    "simulate": {
        **_LEARNER_KEYS, "menu": "light",
        "mean": "gamma_A", "n": 100, "j": 11, "reps": 300, "seed": 1, "estimand": "psi2g", "center": "mean",
        "methods": ["psi1_plugin", "psi2_tmle", "psi2_onestep"], "tmle_mode": "two-stage",
        "k": 5, "v": 5, "alpha": 0.05, "b": 10_000, "fix_permutations": False, "paper_scale": False,
        "out": None, "threads": None,
    },
    "validate": dict(_DATA_KEYS),
}


class UsageError(Exception):
    pass


class NumericalError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def check(self) -> None:
        v = self.values
        if self.command in ("estimate", "validate"):
            for key in ("counts", "meta", "exposure"):
                if not v.get(key):
                    raise UsageError(f"--{key.replace('_', '-')} is required")
        if self.command == "validate":
            return
        if not v.get("out"):
            raise UsageError("--out is required")
        if v["estimand"] not in ESTIMANDS:
            raise UsageError(f"unknown estimand {v['estimand']!r}")
        if v["tmle_mode"] not in ("two-stage", "single-stage"):
            raise UsageError(f"unknown TMLE mode {v['tmle_mode']!r}")
        if not 0 < float(v["alpha"]) < 1:
            raise UsageError("alpha must lie in (0, 1)")
        if int(v["b"]) < 1 or int(v["k"]) < 2 or int(v["v"]) < 2:
            raise UsageError("need b >= 1, k >= 2 and v >= 2")
        if v["menu"] not in ("default", "light"):
            raise UsageError(f"unknown learner menu {v['menu']!r}")
        if self.command == "estimate":
            family = v["estimand"][:4]
            method = v["method"] or ("plugin" if family == "psi1" else "tmle")
            if family == "psi1" and method != "plugin":
                raise UsageError(f"estimand {v['estimand']} supports only the plugin method")
            if family == "psi2" and method not in ("tmle", "onestep", "plugin"):
                raise UsageError(f"unknown method {method!r}")
            v["method"] = method

    def menu(self) -> LearnerMenu:
        v = self.values
        base = LearnerMenu() if v["menu"] == "default" else LearnerMenu(LIGHT_BINARY_MENU, LIGHT_BINARY_MENU, LIGHT_REGRESSION_MENU)
        try:
            return LearnerMenu(
                tuple(parse_menu(v["propensity_learners"], "binary")) if v["propensity_learners"] else base.propensity,
                tuple(parse_menu(v["presence_learners"], "binary")) if v["presence_learners"] else base.presence,
                tuple(parse_menu(v["mean_learners"], "regression")) if v["mean_learners"] else base.positive_mean,
            )
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def schema(self) -> IngestSchema:
        v = self.values
        return IngestSchema(
            exposure=v["exposure"], covariates=_as_list(v["covariates"]), sample_id=v["sample_id"],
            categorical=None if v["categorical"] is None else _as_list(v["categorical"]),
            exposure_level=None if v["exposure_level"] is None else str(v["exposure_level"]),
            delimiter=v["delimiter"],
        )

    def threads(self) -> int:
        t = self.values.get("threads")
        return max(1, int(t)) if t else (os.cpu_count() or 1)


def _as_list(x) -> list[str]:
    if x is None:
        return []
    if isinstance(x, str):
        return [s.strip() for s in x.split(",") if s.strip()]
    return [str(s) for s in x]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="folddiff", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"folddiff {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def data_opts(sp):
        sp.add_argument("--counts", default=S, help="outcome table: sample id column then one column per category")
        sp.add_argument("--meta", default=S, help="metadata table with exposure and covariates")
        sp.add_argument("--exposure", default=S, help="exposure column (0/1, or use --exposure-level)")
        sp.add_argument("--exposure-level", default=S, help="exposure value coded as exposed")
        sp.add_argument("--covariates", default=S, help="comma-separated adjustment columns")
        sp.add_argument("--categorical", default=S, help="comma-separated covariates treated as factors")
        sp.add_argument("--sample-id", default=S, help="metadata sample-id column (default: first)")
        sp.add_argument("--delimiter", default=S)

    def est_opts(sp):
        sp.add_argument("--estimand", choices=ESTIMANDS, default=S)
        sp.add_argument("--center", default=S, help="none | mean | ref:<category> | smedian:<eps>")
        sp.add_argument("--tmle-mode", choices=("two-stage", "single-stage"), default=S)
        sp.add_argument("--k", type=int, default=S, help="cross-fitting folds")
        sp.add_argument("--v", type=int, default=S, help="SuperLearner inner folds")
        sp.add_argument("--alpha", type=float, default=S)
        sp.add_argument("--b", type=int, default=S, help="max-T Monte Carlo draws")
        sp.add_argument("--seed", type=int, default=S)
        sp.add_argument("--menu", choices=("default", "light"), default=S, help="built-in learner menu")
        sp.add_argument("--propensity-learners", default=S, help="';'-separated learner specs")
        sp.add_argument("--presence-learners", default=S)
        sp.add_argument("--mean-learners", default=S)
        sp.add_argument("--out", default=S, help="output directory")
        sp.add_argument("--threads", type=int, default=S, help="worker cap (default: all cores)")

    for name, help_ in (("estimate", "estimate log-fold differences"), ("simulate", "run a simulation study"),
                        ("validate", "check per-category estimability")):
        sp = sub.add_parser(name, help=help_, argument_default=S)
        sp.add_argument("--config", default=S, help="YAML config (or a previous manifest.json)")
        sp.add_argument("--verbose", action="store_true", default=False)
        if name in ("estimate", "validate"):
            data_opts(sp)
        if name == "estimate":
            est_opts(sp)
            sp.add_argument("--method", choices=("tmle", "onestep", "plugin"), default=S)
        if name == "simulate":
            est_opts(sp)
            sp.add_argument("--mean", choices=("gamma_A", "gamma_B"), default=S)
            sp.add_argument("--n", type=int, default=S)
            sp.add_argument("--j", type=int, default=S)
            sp.add_argument("--reps", type=int, default=S)
            sp.add_argument("--methods", default=S, help="comma-separated: psi1_plugin, psi2_tmle, psi2_onestep")
            sp.add_argument("--fix-permutations", action="store_true", default=S)
            sp.add_argument("--paper-scale", action="store_true", default=S, help="J=51, 500 replicates")
    return p


def load_config(path, command: str) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    doc = doc or {}
    if not isinstance(doc, dict):
        raise UsageError("config must be a mapping")
    if "config" in doc and isinstance(doc["config"], dict):  # a run manifest
        if doc.get("command") not in (None, command):
            raise UsageError(f"manifest is for {doc['command']!r}, not {command!r}")
        doc = doc["config"]
    doc = dict(doc)
    learners = doc.pop("learners", None)
    if learners:
        for key, target in (("propensity", "propensity_learners"), ("presence", "presence_learners"),
                            ("positive_mean", "mean_learners")):
            if key in learners:
                doc[target] = learners[key]
    unknown = set(doc) - set(DEFAULTS[command])
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return doc


def resolve(argv) -> tuple[RunConfig, bool]:
    ns = vars(build_parser().parse_args(argv))
    command = ns.pop("command")
    verbose = ns.pop("verbose", False)
    values = dict(DEFAULTS[command])
    if "config" in ns:
        values.update(load_config(ns.pop("config"), command))
    values.update(ns)
    if command == "simulate" and values["paper_scale"]:
        for key, val in PAPER_SCALE.items():
            if key not in ns:
                values[key] = val
    for key in ("covariates", "methods"):
        if key in values and values[key] is not None:
            values[key] = _as_list(values[key])
    cfg = RunConfig(command, values)
    cfg.check()
    return cfg, verbose


def _versions() -> dict:
    out = {"folddiff": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "pandas", "numba", "joblib", "PyYAML"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def write_manifest(cfg: RunConfig, out: Path, extra: dict | None = None) -> None:
    doc = {"command": cfg.command, "config": cfg.values, "versions": _versions()}
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(dumps(doc))


def _centering_for(cfg: RunConfig, names) -> CenteringSpec | None:
    if not cfg["estimand"].endswith("g"):
        return None
    try:
        return parse_centering(str(cfg["center"]), names)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def run_estimate(cfg: RunConfig) -> int:
    v = cfg.values
    d = load_dataset(v["counts"], v["meta"], cfg.schema())
    g = _centering_for(cfg, d.category_names)
    status = validate(d)
    if not estimable_mask(status).any():
        raise DataError("no category has positive values in both exposure arms")
    menu = cfg.menu()
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    seed, alpha, B = int(v["seed"]), float(v["alpha"]), int(v["b"])

    nuis = None
    if v["estimand"].startswith("psi1"):
        est = estimate_psi1(d)
        flags = [s.reason.value if not s.estimable else "" for s in status]
        psi, IF = est.psi, est.IF
        if g is not None:
            psi, IF = apply_centering(psi, IF, g)
    else:
        folds = make_folds(d.n, int(v["k"]), d.A, seed)
        nuis = fit_nuisances(d, folds, menu, int(v["v"]), seed, n_jobs=cfg.threads())
        est = estimate_adjusted(d, nuis, v["method"], v["tmle_mode"].replace("-", "_"))
        if g is not None:
            est = center_estimate(est, g)
        psi, IF, flags = est.psi, est.IF, list(est.flags)

    if not np.isfinite(psi).any():
        raise NumericalError("no category produced a finite estimate")
    if g is not None and g.kind == "reference":
        flags[g.reference] = ";".join(f for f in (flags[g.reference], "reference") if f)

    if IF is None:
        nan = np.full(d.J, np.nan)
        rows = [ResultRow(name, float(psi[j]), *([nan[j]] * 6), ";".join(f for f in (flags[j], "no_inference") if f))
                for j, name in enumerate(d.category_names)]
        report = EstimateReport(v["estimand"], v["method"], str(g) if g else "none", alpha, B, d.n, np.nan, np.nan, rows)
    else:
        res = infer(psi, IF, alpha, B, seed)
        rows = [
            ResultRow(name, float(res.psi[j]), float(res.se[j]), float(res.ci_marginal[j, 0]), float(res.ci_marginal[j, 1]),
                      float(res.ci_simultaneous[j, 0]), float(res.ci_simultaneous[j, 1]), float(res.p_values[j]), flags[j])
            for j, name in enumerate(d.category_names)
        ]
        report = EstimateReport(v["estimand"], v["method"], str(g) if g else "none", alpha, B, d.n,
                                res.crit_marginal, res.crit_simultaneous, rows)

    report.write_csv(out / "results.csv")
    report.write_json(out / "results.json")
    write_frame(depth_summary(d), out / "depth_by_group.csv")
    if nuis is not None:
        weights = pd.DataFrame(nuis.weights_table(list(d.category_names)),
                               columns=["task", "fold", "category", "learner", "weight", "cv_risk"])
        write_frame(weights, out / "learner_weights.csv")
        write_frame(propensity_summary(nuis.pi, d.A), out / "propensity_summary.csv")
    write_manifest(cfg, out, {"data": {"n": d.n, "J": d.J, "covariates": list(d.covariate_names)}})
    n_ok = int(np.isfinite(psi).sum())
    print(f"estimated {n_ok}/{d.J} categories ({v['estimand']}, {report.method}, centering {report.centering}); "
          f"results in {out}")
    return EXIT_OK


def run_simulate(cfg: RunConfig) -> int:
    from .simulator import SimConfig, run_study, simultaneous_coverage

    v = cfg.values
    try:
        sim = SimConfig(
            n=int(v["n"]), J=int(v["j"]), mean_kind=v["mean"], seed=int(v["seed"]), replicates=int(v["reps"]),
            fix_permutations=bool(v["fix_permutations"]), K=int(v["k"]), V=int(v["v"]), B=int(v["b"]),
            alpha=float(v["alpha"]), tmle_mode=v["tmle_mode"].replace("-", "_"), menu=cfg.menu(),
            n_jobs=cfg.threads(),
        )
        g = _centering_for(cfg, None)
        report = run_study(sim, v["methods"], v["estimand"], g)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_frame(report.summary, out / "summary.csv")
    write_frame(report.replicates.drop(columns=["seconds"]), out / "replicates.csv")
    for name, frame in report.plot_data().items():
        write_frame(frame, out / f"plot_{name}.csv")
    doc = {
        "estimand": report.estimand, "centering": report.centering, "config": report.config, "truth": report.truth,
        "simultaneous_coverage": {m: simultaneous_coverage(report.replicates, m) for m in v["methods"]},
        "failures": [list(f) for f in report.failures],
        "summary": report.summary.replace({np.nan: None}).to_dict("records"),
    }
    (out / "report.json").write_text(dumps(doc))
    (out / "runtime.json").write_text(dumps(report.runtime))
    write_manifest(cfg, out)
    print(f"{sim.replicates} replicates, {len(report.failures)} failures; results in {out}")
    return EXIT_OK


def run_validate(cfg: RunConfig) -> int:
    d = load_dataset(cfg["counts"], cfg["meta"], cfg.schema())
    status = validate(d)
    zeros = [(d.W[d.A == a] == 0).sum(axis=0) for a in (0, 1)]
    n0, n1 = int((d.A == 0).sum()), int((d.A == 1).sum())
    width = max(8, *(len(c) for c in d.category_names))
    print(f"{d.n} samples ({n0} unexposed, {n1} exposed), {d.J} categories, {d.p} covariate columns")
    print(f"{'category':<{width}}  {'status':<16}  {'zeros_unexposed':>15}  {'zeros_exposed':>13}")
    for j, s in enumerate(status):
        print(f"{d.category_names[j]:<{width}}  {s.reason.value:<16}  {int(zeros[0][j]):>15}  {int(zeros[1][j]):>13}")
    flagged = sum(not s.estimable for s in status)
    print(f"{d.J - flagged} estimable, {flagged} flagged")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        cfg, verbose = resolve(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"folddiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    runner = {"estimate": run_estimate, "simulate": run_simulate, "validate": run_validate}[cfg.command]
    try:
        return runner(cfg)
    except UsageError as exc:
        print(f"folddiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"folddiff: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"folddiff: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
