"""Batch experiment runner.

Parses a YAML key-value configuration, dispatches one of the module
operations, and emits a JSON result, CSV plot data, and a human-readable
summary table.  Every artifact embeds the master seed and the spec digest.

Exit codes: 0 for pass/consistent verdicts, 1 for fail/inconsistent,
2 for refusals and usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import asymptotics, constructions, dists, esssup as esssup_mod, index as index_mod, process
from .dists import Dist, JointRiskSpec, SeedStream, spec_digest
from .errors import (
    ConfigError,
    InfeasibleConstructionError,
    InsufficientPointsError,
    InvalidSpecError,
    MomentUnavailableError,
    Refusal,
    RuinTailError,
)
from .extreal import INF, ExtReal
from .index import EstimatorConfig
from .process import PathConfig, RuinEstimate

SCHEMA_VERSION = 1

SUBCOMMANDS = (
    "validate", "index", "lundberg", "h", "esssup", "simulate", "ruin-slope",
    "finite-band", "laws", "rw-borovkov", "lundberg-equiv", "construct-minorant",
)

_DEFAULT_GRID = tuple(10.0 ** e for e in (1.0, 1.5, 2.0, 2.5, 3.0))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs; round-trips losslessly through YAML."""

    seed: int = 0
    joint: Optional[JointRiskSpec] = None
    dist: Optional[Dist] = None
    # path budget
    mode: str = "ultimate"
    horizon: Optional[int] = None
    n_paths: int = 100_000
    prod_threshold: float = 1e-8
    max_steps: int = 100_000
    min_steps: int = 50
    chunk_size: int = 1 << 15
    u0_grid: tuple[float, ...] = _DEFAULT_GRID
    estimator: EstimatorConfig = EstimatorConfig()
    tolerance: float = 0.25
    # subcommand sections
    esssup_steps: int = 10
    h_values: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    laws_checks: tuple[dict, ...] = ()
    laws_corpus_size: int = 0
    laws_samples: int = 100_000
    band_horizon: int = 5
    band_samples: int = 200_000
    rw_horizon: int = 10_000
    rw_paths: int = 1_000_000
    equiv_paths: int = 400_000
    index_samples: int = 200_000
    minorant_side: str = "loss"
    minorant_eps: float = 0.5
    minorant_target: Optional[float] = None
    out_json: Optional[str] = None
    out_csv: Optional[str] = None

    def path_config(self) -> PathConfig:
        return PathConfig(
            n_paths=self.n_paths,
            u0_grid=self.u0_grid,
            stream=SeedStream(self.seed, 0),
            horizon=self.horizon if self.mode == "finite" else None,
            prod_threshold=self.prod_threshold,
            max_steps=self.max_steps,
            min_steps=self.min_steps,
            chunk_size=self.chunk_size,
        )

    def to_obj(self) -> dict:
        obj: dict = {
            "seed": self.seed,
            "paths": {
                "mode": self.mode,
                "horizon": self.horizon,
                "n_paths": self.n_paths,
                "prod_threshold": self.prod_threshold,
                "max_steps": self.max_steps,
                "min_steps": self.min_steps,
                "chunk_size": self.chunk_size,
            },
            "u0_grid": list(self.u0_grid),
            "estimator": {
                "estimator": self.estimator.estimator,
                "top_fraction": self.estimator.top_fraction,
                "min_exceedances": self.estimator.min_exceedances,
            },
            "tolerance": self.tolerance,
            "esssup": {"steps": self.esssup_steps},
            "h": {"c_values": list(self.h_values)},
            "laws": {
                "checks": [dict(c) for c in self.laws_checks],
                "corpus_size": self.laws_corpus_size,
                "n_samples": self.laws_samples,
            },
            "finite_band": {"horizon": self.band_horizon, "n_samples": self.band_samples},
            "random_walk": {"horizon": self.rw_horizon, "n_paths": self.rw_paths},
            "lundberg_equiv": {"n_paths": self.equiv_paths},
            "index": {"n_samples": self.index_samples},
            "minorant": {
                "side": self.minorant_side,
                "eps": self.minorant_eps,
                "target": self.minorant_target,
            },
            "out": {"json": self.out_json, "csv": self.out_csv},
        }
        if self.joint is not None:
            obj["joint"] = dists.joint_to_obj(self.joint)
        if self.dist is not None:
            obj["dist"] = self.dist.to_obj()
        return obj

    @staticmethod
    def from_obj(obj: dict) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("configuration root must be a mapping")
        known = {
            "seed", "joint", "dist", "paths", "u0_grid", "estimator", "tolerance",
            "esssup", "h", "laws", "finite_band", "random_walk", "lundberg_equiv",
            "index", "minorant", "out",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        paths = obj.get("paths", {}) or {}
        est = obj.get("estimator", {}) or {}
        laws = obj.get("laws", {}) or {}
        band = obj.get("finite_band", {}) or {}
        rw = obj.get("random_walk", {}) or {}
        eq = obj.get("lundberg_equiv", {}) or {}
        idx = obj.get("index", {}) or {}
        mino = obj.get("minorant", {}) or {}
        out = obj.get("out", {}) or {}
        d = ExperimentConfig()
        return ExperimentConfig(
            seed=int(obj.get("seed", 0)),
            joint=dists.joint_from_obj(obj["joint"]) if obj.get("joint") else None,
            dist=dists.dist_from_obj(obj["dist"]) if obj.get("dist") else None,
            mode=str(paths.get("mode", d.mode)),
            horizon=None if paths.get("horizon") is None else int(paths["horizon"]),
            n_paths=int(paths.get("n_paths", d.n_paths)),
            prod_threshold=float(paths.get("prod_threshold", d.prod_threshold)),
            max_steps=int(paths.get("max_steps", d.max_steps)),
            min_steps=int(paths.get("min_steps", d.min_steps)),
            chunk_size=int(paths.get("chunk_size", d.chunk_size)),
            u0_grid=tuple(float(u) for u in obj.get("u0_grid", d.u0_grid)),
            estimator=EstimatorConfig(
                estimator=str(est.get("estimator", "rank-loglog")),
                top_fraction=float(est.get("top_fraction", 0.01)),
                min_exceedances=int(est.get("min_exceedances", 200)),
            ),
            tolerance=float(obj.get("tolerance", d.tolerance)),
            esssup_steps=int((obj.get("esssup", {}) or {}).get("steps", d.esssup_steps)),
            h_values=tuple(float(c) for c in (obj.get("h", {}) or {}).get("c_values", d.h_values)),
            laws_checks=tuple(dict(c) for c in laws.get("checks", ())),
            laws_corpus_size=int(laws.get("corpus_size", 0)),
            laws_samples=int(laws.get("n_samples", d.laws_samples)),
            band_horizon=int(band.get("horizon", d.band_horizon)),
            band_samples=int(band.get("n_samples", d.band_samples)),
            rw_horizon=int(rw.get("horizon", d.rw_horizon)),
            rw_paths=int(rw.get("n_paths", d.rw_paths)),
            equiv_paths=int(eq.get("n_paths", d.equiv_paths)),
            index_samples=int(idx.get("n_samples", d.index_samples)),
            minorant_side=str(mino.get("side", d.minorant_side)),
            minorant_eps=float(mino.get("eps", d.minorant_eps)),
            minorant_target=None if mino.get("target") is None else float(mino["target"]),
            out_json=out.get("json"),
            out_csv=out.get("csv"),
        )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        obj = yaml.safe_load(fh)
    return ExperimentConfig.from_obj(obj or {})


def save_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_obj(), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Artifact emission
# ---------------------------------------------------------------------------


def _provenance(cfg: ExperimentConfig) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "seed": cfg.seed}
    if cfg.joint is not None:
        out["spec_digest"] = spec_digest(cfg.joint)
    return out


def _write_json(cfg: ExperimentConfig, payload: dict) -> None:
    if cfg.out_json:
        payload = {**_provenance(cfg), **payload}
        Path(cfg.out_json).write_text(json.dumps(payload, indent=2) + "\n")


def emit_plot_data(
    estimate: RuinEstimate,
    fit: Optional[asymptotics.SlopeFit],
    path: str,
) -> None:
    """CSV plot data: one row per grid point; empty cells (never -inf
    literals) where the estimate is zero."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["log10_u0", "log10_p_hat", "log10_ci_lo", "log10_ci_hi", "fit_value"])
        for u, p, lo, hi in zip(estimate.u0_grid, estimate.p_hat,
                                estimate.ci_lo, estimate.ci_hi):
            lx = math.log10(u)
            row = [lx]
            row.append(math.log10(p) if p > 0 else "")
            row.append(math.log10(lo) if lo > 0 else "")
            row.append(math.log10(hi) if hi > 0 else "")
            row.append(fit.intercept + fit.slope * lx if fit is not None else "")
            w.writerow(row)


def _fmt(v) -> str:
    if isinstance(v, ExtReal):
        return "inf" if v.is_inf else f"{v.finite:.6g}"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(headers: list[str], rows: list[list]) -> str:
    cells = [[_fmt(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells)
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------


def _need_joint(cfg: ExperimentConfig) -> JointRiskSpec:
    if cfg.joint is None:
        raise ConfigError("this subcommand needs a 'joint' risk spec in the config")
    return cfg.joint


def _need_dist(cfg: ExperimentConfig) -> Dist:
    if cfg.dist is None:
        raise ConfigError("this subcommand needs a 'dist' marginal in the config")
    return cfg.dist


def _cmd_validate(cfg: ExperimentConfig) -> int:
    report = dists.validate(_need_joint(cfg))
    _write_json(cfg, {"validation": report.to_json_obj()})
    if report.ok:
        print("spec accepted: A > 0 a.s., A not constant 1, P(B > 0) > 0")
        return 0
    print("spec rejected:")
    for v in report.violations:
        print(f"  - {v}")
    return 1


def _cmd_index(cfg: ExperimentConfig) -> int:
    d = _need_dist(cfg)
    iv = index_mod.analytic_index(d)
    if iv is None:
        samples = dists.sample_marginal(d, SeedStream(cfg.seed, 1), cfg.index_samples)
        iv = index_mod.empirical_index(samples, cfg.estimator)
        print("analytic algebra undetermined; empirical estimate used")
    _write_json(cfg, {"index": iv.to_json_obj()})
    print(_table(["method", "value", "band"],
                 [[iv.method, iv.value,
                   "-" if iv.band is None else f"[{_fmt(iv.band[0])}, {_fmt(iv.band[1])}]"]]))
    return 0


def _cmd_lundberg(cfg: ExperimentConfig) -> int:
    iv = index_mod.lundberg_index(_need_dist(cfg))
    _write_json(cfg, {"lundberg_index": iv.to_json_obj()})
    print(_table(["value", "flags"], [[iv.value, ",".join(iv.flags) or "-"]]))
    return 0


def _cmd_h(cfg: ExperimentConfig) -> int:
    spec = _need_joint(cfg)
    rows = []
    payload = []
    for c in cfg.h_values:
        iv = index_mod.h_function(spec, c, stream=SeedStream(cfg.seed, 2),
                                  n_samples=cfg.index_samples, cfg=cfg.estimator)
        rows.append([c, iv.value, iv.method])
        payload.append({"c": c, **iv.to_json_obj()})
    _write_json(cfg, {"h": payload})
    print(_table(["c", "h(c)", "method"], rows))
    return 0


def _cmd_esssup(cfg: ExperimentConfig) -> int:
    spec = _need_joint(cfg)
    if not isinstance(spec, dists.BranchMixture):
        raise ConfigError("the esssup recursion is exact only for branch mixtures")
    report = esssup_mod.esssup_sequence(spec, cfg.esssup_steps)
    _write_json(cfg, {"esssup": report.to_json_obj()})
    rows = [[k, v] for k, v in enumerate(report.values)]
    print(_table(["step", "sup"], rows))
    print(f"verdict: {report.verdict}"
          + (f" (witness c = {_fmt(report.witness)})" if report.witness is not None else "")
          + (f" [{report.unbounded_reason}]" if report.unbounded_reason else ""))
    return 0


def _cmd_simulate(cfg: ExperimentConfig) -> int:
    spec = _need_joint(cfg)
    est = process.estimate_ruin(spec, cfg.path_config())
    _write_json(cfg, {"estimate": est.to_json_obj()})
    if cfg.out_csv:
        emit_plot_data(est, None, cfg.out_csv)
    print(_table(["u0", "ruins", "censored", "p_hat", "ci_lo", "ci_hi"],
                 [[u, r, c, p, lo, hi] for u, r, c, p, lo, hi in
                  zip(est.u0_grid, est.ruins, est.censored, est.p_hat, est.ci_lo, est.ci_hi)]))
    return 0


def _cmd_ruin_slope(cfg: ExperimentConfig) -> int:
    spec = _need_joint(cfg)
    result = asymptotics.verify_ultimate(spec, cfg.path_config(), cfg.tolerance)
    _write_json(cfg, {"experiment": result.to_json_obj()})
    if cfg.out_csv:
        emit_plot_data(result.estimate, result.fit, cfg.out_csv)
    print(_table(["predicted", "attained_by", "slope", "stderr", "verdict"],
                 [[result.predicted.value, result.predicted.attained_by,
                   result.fit.slope, result.fit.stderr, result.verdict]]))
    return 0 if result.verdict == "consistent" else 1


def _cmd_finite_band(cfg: ExperimentConfig) -> int:
    spec = _need_joint(cfg)
    report = asymptotics.finite_horizon_check(
        spec, cfg.band_horizon, cfg.band_samples, SeedStream(cfg.seed, 3), cfg.estimator)
    _write_json(cfg, {"finite_horizon": report.to_json_obj()})
    print(_table(["horizon", "band_lo", "band_hi", "empirical", "passed"],
                 [[report.horizon, report.band[0], report.band[1],
                   report.empirical.value, report.passed]]))
    return 0 if report.passed else 1


def _cmd_laws(cfg: ExperimentConfig) -> int:
    checks = list(cfg.laws_checks)
    operand_corpus = []
    if cfg.laws_corpus_size > 0:
        operand_corpus = index_mod.default_law_corpus(cfg.seed, cfg.laws_corpus_size)
    if not checks and not operand_corpus:
        raise ConfigError("laws: empty check list; give laws.checks or laws.corpus_size > 0")
    reports = []
    analytic_failures = 0
    empirical_failures = 0
    check_no = 0  # every check draws from its own substream
    for law, operands, param, modes in operand_corpus:
        for mode in modes:
            check_no += 1
            rep = index_mod.check_law(law, operands, mode,
                                      stream=SeedStream(cfg.seed, 4000 + check_no),
                                      n_samples=cfg.laws_samples, cfg=cfg.estimator,
                                      param=param)
            reports.append(rep)
    for chk in checks:
        law = chk.get("law")
        mode = chk.get("mode", "analytic")
        operands = _operands_from_config(chk)
        check_no += 1
        rep = index_mod.check_law(law, operands, mode,
                                  stream=SeedStream(cfg.seed, 4000 + check_no),
                                  n_samples=cfg.laws_samples, cfg=cfg.estimator,
                                  param=float(chk.get("param", 1.0)))
        reports.append(rep)
    for rep in reports:
        if not rep.passed:
            if rep.mode == "analytic":
                analytic_failures += 1
            else:
                empirical_failures += 1
    _write_json(cfg, {"laws": [r.to_json_obj() for r in reports]})
    rows = [[r.law, r.mode, r.lhs.value, r.relation, r.rhs.value,
             "pass" if r.passed else "FAIL"] for r in reports]
    print(_table(["law", "mode", "lhs", "rel", "rhs", "result"], rows))
    n_analytic = sum(1 for r in reports if r.mode == "analytic")
    n_emp = len(reports) - n_analytic
    print(f"analytic: {n_analytic - analytic_failures}/{n_analytic} pass; "
          f"empirical: {n_emp - empirical_failures}/{n_emp} pass")
    return 1 if analytic_failures else 0


def _operands_from_config(chk: dict):
    if "joint" in chk:
        return dists.joint_from_obj(chk["joint"])
    if "dists" in chk:
        return tuple(dists.dist_from_obj(o) for o in chk["dists"])
    if "dist" in chk:
        return dists.dist_from_obj(chk["dist"])
    raise ConfigError(f"law check needs 'dist', 'dists' or 'joint': {chk!r}")


def _cmd_rw_borovkov(cfg: ExperimentConfig) -> int:
    b = _need_dist(cfg)
    iv = index_mod.analytic_index(b)
    if iv is None or iv.value.is_inf:
        raise Refusal("the increment law needs a finite analytic index for the contrast")
    predicted = iv.value.finite - 1.0
    est = process.random_walk_sup(
        b, SeedStream(cfg.seed, 5), cfg.rw_horizon, cfg.u0_grid, cfg.rw_paths,
    )
    fit = asymptotics.slope_fit(est)
    ok = abs(fit.slope + predicted) <= cfg.tolerance
    _write_json(cfg, {
        "random_walk": {
            "predicted_exponent": predicted,
            "fit": fit.to_json_obj(),
            "estimate": est.to_json_obj(),
            "consistent": ok,
        },
    })
    if cfg.out_csv:
        emit_plot_data(est, fit, cfg.out_csv)
    print(_table(["predicted", "slope", "stderr", "consistent"],
                 [[predicted, fit.slope, fit.stderr, ok]]))
    return 0 if ok else 1


def _cmd_lundberg_equiv(cfg: ExperimentConfig) -> int:
    z = _need_dist(cfg)
    report = asymptotics.lundberg_equivalence_check(
        z, SeedStream(cfg.seed, 6), n_paths=cfg.equiv_paths, cfg=cfg.estimator)
    _write_json(cfg, {"lundberg_equivalence": report.to_json_obj()})
    print(_table(["analytic", "running_sup", "summed", "passed"],
                 [[report.analytic.value, report.running_sup.value,
                   report.summed.value, report.passed]]))
    return 0 if report.passed else 1


def _cmd_construct_minorant(cfg: ExperimentConfig) -> int:
    d = _need_dist(cfg)
    if cfg.minorant_side == "discount":
        spec = constructions.minorant_a(d, cfg.minorant_eps)
    elif cfg.minorant_side == "loss":
        if cfg.minorant_target is None:
            raise ConfigError("loss-side minorant needs minorant.target")
        spec = constructions.minorant_b(d, cfg.minorant_target,
                                        SeedStream(cfg.seed, 7), n_check=100_000)
    else:
        raise ConfigError("minorant.side must be 'discount' or 'loss'")
    _write_json(cfg, {"minorant": spec.to_json_obj()})
    print(_table(["side", "target", "achieved", "residual"],
                 [[spec.side, spec.target, spec.achieved,
                   "-" if spec.moment_residual is None else spec.moment_residual]]))
    return 0


_HANDLERS = {
    "validate": _cmd_validate,
    "index": _cmd_index,
    "lundberg": _cmd_lundberg,
    "h": _cmd_h,
    "esssup": _cmd_esssup,
    "simulate": _cmd_simulate,
    "ruin-slope": _cmd_ruin_slope,
    "finite-band": _cmd_finite_band,
    "laws": _cmd_laws,
    "rw-borovkov": _cmd_rw_borovkov,
    "lundberg-equiv": _cmd_lundberg_equiv,
    "construct-minorant": _cmd_construct_minorant,
}


def run(argv: Optional[list[str]] = None) -> int:
    """Execute one subcommand; returns the process exit code."""
    parser = argparse.ArgumentParser(
        prog="ruintail",
        description="moment-index calculus and ruin-probability experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="YAML experiment configuration")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--json", default=None, help="override the JSON output path")
        p.add_argument("--csv", default=None, help="override the CSV output path")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0,) else 0
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.json is not None:
            cfg = replace(cfg, out_json=args.json)
        if args.csv is not None:
            cfg = replace(cfg, out_csv=args.csv)
        return _HANDLERS[args.command](cfg)
    except (ConfigError, InvalidSpecError, ValueError, FileNotFoundError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (Refusal, InfeasibleConstructionError, MomentUnavailableError,
            InsufficientPointsError) as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except RuinTailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
