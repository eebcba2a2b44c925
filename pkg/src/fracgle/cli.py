"""Command line entry point: ``fracgle <experiment> [--config FILE] [overrides]``.

Exit status is 0 on success, 1 for invalid input (bad parameters, missing
or malformed config) and 2 for numerical failures.  Errors are printed to
stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, NumericalFailure, ValidationError
from .harness import (
    EXPERIMENTS, fast_agreement_sweep, mc_mlmc_compare, strong_order_study,
)
from .mlmc import (
    Payoff, calibrate_constants, mlmc_estimate, plan_levels, write_telemetry_csv,
)
from .model import Drift, Grid, ModelSpec
from .noise import NoiseSeed, build_g_sampler, sample_g
from .soe import build_soe, certify_soe
from .solver import solve

OUT_DIR_ENV = "FRACGLE_OUT_DIR"
DEFAULT_OUT_DIR = "fracgle-out"


@dataclass
class RunConfig:
    """Everything an experiment needs; JSON keys match the field names.

    ``refinement`` is the MLMC level ratio M; ``reference_refinement`` is the
    number of extra dyadic levels of the strong-order reference grid.
    """

    experiment: str = "strong-order"
    hurst: float = 0.6
    alpha: float = 0.8
    sigma: float = 1.0
    horizon: float = 1.0
    x0: float = 0.0
    drift: str = "cosine"
    payoff: str = "identity"
    k_min: int = 4
    k_max: int = 9
    samples: int = 1000
    refinement: int = 2
    reference_refinement: int = 3
    rho: float | None = None
    accuracies: list = field(default_factory=lambda: [0.1])
    master_seed: int = 0
    out_dir: str | None = None
    # soe
    eps: float = 1e-6
    kappa: float = 1e-3
    # simulate / fast-agreement
    n_steps: int = 1024
    method: str = "euler"
    dump_paths: int = 1
    tolerances: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    # mlmc / mc-compare
    constants: list | None = None
    reference_samples: int = 100_000
    reference_stepsize: float = 2.0**-11

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise DomainError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def model(self) -> ModelSpec:
        return ModelSpec(float(self.hurst), float(self.alpha), float(self.sigma), float(self.horizon),
                         float(self.x0), Drift.parse(self.drift)).require_valid()

    def validate(self) -> RunConfig:
        if self.experiment not in EXPERIMENTS:
            raise DomainError(f"unknown experiment {self.experiment!r}")
        if self.experiment != "soe":
            self.model()
        Payoff.parse(self.payoff)
        if self.experiment in ("mlmc", "mc-compare"):
            if not self.accuracies or any(not 0 < float(a) < 1 for a in self.accuracies):
                raise DomainError("accuracies must be a non-empty list of values in (0, 1)")
        if self.experiment == "simulate" and self.method not in ("euler", "fast_euler"):
            raise DomainError("method must be 'euler' or 'fast_euler'")
        if self.samples < 1 or self.n_steps < 1:
            raise DomainError("samples and n_steps must be positive")
        return self

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _g17(x) -> str:
    return "%.17g" % x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_g17(v) if isinstance(v, float) else v for v in row])


def write_path_csv(path: Path, times, values) -> None:
    write_rows(path, ("n", "t", "x"), ((n, float(t), float(x)) for n, (t, x) in enumerate(zip(times, values))))


def git_blob_sha1(data: bytes) -> str:
    """Content hash computed the way git hashes a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(out: Path, cfg: RunConfig, files) -> None:
    hashes = {name: git_blob_sha1((out / name).read_bytes()) for name in sorted(files)}
    write_json(out / "manifest.json", {
        "config": cfg.as_dict(),
        "master_seed": cfg.master_seed,
        "version": __version__,
        "files": hashes,
        "content_hash": git_blob_sha1(json.dumps(hashes, sort_keys=True).encode()),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    })


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def run_soe(cfg: RunConfig, out: Path) -> list[str]:
    soe = build_soe(float(cfg.alpha), float(cfg.eps), float(cfg.kappa), float(cfg.horizon))
    cert = certify_soe(soe)
    (out / "soe.json").write_text(soe.to_json() + "\n")
    write_json(out / "report.json", {
        "experiment": "soe", "alpha": soe.alpha, "tolerance": soe.tolerance, "truncation": soe.truncation,
        "horizon": soe.horizon, "m_exp": soe.m_exp, "certified_max_error": cert.max_error,
        "argmax": cert.argmax,
    })
    return ["soe.json", "report.json"]


def run_simulate(cfg: RunConfig, out: Path) -> list[str]:
    model = cfg.model()
    grid = Grid(int(cfg.n_steps), model.horizon)
    g = sample_g(build_g_sampler(grid, model), NoiseSeed(cfg.master_seed), n_samples=int(cfg.samples))
    sol = solve(model, grid, g, cfg.method)
    files = ["report.json"]
    for i in range(min(int(cfg.dump_paths), int(cfg.samples))):
        name = f"path_{i:05d}.csv"
        write_path_csv(out / name, grid.times, sol.values[i])
        files.append(name)
    end = sol.values[:, -1]
    write_json(out / "report.json", {
        "experiment": "simulate", "model": model.as_dict(), "n_steps": grid.n_steps, "method": cfg.method,
        "samples": int(cfg.samples), "endpoint_mean": float(np.mean(end)),
        "endpoint_std": float(np.std(end, ddof=1)) if cfg.samples > 1 else None,
    })
    return files


def run_strong_order(cfg: RunConfig, out: Path) -> list[str]:
    rep = strong_order_study(cfg.model(), (int(cfg.k_min), int(cfg.k_max)), int(cfg.samples),
                             int(cfg.reference_refinement), NoiseSeed(cfg.master_seed))
    write_rows(out / "errors.csv", ("h", "error", "stderr"), zip(rep.stepsizes, rep.errors, rep.stderrs))
    report = rep.as_dict()
    report["experiment"] = "strong-order"
    write_json(out / "report.json", report)
    return ["errors.csv", "report.json"]


def run_fast_agreement(cfg: RunConfig, out: Path) -> list[str]:
    model = cfg.model()
    rep = fast_agreement_sweep(model, Grid(int(cfg.n_steps), model.horizon), cfg.tolerances,
                               NoiseSeed(cfg.master_seed))
    write_rows(out / "agreement.csv", ("tolerance", "m_exp", "max_path_gap", "ratio"),
               ((r.tolerance, r.m_exp, r.max_path_gap, r.ratio) for r in rep.rows))
    report = rep.as_dict()
    report.update(experiment="fast-agreement", model=model.as_dict(), n_steps=int(cfg.n_steps))
    write_json(out / "report.json", report)
    return ["agreement.csv", "report.json"]


def _constants(cfg, model, payoff, seed):
    if cfg.constants is not None:
        return tuple(float(c) for c in cfg.constants)
    return calibrate_constants(model, payoff, int(cfg.refinement), cfg.rho, seed)


def run_mlmc(cfg: RunConfig, out: Path) -> list[str]:
    model, payoff, seed = cfg.model(), Payoff.parse(cfg.payoff), NoiseSeed(cfg.master_seed)
    constants = _constants(cfg, model, payoff, seed)
    plan = plan_levels(model.hurst, float(cfg.accuracies[0]), int(cfg.refinement), cfg.rho, constants)
    res = mlmc_estimate(plan, model, payoff, seed)
    write_telemetry_csv(res, out / "mlmc.csv")
    report = res.summary()
    report.update(experiment="mlmc", model=model.as_dict(), payoff=str(payoff))
    write_json(out / "report.json", report)
    return ["mlmc.csv", "report.json"]


def run_mc_compare(cfg: RunConfig, out: Path) -> list[str]:
    model, payoff, seed = cfg.model(), Payoff.parse(cfg.payoff), NoiseSeed(cfg.master_seed)
    constants = _constants(cfg, model, payoff, seed)
    rep = mc_mlmc_compare(model, payoff, [float(a) for a in cfg.accuracies], seed, int(cfg.refinement), cfg.rho,
                          constants, reference_stepsize=float(cfg.reference_stepsize),
                          reference_samples=int(cfg.reference_samples))
    write_rows(out / "compare.csv", ("accuracy", "levels", "mlmc_cost", "mc_cost", "mlmc_error", "mc_error"),
               ((r.accuracy, r.levels, r.mlmc_cost, r.mc_cost, r.mlmc_error, r.mc_error) for r in rep.rows))
    report = rep.as_dict()
    report.update(experiment="mc-compare", model=model.as_dict(), payoff=str(payoff))
    write_json(out / "report.json", report)
    return ["compare.csv", "report.json"]


RUNNERS = {
    "soe": run_soe,
    "simulate": run_simulate,
    "strong-order": run_strong_order,
    "fast-agreement": run_fast_agreement,
    "mlmc": run_mlmc,
    "mc-compare": run_mc_compare,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


# (flag, config key, type)
OVERRIDES = [
    ("--hurst", "hurst", float), ("--alpha", "alpha", float), ("--sigma", "sigma", float),
    ("--horizon", "horizon", float), ("--x0", "x0", float), ("--drift", "drift", str),
    ("--payoff", "payoff", str), ("--k-min", "k_min", int), ("--k-max", "k_max", int),
    ("--samples", "samples", int), ("--refinement", "refinement", int),
    ("--reference-refinement", "reference_refinement", int), ("--rho", "rho", float),
    ("--accuracies", "accuracies", _floats), ("--master-seed", "master_seed", int),
    ("--out-dir", "out_dir", str), ("--eps", "eps", float), ("--kappa", "kappa", float),
    ("--n-steps", "n_steps", int), ("--method", "method", str), ("--dump-paths", "dump_paths", int),
    ("--tolerances", "tolerances", _floats), ("--constants", "constants", _floats),
    ("--reference-samples", "reference_samples", int), ("--reference-stepsize", "reference_stepsize", float),
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fracgle", description="Fractional GLE solvers and experiments.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags override its values")
        for flag, key, typ in OVERRIDES:
            p.add_argument(flag, dest=key, type=typ, default=None)
    return parser


def load_config(args) -> RunConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ValidationError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ValidationError(f"config file {path} must hold a JSON object")
        if data.get("experiment", args.experiment) != args.experiment:
            raise ValidationError(f"config is for {data['experiment']!r}, not {args.experiment!r}")
    data["experiment"] = args.experiment
    for _, key, _ in OVERRIDES:
        value = getattr(args, key)
        if value is not None:
            data[key] = value
    try:
        cfg = RunConfig.from_dict(data)
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    return cfg.validate()


def output_dir(cfg: RunConfig, flag_given: bool) -> Path:
    """--out-dir flag, then $FRACGLE_OUT_DIR, then the config value, then the default."""
    if flag_given:
        return Path(cfg.out_dir)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env)
    return Path(cfg.out_dir or DEFAULT_OUT_DIR)


def _fail(kind: str, exc: Exception, code: int) -> int:
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def run_cli(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args)
        out = output_dir(cfg, args.out_dir is not None)
        out.mkdir(parents=True, exist_ok=True)
        files = RUNNERS[cfg.experiment](cfg, out)
        write_manifest(out, cfg, files)
    except ValidationError as exc:
        return _fail("validation", exc, 1)
    except (ValueError, TypeError) as exc:
        return _fail("validation", exc, 1)
    except NumericalFailure as exc:
        return _fail("numerical", exc, 2)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail("numerical", exc, 2)
    print(str(out))
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
