"""Command-line front end: ``isolato {run,chsh,scan,oracle,delayed}``.

Structured reports are JSON, angle scans are CSV.  Every report embeds the
configuration that produced it; passing a report back through ``--config``
reproduces its numeric payload.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import oracle
from .engine import (
    ChshSpec,
    DelayedChoiceSpec,
    NoDataError,
    Normalization,
    correlation,
    isolato_fraction_trace,
    run_chsh,
    run_delayed_choice,
    run_experiment,
    run_scan,
)
from .model import InvalidArgumentError, ModelParams, Settings, Variant
from .oracle import QuadratureError
from .stats import binomial_estimate, correlation_stderr

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
Z_PASS = 4.0
SCAN_COLUMNS = ["delta", "E_coinc", "E_coinc_stderr", "E_all", "pair_fraction", "n"]
TIMESTAMP_KEY = "generated_at"


@dataclass
class RunConfig:
    command: str = "run"
    variant: str = "asym"
    seed: int = 0
    V: float = 1.0
    n: int = 1_000_000
    normalization: str = "coinc"
    workers: int = 1
    theta_a: float = 0.0
    theta_b: float = 0.0
    # chsh
    a: float = 0.0
    a_prime: float = math.pi / 2
    b: float = math.pi / 4
    b_prime: float = 3 * math.pi / 4
    # scan
    points: int = 33
    deltas: list[float] | None = None
    # delayed
    t0: float = 0.0
    t1: float = 1.0
    t2: float = 1.0
    theta_initial: float = 0.0
    theta_final: float = 0.0
    knots: list[list[float]] = field(default_factory=list)

    def params(self) -> ModelParams:
        return ModelParams(V=self.V, variant=Variant.parse(self.variant), seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"config {path} is not valid JSON: {exc}") from exc
    # a previously written report carries its config under "config"
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"config {path} must hold a JSON object")
    return data


def _parse_knot(text: str) -> list[float]:
    try:
        t, phi = text.split(":")
        return [float(t), float(phi)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"knot must look like T:PHI, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isolato", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON RunConfig (or a previous report) to start from")
    common.add_argument("--out", help="write the result here instead of stdout")
    common.add_argument("--V", type=float, dest="V", help="hidden-coordinate half-period")

    runlike = argparse.ArgumentParser(add_help=False)
    runlike.add_argument("--seed", type=int)
    runlike.add_argument("--n", type=int, help="emitted pairs (per setting)")
    runlike.add_argument("--variant", choices=["asym", "sym"])
    runlike.add_argument("--normalization", choices=["coinc", "all"])
    runlike.add_argument("--workers", type=int, help="worker threads (does not change results)")

    p = sub.add_parser("run", parents=[common, runlike], help="single-setting experiment")
    p.add_argument("--theta-a", type=float, dest="theta_a")
    p.add_argument("--theta-b", type=float, dest="theta_b")

    p = sub.add_parser("chsh", parents=[common, runlike], help="four-setting CHSH run")
    for name, dest in (("--a", "a"), ("--a-prime", "a_prime"), ("--b", "b"), ("--b-prime", "b_prime")):
        p.add_argument(name, type=float, dest=dest)

    p = sub.add_parser("scan", parents=[common, runlike], help="correlation versus angle difference (CSV)")
    p.add_argument("--points", type=int, help="evenly spaced grid over [0, 2pi], both ends included")
    p.add_argument("--deltas", type=float, nargs="+", help="explicit angle differences")

    sub.add_parser("oracle", parents=[common], help="closed-form and quadrature reference values")

    p = sub.add_parser("delayed", parents=[common, runlike], help="setting switched in flight vs static run")
    p.add_argument("--theta-initial", type=float, dest="theta_initial")
    p.add_argument("--theta-final", type=float, dest="theta_final")
    p.add_argument("--theta-b", type=float, dest="theta_b")
    p.add_argument("--t0", type=float)
    p.add_argument("--t1", type=float)
    p.add_argument("--t2", type=float)
    p.add_argument("--knot", type=_parse_knot, action="append", dest="knots",
                   help="phi profile knot T:PHI (repeatable)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = _load_config_file(args.config) if args.config else {}
    data = dict(data)
    for key, value in vars(args).items():
        if key in ("config", "out") or value is None:
            continue
        data[key] = value
    data["command"] = args.command
    cfg = RunConfig.from_dict(data)
    if cfg.n < 1:
        raise InvalidArgumentError("--n must be >= 1")
    if cfg.points < 1:
        raise InvalidArgumentError("--points must be >= 1")
    Normalization.parse(cfg.normalization)
    cfg.params()
    return cfg


def _z(p_hat, p_exp, n):
    se = math.sqrt(p_exp * (1.0 - p_exp) / n)
    if se == 0.0:
        return 0.0 if p_hat == p_exp else None
    return (p_hat - p_exp) / se


def _passes(z):
    return z is not None and abs(z) < Z_PASS


def _estimate_dict(est, expected=None):
    out = {"count": est.successes, "trials": est.trials, "fraction": est.p_hat,
           "stderr": est.stderr, "ci_low": est.ci_low, "ci_high": est.ci_high}
    if expected is not None:
        z = _z(est.p_hat, expected, est.trials)
        out.update(expected=expected, z=z, **{"pass": _passes(z)})
    return out


def _correlation_dict(counts):
    out = {}
    for norm in Normalization:
        try:
            out[norm.value] = {"E": correlation(counts, norm), "stderr": correlation_stderr(counts, norm)}
        except NoDataError:
            out[norm.value] = {"E": None, "stderr": None}
    return out


def cmd_run(cfg: RunConfig) -> dict:
    params = cfg.params()
    settings = Settings(cfg.theta_a, cfg.theta_b)
    counts = run_experiment(params, settings, cfg.n, cfg.workers)
    pair_fraction_exp = 2.0 / math.pi
    cells = {}
    if counts.n_coincidences:
        for (s_a, s_b), key in zip(oracle.OUTCOMES, ("pp", "pm", "mp", "mm")):
            est = binomial_estimate(counts.cells()[key], counts.n_coincidences)
            expected = oracle.quantum_probability((s_a, s_b), settings.theta_a, settings.theta_b)
            cells[key] = _estimate_dict(est, expected)
    pair = _estimate_dict(binomial_estimate(counts.n_coincidences, counts.n_emitted), pair_fraction_exp)
    singles_ratio = counts.n_singles / counts.n_coincidences if counts.n_coincidences else None
    checks = [c["pass"] for c in cells.values()] + [pair["pass"]]
    return {
        "counts": counts.as_dict(),
        "cells": cells,
        "pair_fraction": pair,
        "singles_ratio": {"value": singles_ratio, "expected": (math.pi - 2.0) / 2.0},
        "correlation": _correlation_dict(counts),
        "E_expected": oracle.analytic_correlation(settings.theta_a, settings.theta_b),
        "all_pass": bool(checks) and all(checks),
    }


def cmd_chsh(cfg: RunConfig) -> dict:
    spec = ChshSpec(cfg.a, cfg.a_prime, cfg.b, cfg.b_prime, cfg.normalization, cfg.n)
    res = run_chsh(cfg.params(), spec, cfg.workers)
    dilution = 1.0 if spec.normalization is Normalization.COINCIDENCE_ONLY else 2.0 / math.pi
    return {
        "S": res.S,
        "S_stderr": res.S_stderr,
        "abs_S": abs(res.S),
        "S_expected": dilution * oracle.analytic_chsh(cfg.a, cfg.a_prime, cfg.b, cfg.b_prime),
        "violates |S| <= 2": res.violates_bound,
        "normalization": res.normalization.value,
        "correlations": res.correlations,
        "stderrs": res.stderrs,
        "counts": {k: c.as_dict() for k, c in res.counts.items()},
    }


def scan_deltas(cfg: RunConfig) -> list[float]:
    if cfg.deltas:
        return [float(d) for d in cfg.deltas]
    if cfg.points == 1:
        return [0.0]
    return [float(d) for d in np.linspace(0.0, 2 * math.pi, cfg.points)]


def cmd_scan(cfg: RunConfig) -> str:
    rows = run_scan(cfg.params(), scan_deltas(cfg), cfg.n, cfg.workers)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SCAN_COLUMNS)
    for r in rows:
        writer.writerow([repr(r.delta), repr(r.E_coinc), repr(r.E_coinc_stderr),
                         repr(r.E_all), repr(r.pair_fraction), str(r.n)])
    return buf.getvalue()


def cmd_oracle(cfg: RunConfig) -> dict:
    deltas = [0.0, math.pi / 6, math.pi / 4, math.pi / 2, 3 * math.pi / 4, math.pi]
    table = []
    for d in deltas:
        row = {"delta": d, "E": oracle.analytic_correlation(d, 0.0)}
        for outcome, key in zip(oracle.OUTCOMES, ("pp", "pm", "mp", "mm")):
            row[key] = oracle.quantum_probability(outcome, d, 0.0)
            row[key + "_sigma1"] = oracle.quadrature_probability(outcome, d, 0.0, oracle.Sigma.SIGMA1, cfg.V)
            row[key + "_sigma2"] = oracle.quadrature_probability(outcome, d, 0.0, oracle.Sigma.SIGMA2, cfg.V)
        table.append(row)
    deviation = oracle.max_quadrature_deviation(20, cfg.V)
    return {
        "pair_fraction": oracle.pair_fraction_analytic(Variant.ASYMMETRIC_A, cfg.V),
        "pair_fraction_symmetric": oracle.pair_fraction_analytic(Variant.SYMMETRIC, cfg.V),
        "singles_ratio": oracle.singles_ratio_analytic(Variant.ASYMMETRIC_A, cfg.V),
        "chsh_optimal": oracle.analytic_chsh(0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4),
        "chsh_optimal_all_emissions": 2.0 / math.pi * oracle.analytic_chsh(0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4),
        "quadrature_max_abs_deviation": deviation,
        "quadrature_grid": "20x20",
        "quadrature_pass": deviation < 1e-9,
        "probabilities": table,
    }


def _two_sample_z(k1, n1, k2, n2):
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        return 0.0
    return (k1 / n1 - k2 / n2) / se


def cmd_delayed(cfg: RunConfig) -> dict:
    spec = DelayedChoiceSpec(cfg.t0, cfg.t1, cfg.t2, cfg.theta_initial, cfg.theta_final,
                             tuple(tuple(k) for k in cfg.knots))
    params = cfg.params()
    delayed = run_delayed_choice(params, spec, cfg.theta_b, cfg.n, cfg.workers)
    static = run_experiment(params, Settings(cfg.theta_final, cfg.theta_b), cfg.n, cfg.workers)
    # independent replicate so the z-scores test distributions, not shared draws
    replicate_params = ModelParams(V=params.V, variant=params.variant, seed=(params.seed + 1) % 2**64)
    replicate = run_experiment(replicate_params, Settings(cfg.theta_final, cfg.theta_b), cfg.n, cfg.workers)
    keys = ("n_pp", "n_pm", "n_mp", "n_mm", "n_single_A", "n_single_B")
    d, r = delayed.as_dict(), replicate.as_dict()
    z = {k: _two_sample_z(d[k], delayed.n_emitted, r[k], replicate.n_emitted) for k in keys}
    times = [spec.t0, spec.t1, spec.t2]
    trace = isolato_fraction_trace(params, spec, times, min(cfg.n, 100_000))
    return {
        "delayed_counts": d,
        "static_counts": static.as_dict(),
        "replicate_counts": r,
        "replicate_seed": replicate_params.seed,
        "identical": delayed == static,
        "z_vs_replicate": z,
        "max_abs_z": max(abs(v) for v in z.values()),
        "all_abs_z_below_4": all(abs(v) < Z_PASS for v in z.values()),
        "timeline": [{"t": t, "phi": float(spec.phi(t)), "isolato_fraction_A": f}
                     for t, f in zip(times, trace)],
    }


COMMANDS = {"run": cmd_run, "chsh": cmd_chsh, "scan": cmd_scan, "oracle": cmd_oracle, "delayed": cmd_delayed}


def canonical_json(report: dict) -> str:
    """Report serialized without its timestamp, for reproducibility comparisons."""
    return json.dumps({k: v for k, v in report.items() if k != TIMESTAMP_KEY}, sort_keys=True)


def _emit(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        result = COMMANDS[cfg.command](cfg)
    except (InvalidArgumentError, TypeError) as exc:
        print(f"isolato {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NoDataError, QuadratureError, ArithmeticError) as exc:
        print(f"isolato {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    try:
        if isinstance(result, str):
            _emit(result, args.out)
            config_text = json.dumps({"config": cfg.to_dict()}, indent=2) + "\n"
            if args.out:
                _emit(config_text, args.out + ".config.json")
            else:
                print("# config: " + json.dumps(cfg.to_dict()), file=sys.stderr)
        else:
            report = {"command": cfg.command, "config": cfg.to_dict(),
                      TIMESTAMP_KEY: datetime.now(timezone.utc).isoformat(), **result}
            _emit(json.dumps(report, indent=2) + "\n", args.out)
    except OSError as exc:
        print(f"isolato {args.command}: cannot write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
