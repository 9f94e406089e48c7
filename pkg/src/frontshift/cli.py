"""Command-line interface: config-driven runs writing CSV and JSON.

Exit codes: 0 success or definite verdict, 1 configuration error,
2 inconclusive result, 3 runtime abort or failed selftest.  The run
report goes to stdout (it carries the wall-clock duration); the files
written to --out-dir are byte-deterministic for a fixed config and seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import normality, report, selfcheck
from .blowup import (BlowupConfig, BlowupError, HypersurfaceSpec,
                     export_front, initial_slopes, orthogonality_report,
                     simulate_blowup, simulate_shift)
from .config import ConfigError, ScenarioConfig, load_config
from .deviation import DeviationError, deviation_rank
from .dynamics import (DynamicsError, IntegrationAbort, integrate_batch,
                       single_record)
from .geometry import GeometryError
from .normality import NormalityError, classify, sample_tangent_points

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INCONCLUSIVE = 2
EXIT_ABORT = 3


def _emit_run_report(command: str, config_echo: dict, stats: dict,
                     outputs: list, started: float,
                     verdict: str | None = None) -> None:
    run = {"command": command, "config": config_echo}
    if verdict is not None:
        run["verdict"] = verdict
    run["stats"] = stats
    run["outputs"] = outputs
    run["duration_ms"] = int(round((time.perf_counter() - started) * 1000.0))
    print(report.dump_json(run))


def cmd_check(cfg: ScenarioConfig, out_dir: Path, started: float) -> int:
    man, force = cfg.build()
    s = cfg.sampler
    rep = classify(man, force, s.x_box, s.v_min, s.v_max, s.count,
                   seed=s.seed, tol=cfg.tolerance)
    residual_doc = {
        "verdict": rep.verdict,
        "tolerance": rep.tolerance,
        "sample_count": len(rep.samples),
        "max_weak_residual": rep.max_weak,
        "mean_weak_residual": rep.mean_weak,
        "max_additional_residual": rep.max_additional,
        "mean_additional_residual": rep.mean_additional,
        "additional_trivial": rep.additional_trivial,
        "max_strong_additional": rep.max_strong_additional,
        "worst_sample": {
            "x": [float(c) for c in rep.samples[rep.worst_index].q.x],
            "v": [float(c) for c in rep.samples[rep.worst_index].q.v],
        },
    }
    out = report.write_json(out_dir / "residual_report.json", residual_doc)
    stats = dict(residual_doc)
    _emit_run_report("check", cfg.echo(), stats, [out], started,
                     verdict=rep.verdict)
    return EXIT_INCONCLUSIVE if rep.verdict == normality.INCONCLUSIVE \
        else EXIT_OK


def _front_outputs(kind: str, cfg: ScenarioConfig, record, out_dir: Path,
                   aborted_at: int | None, abort_rows: list) -> tuple:
    every = cfg.integrator.output_every
    header, rows = export_front(record, output_every=every)
    csv_path = report.write_csv(out_dir / f"{kind}_front.csv", header, rows)
    orth = orthogonality_report(record)
    per_time = [{"t": float(orth.times[i]),
                 "max_psi": float(orth.max_psi_per_time[i]),
                 "mean_psi": float(orth.mean_psi_per_time[i])}
                for i in range(0, orth.times.shape[0], every)]
    slopes = initial_slopes(record) if record.batch.node_count >= 3 else None
    doc = {
        "kind": kind,
        "max_psi": orth.max_psi,
        "mean_psi": orth.mean_psi,
        "undefined_count": orth.undefined_count,
        "inconclusive": orth.inconclusive,
        "aborted": aborted_at is not None,
        "per_time": per_time,
        "initial_slopes": {
            "u": [[float(c) for c in row] for row in record.u],
            "values": ([[float(c) for c in row] for row in slopes]
                       if slopes is not None else None),
        },
    }
    if aborted_at is not None:
        doc["abort_node"] = aborted_at
        doc["abort_directions"] = abort_rows
    json_path = report.write_json(out_dir / f"{kind}_orthogonality.json", doc)
    stats = {"max_psi": orth.max_psi, "mean_psi": orth.mean_psi,
             "undefined_count": orth.undefined_count,
             "directions": int(record.u.shape[0]),
             "nodes": int(record.batch.node_count),
             "aborted": aborted_at is not None}
    return [csv_path, json_path], stats


def cmd_blowup(cfg: ScenarioConfig, out_dir: Path, started: float) -> int:
    if cfg.blowup is None:
        raise ConfigError("blowup", "section required for this command")
    man, force = cfg.build()
    bcfg = BlowupConfig(cfg.blowup.p0, cfg.blowup.nu, cfg.blowup.resolution,
                        cfg.integrator.t_end, cfg.integrator.step)
    aborted_at = None
    abort_rows: list = []
    try:
        record = simulate_blowup(man, force, bcfg)
    except IntegrationAbort as abort:
        record, aborted_at, abort_rows = (abort.record, abort.node_index,
                                          abort.batch_indices)
    outputs, stats = _front_outputs("blowup", cfg, record, out_dir,
                                    aborted_at, abort_rows)
    _emit_run_report("blowup", cfg.echo(), stats, outputs, started)
    return EXIT_ABORT if aborted_at is not None else EXIT_OK


def cmd_shift(cfg: ScenarioConfig, out_dir: Path, started: float) -> int:
    if cfg.shift is None:
        raise ConfigError("shift", "section required for this command")
    man, force = cfg.build()
    spec = HypersurfaceSpec(cfg.shift.surface, cfg.shift.box, cfg.shift.nu,
                            cfg.shift.resolution, cfg.shift.orient_flip)
    aborted_at = None
    abort_rows: list = []
    try:
        record = simulate_shift(man, force, spec, cfg.integrator.t_end,
                                cfg.integrator.step)
    except IntegrationAbort as abort:
        record, aborted_at, abort_rows = (abort.record, abort.node_index,
                                          abort.batch_indices)
    outputs, stats = _front_outputs("shift", cfg, record, out_dir,
                                    aborted_at, abort_rows)
    _emit_run_report("shift", cfg.echo(), stats, outputs, started)
    return EXIT_ABORT if aborted_at is not None else EXIT_OK


def cmd_rank(cfg: ScenarioConfig, out_dir: Path, started: float) -> int:
    man, force = cfg.build()
    s = cfg.sampler
    r = cfg.rank
    n = cfg.dimension
    xs, vs = sample_tangent_points(man, s.x_box, s.v_min, s.v_max,
                                   r.trajectories, seed=s.seed)
    rng = np.random.default_rng(s.seed)
    tau0 = rng.normal(size=(r.trajectories, r.variations, n))
    rho0 = rng.normal(size=(r.trajectories, r.variations, n))
    batch = integrate_batch(man, force, xs, vs, tau0, rho0,
                            cfg.integrator.t_end, cfg.integrator.step)
    rows = []
    any_inconclusive = False
    max_ratio = None
    for i in range(r.trajectories):
        result = deviation_rank(man, single_record(batch, i), r.window)
        any_inconclusive = any_inconclusive or result.inconclusive
        if result.ratio is not None:
            max_ratio = result.ratio if max_ratio is None \
                else max(max_ratio, result.ratio)
        rows.append({
            "index": i,
            "x": [float(c) for c in xs[i]],
            "v": [float(c) for c in vs[i]],
            "singular_values": [float(c) for c in result.singular_values],
            "sigma3_over_sigma1": result.ratio,
            "inconclusive": result.inconclusive,
        })
    doc = {
        "window": [r.window[0], r.window[1]],
        "variations": r.variations,
        "max_sigma3_over_sigma1": max_ratio,
        "any_inconclusive": any_inconclusive,
        "trajectories": rows,
    }
    out = report.write_json(out_dir / "rank_report.json", doc)
    stats = {"max_sigma3_over_sigma1": max_ratio,
             "any_inconclusive": any_inconclusive,
             "trajectories": r.trajectories,
             "variations": r.variations}
    _emit_run_report("rank", cfg.echo(), stats, [out], started)
    return EXIT_INCONCLUSIVE if any_inconclusive else EXIT_OK


def cmd_selftest(out_dir: Path, flip_riemann_sign: bool,
                 started: float) -> int:
    sign = -1.0 if flip_riemann_sign else 1.0
    suites = selfcheck.run_all(riemann_sign=sign)
    doc = {
        "all_passed": all(s.passed for s in suites),
        "suites": [{
            "name": s.name,
            "module": s.module,
            "passed": s.passed,
            "cases": [{"system": c.system, "observed": c.observed,
                       "tolerance": c.tolerance, "passed": c.passed}
                      for c in s.cases],
        } for s in suites],
    }
    out = report.write_json(out_dir / "selftest_report.json", doc)
    stats = {"suites": len(suites),
             "failed": sum(0 if s.passed else 1 for s in suites)}
    _emit_run_report("selftest", {"flip_riemann_sign": flip_riemann_sign},
                     stats, [out], started,
                     verdict="pass" if doc["all_passed"] else "fail")
    return EXIT_OK if doc["all_passed"] else EXIT_ABORT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frontshift",
        description="Newtonian flows on Riemannian manifolds: normality "
                    "verdicts, blow-up and shift fronts, deviation rank.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("check", "classify the force field by residual sampling"),
            ("blowup", "blow a point up into fronts and measure tilt"),
            ("shift", "shift a hypersurface and measure tilt"),
            ("rank", "singular values of the deviation sample matrix")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--out-dir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override sampler seed")
    p = sub.add_parser("selftest", help="run the built-in identity suites")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--flip-riemann-sign", action="store_true",
                   help="debug: flip the curvature term to prove the "
                        "variation suite catches it")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        if args.command == "selftest":
            return cmd_selftest(out_dir, args.flip_riemann_sign, started)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, sampler=replace(cfg.sampler, seed=args.seed))
        handler = {"check": cmd_check, "blowup": cmd_blowup,
                   "shift": cmd_shift, "rank": cmd_rank}[args.command]
        return handler(cfg, out_dir, started)
    except (ConfigError, OSError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, BlowupError, NormalityError, DeviationError,
            DynamicsError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationAbort as exc:
        # only check/rank reach here; blowup and shift catch aborts
        # themselves and keep partial outputs
        print(str(exc), file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
