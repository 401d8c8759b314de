"""Command-line surface: metric validation, curvature scans, geodesic
traces, wavefront propagation, rigidity verdicts, profile classification and
the bundled pond demonstration.

Exit codes: 0 pass, 1 check failure, 2 usage or configuration error.  All
randomness flows from one seed per command (FINSLER_SEED overrides any
configured seed); reports are plain JSON with sorted keys and CSV files use
a fixed 12-significant-digit float format, so identical configurations
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import presets
from .connections import constant_curvature_scan
from .core import FinslerStructure, verify_structure
from .diffcalc import ScalarField
from .errors import ConstructionError, ExpressionParseError, FinslerError, InvalidProfileError
from .expressions import MetricSpec, build_structure, compile_expr, parse
from .geodesics import integrate_geodesic, polyline_hausdorff
from .rigidity import build_sphere_polar, rigidity_report
from .transnormal import (
    TransnormalProfile,
    classify_by_critical_points,
    finsler_gradient,
    integral_curve,
    measure_arrival_lengths,
    sample_level_point,
    transnormality_test,
    wavefront_radius,
)

EXIT_PASS = 0
EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_TOLERANCES = {
    "wavefront": 1e-3,
    "hausdorff": 1e-3,
    "transnormal_spread": 1e-6,
    "scan_mean": 1e-4,
    "scan_dev": 1e-4,
    "obata": 2e-5,
}


@dataclass
class RunConfig:
    metric: Optional[str] = None      # preset name or path to a spec JSON
    n: int = 2
    C: float = 1.0
    seed: int = 42
    tolerances: dict = field(default_factory=dict)
    output: Optional[str] = None

    def tolerance(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))


class UsageError(Exception):
    pass


def _load_config(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} does not exist")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}")
        metric = data.get("metric")
        if isinstance(metric, dict):
            config.metric = json.dumps(metric)  # inline spec, parsed later
        elif metric is not None:
            config.metric = str(metric)
        config.seed = int(data.get("seed", config.seed))
        config.tolerances = dict(data.get("tolerances", {}))
        config.output = data.get("output", config.output)
        config.n = int(data.get("n", config.n))
        config.C = float(data.get("C", config.C))
    for name in ("metric", "n", "C", "seed", "output"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(config, name, value)
    env_seed = os.environ.get("FINSLER_SEED")
    if env_seed is not None:
        try:
            config.seed = int(env_seed)
        except ValueError:
            raise UsageError(f"FINSLER_SEED must be an integer, got {env_seed!r}")
    return config


def _build_metric(config: RunConfig) -> FinslerStructure:
    name = config.metric or "euclidean"
    if name.lstrip().startswith("{"):
        return build_structure(MetricSpec.from_json(name))
    path = Path(name)
    if name.endswith(".json") or path.exists():
        if not path.exists():
            raise UsageError(f"metric spec file {name} does not exist")
        try:
            spec = MetricSpec.from_json(path.read_text())
        except (json.JSONDecodeError, ValueError) as exc:
            raise UsageError(f"invalid metric spec {name}: {exc}")
        return build_structure(spec)
    try:
        return presets.preset_structure(name, n=config.n, C=config.C)
    except ValueError as exc:
        raise UsageError(str(exc))


def _emit(report: dict, output: Optional[str]) -> None:
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if output:
        Path(output).write_text(text + "\n")


def _csv_writer(stream):
    return csv.writer(stream)


def _fmt(v) -> str:
    return f"{float(v):.12g}"


# -- subcommands -----------------------------------------------------------------


def cmd_check(args) -> int:
    config = _load_config(args)
    try:
        S = _build_metric(config)
    except ConstructionError as exc:
        _emit({"command": "check", "passed": False, "seed": config.seed,
               "error": str(exc), "error_code": exc.code}, config.output)
        return EXIT_CHECK_FAILURE
    report = verify_structure(S, count=args.samples, seed=config.seed)
    payload = {"command": "check", "seed": config.seed, **report.to_dict()}
    _emit(payload, config.output)
    return EXIT_PASS if report.passed else EXIT_CHECK_FAILURE


def cmd_curvature(args) -> int:
    config = _load_config(args)
    S = _build_metric(config)
    scan = constant_curvature_scan(S, samples=args.samples, seed=config.seed)
    payload = {"command": "curvature", **scan.to_dict()}
    rc = EXIT_PASS
    if args.expect_K is not None:
        ok = (abs(scan.mean_K - args.expect_K) <= config.tolerance("scan_mean")
              and scan.max_deviation <= config.tolerance("scan_dev"))
        payload["expected_K"] = args.expect_K
        payload["passed"] = ok
        rc = EXIT_PASS if ok else EXIT_CHECK_FAILURE
    _emit(payload, config.output)
    return rc


def _parse_vector(text: str, n: int, what: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated number list, got {text!r}")
    if len(values) != n:
        raise UsageError(f"{what} must have {n} components, got {len(values)}")
    return values


def cmd_geodesic(args) -> int:
    config = _load_config(args)
    S = _build_metric(config)
    x0 = _parse_vector(args.x0, S.n, "--x0")
    y0 = _parse_vector(args.y0, S.n, "--y0")
    path = integrate_geodesic(S, x0, y0, t_max=args.t_max, step=args.step,
                              method=args.method)
    out = config.output or "geodesic.csv"
    with open(out, "w", newline="") as stream:
        path.to_csv(stream)
    meta = {"command": "geodesic", "structure": S.label, "seed": config.seed,
            "x0": x0, "y0": y0, "t_max": args.t_max, "csv": out,
            **path.metadata()}
    print(json.dumps(meta, indent=2, sort_keys=True))
    return EXIT_PASS


def _wavefront_inputs(args, config, S):
    if args.rho is not None:
        rho_expr = parse(args.rho, S.n)
        compiled = compile_expr(rho_expr, S.n)
        rho = ScalarField(S.n, lambda vals: compiled(list(vals) + [0.0] * S.n),
                          label=args.rho)
    elif (config.metric or "euclidean") == "pond":
        rho = presets.pond_rho()
    else:
        raise UsageError("--rho is required for metrics other than the pond preset")
    if args.b is not None:
        if args.range is None:
            raise UsageError("--range a,b is required with --b")
        lo, hi = _parse_vector(args.range, 2, "--range")
        b_expr = parse(args.b, 1)
        b_fn = compile_expr(b_expr, 1)
        profile = TransnormalProfile(
            b=lambda s: float(b_fn([s, 0.0])), value_range=(lo, hi),
            rho=rho, label=args.b,
        )
    elif (config.metric or "euclidean") == "pond":
        profile = presets.pond_profile()
    else:
        raise UsageError("--b (with --range) is required for metrics other "
                         "than the pond preset")
    return rho, profile


def cmd_wavefront(args) -> int:
    config = _load_config(args)
    S = _build_metric(config)
    levels = [float(v) for v in args.levels.split(",")]
    rho, profile = _wavefront_inputs(args, config, S)
    tol = config.tolerance("wavefront")

    stats = transnormality_test(S, rho, levels, samples_per_level=args.samples,
                                seed=config.seed)
    arrivals = measure_arrival_lengths(S, rho, profile, levels,
                                       samples=args.curves, seed=config.seed,
                                       step=args.step)
    a = profile.value_range[0]
    summary = []
    all_ok = True
    for level, stat in zip(levels, stats):
        expected = wavefront_radius(profile, a, level)
        measured = arrivals[level]
        deviation = max(abs(m - expected) for m in measured)
        ok = deviation <= tol
        all_ok = all_ok and ok
        summary.append({
            "level": level,
            "expected_radius": expected,
            "measured_radius": sum(measured) / len(measured),
            "deviation": deviation,
            "b_mean": stat.mean,
            "b_spread": stat.spread,
            "passed": ok,
        })

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed + 1)
    with open(outdir / "wavefront_levels.csv", "w", newline="") as stream:
        writer = _csv_writer(stream)
        writer.writerow(["level", "index"] + [f"x{i+1}" for i in range(S.n)])
        for level in levels:
            points = [sample_level_point(S, rho, level, rng)
                      for _ in range(args.polyline_points)]
            if S.n == 2:
                center = np.mean(points, axis=0)
                points.sort(key=lambda p: math.atan2(p[1] - center[1],
                                                     p[0] - center[0]))
            for idx, p in enumerate(points):
                writer.writerow([_fmt(level), idx] + [_fmt(v) for v in p])

    payload = {"command": "wavefront", "structure": S.label,
               "seed": config.seed, "levels": summary, "passed": all_ok,
               "csv": str(outdir / "wavefront_levels.csv")}
    _emit(payload, config.output or str(outdir / "wavefront_summary.json"))
    return EXIT_PASS if all_ok else EXIT_CHECK_FAILURE


def cmd_rigidity(args) -> int:
    config = _load_config(args)
    name = config.metric or "sphere"
    if name == "sphere":
        target = build_sphere_polar(config.C, config.n)
    else:
        target = _build_metric(config)
    verdict = rigidity_report(target, C=config.C, scan_samples=args.samples,
                              obata_samples=args.obata_samples,
                              seed=config.seed,
                              tolerances=config.tolerances or None)
    payload = {"command": "rigidity", **verdict.to_dict()}
    _emit(payload, config.output)
    return EXIT_PASS if verdict.verdict.startswith("finslerian-sphere") \
        else EXIT_CHECK_FAILURE


def cmd_classify(args) -> int:
    config = _load_config(args)
    lo, hi = _parse_vector(args.range, 2, "--range")
    b_expr = parse(args.b, 1)
    b_fn = compile_expr(b_expr, 1)
    profile = TransnormalProfile(b=lambda s: float(b_fn([s, 0.0])),
                                 value_range=(lo, hi), label=args.b)
    try:
        result = classify_by_critical_points(profile)
    except InvalidProfileError as exc:
        _emit({"command": "classify", "error": str(exc),
               "error_code": exc.code}, config.output)
        return EXIT_CHECK_FAILURE
    _emit({"command": "classify", "b": args.b, "range": [lo, hi],
           **result.to_dict()}, config.output)
    return EXIT_PASS


def cmd_pond_demo(args) -> int:
    config = _load_config(args)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    seed = config.seed
    tol_wave = config.tolerance("wavefront")
    tol_haus = config.tolerance("hausdorff")
    tol_spread = config.tolerance("transnormal_spread")

    S = presets.pond_structure()
    rho = presets.pond_rho()
    profile = presets.pond_profile()

    # 1. structure check (includes the lambda range over the disk)
    report = verify_structure(S, count=400, seed=seed)
    (outdir / "check_report.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")

    # 2. transnormality table: b(level) should be 2 * level
    levels = [1.0, 2.0, 4.0]
    stats = transnormality_test(S, rho, levels, samples_per_level=24, seed=seed)
    b_ok = True
    with open(outdir / "b_table.csv", "w", newline="") as stream:
        writer = _csv_writer(stream)
        writer.writerow(["level", "b_measured", "b_expected", "spread"])
        for stat in stats:
            expected = 2.0 * stat.level
            b_ok = b_ok and (abs(stat.mean - expected) <= tol_spread
                             and stat.spread <= tol_spread)
            writer.writerow([_fmt(stat.level), _fmt(stat.mean),
                             _fmt(expected), _fmt(stat.spread)])

    # 3. wavefront radii vs sqrt(2 level), plus level polylines
    arrivals = measure_arrival_lengths(S, rho, profile, levels, samples=2,
                                       seed=seed, step=5e-3)
    wave_summary = []
    wave_ok = True
    for level in levels:
        expected = wavefront_radius(profile, 0.0, level)
        deviation = max(abs(m - expected) for m in arrivals[level])
        wave_ok = wave_ok and deviation <= tol_wave
        wave_summary.append({"level": level, "expected_radius": expected,
                             "measured_radius": sum(arrivals[level]) / len(arrivals[level]),
                             "deviation": deviation})
    (outdir / "wavefront_summary.json").write_text(
        json.dumps(wave_summary, indent=2, sort_keys=True) + "\n")
    rng = np.random.default_rng(seed + 1)
    with open(outdir / "wavefront_levels.csv", "w", newline="") as stream:
        writer = _csv_writer(stream)
        writer.writerow(["level", "index", "x1", "x2"])
        for level in levels:
            points = [sample_level_point(S, rho, level, rng) for _ in range(48)]
            points.sort(key=lambda p: math.atan2(p[1], p[0]))
            for idx, p in enumerate(points):
                writer.writerow([_fmt(level), idx, _fmt(p[0]), _fmt(p[1])])

    # 4. spiral trace against the closed form (clipped to the admissible disk)
    x0 = presets.pond_gamma(0.1)
    path = integral_curve(S, rho, x0, t_max=3.9, step=1e-3)
    reached = float(path.times[-1])
    gamma = presets.pond_gamma_samples(0.1, 0.1 + reached, 1e-3)
    hausdorff = polyline_hausdorff(path.points, gamma, thin=4)
    spiral_ok = hausdorff <= tol_haus and reached >= 2.8
    with open(outdir / "spiral_trace.csv", "w", newline="") as stream:
        path.to_csv(stream)
    with open(outdir / "gamma_closed_form.csv", "w", newline="") as stream:
        writer = _csv_writer(stream)
        writer.writerow(["t", "x1", "x2"])
        count = max(2, int(round(reached / 1e-3)) + 1)
        for t in np.linspace(0.1, 0.1 + reached, count):
            p = presets.pond_gamma(t)
            writer.writerow([_fmt(t), _fmt(p[0]), _fmt(p[1])])

    passed = report.passed and b_ok and wave_ok and spiral_ok
    summary = {
        "command": "pond-demo",
        "seed": seed,
        "structure_check": report.passed,
        "lambda_range": list(report.lambda_range or ()),
        "b_table": b_ok,
        "wavefront": wave_ok,
        "spiral_hausdorff": hausdorff,
        "spiral_reached_t": 0.1 + reached,
        "spiral": spiral_ok,
        "passed": passed,
        "artifacts": sorted({p.name for p in outdir.iterdir()}
                            | {"demo_summary.json"}),
    }
    (outdir / "demo_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_PASS if passed else EXIT_CHECK_FAILURE


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="finslergeo",
        description=("Numerical Finsler geometry: metric validation, "
                     "curvature scans, geodesics, wavefronts and rigidity "
                     "verdicts."),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--metric", help="preset name (euclidean | pond | "
                       "sphere | cosh-warp | riemannian-sphere-chart), a "
                       "metric-spec JSON file, or an inline JSON spec")
        p.add_argument("--n", type=int, help="dimension for presets")
        p.add_argument("--C", type=float, help="curvature scale for presets")
        p.add_argument("--seed", type=int, help="random seed (default 42; "
                       "FINSLER_SEED overrides)")
        p.add_argument("--config", help="JSON run configuration file")
        p.add_argument("--output", help="also write the JSON report here")

    p = sub.add_parser("check", help="validate structure properties")
    common(p)
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(handler=cmd_check)

    p = sub.add_parser("curvature", help="constant flag curvature scan")
    common(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--expect-K", type=float, default=None,
                   help="assert the scan mean against this value")
    p.set_defaults(handler=cmd_curvature)

    p = sub.add_parser("geodesic", help="integrate a geodesic, write CSV")
    common(p)
    p.add_argument("--x0", required=True, help="comma-separated start point")
    p.add_argument("--y0", required=True, help="comma-separated start velocity")
    p.add_argument("--t-max", type=float, required=True)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--method", choices=("rk4", "rk45"), default="rk4")
    p.set_defaults(handler=cmd_geodesic)

    p = sub.add_parser("wavefront", help="wavefront radii and level polylines")
    common(p)
    p.add_argument("--levels", default="1,2,4")
    p.add_argument("--rho", help="scalar field expression (default: pond rho)")
    p.add_argument("--b", help="profile b(t) expression (default: pond 2t)")
    p.add_argument("--range", help="profile range a,b")
    p.add_argument("--samples", type=int, default=12,
                   help="transnormality samples per level")
    p.add_argument("--curves", type=int, default=2,
                   help="independent measurement curves")
    p.add_argument("--step", type=float, default=5e-3)
    p.add_argument("--polyline-points", type=int, default=48)
    p.add_argument("--output-dir", default="wavefront_out")
    p.set_defaults(handler=cmd_wavefront)

    p = sub.add_parser("rigidity", help="constant-curvature rigidity verdict")
    common(p)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--obata-samples", type=int, default=100)
    p.set_defaults(handler=cmd_rigidity)

    p = sub.add_parser("classify", help="classify a transnormal profile")
    common(p)
    p.add_argument("--b", required=True, help="profile expression in t")
    p.add_argument("--range", required=True, help="value range a,b")
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("pond-demo", help="end-to-end pond reproduction")
    common(p)
    p.add_argument("--output-dir", default="pond_demo")
    p.set_defaults(handler=cmd_pond_demo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExpressionParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FinslerError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILURE


if __name__ == "__main__":
    sys.exit(main())
