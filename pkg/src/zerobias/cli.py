"""
Command-line front end.

Subcommands write CSV/JSON artifacts into ``--out``:

* ``audit``     stage densities and zero-concentration reports
* ``pdf``       sin/cos Monte Carlo densities against the arcsine law
* ``coverage``  saturation curve of sequential random search
* ``bench``     origin vs shifted optimum experiment and verdict
* ``trace``     per-stage trace of one engine run

Exit codes: 0 success, 2 usage or validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import CoverageModel, ExperimentSpec, coverage_probability, make_problem
from .core import RandomStream
from .engines import EngineConfig, Stage, make_taps, run, write_trace_csv
from .lab import (
    AuditProtocol,
    arcsine_density,
    estimate_density,
    stage_audit,
    write_density_csv,
)

DEFAULT_SEED = 20250101

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


class UsageError(Exception):
    pass


def _resolve_seed(seed: int) -> int:
    # --seed 0 asks for fresh entropy; the drawn seed is echoed in the outputs
    return RandomStream(None).seed if seed == 0 else seed


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_audit(args) -> int:
    try:
        stages = tuple(Stage.parse(s).value for s in args.stages.split(",") if s.strip())
    except ValueError as exc:
        raise UsageError(str(exc))
    if not stages:
        raise UsageError("no stages requested")
    try:
        protocol = AuditProtocol(
            samples=args.samples,
            span_lo=args.span_lo,
            span_hi=args.span_hi,
            resolution=args.resolution,
            angle_resolution=args.angle_resolution,
            window=args.window,
            seed=_resolve_seed(args.seed),
            stages=stages,
            horizon=args.horizon,
        )
    except ValueError as exc:
        raise UsageError(str(exc))
    out = _outdir(args.out)
    summary = {}
    for stage in protocol.stages:
        density, report = stage_audit(stage, protocol, threads=args.threads)
        write_density_csv(density, out / f"{stage}_density.csv")
        payload = report.to_dict()
        payload.update(
            protocol=protocol.echo(),
            total=density.total,
            overflow_low=density.overflow_low,
            overflow_high=density.overflow_high,
            nonfinite=density.nonfinite,
        )
        io.write_json(out / f"{stage}_bias.json", payload)
        summary[stage] = report.concentration_ratio
    io.write_json(out / "summary.json", {"concentration_ratio": summary, "protocol": protocol.echo()})
    return EXIT_OK


def cmd_pdf(args) -> int:
    if not 0 < args.bin_width < 2:
        raise UsageError("--bin-width must lie in (0, 2)")
    out = _outdir(args.out)
    if args.kind == "arcsine-analytic":
        grid = estimate_density([0.0], -1.0, 1.0, args.bin_width)
        rows = zip(grid.centers, arcsine_density(grid.centers))
        io.write_csv(out / "pdf_arcsine-analytic.csv", ("bin_center", "analytic_density"), rows)
        return EXIT_OK
    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    stream = RandomStream(_resolve_seed(args.seed))
    theta = stream.uniform(0.0, 2.0 * np.pi, args.samples)
    values = np.sin(theta) if args.kind == "sin" else np.cos(theta)
    density = estimate_density(values, -1.0, 1.0, args.bin_width)
    rows = zip(density.centers, density.density, arcsine_density(density.centers))
    io.write_csv(out / f"pdf_{args.kind}.csv", ("bin_center", "mc_density", "analytic_density"), rows)
    return EXIT_OK


def cmd_coverage(args) -> int:
    try:
        model = CoverageModel(args.ratio, args.horizon)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = _outdir(args.out)
    rows = ((t, coverage_probability(model, t)) for t in range(1, model.horizon + 1))
    io.write_csv(out / "coverage.csv", ("t", "probability"), rows)
    return EXIT_OK


def _load_json(path, label):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {label} {path}: {exc}")
    return text


def cmd_bench(args) -> int:
    text = _load_json(args.experiment, "experiment file")
    try:
        spec = ExperimentSpec.from_json(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed experiment JSON: {exc}")
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment definition: {exc}")
    seed = _resolve_seed(args.seed)
    try:
        origin, shifted, verdict = spec.run(seed)
    except ValueError as exc:
        raise UsageError(str(exc))
    out = _outdir(args.out)
    for label, result in (("origin", origin), ("shifted", shifted)):
        io.write_json(out / f"{spec.engine}_{label}.json", result.to_dict())
        io.write_csv(out / f"{spec.engine}_{label}_runs.csv", ("seed", "final_value", "final_distance"), result.rows())
    payload = verdict.to_dict()
    payload["experiment"] = spec.__dict__ | {"seeds": list(origin.seeds)}
    io.write_json(out / f"{spec.engine}_verdict.json", payload)
    print(f"{spec.engine}: {verdict.verdict} (median {verdict.median_origin:.6g} -> {verdict.median_shifted:.6g}, "
          f"p={verdict.p_value:.3g})")
    return EXIT_OK


def cmd_trace(args) -> int:
    text = _load_json(args.config, "engine config")
    try:
        config = EngineConfig.from_json(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed config JSON: {exc}")
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid engine config: {exc}")
    if args.seed != DEFAULT_SEED:
        config.seed = _resolve_seed(args.seed)
    box = config.box
    if not (np.all(box.lower == box.lower[0]) and np.all(box.upper == box.upper[0])):
        raise UsageError("trace objectives need a cubic box")
    try:
        problem = make_problem(args.problem, config.dimension, args.shift, float(box.lower[0]), float(box.upper[0]))
    except ValueError as exc:
        raise UsageError(str(exc))
    prefix = "tsa_" if args.engine == "tsa" else "stoa_"
    stages = config.taps or [s.value for s in Stage if s.value.startswith(prefix)]
    taps = make_taps(stages)
    state = run(args.engine, config, problem, taps)
    out = _outdir(args.out)
    write_trace_csv(taps, out / f"{args.engine}_trace.csv")
    io.write_json(out / f"{args.engine}_run.json", {
        "config": json.loads(config.to_json()),
        "best_value": state.best_value,
        "best_agent": state.best_agent,
        "evaluations": state.evaluations,
        "overflow": {stage.value: tap.overflow for stage, tap in taps.items()},
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"root seed (default {DEFAULT_SEED}; 0 draws fresh entropy)")
    common.add_argument("--out", default="zerobias-out", help="output directory (default: zerobias-out)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling (default 1)")

    parser = argparse.ArgumentParser(prog="zerobias", description="Zero-bias audit of STOA and TSA update rules.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", parents=[common], help="Monte Carlo stage densities and bias reports")
    p.add_argument("--stages", default=",".join(s.value for s in Stage),
                   help="comma-separated stage names (default: all)")
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--span-lo", type=float, default=-100.0)
    p.add_argument("--span-hi", type=float, default=100.0)
    p.add_argument("--resolution", type=float, default=1.0, help="histogram bin width on the span")
    p.add_argument("--angle-resolution", type=float, default=0.01)
    p.add_argument("--window", type=float, default=1.0, help="near-zero half-width")
    p.add_argument("--horizon", type=int, default=1000, help="T used for the collision factor")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("pdf", parents=[common], help="sin/cos densities against the arcsine law")
    p.add_argument("kind", choices=["sin", "cos", "arcsine-analytic"])
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--bin-width", type=float, default=0.05)
    p.set_defaults(func=cmd_pdf)

    p = sub.add_parser("coverage", parents=[common], help="random-search coverage probability curve")
    p.add_argument("ratio", type=float, help="covered fraction Va/Vs per step, in (0, 1]")
    p.add_argument("horizon", type=int, help="number of steps")
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("bench", parents=[common], help="origin vs shifted optimum experiment")
    p.add_argument("experiment", help="experiment definition JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("trace", parents=[common], help="tap every stage of one engine run")
    p.add_argument("config", help="engine configuration JSON")
    p.add_argument("--engine", choices=["stoa", "tsa"], default="stoa")
    p.add_argument("--problem", default="sphere")
    p.add_argument("--shift", type=float, default=0.0)
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"zerobias {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"zerobias {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
