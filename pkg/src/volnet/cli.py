"""Command-line front end: run the pipeline, simulate panels, benchmark.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .datagen import DgpSpec, simulate
from .errors import ConfigError, DataError, NumericalError
from .panel import PeriodFilter, load_panel, slice_period
from .pipeline import STAGES, PipelineConfig, run_pipeline, write_bundle
from .sparsevar import PENALTY_METHODS

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volnet",
        description="Factor plus sparse VAR volatility networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the two-step pipeline on a returns panel")
    run.add_argument("--config", type=Path, help="key = value file; flags override it")
    run.add_argument("--input", type=Path, help="prices or returns CSV")
    run.add_argument("--sectors", type=Path, help="label,sector CSV")
    run.add_argument("--returns", action="store_true",
                     help="input already holds returns (skip the log-return step)")
    run.add_argument("--period", help="start:end, inclusive ISO dates")
    run.add_argument("--horizon", type=int, default=20)
    run.add_argument("--penalty", choices=PENALTY_METHODS, default="elastic-net")
    run.add_argument("--alpha", type=float, default=0.5)
    run.add_argument("--p-grid", default="1,2,3,4,5", help="comma list of VAR orders")
    run.add_argument("--lambda-grid", type=int, default=10)
    run.add_argument("--q-max", type=int)
    run.add_argument("--q-level", type=int, help="force the level factor count")
    run.add_argument("--q-vol", type=int, help="force the volatility factor count")
    run.add_argument("--centrality", choices=("unsigned", "signed"), default="unsigned")
    run.add_argument("--threshold-objective", choices=("match-full", "decorrelate"),
                     default="match-full")
    run.add_argument("--jobs", type=int, help="worker threads (default: all cores)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", type=Path, help="output bundle directory")

    sim = sub.add_parser("simulate", help="write a synthetic panel with ground truth")
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--t", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--q", type=int, default=1)
    sim.add_argument("--density", type=float, default=0.05)
    sim.add_argument("--order", type=int, default=1)
    sim.add_argument("--precision-density", type=float, default=0.05)
    sim.add_argument("--ratio", type=float, default=1.0)
    sim.add_argument("--out", type=Path, required=True)

    bench = sub.add_parser("bench", help="time the pipeline stages on a synthetic panel")
    bench.add_argument("--n", type=int, default=90)
    bench.add_argument("--t", type=int, default=3457)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--penalty", choices=PENALTY_METHODS, default="elastic-net")
    bench.add_argument("--stages", help="comma list restricting the report rows")
    bench.add_argument("--jobs", type=int)
    bench.add_argument("--out", type=Path, help="also write the report here")
    return parser


def _read_config_file(path: Path) -> dict[str, str]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _collect_run_settings(args: argparse.Namespace) -> dict:
    settings: dict = {}
    if args.config:
        settings.update(_read_config_file(args.config))
    defaults = _build_parser().parse_args(["run"])
    for key in (
        "input", "sectors", "returns", "period", "horizon", "penalty", "alpha",
        "p_grid", "lambda_grid", "q_max", "q_level", "q_vol", "centrality",
        "threshold_objective", "jobs", "seed", "out",
    ):
        flag_value = getattr(args, key)
        if flag_value != getattr(defaults, key) or key not in settings:
            settings[key] = flag_value
    return settings


def _validate_run(settings: dict) -> tuple[Path, Path | None, PipelineConfig, dict]:
    problems: list[str] = []
    input_path = settings.get("input")
    if input_path is None:
        problems.append("--input is required")
    else:
        input_path = Path(input_path)
        if not input_path.is_file():
            problems.append(f"input file not found: {input_path}")
    sectors_path = settings.get("sectors")
    if sectors_path:
        sectors_path = Path(sectors_path)
        if not sectors_path.is_file():
            problems.append(f"sector file not found: {sectors_path}")
    else:
        sectors_path = None
    out = settings.get("out")
    if out is None:
        problems.append("--out is required")
    period = settings.get("period")
    window = None
    if period:
        try:
            window = PeriodFilter.parse(str(period))
        except (DataError, ValueError) as exc:
            problems.append(f"bad --period: {exc}")
    horizon = int(settings.get("horizon", 20))
    if horizon < 1:
        problems.append("--horizon must be >= 1")
    alpha = float(settings.get("alpha", 0.5))
    if not 0.0 <= alpha <= 1.0:
        problems.append("--alpha must be in [0, 1]")
    try:
        p_grid = tuple(int(x) for x in str(settings.get("p_grid", "1,2,3,4,5")).split(","))
        if not p_grid or min(p_grid) < 1:
            problems.append("--p-grid entries must be >= 1")
    except ValueError:
        problems.append("--p-grid must be a comma list of integers")
        p_grid = (1,)
    lam_size = int(settings.get("lambda_grid", 10))
    if lam_size < 1:
        problems.append("--lambda-grid must be >= 1")
    for key in ("q_max", "q_level", "q_vol"):
        value = settings.get(key)
        if value is not None and int(value) < 1:
            problems.append(f"--{key.replace('_', '-')} must be >= 1")
    if problems:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(problems))

    config = PipelineConfig(
        q_max=int(settings["q_max"]) if settings.get("q_max") else None,
        horizon=horizon,
        penalty=str(settings.get("penalty", "elastic-net")),
        alpha=alpha,
        p_grid=p_grid,
        lambda_grid_size=lam_size,
        centrality_mode=str(settings.get("centrality", "unsigned")),
        threshold_objective=str(settings.get("threshold_objective", "match-full")),
        force_q_level=int(settings["q_level"]) if settings.get("q_level") else None,
        force_q_vol=int(settings["q_vol"]) if settings.get("q_vol") else None,
        jobs=int(settings["jobs"]) if settings.get("jobs") else None,
        seed=int(settings.get("seed", 0)),
    )
    raw_returns = settings.get("returns", False)
    if isinstance(raw_returns, str):
        raw_returns = raw_returns.strip().lower() in ("1", "true", "yes")
    extras = {
        "window": window,
        "is_returns": bool(raw_returns),
        "out": Path(out),
    }
    return input_path, sectors_path, config, extras


def _cmd_run(args: argparse.Namespace) -> int:
    settings = _collect_run_settings(args)
    input_path, sectors_path, config, extras = _validate_run(settings)
    panel = load_panel(input_path, sectors_path)
    if not extras["is_returns"]:
        from .panel import log_returns

        panel = log_returns(panel)
    if extras["window"] is not None:
        panel = slice_period(panel, extras["window"])
    result = run_pipeline(panel, config)
    outdir = write_bundle(result, extras["out"], input_panel=panel)
    print(f"bundle written to {outdir}")
    for flag in result.flags:
        print(f"note: {flag}")
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    spec = DgpSpec(
        n=args.n,
        T=args.t,
        q=args.q,
        idio_order=args.order,
        idio_density=args.density,
        precision_density=args.precision_density,
        variance_ratio=args.ratio,
        seed=args.seed,
    )
    panel, truth = simulate(spec)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    panel.to_frame().to_csv(outdir / "panel.csv", float_format="%.17g", index_label="date")
    np.savez(
        outdir / "truth.npz",
        loadings=truth.loadings,
        factors=truth.factors,
        var_coeffs=truth.var_coeffs,
        precision=truth.precision,
        common=truth.common,
        idiosyncratic=truth.idiosyncratic,
        seed=truth.seed,
    )
    print(f"panel and ground truth written to {outdir}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    wanted = None
    if args.stages:
        wanted = [s.strip() for s in args.stages.split(",")]
        unknown = [s for s in wanted if s not in STAGES]
        if unknown:
            raise ConfigError(f"unknown stage names: {unknown} (choices: {list(STAGES)})")
    spec = DgpSpec(
        n=args.n,
        T=args.t,
        q=1,
        idio_order=2,
        idio_density=0.05,
        precision_density=0.05,
        variance_ratio=1.0,
        seed=args.seed,
    )
    panel, _ = simulate(spec)
    config = PipelineConfig(penalty=args.penalty, jobs=args.jobs, seed=args.seed)
    result = run_pipeline(panel, config)
    lines = ["stage,seconds"]
    for stage in STAGES:
        if wanted is None or stage in wanted:
            lines.append(f"{stage},{result.stage_seconds[stage]:.3f}")
    report = "\n".join(lines)
    print(report)
    if args.out:
        Path(args.out).write_text(report + "\n", encoding="utf-8")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "bench":
            return _cmd_bench(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
