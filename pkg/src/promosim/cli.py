"""Command-line entry point: ``promosim <command> [options]``.

Every run prints one JSON summary line on stdout. Exit codes: 0 success,
1 a validation check failed, 2 bad configuration, unreadable input or
bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from .config import ConfigError, MarketConfig, load_config

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
log = logging.getLogger("promosim")


def shipped_configs() -> Path:
    return Path(str(resources.files("promosim") / "data" / "configs"))


def resolve_config(path: str) -> Path:
    """A path as given, or else the shipped config of that name."""
    p = Path(path)
    if p.exists():
        return p
    shipped = shipped_configs() / p.name
    if shipped.exists():
        return shipped
    raise ConfigError(f"config file not found: {path}")


def _read_json(path: Path) -> dict:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return raw


def config_kind(raw: dict) -> str:
    if "experiment" in raw:
        return "experiment"
    if "ranges" in raw:
        return "calibration"
    if "max_mape" in raw or "stylised" in raw:
        return "validation"
    return "market"


def out_dir(args) -> Path:
    return Path(args.out or os.environ.get("PROMOSIM_OUT") or "results")


def summary(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), flush=True)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    from .engine.simulation import run, write_metrics_csv

    config = load_config(resolve_config(args.config))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    out = out_dir(args)
    t0 = time.perf_counter()
    result = run(config)
    path = write_metrics_csv(result.frames, out / f"metrics_{config.name}_{config.seed}.csv")
    manifest = {"scenario": config.name, "seeds": [config.seed], "config_sha256": config.digest(),
                "version": __version__, "config": config.to_dict()}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %s", path)
    last = result.frames[-1]
    summary(command="simulate", status="ok", scenario=config.name, seed=config.seed, steps=len(result.frames),
            metrics=str(path), market_share=[round(float(x), 6) for x in last.lender["market_share"]],
            seconds=round(time.perf_counter() - t0, 3))
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .calibration import calibrate, load_spec

    spec = load_spec(resolve_config(args.config))
    if args.seed is not None:
        spec = replace(spec, search_seed=args.seed)
    out = out_dir(args)
    result = calibrate(spec, args.strategy, workers=args.workers, out_dir=out)
    failed = sum(t.failed for t in result.trials)
    summary(command="calibrate", status="ok", trials=len(result.trials), failed=failed,
            best_trial=result.best.trial_id, best_mape=result.best.mape, best_params=result.best_params,
            log=str(out / "trials.csv"))
    return EXIT_OK


def cmd_validate(args) -> int:
    from .experiments import ValidationSpec, validate_calibration

    path = resolve_config(args.config)
    spec = ValidationSpec.from_dict(_read_json(path), path.parent)
    if args.seed is not None:
        spec = replace(spec, seeds=(args.seed,))
    out = out_dir(args)
    report = validate_calibration(spec, out, args.workers)
    failed = [k for k, c in report["checks"].items() if not c["passed"]]
    summary(command="validate", status="ok" if report["passed"] else "failed", mape=report["checks"]["mape"]["value"],
            failed_checks=failed, report=str(out / "report.json"))
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_experiment(args) -> int:
    from .experiments import load_experiment, run_experiment

    path = resolve_config(args.config)
    spec = load_experiment(path)
    if args.seed is not None:
        spec = replace(spec, seeds=(args.seed,))
    out = out_dir(args)
    t0 = time.perf_counter()
    report = run_experiment(spec, out, args.workers, name=path.stem)
    summary(command="experiment", status="ok", experiment=spec.kind, scenarios=len(report["scenarios"]),
            checks={k: c["passed"] for k, c in report["checks"].items()}, report=str(out / "report.json"),
            seconds=round(time.perf_counter() - t0, 3))
    return EXIT_OK


def cmd_check_config(args) -> int:
    if args.config is None:
        print(MarketConfig().to_json())
        summary(command="check-config", status="ok", kind="market", source="defaults")
        return EXIT_OK
    from .calibration import CalibrationSpec
    from .experiments import ExperimentSpec, ValidationSpec

    path = resolve_config(args.config)
    raw = _read_json(path)
    kind = config_kind(raw)
    if kind == "experiment":
        ExperimentSpec.from_dict(raw, path.parent).build()
    elif kind == "calibration":
        CalibrationSpec.from_dict(raw, path.parent)
    elif kind == "validation":
        ValidationSpec.from_dict(raw, path.parent)
    else:
        load_config(path)
    summary(command="check-config", status="ok", kind=kind, config=str(path))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "calibrate": cmd_calibrate, "validate": cmd_validate,
            "experiment": cmd_experiment, "check-config": cmd_check_config}


def _workers(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: $PROMOSIM_OUT or ./results)")
    common.add_argument("--seed", type=int, help="override the seed (simulate/validate/experiment) or search seed")
    common.add_argument("--workers", type=_workers, default=1, help="worker processes (default 1)")
    common.add_argument("--quiet", action="store_true", help="only print the summary line")

    parser = argparse.ArgumentParser(prog="promosim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "run one simulation and write its metrics CSV"),
        ("calibrate", "search behavioural parameters against the target moments"),
        ("validate", "check moments and stylised facts of the calibration run"),
        ("experiment", "run a promotion experiment over several seeds"),
    ]:
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--config", required=True, help="JSON config (path or shipped config name)")
        if name == "calibrate":
            p.add_argument("--strategy", choices=["random", "adaptive"], default="random")
    p = sub.add_parser("check-config", parents=[common], help="validate a config, or print the defaults")
    p.add_argument("--config", help="JSON config; omit to print the default market config")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        summary(command=args.command, status="error", error=str(exc))
        print(f"promosim: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        summary(command=args.command, status="error", error=str(exc))
        print(f"promosim: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
