"""Command-line entry point: ``deadzone-rcac {run,compare,metrics,spectrum}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import metrics
from .errors import ConfigError, DivergenceError, InvalidParameterError
from .harness import VARIANTS, ScenarioConfig, compare, format_table, run_scenario, write_spectrum_csv
from .metrics import FlightLog

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

log = logging.getLogger("deadzone_rcac")


def _scenario(args) -> ScenarioConfig:
    cfg = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig.default()
    overrides = {}
    if getattr(args, "deadzone", None):
        overrides["variant"] = args.deadzone
    if getattr(args, "seed", None) is not None:
        overrides["noise.seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        overrides["duration"] = args.duration
    return cfg.with_overrides(**overrides) if overrides else cfg


def _out_dir(args, cfg: ScenarioConfig) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get("DEADZONE_RCAC_OUT")
    return Path(root) if root else cfg.output.root


def cmd_run(args) -> int:
    cfg = _scenario(args)
    out = _out_dir(args, cfg)
    _, report = run_scenario(cfg, out)
    print(report.to_json())
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _scenario(args)
    out = _out_dir(args, cfg)
    variants = args.variants.split(",") if args.variants else list(VARIANTS)
    results = compare(cfg, variants, out, workers=args.workers)
    print(format_table(results))
    return EXIT_OK if all(r.report is not None for r in results) else EXIT_DIVERGED


def cmd_metrics(args) -> int:
    flight = FlightLog.read_csv(args.log)
    print(metrics.evaluate(flight).to_json())
    return EXIT_OK


def cmd_spectrum(args) -> int:
    flight = FlightLog.read_csv(args.log)
    out = Path(args.out) if args.out else Path(args.log).with_name("spectrum.csv")
    if out.suffix != ".csv":
        out = out / "spectrum.csv"
    write_spectrum_csv(flight, out)
    print(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deadzone-rcac", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--config", type=Path, help="YAML or JSON scenario file")
        p.add_argument("--seed", type=int)
        p.add_argument("--duration", type=float)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="fly one scenario")
    scenario_flags(p)
    p.add_argument("--deadzone", choices=VARIANTS)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="fly several variants with the same seed")
    scenario_flags(p)
    p.add_argument("--deadzone", choices=VARIANTS, help=argparse.SUPPRESS)
    p.add_argument("--variants", help="comma-separated subset of " + ",".join(VARIANTS))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("metrics", help="re-analyse a saved log")
    p.add_argument("log", type=Path)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("spectrum", help="write the pitch-moment spectrum of a saved log")
    p.add_argument("log", type=Path)
    p.add_argument("--out")
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except DivergenceError as exc:
        log.error("simulation diverged at step %s: %s", exc.step, exc)
        return EXIT_DIVERGED
    except (InvalidParameterError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
