"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 model error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional

from .calibration import CalibrationError
from .config import ConfigError, calibrate, load_config
from .engine import run_experiment
from .model import ConfigurationError, ModelError
from .population import build_initial_cohort
from .report import emit_reports, write_params_csv

EXIT_OK, EXIT_CONFIG, EXIT_MODEL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("bcsim")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bcsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run paired lockdown / no-lockdown replications")
    sim.add_argument("--config", type=Path, default=None, help="TOML config (default: shipped configuration)")
    sim.add_argument("--scenario", choices=("covid", "nocovid", "both"), default="both")
    sim.add_argument("--replications", type=int, default=None)
    sim.add_argument("--seed", type=int, default=None, help="base seed; replication i uses seed+i")
    sim.add_argument("--out", type=Path, default=None, help="output directory for reports")
    sim.add_argument("--no-crn", action="store_true", help="use disjoint seeds for the two scenarios")
    sim.add_argument("--fraction", type=float, default=None, help="population sample fraction (scale factor = 1/F)")
    sim.add_argument("--workers", type=int, default=None, help="parallel worker processes")
    sim.add_argument(
        "--dump-params",
        nargs="?",
        const="-",
        default=None,
        metavar="FILE",
        help="write calibrated parameters as CSV (stdout when FILE is omitted) and exit",
    )
    return parser


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _simulate(args) -> int:
    inputs = load_config(args.config)
    overrides = {}
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.no_crn:
        overrides["common_random_numbers"] = False
    if args.fraction is not None:
        overrides["population_fraction"] = args.fraction
        overrides["scale_factor"] = 1.0 / args.fraction if args.fraction > 0 else 0.0
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        config = dataclasses.replace(inputs.simulation, **overrides)
    except ConfigurationError as exc:
        raise ConfigError(str(exc), field="command line") from None

    params, param_rows = calibrate(inputs)

    if args.dump_params is not None:
        if args.dump_params == "-":
            write_params_csv(sys.stdout, param_rows)
        else:
            write_params_csv(Path(args.dump_params), param_rows)
        return EXIT_OK
    if args.out is None:
        raise ConfigError("--out is required unless --dump-params is given", field="command line")
    if config.replications < 1:
        raise ConfigError("at least one replication is required", field="simulation.replications")

    scenarios = ("nocovid", "covid") if args.scenario == "both" else (args.scenario,)
    cohort = build_initial_cohort(inputs.ages, inputs.disease, config.population_fraction, [config.base_seed, 1])
    log.info("cohort of %d persons; %d replication(s) x %s", len(cohort), config.replications, "/".join(scenarios))

    started = time.time()
    done = [0]
    total = config.replications * len(scenarios)

    def progress():
        done[0] += 1
        log.info("replication runs finished: %d/%d", done[0], total)

    result = run_experiment(config, cohort, params, inputs.costs, scenarios, progress=progress)
    elapsed = time.time() - started

    extra = {
        "config_source": str(inputs.source),
        "config_sha256": _file_digest(inputs.source),
        "config_raw": inputs.raw,
        "tables": {k: {"path": str(p), "sha256": _file_digest(p)} for k, p in inputs.table_paths.items()},
        "cohort_seed": [config.base_seed, 1],
        "cohort_size": len(cohort),
        "command": sys.argv,
    }
    paths = emit_reports(result, args.out, param_rows, extra)
    log.info("wrote %d files to %s in %.1fs of simulation", len(paths), args.out, elapsed)
    print(f"wrote {len(paths)} files to {args.out}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "simulate":
            return _simulate(args)
    except (ConfigurationError, CalibrationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    parser.error(f"unknown command {args.command!r}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
