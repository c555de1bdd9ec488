import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from oam_bench.config import get_settings
from oam_bench.exceptions import ConfigError
from oam_bench.services.scenario import (
    EXIT_CONFIG,
    EXIT_RUNTIME,
    apply_overrides,
    parse_config,
    run_scenario,
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="oam-bench",
        description="Simulate the OAM-preserving tunable beam splitter and its benches.",
    )
    parser.add_argument("scenario_file", help="scenario file (key = value lines with [sections])")
    parser.add_argument("--out", default=None, help="output directory (default: OAM_BENCH_OUTPUT_DIR or ./results)")
    parser.add_argument("--seed", type=int, default=None, help="random seed for Monte-Carlo sweeps")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a scenario key; may be repeated",
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(level=settings.log_level, format="%(levelname)s %(name)s: %(message)s")

    try:
        text = Path(args.scenario_file).read_text(encoding="utf-8")
    except OSError as e:
        logger.error(f"Cannot read scenario file {args.scenario_file}: {e}")
        return EXIT_RUNTIME

    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")

    try:
        cfg = parse_config(apply_overrides(text, overrides) if overrides else text)
    except ConfigError as e:
        logger.error(f"{args.scenario_file}: {e}")
        return EXIT_CONFIG

    run = run_scenario(cfg, out_dir=args.out)
    if run.headline:
        print(run.headline)
    return run.exit_code


if __name__ == "__main__":
    sys.exit(main())
