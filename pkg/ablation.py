"""Run every fuzz instance with refinement on and off and report the subproblem savings."""
import argparse
import logging
import sys
from pathlib import Path

from zonoverify.benchmark import run_ablation, summarize_ablation
from zonoverify.constants import DEFAULT_DB_PATH
from zonoverify.utils import setup_logging

# Set up logger
logger = logging.getLogger(__name__)


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="ablation",
        description="Compare subproblem counts with and without input refinement.",
    )
    parser.add_argument(
        "--start",
        type=int,
        default=0,
        help="First instance seed (default: %(default)s)",
    )
    parser.add_argument(
        "--count",
        type=int,
        default=200,
        help="Number of instances (default: %(default)s)",
    )
    parser.add_argument(
        "--db",
        type=str,
        default=DEFAULT_DB_PATH,
        help="Database path (default: %(default)s)",
    )
    parser.add_argument(
        "--max-subproblems",
        type=int,
        default=10_000,
        help="Subproblem cap per run (default: %(default)s)",
    )
    return parser.parse_args()


def main() -> None:
    args = parse_args()

    setup_logging()
    if args.start < 0 or args.count < 1:
        logger.error("Seeds must be non-negative and the count at least 1")
        sys.exit(1)
    if args.max_subproblems < 1:
        logger.error("The subproblem cap must be at least 1")
        sys.exit(1)

    db_path = Path(args.db)
    logger.info("Running %d instances from seed %d", args.count, args.start)
    run_ablation(range(args.start, args.start + args.count), db_path, args.max_subproblems)

    summary = summarize_ablation(db_path)
    logger.info(
        "Solved by both: %d, mean subproblems %.1f with refinement vs %.1f without (ratio %.3f)",
        summary.solved_by_both,
        summary.mean_refine,
        summary.mean_plain,
        summary.ratio,
    )


if __name__ == "__main__":
    main()
