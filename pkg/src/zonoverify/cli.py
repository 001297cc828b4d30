"""Command-line interface: `verify` a property or dump refinement `bounds`."""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .constants import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_BOUND_ITERS,
    DEFAULT_LOG_FILE,
    DEFAULT_REFINE_ITERS,
    DEFAULT_SHRINK_THRESHOLD,
    DEFAULT_TIMEOUT,
    ORACLE_MAX_RELU,
)
from .database import RunRecord, init_database, save_result
from .engine import EngineConfig, Heuristic, Status, Verdict, verify
from .errors import VerifierError
from .network import Activation, ActivationLayer, Network, load_network
from .oracle import Safe, exhaustive_reach_tiny, grid_falsify
from .refine import refinement_steps
from .setlib import FactorBox, Zonotope, conzono_interval, interval_hull
from .specparse import VerificationTask, parse_vnnlib, write_witness
from .utils import format_float, read_text, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
_ORACLE_SAMPLES = 1000


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        prog="zonoverify",
        description="Zonotope-based neural network verification with input refinement.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Verify a property, writing a counterexample if one is found
  zonoverify verify --network net.nnet --spec prop.vnnlib --witness cex.txt

  # Same without refinement and with a smaller batch
  zonoverify verify --network net.json --spec prop.vnnlib --refine off --batch 16

  # Dump the input box and output bounds of each refinement iteration
  zonoverify bounds --network net.nnet --spec prop.vnnlib --refine-iters 4
        """,
    )
    subparsers = parser.add_subparsers(dest="command", help="Command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--network", type=Path, required=True, help="Network file (.nnet or .json)")
    common.add_argument("--spec", type=Path, required=True, help="VNN-LIB property file")
    common.add_argument("--refine-iters", type=int, default=DEFAULT_REFINE_ITERS, help="Refinement iterations (default: %(default)s)")
    common.add_argument("--bound-iters", type=int, default=DEFAULT_BOUND_ITERS, help="Bound tightening sweeps (default: %(default)s)")
    common.add_argument("--log-file", type=str, default=DEFAULT_LOG_FILE, help="Log file (default: %(default)s)")
    common.add_argument("--verbose", action="store_true", help="Log debug messages")

    verify_parser = subparsers.add_parser("verify", parents=[common], help="Verify the property")
    verify_parser.add_argument("--refine", choices=["on", "off"], default="on", help="Input refinement (default: %(default)s)")
    verify_parser.add_argument("--batch", type=int, default=DEFAULT_BATCH_SIZE, help="Boxes per iteration (default: %(default)s)")
    verify_parser.add_argument(
        "--heuristic",
        choices=[h.value for h in Heuristic],
        default=Heuristic.ENCLOSURE.value,
        help="Split heuristic (default: %(default)s)",
    )
    verify_parser.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT, help="Seconds (default: %(default)s)")
    verify_parser.add_argument("--seed", type=int, default=0, help="Seed for oracle sampling (default: %(default)s)")
    verify_parser.add_argument("--max-iterations", type=int, help="Iteration budget")
    verify_parser.add_argument("--max-subproblems", type=int, help="Subproblem budget")
    verify_parser.add_argument("--witness", type=Path, help="Write the counterexample here when one is found")
    verify_parser.add_argument("--stats-json", type=Path, help="Write run statistics as JSON")
    verify_parser.add_argument("--check-oracle", action="store_true", help="Cross-check the verdict by brute force")
    verify_parser.add_argument("--results-db", type=Path, help="Store the run in this SQLite database")

    bounds_parser = subparsers.add_parser("bounds", parents=[common], help="Dump refinement bounds as CSV")
    bounds_parser.add_argument("--unsafe-index", type=int, default=0, help="Unsafe polytope to refine against (default: %(default)s)")
    bounds_parser.add_argument("--output", type=Path, help="CSV file (default: stdout)")

    return parser.parse_args(argv)


def load_task(network_path: Path, spec_path: Path) -> tuple[Network, VerificationTask]:
    net = load_network(network_path)
    task = parse_vnnlib(read_text(spec_path), net.input_dim, net.output_dim)
    norm = net.normalization
    if norm is not None and norm.input_min is not None and norm.input_max is not None:
        outside = (task.input_box.lower < norm.input_min) | (task.input_box.upper > norm.input_max)
        if np.any(outside):
            logger.warning("Input box exceeds the network's clipping bounds in %d dimensions; bounds are not applied", int(outside.sum()))
    return net, task


def check_with_oracle(net: Network, task: VerificationTask, verdict: Verdict, seed: int) -> bool:
    """Compare the verdict with brute force; returns False and warns on disagreement."""
    exhaustive = net.relu_count <= ORACLE_MAX_RELU and all(
        layer.fn is Activation.RELU for layer in net.layers if isinstance(layer, ActivationLayer)
    )
    for index, unsafe in enumerate(task.unsafe):
        if exhaustive:
            reachable = not isinstance(exhaustive_reach_tiny(net, task.input_box, unsafe), Safe)
        else:
            reachable = grid_falsify(net, task.input_box, unsafe, _ORACLE_SAMPLES, seed) is not None
        if verdict.status is Status.VERIFIED and reachable:
            logger.warning("Oracle disagreement: unsafe polytope %d is reachable but the run verified", index)
            return False
        if exhaustive and verdict.status is Status.FALSIFIED and index == verdict.unsafe_index and not reachable:
            logger.warning("Oracle disagreement: polytope %d is unreachable but the run falsified it", index)
            return False
    logger.info("Oracle agrees with the verdict (%s)", "exhaustive" if exhaustive else "sampling")
    return True


def cmd_verify(args: argparse.Namespace) -> int:
    net, task = load_task(args.network, args.spec)
    config = EngineConfig(
        refine_on=args.refine == "on",
        refine_iters=args.refine_iters,
        bound_iters=args.bound_iters,
        batch_size=args.batch,
        heuristic=Heuristic(args.heuristic),
        max_iterations=args.max_iterations,
        timeout_seconds=args.timeout,
        seed=args.seed,
        max_subproblems=args.max_subproblems,
    )
    verdict = verify(net, task, config)
    print(verdict.result_word)

    if verdict.status is Status.FALSIFIED and args.witness is not None:
        args.witness.write_text(write_witness(verdict.x, verdict.y), encoding="utf-8")
        logger.info("Counterexample written to %s", args.witness)
    if args.stats_json is not None:
        stats = {
            "result": verdict.result_word,
            "reason": verdict.reason.value if verdict.reason is not None else None,
            **verdict.stats.to_dict(),
        }
        args.stats_json.write_text(json.dumps(stats, indent=2, sort_keys=True), encoding="utf-8")
    if args.check_oracle:
        check_with_oracle(net, task, verdict, config.seed)
    if args.results_db is not None:
        init_database(args.results_db)
        save_result(
            args.results_db,
            RunRecord(
                instance=f"{args.network.stem}:{args.spec.stem}",
                config="refine" if config.refine_on else "no-refine",
                result=verdict.result_word,
                subproblems=verdict.stats.subproblems,
                iterations=verdict.stats.iterations,
                wall_time=verdict.stats.wall_time,
            ),
        )
    return EXIT_OK


def _bounds_rows(iteration: int, lower: np.ndarray, upper: np.ndarray, space: str) -> list[list[str]]:
    return [
        [str(iteration), str(dim), format_float(lo), format_float(hi), space, "0"]
        for dim, (lo, hi) in enumerate(zip(lower, upper, strict=True))
    ]


def cmd_bounds(args: argparse.Namespace) -> int:
    net, task = load_task(args.network, args.spec)
    if not 0 <= args.unsafe_index < len(task.unsafe):
        raise VerifierError(f"--unsafe-index must be below {len(task.unsafe)}")
    root = Zonotope.from_interval(task.input_box)
    steps = refinement_steps(
        net,
        root,
        task.unsafe[args.unsafe_index],
        FactorBox.full(root.num_generators),
        args.refine_iters,
        args.bound_iters,
        DEFAULT_SHRINK_THRESHOLD,
    )

    rows = [["iter", "dim", "lower", "upper", "space", "empty"]]
    for step in steps:
        if step.box.is_empty:
            rows += [[str(step.iteration), str(dim), "", "", "factor", "1"] for dim in range(step.box.dim)]
            break
        inputs = conzono_interval(root, step.box)
        outputs = interval_hull(step.trace.output)
        rows += _bounds_rows(step.iteration, step.box.lower, step.box.upper, "factor")
        rows += _bounds_rows(step.iteration, inputs.lower, inputs.upper, "input")
        rows += _bounds_rows(step.iteration, outputs.lower, outputs.upper, "output")

    if args.output is None:
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
    else:
        with args.output.open("w", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerows(rows)
    return EXIT_OK


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return the exit status."""
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    setup_logging(args.log_file, logging.DEBUG if args.verbose else logging.INFO)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        return cmd_bounds(args)
    except (VerifierError, OSError) as e:
        logger.error("%s", e)
        return EXIT_USAGE


def main() -> None:
    """Main entry point."""
    sys.exit(run())
