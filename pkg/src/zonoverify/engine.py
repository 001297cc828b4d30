"""Batched branch-and-bound verification over input factor boxes."""
import dataclasses
import logging
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .constants import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_BOUND_ITERS,
    DEFAULT_MAX_DEPTH,
    DEFAULT_REFINE_ITERS,
    DEFAULT_SHRINK_THRESHOLD,
    DEFAULT_TIMEOUT,
    FALSIFY_TOLERANCE,
    RESULT_SAT,
    RESULT_UNKNOWN,
    RESULT_UNSAT,
)
from .enclosure import EncloseTrace, propagate_batch
from .errors import ContractError
from .network import Activation, Network, forward
from .refine import check_verified, refine_box
from .setlib import ConstraintSet, FactorBox, HPolytope, Zonotope, frobenius_radius, tighten_factor_bounds
from .specparse import VerificationTask

logger = logging.getLogger(__name__)

__all__ = [
    "BranchItem",
    "EngineConfig",
    "Heuristic",
    "SplitChoice",
    "SplitKind",
    "SplitScores",
    "Status",
    "UnknownReason",
    "Verdict",
    "VerdictStats",
    "check_verified",
    "choose_split",
    "falsify_candidates",
    "score_splits",
    "split",
    "verify",
]


class Heuristic(Enum):
    """How the next split is chosen."""
    ENCLOSURE = "enclosure"
    RADIUS = "radius"


class Status(Enum):
    VERIFIED = "verified"
    FALSIFIED = "falsified"
    UNKNOWN = "unknown"


class UnknownReason(Enum):
    TIMEOUT = "timeout"
    BUDGET = "budget"


class SplitKind(Enum):
    INPUT = "input"
    NEURON = "neuron"


@dataclass(frozen=True)
class EngineConfig:
    """Switches and budgets for `verify`.

    The search itself is deterministic; `seed` is carried for the sampling
    oracle that may cross-check the run.
    """
    refine_on: bool = True
    refine_iters: int = DEFAULT_REFINE_ITERS
    bound_iters: int = DEFAULT_BOUND_ITERS
    batch_size: int = DEFAULT_BATCH_SIZE
    heuristic: Heuristic = Heuristic.ENCLOSURE
    max_iterations: int | None = None
    timeout_seconds: float = DEFAULT_TIMEOUT
    falsify_tolerance: float = FALSIFY_TOLERANCE
    seed: int = 0
    shrink_threshold: float = DEFAULT_SHRINK_THRESHOLD
    max_depth: int = DEFAULT_MAX_DEPTH
    max_subproblems: int | None = None

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ContractError("batch_size must be positive")
        if self.bound_iters < 1:
            raise ContractError("bound_iters must be positive")
        if self.refine_iters < 0:
            raise ContractError("refine_iters must be non-negative")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ContractError("max_iterations must be non-negative")
        if self.max_subproblems is not None and self.max_subproblems < 0:
            raise ContractError("max_subproblems must be non-negative")
        if self.timeout_seconds < 0 or self.falsify_tolerance < 0 or self.shrink_threshold < 0:
            raise ContractError("timeout, tolerance and shrink threshold must be non-negative")
        if self.max_depth < 1:
            raise ContractError("max_depth must be positive")


@dataclass(frozen=True, eq=False)
class BranchItem:
    box: FactorBox
    unsafe_index: int
    depth: int = 0


@dataclass
class VerdictStats:
    iterations: int = 0
    subproblems: int = 0
    peak_queue: int = 0
    wall_time: float = 0.0
    max_iteration_time: float = 0.0
    refined_away: int = 0

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class Verdict:
    status: Status
    stats: VerdictStats = field(default_factory=VerdictStats)
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    reason: UnknownReason | None = None
    unsafe_index: int | None = None

    @property
    def result_word(self) -> str:
        match self.status:
            case Status.FALSIFIED:
                return RESULT_SAT
            case Status.VERIFIED:
                return RESULT_UNSAT
            case Status.UNKNOWN:
                return RESULT_UNKNOWN


@dataclass(frozen=True)
class SplitChoice:
    kind: SplitKind
    index: int
    layer: int | None = None


@dataclass(frozen=True, eq=False)
class SplitScores:
    """Score per input factor, and per ReLU neuron keyed by (layer, neuron)."""
    inputs: np.ndarray
    neurons: dict[tuple[int, int], float]


def falsify_candidates(trace: EncloseTrace, input_set: Zonotope, unsafe: HPolytope) -> list[np.ndarray]:
    """Inputs pushed furthest into each unsafe row, plus the input center.

    For row i the factors are set to -sign(A_i G_y) on the input factors,
    which minimizes A_i y over the enclosure.
    """
    q0 = input_set.num_generators
    direction = -np.sign(unsafe.a_mat @ trace.output.generators[:, :q0])
    candidates = [input_set.center + input_set.generators @ beta for beta in direction]
    candidates.append(input_set.center.copy())
    return candidates


def _first_hit(
    net: Network, candidates: list[np.ndarray], unsafe: HPolytope, tol: float
) -> tuple[np.ndarray, np.ndarray] | None:
    for x in candidates:
        y = forward(net, x)
        if unsafe.contains(y, tol):
            return x, y
    return None


def score_splits(trace: EncloseTrace, box: FactorBox) -> SplitScores:
    """Frozen-linearization sensitivity of the output F-radius to each source radius.

    Scaling the radius of a source by s scales its generator column by s, so
    d||G||_F/ds at s = 1 is ||column||^2 / ||G||_F. Factors with zero width and
    stable neurons score 0.
    """
    generators = trace.output.generators
    q0 = trace.num_input_factors
    norm = frobenius_radius(trace.output)
    column_sq = (generators**2).sum(axis=0)
    scores = column_sq / norm if norm > 0 else np.zeros_like(column_sq)

    inputs = np.where(box.rad > 0, scores[:q0], 0.0)
    neurons: dict[tuple[int, int], float] = {}
    for record in trace.layers:
        if record.fn is not Activation.RELU:
            continue
        for neuron in range(record.slopes.size):
            column = trace.output.column_of(record.layer, neuron)
            neurons[(record.layer, neuron)] = float(scores[column]) if column is not None else 0.0
    return SplitScores(inputs, neurons)


def _best_input(scores: SplitScores, box: FactorBox) -> int:
    """Highest-scoring input factor, or the widest one when every score is zero."""
    if np.any(scores.inputs > 0):
        return int(np.argmax(scores.inputs))
    return int(np.argmax(box.rad))


def choose_split(trace: EncloseTrace, box: FactorBox, heuristic: Heuristic) -> SplitChoice:
    """Pick the input factor or ReLU neuron to split; inputs win ties."""
    if heuristic is Heuristic.RADIUS:
        widths = np.linalg.norm(trace.input_set.generators, axis=0)
        return SplitChoice(SplitKind.INPUT, int(np.argmax(np.where(box.rad > 0, widths, -1.0))))

    scores = score_splits(trace, box)
    best_input = _best_input(scores, box)
    best_neuron, neuron_score = None, 0.0
    for key, value in scores.neurons.items():
        if value > neuron_score:
            best_neuron, neuron_score = key, value
    if best_neuron is not None and neuron_score > scores.inputs[best_input]:
        layer, neuron = best_neuron
        return SplitChoice(SplitKind.NEURON, neuron, layer)
    return SplitChoice(SplitKind.INPUT, best_input)


def split(
    trace: EncloseTrace, box: FactorBox, choice: SplitChoice, bound_iters: int = DEFAULT_BOUND_ITERS
) -> tuple[list[FactorBox], SplitChoice]:
    """Split `box` in two, returning the non-Empty children and the split actually made.

    A ReLU split adds g.beta <= -c and -g.beta <= c for the neuron's input
    c + g.beta, with factors past the input prefix relaxed to their extremes.
    When a side leaves the box unchanged, that child would split the same
    way again, so the best input split is used instead.
    """
    if choice.kind is SplitKind.INPUT:
        return list(box.bisect(choice.index)), choice

    q0 = trace.num_input_factors
    center, row = trace.neuron_pre_activation(choice.layer, choice.index)
    prefix, slack = row[:q0], float(np.abs(row[q0:]).sum())
    unit = FactorBox.full(q0)
    sides = (
        ConstraintSet(prefix[None, :], np.array([-center + slack])),
        ConstraintSet(-prefix[None, :], np.array([center + slack])),
    )
    children = [box.compose(tighten_factor_bounds(side, unit, bound_iters)) for side in sides]
    if any(child.same_as(box) for child in children):
        fallback = SplitChoice(SplitKind.INPUT, _best_input(score_splits(trace, box), box))
        logger.debug("Neuron split %s does not tighten the box; splitting input %d", choice, fallback.index)
        return list(box.bisect(fallback.index)), fallback
    return [child for child in children if not child.is_empty], choice


def _unknown(reason: UnknownReason, stats: VerdictStats, start: float) -> Verdict:
    stats.wall_time = time.perf_counter() - start
    logger.info("Result unknown (%s) after %d subproblems", reason.value, stats.subproblems)
    return Verdict(Status.UNKNOWN, stats, reason=reason)


def verify(net: Network, task: VerificationTask, config: EngineConfig | None = None) -> Verdict:
    """Run branch and bound until every box is verified, a counterexample is found, or a budget runs out.

    The queue is FIFO and budgets are checked per processed box, so the
    verdict does not depend on the batch size.
    """
    config = EngineConfig() if config is None else config
    if task.input_dim != net.input_dim or task.output_dim != net.output_dim:
        raise ContractError(
            f"property is over {task.input_dim} inputs and {task.output_dim} outputs, "
            f"network has {net.input_dim} and {net.output_dim}"
        )

    start = time.perf_counter()
    root = Zonotope.from_interval(task.input_box)
    if np.any(task.input_box.radius == 0):
        logger.warning("Input box has zero width in %d dimensions", int(np.sum(task.input_box.radius == 0)))
    queue = deque(BranchItem(FactorBox.full(root.num_generators), j) for j in range(len(task.unsafe)))
    stats = VerdictStats(peak_queue=len(queue))
    logger.info("Verifying %d unsafe polytopes (refinement %s)", len(task.unsafe), "on" if config.refine_on else "off")

    while queue:
        if config.max_iterations is not None and stats.iterations >= config.max_iterations:
            return _unknown(UnknownReason.BUDGET, stats, start)
        if time.perf_counter() - start >= config.timeout_seconds:
            return _unknown(UnknownReason.TIMEOUT, stats, start)

        iteration_start = time.perf_counter()
        stats.iterations += 1
        batch = [queue.popleft() for _ in range(min(config.batch_size, len(queue)))]
        traces = propagate_batch(net, [root.restrict_factors(item.box) for item in batch])

        for item, trace in zip(batch, traces, strict=True):
            if config.max_subproblems is not None and stats.subproblems >= config.max_subproblems:
                return _unknown(UnknownReason.BUDGET, stats, start)
            stats.subproblems += 1
            unsafe = task.unsafe[item.unsafe_index]
            if check_verified(trace.output, unsafe):
                continue

            hit = _first_hit(net, falsify_candidates(trace, trace.input_set, unsafe), unsafe, config.falsify_tolerance)
            if hit is not None:
                stats.wall_time = time.perf_counter() - start
                logger.info("Counterexample found after %d subproblems", stats.subproblems)
                return Verdict(Status.FALSIFIED, stats, x=hit[0], y=hit[1], unsafe_index=item.unsafe_index)

            if item.depth >= config.max_depth:
                logger.warning("Depth cap %d reached", config.max_depth)
                return _unknown(UnknownReason.BUDGET, stats, start)

            choice = choose_split(trace, item.box, config.heuristic)
            children, _ = split(trace, item.box, choice, config.bound_iters)
            for child in children:
                refined = child
                if config.refine_on:
                    refined = refine_box(
                        net,
                        task,
                        child,
                        config.refine_iters,
                        config.bound_iters,
                        unsafe_index=item.unsafe_index,
                        shrink_threshold=config.shrink_threshold,
                    )
                if refined.is_empty:
                    stats.refined_away += 1
                    continue
                queue.append(BranchItem(refined, item.unsafe_index, item.depth + 1))

        stats.peak_queue = max(stats.peak_queue, len(queue))
        stats.max_iteration_time = max(stats.max_iteration_time, time.perf_counter() - iteration_start)
        logger.debug("Iteration %d: %d boxes processed, %d queued", stats.iterations, len(batch), len(queue))

    stats.wall_time = time.perf_counter() - start
    logger.info("Verified after %d subproblems in %.3f s", stats.subproblems, stats.wall_time)
    return Verdict(Status.VERIFIED, stats)
