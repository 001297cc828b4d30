"""Random tiny verification instances and the refinement ablation over them."""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constants import RESULT_UNKNOWN
from .database import RunRecord, init_database, load_results, save_result
from .engine import EngineConfig, verify
from .network import Activation, ActivationLayer, LinearLayer, Network, forward_batch
from .setlib import HPolytope, Interval
from .specparse import VerificationTask

logger = logging.getLogger(__name__)

REFINE_LABEL = "refine"
PLAIN_LABEL = "no-refine"

# output samples used to place the unsafe threshold
_THRESHOLD_SAMPLES = 256


def random_relu_network(rng: np.random.Generator, input_dim: int, widths: list[int], output_dim: int) -> Network:
    """Fully connected ReLU network with scaled Gaussian weights."""
    layers = []
    sizes = [input_dim, *widths, output_dim]
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:], strict=True)):
        weights = rng.normal(size=(fan_out, fan_in)) / np.sqrt(fan_in)
        bias = rng.normal(scale=0.3, size=fan_out)
        layers.append(LinearLayer(weights, bias))
        if k < len(widths):
            layers.append(ActivationLayer(Activation.RELU, fan_out))
    return Network(tuple(layers))


def random_task(seed: int) -> tuple[Network, VerificationTask]:
    """Instance with 2-3 linear layers, 2-3 inputs, at most 12 ReLU neurons and one unsafe halfspace.

    The threshold lands near the largest sampled output projection, so both
    verdicts occur across seeds.
    """
    rng = np.random.default_rng(seed)
    input_dim = int(rng.integers(2, 4))
    if rng.random() < 0.5:
        widths = [int(rng.integers(2, 9))]
    else:
        widths = [int(rng.integers(2, 7)), int(rng.integers(2, 7))]
    output_dim = int(rng.integers(1, 3))
    net = random_relu_network(rng, input_dim, widths, output_dim)

    center = rng.uniform(-1.0, 1.0, size=input_dim)
    radius = rng.uniform(0.05, 0.5, size=input_dim)
    box = Interval(center - radius, center + radius)

    direction = rng.normal(size=output_dim)
    direction /= np.linalg.norm(direction)
    samples = rng.uniform(box.lower, box.upper, size=(_THRESHOLD_SAMPLES, input_dim))
    projected = forward_batch(net, samples) @ direction
    spread = float(np.ptp(projected)) + 1e-3
    threshold = float(projected.max()) + rng.uniform(-0.2, 0.3) * spread

    # unsafe: direction . y >= threshold
    unsafe = HPolytope(-direction[None, :], np.array([-threshold]))
    return net, VerificationTask(box, (unsafe,))


def run_ablation(seeds: range | list[int], db_path: Path, max_subproblems: int) -> list[RunRecord]:
    """Verify every instance with refinement on and off and store both runs."""
    init_database(db_path)
    records = []
    for seed in seeds:
        net, task = random_task(seed)
        for label, refine_on in ((REFINE_LABEL, True), (PLAIN_LABEL, False)):
            verdict = verify(net, task, EngineConfig(refine_on=refine_on, max_subproblems=max_subproblems))
            record = RunRecord(
                instance=f"seed-{seed}",
                config=label,
                result=verdict.result_word,
                subproblems=verdict.stats.subproblems,
                iterations=verdict.stats.iterations,
                wall_time=verdict.stats.wall_time,
            )
            save_result(db_path, record)
            records.append(record)
            logger.info("seed %d [%s]: %s after %d subproblems", seed, label, record.result, record.subproblems)
    return records


@dataclass(frozen=True)
class AblationSummary:
    solved_by_both: int
    mean_refine: float
    mean_plain: float

    @property
    def ratio(self) -> float:
        return self.mean_refine / self.mean_plain if self.mean_plain > 0 else float("nan")


def summarize_ablation(db_path: Path) -> AblationSummary:
    """Mean subproblem counts over instances conclusive under both configs."""
    refine = {r.instance: r for r in load_results(db_path, REFINE_LABEL)}
    plain = {r.instance: r for r in load_results(db_path, PLAIN_LABEL)}
    shared = [
        name
        for name in sorted(refine.keys() & plain.keys())
        if refine[name].result != RESULT_UNKNOWN and plain[name].result != RESULT_UNKNOWN
    ]
    if not shared:
        return AblationSummary(0, float("nan"), float("nan"))
    return AblationSummary(
        len(shared),
        float(np.mean([refine[name].subproblems for name in shared])),
        float(np.mean([plain[name].subproblems for name in shared])),
    )
