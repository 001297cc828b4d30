"""Brute-force ground truth for small instances.

These are slow on purpose and only meant for tests and the CLI's
``--check-oracle`` mode.
"""
import itertools
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .constants import (
    FALSIFY_TOLERANCE,
    FEASIBILITY_TOL,
    GRID_MAX_CORNER_DIM,
    ORACLE_MAX_FACETS,
    ORACLE_MAX_FACTORS,
    ORACLE_MAX_RELU,
)
from .errors import ContractError
from .network import Activation, ActivationLayer, LinearLayer, Network, forward, forward_batch
from .setlib import ConstraintSet, FactorBox, HPolytope, Interval

logger = logging.getLogger(__name__)

_SUBSET_CHUNK = 4096
_SINGULAR = 1e-12


@dataclass(frozen=True)
class Safe:
    """No input in the box reaches the unsafe set."""


@dataclass(frozen=True, eq=False)
class UnsafeWitness:
    x: np.ndarray
    y: np.ndarray


def exact_box_bounds(cons: ConstraintSet, box: FactorBox) -> FactorBox:
    """Exact per-factor bounds of {beta in box | C beta <= d} by vertex enumeration."""
    q = box.dim
    if cons.dim != q:
        raise ContractError(f"constraints over {cons.dim} factors for a box of dimension {q}")
    if q > ORACLE_MAX_FACTORS or cons.num_constraints + 2 * q > ORACLE_MAX_FACETS:
        raise ContractError("instance too large for vertex enumeration")
    if box.is_empty:
        return box
    if q == 0:
        return box

    facets = np.vstack((cons.c_mat, np.eye(q), -np.eye(q)))
    offsets = np.concatenate((cons.d_vec, box.upper, -box.lower))
    lower, upper = np.full(q, np.inf), np.full(q, -np.inf)

    subsets = itertools.combinations(range(facets.shape[0]), q)
    while chunk := list(itertools.islice(subsets, _SUBSET_CHUNK)):
        index = np.array(chunk)
        systems, rhs = facets[index], offsets[index]
        regular = np.abs(np.linalg.det(systems)) > _SINGULAR
        if not np.any(regular):
            continue
        vertices = np.linalg.solve(systems[regular], rhs[regular][..., None])[..., 0]
        slack = FEASIBILITY_TOL * (1 + np.abs(offsets))
        feasible = np.all(vertices @ facets.T <= offsets + slack, axis=1)
        if np.any(feasible):
            lower = np.minimum(lower, vertices[feasible].min(axis=0))
            upper = np.maximum(upper, vertices[feasible].max(axis=0))

    if np.all(np.isfinite(lower)):
        return FactorBox(np.clip(lower, box.lower, box.upper), np.clip(upper, box.lower, box.upper))
    if cons.satisfied_by(box.mid):
        logger.warning("Vertex enumeration found no vertex of a nonempty region; keeping the box")
        return box
    return FactorBox.empty(q)


def _relu_network_layers(net: Network) -> tuple[LinearLayer | ActivationLayer, ...]:
    layers = net.effective_layers
    for layer in layers:
        if isinstance(layer, ActivationLayer) and layer.fn is not Activation.RELU:
            raise ContractError("exhaustive reachability needs a ReLU-only network")
    if net.relu_count > ORACLE_MAX_RELU:
        raise ContractError(f"exhaustive reachability supports at most {ORACLE_MAX_RELU} ReLU neurons")
    return layers


def _feasible_point(
    rows: list[np.ndarray], offsets: list[float], bounds: list[tuple[float, float]]
) -> np.ndarray | None:
    """Some point of the region, or None when it is empty."""
    result = linprog(
        np.zeros(len(bounds)), A_ub=np.vstack(rows), b_ub=np.array(offsets), bounds=bounds, method="highs"
    )
    return result.x if result.status == 0 else None


def _deepest_unsafe_point(
    rows: list[np.ndarray],
    offsets: list[float],
    bounds: list[tuple[float, float]],
    out_map: np.ndarray,
    out_shift: np.ndarray,
    unsafe: HPolytope,
) -> np.ndarray | None:
    """Input minimizing the worst unsafe-row violation within one activation region."""
    n = len(bounds)
    # variables (x, t): A (M x + v) - b <= t, minimize t
    unsafe_rows = np.hstack((unsafe.a_mat @ out_map, -np.ones((unsafe.num_constraints, 1))))
    unsafe_offsets = unsafe.b_vec - unsafe.a_mat @ out_shift
    region_rows = [np.append(row, 0.0) for row in rows]
    a_ub = np.vstack([*region_rows, unsafe_rows])
    b_ub = np.concatenate((np.array(offsets, dtype=np.float64), unsafe_offsets))
    objective = np.zeros(n + 1)
    objective[-1] = 1.0
    result = linprog(objective, A_ub=a_ub, b_ub=b_ub, bounds=[*bounds, (None, None)], method="highs")
    if result.status != 0 or result.x[-1] > FEASIBILITY_TOL:
        return None
    return result.x[:n]


class _RegionSearch:
    """Depth-first walk over activation regions, one ReLU neuron at a time.

    Each region keeps a point known to lie in it, so only the side of a neuron
    not containing that point needs a feasibility LP.
    """

    def __init__(self, net: Network, input_box: Interval, unsafe: HPolytope) -> None:
        self.net = net
        self.layers = _relu_network_layers(net)
        self.unsafe = unsafe
        self.bounds = list(zip(input_box.lower.tolist(), input_box.upper.tolist(), strict=True))
        self.start = input_box.center

    def run(self) -> UnsafeWitness | None:
        n = self.net.input_dim
        return self.descend(0, np.eye(n), np.zeros(n), [], [], self.start)

    def descend(
        self, k: int, out_map: np.ndarray, out_shift: np.ndarray, rows: list, offsets: list, point: np.ndarray
    ) -> UnsafeWitness | None:
        while k < len(self.layers) and isinstance(self.layers[k], LinearLayer):
            out_map = self.layers[k].weights @ out_map
            out_shift = self.layers[k].weights @ out_shift + self.layers[k].bias
            k += 1
        if k < len(self.layers):
            return self.assign(k, 0, out_map, out_shift, rows, offsets, point)

        x = _deepest_unsafe_point(rows, offsets, self.bounds, out_map, out_shift, self.unsafe)
        if x is None:
            return None
        y = forward(self.net, x)
        if self.unsafe.contains(y, FALSIFY_TOLERANCE):
            return UnsafeWitness(x, y)
        logger.warning("Region witness misses the unsafe set by %g", float(np.max(self.unsafe.a_mat @ y - self.unsafe.b_vec)))
        return None

    def assign(
        self, k: int, i: int, out_map: np.ndarray, out_shift: np.ndarray, rows: list, offsets: list, point: np.ndarray
    ) -> UnsafeWitness | None:
        if i == out_map.shape[0]:
            return self.descend(k + 1, out_map, out_shift, rows, offsets, point)
        row, shift = out_map[i], out_shift[i]
        # inactive side: h_i <= 0 and the neuron outputs 0
        inactive_rows, inactive_offsets = [*rows, row], [*offsets, -shift]
        inside = point if row @ point + shift <= 0 else _feasible_point(inactive_rows, inactive_offsets, self.bounds)
        if inside is not None:
            zeroed_map, zeroed_shift = out_map.copy(), out_shift.copy()
            zeroed_map[i], zeroed_shift[i] = 0.0, 0.0
            found = self.assign(k, i + 1, zeroed_map, zeroed_shift, inactive_rows, inactive_offsets, inside)
            if found is not None:
                return found
        # active side: h_i >= 0
        active_rows, active_offsets = [*rows, -row], [*offsets, shift]
        inside = point if row @ point + shift >= 0 else _feasible_point(active_rows, active_offsets, self.bounds)
        if inside is None:
            return None
        return self.assign(k, i + 1, out_map, out_shift, active_rows, active_offsets, inside)


def exhaustive_reach_tiny(net: Network, input_box: Interval, unsafe: HPolytope) -> Safe | UnsafeWitness:
    """Decide reachability of `unsafe` exactly by enumerating ReLU activation regions."""
    if input_box.dim != net.input_dim or unsafe.dim != net.output_dim:
        raise ContractError("input box or unsafe set does not match the network")
    witness = _RegionSearch(net, input_box, unsafe).run()
    return Safe() if witness is None else witness


def grid_falsify(
    net: Network, input_box: Interval, unsafe: HPolytope, samples: int, seed: int, tol: float = 0.0
) -> np.ndarray | None:
    """First input among box corners, the center, then `samples` uniform draws that lands in `unsafe`."""
    lower, upper = input_box.lower, input_box.upper
    points = []
    if input_box.dim <= GRID_MAX_CORNER_DIM:
        points = [np.array(corner) for corner in itertools.product(*zip(lower, upper, strict=True))]
    points.append(input_box.center)
    rng = np.random.default_rng(seed)
    draws = rng.uniform(lower, upper, size=(samples, input_box.dim))
    candidates = np.vstack([np.vstack(points), draws])

    outputs = forward_batch(net, candidates)
    hits = np.all(outputs @ unsafe.a_mat.T <= unsafe.b_vec + tol, axis=1)
    if not np.any(hits):
        return None
    return candidates[int(np.argmax(hits))]
