"""Input refinement: pull the unsafe set back to the input factors and shrink the box.

Boxes are kept in root factor coordinates, i.e. over the factors of the input
zonotope built from the property's input box. Each refinement iteration
re-parameterizes the input set to the current box, propagates it, and
tightens the fresh unit factors against the pulled-back constraints.
"""
import logging
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from .constants import DEFAULT_SHRINK_THRESHOLD
from .enclosure import EncloseTrace, propagate
from .errors import ContractError
from .network import Network
from .setlib import ConstraintSet, FactorBox, HPolytope, Zonotope, support_value, tighten_factor_bounds
from .specparse import VerificationTask

logger = logging.getLogger(__name__)


def check_verified(y: Zonotope, unsafe: HPolytope) -> bool:
    """True if some row i has A_i c - |A_i G| 1 > b_i, so Y misses the unsafe set."""
    if unsafe.dim != y.dim:
        raise ContractError(f"unsafe set over {unsafe.dim} outputs for a {y.dim}-dim output set")
    # min over Y of A_i y is minus the support value in direction -A_i
    return any(-support_value(y, -row) > b for row, b in zip(unsafe.a_mat, unsafe.b_vec, strict=True))


def unsafe_input_constraints(trace: EncloseTrace, unsafe: HPolytope, q0: int | None = None) -> ConstraintSet:
    """Constraints C beta <= d met by the factors of every input mapped into `unsafe`.

    C = A G_y[:, :q0] and d = b - A c_y + |A G_y[:, q0:]| 1, the remaining
    factors being free in [-1, 1].
    """
    y = trace.output
    q0 = trace.num_input_factors if q0 is None else q0
    if y.num_generators < q0:
        raise ContractError(f"output set has {y.num_generators} generators, fewer than {q0} input factors")
    if unsafe.dim != y.dim:
        raise ContractError(f"unsafe set over {unsafe.dim} outputs for a {y.dim}-dim output set")
    projected = unsafe.a_mat @ y.generators
    return ConstraintSet(
        projected[:, :q0],
        unsafe.b_vec - unsafe.a_mat @ y.center + np.abs(projected[:, q0:]).sum(axis=1),
    )


@dataclass(frozen=True, eq=False)
class RefineStep:
    """One refinement iteration; iteration 0 is the unrefined box.

    `trace` is the propagation of `box` and is None once the box is Empty.
    """
    iteration: int
    box: FactorBox
    trace: EncloseTrace | None
    verified: bool


def refinement_steps(
    net: Network,
    root: Zonotope,
    unsafe: HPolytope,
    box: FactorBox,
    refine_iters: int,
    bound_iters: int,
    shrink_threshold: float = DEFAULT_SHRINK_THRESHOLD,
    trace: EncloseTrace | None = None,
) -> Iterator[RefineStep]:
    """Yield the box after each refinement iteration.

    Stops early once the box is Empty, the output set misses `unsafe`, or an
    iteration shrinks the summed half-widths by less than `shrink_threshold`.
    """
    if refine_iters < 0:
        raise ContractError("refine_iters must be non-negative")
    current = box
    if trace is None:
        trace = propagate(net, root.restrict_factors(current))
    verified = check_verified(trace.output, unsafe)
    yield RefineStep(0, current, trace, verified)

    for iteration in range(1, refine_iters + 1):
        if verified:
            return
        constraints = unsafe_input_constraints(trace, unsafe)
        inner = tighten_factor_bounds(constraints, FactorBox.full(current.dim), bound_iters)
        refined = current.compose(inner)
        if refined.is_empty:
            yield RefineStep(iteration, refined, None, False)
            return

        trace = propagate(net, root.restrict_factors(refined))
        verified = check_verified(trace.output, unsafe)
        yield RefineStep(iteration, refined, trace, verified)

        before = current.radius_sum()
        shrink = (before - refined.radius_sum()) / before if before > 0 else 0.0
        current = refined
        if shrink < shrink_threshold:
            logger.debug("Refinement stalled after %d iterations (shrink %.4f)", iteration, shrink)
            return


def _refine_one(
    net: Network,
    root: Zonotope,
    unsafe: HPolytope,
    box: FactorBox,
    refine_iters: int,
    bound_iters: int,
    shrink_threshold: float,
    trace: EncloseTrace | None,
) -> FactorBox:
    result = box
    for step in refinement_steps(net, root, unsafe, box, refine_iters, bound_iters, shrink_threshold, trace):
        if step.box.is_empty or step.verified:
            return FactorBox.empty(box.dim)
        result = step.box
    return result


def refine_union(
    net: Network,
    task: VerificationTask,
    box: FactorBox,
    refine_iters: int,
    bound_iters: int,
    shrink_threshold: float = DEFAULT_SHRINK_THRESHOLD,
) -> list[FactorBox]:
    """Refine `box` against each unsafe polytope separately, one result per polytope."""
    root = Zonotope.from_interval(task.input_box)
    if refine_iters == 0:
        return [box for _ in task.unsafe]
    return [
        _refine_one(net, root, unsafe, box, refine_iters, bound_iters, shrink_threshold, None)
        for unsafe in task.unsafe
    ]


def refine_box(
    net: Network,
    task: VerificationTask,
    box: FactorBox,
    refine_iters: int,
    bound_iters: int,
    *,
    unsafe_index: int | None = None,
    shrink_threshold: float = DEFAULT_SHRINK_THRESHOLD,
    trace: EncloseTrace | None = None,
) -> FactorBox:
    """Shrink `box` to a box still holding every factor vector whose input is unsafe.

    With `unsafe_index` only that polytope is used; otherwise the result is
    the smallest box around the per-polytope refinements. Returns
    FactorBox.empty when no unsafe input remains.
    """
    if refine_iters == 0 or box.is_empty:
        return box
    if unsafe_index is not None:
        root = Zonotope.from_interval(task.input_box)
        return _refine_one(
            net, root, task.unsafe[unsafe_index], box, refine_iters, bound_iters, shrink_threshold, trace
        )
    boxes = [b for b in refine_union(net, task, box, refine_iters, bound_iters, shrink_threshold) if not b.is_empty]
    if not boxes:
        return FactorBox.empty(box.dim)
    return FactorBox(
        np.min([b.lower for b in boxes], axis=0),
        np.max([b.upper for b in boxes], axis=0),
    )
