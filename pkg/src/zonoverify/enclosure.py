"""Sound zonotope propagation through a network.

Each activation layer is enclosed by a per-neuron linear function plus an
approximation-error interval. The error intervals become new generator columns
tagged with (layer, neuron) so refinement and splitting can find them again.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logit

from .constants import SMOOTH_ERROR_PAD
from .errors import ContractError
from .network import Activation, LinearLayer, Network
from .setlib import (
    UNTRACKED_LAYER,
    Interval,
    Zonotope,
    affine_map,
    interval_hull,
    minkowski_sum_interval,
)

logger = logging.getLogger(__name__)

# secant widths below this use the derivative instead
_POINT_WIDTH = 1e-12
# ReLU bounds this close to zero, relative to the neuron magnitude, do not make it unstable
_ROUNDING = 1e-12


@dataclass(frozen=True, eq=False)
class LayerTrace:
    """What one activation layer did: its input set, slopes and error interval."""
    layer: int
    fn: Activation
    pre_activation: Zonotope
    bounds: Interval
    slopes: np.ndarray
    error: Interval

    @property
    def error_radii(self) -> np.ndarray:
        return self.error.radius

    @property
    def unstable(self) -> np.ndarray:
        """Mask of ReLU neurons whose pre-activation bounds straddle zero."""
        if self.fn is not Activation.RELU:
            return np.zeros(self.slopes.size, dtype=bool)
        return (self.slopes > 0) & (self.slopes < 1)


@dataclass(frozen=True, eq=False)
class EncloseTrace:
    input_set: Zonotope
    layers: tuple[LayerTrace, ...]
    output: Zonotope

    @property
    def num_input_factors(self) -> int:
        return self.input_set.num_generators

    def layer_trace(self, layer: int) -> LayerTrace:
        for record in self.layers:
            if record.layer == layer:
                return record
        raise ContractError(f"no activation layer {layer} in this trace")

    def neuron_pre_activation(self, layer: int, neuron: int) -> tuple[float, np.ndarray]:
        """Center and generator row of one neuron's input, over the factors alive at that layer."""
        pre = self.layer_trace(layer).pre_activation
        return float(pre.center[neuron]), pre.generators[neuron]


def enclose_relu(h: Zonotope, layer: int = UNTRACKED_LAYER) -> tuple[Zonotope, np.ndarray, Interval]:
    """ReLU enclosure with slope u/(u - l) and error [0, -slope*l] for unstable neurons."""
    bounds = interval_hull(h)
    lower, upper = bounds.lower, bounds.upper
    slack = _ROUNDING * (np.abs(h.center) + bounds.radius)
    inactive = upper <= slack
    unstable = ~inactive & (lower < -slack)
    span = np.where(unstable, upper - lower, 1.0)
    slopes = np.where(unstable, upper / span, np.where(inactive, 0.0, 1.0))
    # near-zero crossings keep their stable slope; the error covers the overshoot
    gap = np.where(unstable, -slopes * lower, np.where(inactive, np.maximum(upper, 0.0), np.maximum(-lower, 0.0)))
    error = Interval(np.zeros(h.dim), gap)

    scaled = Zonotope(slopes * h.center, slopes[:, None] * h.generators, h.provenance)
    return minkowski_sum_interval(scaled, error, layer), slopes, error


def _derivative(fn: Activation, x: np.ndarray) -> np.ndarray:
    if fn is Activation.SIGMOID:
        s = expit(x)
        return s * (1 - s)
    return 1 - np.tanh(x) ** 2


def _critical_points(fn: Activation, slopes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The (at most two) inputs where the activation's derivative equals the slope."""
    with np.errstate(divide="ignore", invalid="ignore"):
        if fn is Activation.SIGMOID:
            root = np.sqrt(np.clip(1 - 4 * slopes, 0.0, None))
            return logit((1 - root) / 2), logit((1 + root) / 2)
        root = np.sqrt(np.clip(1 - slopes, 0.0, None))
        return np.arctanh(-root), np.arctanh(root)


def enclose_smooth(
    h: Zonotope, fn: Activation, layer: int = UNTRACKED_LAYER
) -> tuple[Zonotope, np.ndarray, Interval]:
    """Secant-slope enclosure of sigmoid or tanh.

    The error interval bounds fn(x) - slope*x over the neuron's bounds; the
    extremes sit at the endpoints or where fn'(x) = slope.
    """
    if fn is Activation.RELU:
        raise ContractError("use enclose_relu for ReLU layers")
    bounds = interval_hull(h)
    lower, upper = bounds.lower, bounds.upper
    width = upper - lower
    wide = width > _POINT_WIDTH
    secant = (fn.apply(upper) - fn.apply(lower)) / np.where(wide, width, 1.0)
    slopes = np.where(wide, secant, _derivative(fn, lower))

    candidates = [lower, upper]
    for point in _critical_points(fn, slopes):
        inside = np.isfinite(point) & (point >= lower) & (point <= upper)
        candidates.append(np.where(inside, point, lower))
    stacked = np.vstack(candidates)
    deviation = fn.apply(stacked) - slopes * stacked
    error = Interval(deviation.min(axis=0) - SMOOTH_ERROR_PAD, deviation.max(axis=0) + SMOOTH_ERROR_PAD)

    scaled = Zonotope(slopes * h.center, slopes[:, None] * h.generators, h.provenance)
    return minkowski_sum_interval(scaled, error, layer), slopes, error


def propagate(net: Network, input_set: Zonotope) -> EncloseTrace:
    """Enclose the image of `input_set` under the network.

    The first generator columns of every intermediate set are the input
    factors, in order. Layer indices in the trace refer to
    `net.effective_layers`.
    """
    if input_set.dim != net.input_dim:
        raise ContractError(f"input set of dimension {input_set.dim} for a network with {net.input_dim} inputs")
    z = input_set
    records = []
    for k, layer in enumerate(net.effective_layers):
        if isinstance(layer, LinearLayer):
            z = affine_map(layer.weights, z, layer.bias)
            continue
        pre = z
        if layer.fn is Activation.RELU:
            z, slopes, error = enclose_relu(pre, layer=k)
        else:
            z, slopes, error = enclose_smooth(pre, layer.fn, layer=k)
        records.append(LayerTrace(k, layer.fn, pre, interval_hull(pre), slopes, error))
    return EncloseTrace(input_set, tuple(records), z)


def propagate_batch(net: Network, inputs: list[Zonotope]) -> list[EncloseTrace]:
    """Propagate input sets that share their dimension and factor count."""
    if not inputs:
        return []
    dim, factors = inputs[0].dim, inputs[0].num_generators
    for z in inputs[1:]:
        if z.dim != dim or z.num_generators != factors:
            raise ContractError("batch members must share input dimension and factor count")
    traces = [propagate(net, z) for z in inputs]
    logger.debug("Propagated batch of %d input sets", len(traces))
    return traces
