"""Feed-forward network model, exact evaluation, and the NNet / JSON loaders."""
import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ContractError, ParseError
from .setlib import as_matrix, as_vector
from .utils import read_text

logger = logging.getLogger(__name__)


class Activation(Enum):
    """Elementwise activation functions."""
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"

    def apply(self, x: np.ndarray) -> np.ndarray:
        match self:
            case Activation.RELU:
                return np.maximum(x, 0.0)
            case Activation.SIGMOID:
                return expit(x)
            case Activation.TANH:
                return np.tanh(x)


@dataclass(frozen=True, eq=False)
class LinearLayer:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self) -> None:
        bias = as_vector(self.bias, "bias")
        weights = as_matrix(self.weights, "weights", rows=bias.size)
        if weights.shape[0] != bias.size:
            raise ContractError(f"weights have {weights.shape[0]} rows but bias has {bias.size} entries")
        if weights.shape[1] == 0:
            raise ContractError("linear layer needs at least one input")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(bias))):
            raise ContractError("network weights must be finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "bias", bias)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.bias


@dataclass(frozen=True)
class ActivationLayer:
    fn: Activation
    width: int

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ContractError(f"activation width must be positive, got {self.width}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.fn.apply(x)


type Layer = LinearLayer | ActivationLayer


@dataclass(frozen=True, eq=False)
class Normalization:
    """NNet-style normalization: inputs (x - mean)/range, outputs y*range + mean.

    The clipping bounds are kept for reference only.
    """
    input_mean: np.ndarray
    input_range: np.ndarray
    output_mean: np.ndarray
    output_range: np.ndarray
    input_min: np.ndarray | None = None
    input_max: np.ndarray | None = None

    def __post_init__(self) -> None:
        for name in ("input_mean", "input_range", "output_mean", "output_range"):
            object.__setattr__(self, name, as_vector(getattr(self, name), name))
        for name in ("input_min", "input_max"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, as_vector(getattr(self, name), name))
        if self.input_mean.size != self.input_range.size:
            raise ContractError("input mean and range differ in length")
        if self.output_mean.size != self.output_range.size:
            raise ContractError("output mean and range differ in length")
        if np.any(self.input_range == 0) or np.any(self.output_range == 0):
            raise ContractError("normalization ranges must be nonzero")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Normalization):
            return NotImplemented
        return all(
            _optional_equal(getattr(self, name), getattr(other, name))
            for name in ("input_mean", "input_range", "output_mean", "output_range", "input_min", "input_max")
        )

    __hash__ = None

    def normalize_input(self, x: np.ndarray) -> np.ndarray:
        return (x - self.input_mean) / self.input_range

    def denormalize_output(self, y: np.ndarray) -> np.ndarray:
        return y * self.output_range + self.output_mean


def _optional_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return bool(np.array_equal(a, b))


def _layers_equal(a: Layer, b: Layer) -> bool:
    if isinstance(a, LinearLayer) and isinstance(b, LinearLayer):
        return bool(np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias))
    return a == b


@dataclass(frozen=True, eq=False)
class Network:
    """Ordered layers h_k = L_k(h_{k-1}) with optional NNet normalization."""
    layers: tuple[Layer, ...]
    normalization: Normalization | None = None

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ContractError("network needs at least one layer")
        width = layers[0].in_dim if isinstance(layers[0], LinearLayer) else layers[0].width
        for k, layer in enumerate(layers):
            if isinstance(layer, LinearLayer):
                if layer.in_dim != width:
                    raise ContractError(f"layer {k} expects {layer.in_dim} inputs but receives {width}")
                width = layer.out_dim
            elif layer.width != width:
                raise ContractError(f"activation layer {k} has width {layer.width} but receives {width}")
        object.__setattr__(self, "layers", layers)
        norm = self.normalization
        if norm is not None and (
            norm.input_mean.size != self.input_dim or norm.output_mean.size != self.output_dim
        ):
            raise ContractError("normalization does not match the network dimensions")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (
            len(self.layers) == len(other.layers)
            and all(_layers_equal(a, b) for a, b in zip(self.layers, other.layers, strict=True))
            and self.normalization == other.normalization
        )

    __hash__ = None

    @property
    def input_dim(self) -> int:
        first = self.layers[0]
        return first.in_dim if isinstance(first, LinearLayer) else first.width

    @property
    def output_dim(self) -> int:
        last = self.layers[-1]
        return last.out_dim if isinstance(last, LinearLayer) else last.width

    @property
    def relu_count(self) -> int:
        return sum(
            layer.width
            for layer in self.layers
            if isinstance(layer, ActivationLayer) and layer.fn is Activation.RELU
        )

    @cached_property
    def effective_layers(self) -> tuple[Layer, ...]:
        """Layers with the normalization folded into the first and last linear maps."""
        if self.normalization is None:
            return self.layers
        norm = self.normalization
        layers = list(self.layers)

        scale = 1.0 / norm.input_range
        shift = -norm.input_mean * scale
        if isinstance(layers[0], LinearLayer):
            first = layers[0]
            layers[0] = LinearLayer(first.weights * scale, first.bias + first.weights @ shift)
        else:
            layers.insert(0, LinearLayer(np.diag(scale), shift))

        if isinstance(layers[-1], LinearLayer):
            last = layers[-1]
            layers[-1] = LinearLayer(
                last.weights * norm.output_range[:, None],
                last.bias * norm.output_range + norm.output_mean,
            )
        else:
            layers.append(LinearLayer(np.diag(norm.output_range), norm.output_mean))
        return tuple(layers)


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Exact layer-by-layer evaluation, normalization applied around the layers."""
    h = as_vector(x, "input")
    if h.size != net.input_dim:
        raise ContractError(f"input of length {h.size} for a network with {net.input_dim} inputs")
    if net.normalization is not None:
        h = net.normalization.normalize_input(h)
    for layer in net.layers:
        h = layer(h)
    if net.normalization is not None:
        h = net.normalization.denormalize_output(h)
    return h


def forward_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Evaluate many inputs at once, one per row, through the folded layers."""
    h = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if h.shape[1] != net.input_dim:
        raise ContractError(f"inputs of length {h.shape[1]} for a network with {net.input_dim} inputs")
    for layer in net.effective_layers:
        h = h @ layer.weights.T + layer.bias if isinstance(layer, LinearLayer) else layer.fn.apply(h)
    return h


# ---------------------------------------------------------------------------
# NNet format
# ---------------------------------------------------------------------------

_TOKEN_SPLIT = re.compile(r"[,\s]+")


class _NNetReader:
    """Sequential reader over the data lines of an NNet file."""

    def __init__(self, text: str) -> None:
        self._lines = [
            (number, line.strip())
            for number, line in enumerate(text.splitlines(), start=1)
            if line.strip() and not line.lstrip().startswith("//")
        ]
        self._pos = 0
        self._last_line = text.count("\n") + 1

    def next_values(self, what: str, expected: int | None = None) -> tuple[int, np.ndarray]:
        if self._pos >= len(self._lines):
            raise ParseError(f"missing {what}", location=f"line {self._last_line}")
        number, line = self._lines[self._pos]
        self._pos += 1
        tokens = [token for token in _TOKEN_SPLIT.split(line) if token]
        values = []
        for token in tokens:
            try:
                values.append(float(token))
            except ValueError:
                raise ParseError(f"non-numeric token {token!r} in {what}", location=f"line {number}") from None
        if expected is not None and len(values) != expected:
            raise ParseError(f"{what}: expected {expected} values, got {len(values)}", location=f"line {number}")
        return number, np.array(values)

    def next_counts(self, what: str, expected: int | None = None) -> tuple[int, list[int]]:
        number, values = self.next_values(what, expected)
        if np.any(values != np.round(values)) or np.any(values < 1):
            raise ParseError(f"{what} must be positive integers", location=f"line {number}")
        return number, [int(v) for v in values]

    def remaining(self) -> int | None:
        """Line number of the first unread data line, if any."""
        return self._lines[self._pos][0] if self._pos < len(self._lines) else None


def _is_trivial_output(layer: LinearLayer, norm: Normalization) -> bool:
    return (
        layer.in_dim == layer.out_dim
        and np.array_equal(layer.weights, np.eye(layer.out_dim))
        and not np.any(layer.bias)
        and not np.any(norm.output_mean)
        and np.all(norm.output_range == 1)
    )


def parse_nnet(text: str) -> Network:
    """Parse the NNet text format.

    ReLU follows every layer but the last. A trailing identity layer with zero
    bias and trivial output normalization is dropped so that networks ending in
    a ReLU can be stored.
    """
    reader = _NNetReader(text)
    number, counts = reader.next_counts("counts line")
    if len(counts) < 3:
        raise ParseError("counts line needs numLayers, inputSize, outputSize", location=f"line {number}")
    num_layers, input_size, output_size = counts[:3]

    number, sizes = reader.next_counts("layer sizes", expected=num_layers + 1)
    if sizes[0] != input_size or sizes[-1] != output_size:
        raise ParseError("layer sizes disagree with the counts line", location=f"line {number}")

    reader.next_values("legacy flag line")
    _, mins = reader.next_values("input minimums", expected=input_size)
    _, maxes = reader.next_values("input maximums", expected=input_size)
    _, means = reader.next_values("means", expected=input_size + 1)
    number, ranges = reader.next_values("ranges", expected=input_size + 1)
    if np.any(ranges == 0):
        raise ParseError("normalization ranges must be nonzero", location=f"line {number}")

    norm = Normalization(
        input_mean=means[:-1],
        input_range=ranges[:-1],
        output_mean=np.full(output_size, means[-1]),
        output_range=np.full(output_size, ranges[-1]),
        input_min=mins,
        input_max=maxes,
    )

    linear: list[LinearLayer] = []
    for k in range(num_layers):
        rows = [reader.next_values(f"layer {k} weight row", expected=sizes[k])[1] for _ in range(sizes[k + 1])]
        bias = [reader.next_values(f"layer {k} bias", expected=1)[1][0] for _ in range(sizes[k + 1])]
        linear.append(LinearLayer(np.vstack(rows), np.array(bias)))

    extra = reader.remaining()
    if extra is not None:
        raise ParseError("unexpected data after the last layer", location=f"line {extra}")

    layers: list[Layer] = []
    for k, layer in enumerate(linear):
        layers.append(layer)
        if k < num_layers - 1:
            layers.append(ActivationLayer(Activation.RELU, layer.out_dim))
    if len(linear) > 1 and _is_trivial_output(linear[-1], norm):
        layers.pop()
        logger.debug("Dropped trailing identity layer of the NNet file")
    return Network(tuple(layers), norm)


# ---------------------------------------------------------------------------
# JSON format
# ---------------------------------------------------------------------------

def _json_array(value: object, path: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise ParseError("expected a numeric array", location=path) from None
    if arr.ndim != ndim:
        raise ParseError(f"expected a {ndim}-dimensional array", location=path)
    return arr


def _parse_json_layer(entry: object, path: str, width: int | None) -> Layer:
    if not isinstance(entry, dict):
        raise ParseError("layer must be an object", location=path)
    kind = entry.get("type")
    if kind == "linear":
        for key in ("weights", "bias"):
            if key not in entry:
                raise ParseError(f"missing field '{key}'", location=path)
        try:
            return LinearLayer(
                _json_array(entry["weights"], f"{path}.weights", 2),
                _json_array(entry["bias"], f"{path}.bias", 1),
            )
        except ContractError as exc:
            raise ParseError(str(exc), location=path) from exc
    try:
        fn = Activation(kind)
    except ValueError:
        raise ParseError(f"unsupported layer type {kind!r}", location=f"{path}.type") from None
    declared = entry.get("width", width)
    if declared is None:
        raise ParseError("activation layer needs a 'width' when it comes first", location=path)
    if not isinstance(declared, int) or declared <= 0:
        raise ParseError("width must be a positive integer", location=f"{path}.width")
    return ActivationLayer(fn, declared)


def parse_json_net(text: str) -> Network:
    """Parse {"layers": [...], "normalization": {...}} into a Network."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", location=f"line {exc.lineno}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("layers"), list):
        raise ParseError("expected an object with a 'layers' list", location="$")
    if not doc["layers"]:
        raise ParseError("network needs at least one layer", location="$.layers")

    layers: list[Layer] = []
    width = None
    for k, entry in enumerate(doc["layers"]):
        layer = _parse_json_layer(entry, f"$.layers[{k}]", width)
        width = layer.out_dim if isinstance(layer, LinearLayer) else layer.width
        layers.append(layer)

    norm = None
    if doc.get("normalization") is not None:
        raw = doc["normalization"]
        if not isinstance(raw, dict):
            raise ParseError("normalization must be an object", location="$.normalization")
        fields = {}
        for key in ("input_mean", "input_range", "output_mean", "output_range", "input_min", "input_max"):
            if key in raw:
                fields[key] = _json_array(raw[key], f"$.normalization.{key}", 1)
            elif key not in ("input_min", "input_max"):
                raise ParseError(f"missing field '{key}'", location="$.normalization")
        try:
            norm = Normalization(**fields)
        except ContractError as exc:
            raise ParseError(str(exc), location="$.normalization") from exc

    try:
        return Network(tuple(layers), norm)
    except ContractError as exc:
        raise ParseError(str(exc), location="$.layers") from exc


def serialize_json_net(net: Network) -> str:
    layers = []
    for layer in net.layers:
        if isinstance(layer, LinearLayer):
            layers.append({"type": "linear", "weights": layer.weights.tolist(), "bias": layer.bias.tolist()})
        else:
            layers.append({"type": layer.fn.value, "width": layer.width})
    doc: dict[str, object] = {"layers": layers}
    if net.normalization is not None:
        norm = net.normalization
        doc["normalization"] = {
            key: getattr(norm, key).tolist()
            for key in ("input_mean", "input_range", "output_mean", "output_range", "input_min", "input_max")
            if getattr(norm, key) is not None
        }
    return json.dumps(doc, indent=2)


def load_network(path: Path) -> Network:
    """Load a network, choosing the format from the file extension."""
    path = Path(path)
    match path.suffix.lower():
        case ".nnet":
            net = parse_nnet(read_text(path))
        case ".json":
            net = parse_json_net(read_text(path))
        case suffix:
            raise ParseError(f"unsupported network file extension {suffix!r}", location=str(path))
    logger.info("Loaded %s: %d layers, %d inputs, %d outputs", path.name, len(net.layers), net.input_dim, net.output_dim)
    return net
