import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import expit

from conftest import SQRT_HALF
from zonoverify.benchmark import random_relu_network
from zonoverify.enclosure import enclose_relu, enclose_smooth, propagate, propagate_batch
from zonoverify.errors import ContractError
from zonoverify.network import Activation, ActivationLayer, LinearLayer, Network, forward_batch
from zonoverify.setlib import INPUT_LAYER, Interval, Zonotope, interval_hull, support_value


def random_input_set(rng: np.random.Generator, dim: int) -> Zonotope:
    center = rng.uniform(-1.0, 1.0, size=dim)
    return Zonotope.from_interval(Interval(center - rng.uniform(0.05, 0.6, size=dim), center + 0.3))


def sample_input_set(rng: np.random.Generator, z: Zonotope, count: int) -> np.ndarray:
    return z.center + rng.uniform(-1.0, 1.0, size=(count, z.num_generators)) @ z.generators.T


def assert_contains_outputs(trace, outputs, rng):
    hull = interval_hull(trace.output)
    assert np.all(outputs >= hull.lower - 1e-9)
    assert np.all(outputs <= hull.upper + 1e-9)
    for a in rng.normal(size=(20, trace.output.dim)):
        assert np.max(outputs @ a) <= support_value(trace.output, a) + 1e-9


def test_example_propagation_is_exact(net):
    trace = propagate(net, Zonotope(np.zeros(2), SQRT_HALF * np.eye(2)))

    hidden = trace.layers[0].pre_activation
    assert_allclose(hidden.center, [1.0, 0.0], atol=1e-12)
    assert_allclose(hidden.generators, 0.5 * np.array([[1.0, -1.0], [1.0, 1.0]]), atol=1e-12)

    assert_allclose(trace.output.center, [1.0, 0.25], atol=1e-12)
    # neuron 0 sits on zero up to rounding and may carry a rounding-sized error column
    rounding = trace.output.column_of(1, 0)
    if rounding is not None:
        assert np.all(np.abs(trace.output.generators[:, rounding]) <= 1e-12)
    kept = [j for j in range(trace.output.num_generators) if j != rounding]
    assert_allclose(trace.output.generators[:, kept], 0.25 * np.array([[2.0, -2.0, 0.0], [1.0, 1.0, 1.0]]), atol=1e-12)
    assert trace.output.column_of(1, 1) == kept[-1]
    assert_array_equal(trace.layers[0].unstable, [False, True])


def test_enclose_relu_unstable_neuron():
    z, slopes, error = enclose_relu(Zonotope(np.zeros(1), np.ones((1, 1))))
    assert_allclose(slopes, [0.5])
    assert_allclose(error.lower, [0.0])
    assert_allclose(error.upper, [0.5])
    assert z.num_generators == 2


def test_enclose_relu_stable_active_neuron():
    z, slopes, error = enclose_relu(Zonotope(np.array([2.0]), np.ones((1, 1))))
    assert_array_equal(slopes, [1.0])
    assert_array_equal(error.upper, [0.0])
    assert z.num_generators == 1


def test_enclose_relu_stable_inactive_neuron():
    z, slopes, _ = enclose_relu(Zonotope(np.array([-2.0]), np.ones((1, 1))))
    assert_array_equal(slopes, [0.0])
    assert_array_equal(z.center, [0.0])
    assert_array_equal(z.generators, [[0.0]])


@pytest.mark.parametrize(("center", "expected_slope"), [(1.0, 1.0), (-1.0, 0.0)])
def test_enclose_relu_rounding_crossing_stays_sound(center, expected_slope):
    # bounds cross zero by about 2e-16
    z = Zonotope(np.array([center]), np.array([[1.0000000000000002]]))
    bounds = interval_hull(z)
    _, slopes, error = enclose_relu(z)
    assert_array_equal(slopes, [expected_slope])
    assert error.upper[0] > 0
    assert error.upper[0] <= 1e-15
    for x in (bounds.lower[0], 0.0, bounds.upper[0]):
        assert slopes[0] * x + error.lower[0] <= max(x, 0.0) <= slopes[0] * x + error.upper[0]


def test_enclose_relu_asymmetric_bounds():
    # bounds [-2, 1]
    _, slopes, error = enclose_relu(Zonotope(np.array([-0.5]), np.array([[1.5]])))
    assert_allclose(slopes, [1 / 3])
    assert_allclose(error.upper, [2 / 3])


@settings(deadline=None, max_examples=50)
@given(st.floats(-5.0, -0.01), st.floats(0.01, 5.0))
def test_enclose_relu_touches_at_both_ends(lower, upper):
    _, slopes, error = enclose_relu(Zonotope(np.array([(lower + upper) / 2]), np.array([[(upper - lower) / 2]])))
    lam, gap = slopes[0], error.upper[0]
    assert gap == pytest.approx(-lam * lower)
    assert lam * lower + gap == pytest.approx(0.0, abs=1e-12)
    assert lam * upper + gap == pytest.approx(upper)
    for x in np.linspace(lower, upper, 101):
        assert lam * x - 1e-12 <= max(x, 0.0) <= lam * x + gap + 1e-12


def test_enclose_smooth_point_sigmoid():
    _, slopes, error = enclose_smooth(Zonotope(np.zeros(1), np.zeros((1, 0))), Activation.SIGMOID)
    assert_allclose(slopes, [0.25])
    # sigmoid(0) - 0.25 * 0
    assert_allclose(error.center, [0.5])
    assert error.radius[0] <= 1e-8


def test_enclose_smooth_tanh_is_symmetric():
    _, _, error = enclose_smooth(Zonotope(np.zeros(1), np.array([[1.7]])), Activation.TANH)
    assert error.lower[0] == pytest.approx(-error.upper[0], abs=1e-12)
    assert error.upper[0] > 0


def test_enclose_smooth_sigmoid_matches_dense_sampling():
    _, slopes, error = enclose_smooth(Zonotope(np.zeros(1), np.ones((1, 1))), Activation.SIGMOID)
    xs = np.linspace(-1.0, 1.0, 100_000)
    deviation = expit(xs) - slopes[0] * xs
    assert slopes[0] == pytest.approx((expit(1.0) - expit(-1.0)) / 2)
    assert error.lower[0] <= deviation.min() and deviation.max() <= error.upper[0]
    assert error.lower[0] == pytest.approx(deviation.min(), abs=1e-6)
    assert error.upper[0] == pytest.approx(deviation.max(), abs=1e-6)


@settings(deadline=None, max_examples=100)
@given(st.sampled_from([Activation.SIGMOID, Activation.TANH]), st.floats(-6.0, 6.0), st.floats(0.0, 6.0))
def test_enclose_smooth_bounds_deviation(fn, center, radius):
    _, slopes, error = enclose_smooth(Zonotope(np.array([center]), np.array([[radius]])), fn)
    xs = np.linspace(center - radius, center + radius, 2_001)
    deviation = fn.apply(xs) - slopes[0] * xs
    assert np.all(deviation >= error.lower[0])
    assert np.all(deviation <= error.upper[0])


def test_enclose_smooth_rejects_relu():
    with pytest.raises(ContractError):
        enclose_smooth(Zonotope(np.zeros(1), np.ones((1, 1))), Activation.RELU)


def test_linear_network_is_exact():
    w = np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, 3.0]])
    net = Network((LinearLayer(w, np.array([1.0, 0.0, -1.0])),))
    trace = propagate(net, Zonotope(np.array([0.5, -0.5]), np.eye(2)))
    assert trace.layers == ()
    assert_allclose(trace.output.center, w @ np.array([0.5, -0.5]) + [1.0, 0.0, -1.0])
    assert_allclose(trace.output.generators, w)


def test_stable_network_keeps_input_factors_only():
    net = Network((
        LinearLayer(np.eye(2), np.array([5.0, -5.0])),
        ActivationLayer(Activation.RELU, 2),
        LinearLayer(np.array([[1.0, 1.0]]), np.zeros(1)),
    ))
    trace = propagate(net, Zonotope(np.zeros(2), np.eye(2)))
    assert trace.output.num_generators == 2
    assert_allclose(trace.output.center, [5.0])
    assert_allclose(trace.output.generators, [[1.0, 0.0]])


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_relu_propagation_contains_sampled_outputs(seed):
    rng = np.random.default_rng(seed)
    net = random_relu_network(rng, 3, [int(rng.integers(2, 9)), int(rng.integers(2, 9))], 2)
    input_set = random_input_set(rng, 3)
    trace = propagate(net, input_set)
    outputs = forward_batch(net, sample_input_set(rng, input_set, 10_000))
    assert_contains_outputs(trace, outputs, rng)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**32 - 1), st.sampled_from([Activation.SIGMOID, Activation.TANH]))
def test_smooth_propagation_contains_sampled_outputs(seed, fn):
    rng = np.random.default_rng(seed)
    net = Network((
        LinearLayer(rng.normal(size=(4, 2)), rng.normal(size=4)),
        ActivationLayer(fn, 4),
        LinearLayer(rng.normal(size=(2, 4)), rng.normal(size=2)),
    ))
    input_set = random_input_set(rng, 2)
    trace = propagate(net, input_set)
    outputs = forward_batch(net, sample_input_set(rng, input_set, 10_000))
    assert_contains_outputs(trace, outputs, rng)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_trace_keeps_input_factors_first(seed):
    rng = np.random.default_rng(seed)
    net = random_relu_network(rng, 2, [5, 4], 2)
    trace = propagate(net, random_input_set(rng, 2))
    for z in [*(record.pre_activation for record in trace.layers), trace.output]:
        assert_array_equal(z.provenance[:2], [[INPUT_LAYER, 0], [INPUT_LAYER, 1]])
    for record in trace.layers:
        assert np.all(record.error_radii >= 0)
        assert np.all(record.error_radii[~record.unstable] == 0)


def test_propagate_rejects_wrong_dimension(net):
    with pytest.raises(ContractError):
        propagate(net, Zonotope(np.zeros(3), np.eye(3)))


def test_batch_matches_single_propagation():
    rng = np.random.default_rng(3)
    net = random_relu_network(rng, 2, [6], 2)
    inputs = [random_input_set(rng, 2) for _ in range(64)]
    batched = propagate_batch(net, inputs)
    halves = propagate_batch(net, inputs[:20]) + propagate_batch(net, inputs[20:])
    for z, trace, other in zip(inputs, batched, halves, strict=True):
        single = propagate(net, z)
        for result in (trace, other):
            assert_array_equal(result.output.center, single.output.center)
            assert_array_equal(result.output.generators, single.output.generators)
        outputs = forward_batch(net, sample_input_set(rng, z, 500))
        assert_contains_outputs(trace, outputs, rng)


def test_batch_rejects_mixed_shapes(net):
    with pytest.raises(ContractError):
        propagate_batch(net, [Zonotope(np.zeros(2), np.eye(2)), Zonotope(np.zeros(2), np.ones((2, 1)))])
