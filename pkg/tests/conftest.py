"""Shared fixtures: the two-neuron example network, its properties, and random instances."""
from pathlib import Path

import numpy as np
import pytest

from zonoverify.network import Activation, ActivationLayer, LinearLayer, Network
from zonoverify.setlib import HPolytope, Interval
from zonoverify.specparse import VerificationTask

FIXTURES = Path(__file__).parent / "fixtures"

SQRT_HALF = 2**-0.5


def example_network() -> Network:
    """y = relu(W x + b) with W = [[1, -1], [1, 1]] / sqrt(2), b = [1, 0]."""
    weights = SQRT_HALF * np.array([[1.0, -1.0], [1.0, 1.0]])
    return Network((LinearLayer(weights, np.array([1.0, 0.0])), ActivationLayer(Activation.RELU, 2)))


def example_task(threshold: float) -> VerificationTask:
    """Input box [-1/sqrt(2), 1/sqrt(2)]^2, unsafe when y_0 >= threshold."""
    box = Interval(np.full(2, -SQRT_HALF), np.full(2, SQRT_HALF))
    return VerificationTask(box, (HPolytope(np.array([[-1.0, 0.0]]), np.array([-threshold])),))


def sample_box(rng: np.random.Generator, box: Interval, count: int) -> np.ndarray:
    return rng.uniform(box.lower, box.upper, size=(count, box.dim))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def net() -> Network:
    return example_network()


@pytest.fixture
def falsifiable_task() -> VerificationTask:
    return example_task(1.5)


@pytest.fixture
def safe_task() -> VerificationTask:
    return example_task(2.5)
