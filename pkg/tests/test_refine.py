import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from conftest import example_task, sample_box
from zonoverify.benchmark import random_task
from zonoverify.enclosure import propagate
from zonoverify.engine import Heuristic, choose_split, split
from zonoverify.network import forward_batch
from zonoverify.refine import (
    check_verified,
    refine_box,
    refine_union,
    refinement_steps,
    unsafe_input_constraints,
)
from zonoverify.setlib import FactorBox, HPolytope, Zonotope, tighten_factor_bounds


def example_trace(net, task):
    return propagate(net, Zonotope.from_interval(task.input_box))


def test_unsafe_constraints_example(net, falsifiable_task):
    cons = unsafe_input_constraints(example_trace(net, falsifiable_task), falsifiable_task.unsafe[0])
    assert_allclose(cons.c_mat, [[-0.5, 0.5]], atol=1e-12)
    assert_allclose(cons.d_vec, [-0.5], atol=1e-12)


def test_unsafe_constraints_higher_threshold(net, safe_task):
    cons = unsafe_input_constraints(example_trace(net, safe_task), safe_task.unsafe[0])
    assert_allclose(cons.c_mat, [[-0.5, 0.5]], atol=1e-12)
    assert_allclose(cons.d_vec, [-1.5], atol=1e-12)


def test_unsafe_constraints_orthogonal_direction(net, falsifiable_task):
    trace = example_trace(net, falsifiable_task)
    # 0 <= 1 holds for every output
    unsafe = HPolytope(np.array([[0.0, 0.0]]), np.array([1.0]))
    cons = unsafe_input_constraints(trace, unsafe)
    assert_allclose(cons.c_mat, [[0.0, 0.0]])
    assert cons.d_vec[0] >= 0


def test_check_verified_examples(net, falsifiable_task, safe_task):
    output = example_trace(net, falsifiable_task).output
    assert not check_verified(output, falsifiable_task.unsafe[0])
    assert check_verified(output, safe_task.unsafe[0])
    assert not check_verified(output, HPolytope(np.zeros((1, 2)), np.zeros(1)))


def test_refine_example_first_iteration(net, falsifiable_task):
    box = refine_box(net, falsifiable_task, FactorBox.full(2), 1, 4, unsafe_index=0)
    assert_allclose(box.lower, [0.0, -1.0], atol=1e-12)
    assert_allclose(box.upper, [1.0, 0.0], atol=1e-12)


def test_refine_example_unreachable_threshold(net, safe_task):
    root = Zonotope.from_interval(safe_task.input_box)
    steps = list(refinement_steps(net, root, safe_task.unsafe[0], FactorBox.full(2), 4, 4))
    # the unrefined output set already misses the unsafe set
    assert steps[0].verified
    assert refine_box(net, safe_task, FactorBox.full(2), 1, 4).is_empty


def test_refine_tightening_alone_detects_empty(net):
    # threshold 2.5 on the first output, without the verification shortcut
    task = example_task(2.5)
    trace = example_trace(net, task)
    cons = unsafe_input_constraints(trace, task.unsafe[0])
    assert tighten_factor_bounds(cons, FactorBox.full(2), 1).is_empty


def test_refine_with_zero_iterations_keeps_box(net, falsifiable_task):
    box = FactorBox(np.array([-0.5, -1.0]), np.array([1.0, 0.25]))
    assert refine_box(net, falsifiable_task, box, 0, 4) is box


def test_refinement_sequence_shrinks(net, falsifiable_task):
    root = Zonotope.from_interval(falsifiable_task.input_box)
    steps = list(refinement_steps(net, root, falsifiable_task.unsafe[0], FactorBox.full(2), 8, 4, shrink_threshold=0.0))
    assert [step.iteration for step in steps] == list(range(len(steps)))
    for before, after in zip(steps, steps[1:], strict=False):
        if after.box.is_empty:
            break
        assert np.all(after.box.lower >= before.box.lower - 1e-12)
        assert np.all(after.box.upper <= before.box.upper + 1e-12)


def test_refine_union_one_box_per_polytope(net):
    task = example_task(1.5)
    boxes = refine_union(net, task, FactorBox.full(2), 2, 4)
    assert len(boxes) == 1
    assert not boxes[0].is_empty


def test_refine_rejects_negative_iterations(net, falsifiable_task):
    root = Zonotope.from_interval(falsifiable_task.input_box)
    with pytest.raises(ValueError):
        list(refinement_steps(net, root, falsifiable_task.unsafe[0], FactorBox.full(2), -1, 4))


@settings(deadline=None, max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_refined_box_keeps_every_unsafe_input(seed):
    net, task = random_task(seed)
    root = Zonotope.from_interval(task.input_box)
    rng = np.random.default_rng(seed)
    xs = sample_box(rng, task.input_box, 10_000)
    unsafe = task.unsafe[0]
    hits = xs[np.all(forward_batch(net, xs) @ unsafe.a_mat.T <= unsafe.b_vec, axis=1)]

    refined = refine_box(net, task, FactorBox.full(root.num_generators), 8, 4, unsafe_index=0)
    if hits.shape[0] == 0:
        return
    assert not refined.is_empty
    radius = task.input_box.radius
    betas = (hits - task.input_box.center) / np.where(radius > 0, radius, 1.0)
    assert all(refined.contains(beta) for beta in betas)


@settings(deadline=None, max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_refinement_is_monotone(seed):
    net, task = random_task(seed)
    root = Zonotope.from_interval(task.input_box)
    previous = FactorBox.full(root.num_generators)
    for step in refinement_steps(net, root, task.unsafe[0], previous, 8, 4, shrink_threshold=0.0):
        if step.box.is_empty:
            break
        assert np.all(step.box.lower >= previous.lower - 1e-12)
        assert np.all(step.box.upper <= previous.upper + 1e-12)
        previous = step.box


@settings(deadline=None, max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_refined_children_keep_every_unsafe_input(seed):
    net, task = random_task(seed)
    root = Zonotope.from_interval(task.input_box)
    rng = np.random.default_rng(seed)
    xs = sample_box(rng, task.input_box, 10_000)
    unsafe = task.unsafe[0]
    hits = xs[np.all(forward_batch(net, xs) @ unsafe.a_mat.T <= unsafe.b_vec, axis=1)]

    box = FactorBox.full(root.num_generators)
    trace = propagate(net, root)
    children, _ = split(trace, box, choose_split(trace, box, Heuristic.ENCLOSURE))
    refined = [refine_box(net, task, child, 8, 4, unsafe_index=0) for child in children]
    radius = task.input_box.radius
    betas = (hits - task.input_box.center) / np.where(radius > 0, radius, 1.0)
    for beta in betas:
        assert any(not child.is_empty and child.contains(beta) for child in refined)
