import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from conftest import SQRT_HALF
from zonoverify.errors import ContractError, ParseError
from zonoverify.network import forward
from zonoverify.setlib import HPolytope, Interval
from zonoverify.specparse import (
    VerificationTask,
    parse_sexp,
    parse_vnnlib,
    parse_witness,
    tokenize,
    write_witness,
)

HEADER = """
(declare-const X_0 Real)
(declare-const X_1 Real)
(declare-const Y_0 Real)
(declare-const Y_1 Real)
(assert (>= X_0 -1))
(assert (<= X_0 1))
(assert (>= X_1 -1))
(assert (<= X_1 1))
"""


def parse_fixture(fixtures_dir, name):
    return parse_vnnlib((fixtures_dir / name).read_text(), 2, 2)


def test_tokenize_drops_comments():
    assert tokenize("; note\n(assert (<= Y_0 1)) ; trailing") == ["(", "assert", "(", "<=", "Y_0", "1", ")", ")"]


def test_parse_sexp_nested_forms():
    assert parse_sexp(tokenize("(a (b c)) d")) == [["a", ["b", "c"]], "d"]


def test_parse_sexp_unbalanced():
    with pytest.raises(ParseError, match="unbalanced"):
        parse_sexp(tokenize("(assert (<= Y_0 1)"))
    with pytest.raises(ParseError, match="unexpected"):
        parse_sexp(tokenize(")"))


def test_single_halfspace(fixtures_dir):
    task = parse_fixture(fixtures_dir, "example1_unsafe_1p5.vnnlib")
    assert_allclose(task.input_box.lower, [-SQRT_HALF, -SQRT_HALF])
    assert_allclose(task.input_box.upper, [SQRT_HALF, SQRT_HALF])
    assert len(task.unsafe) == 1
    assert_array_equal(task.unsafe[0].a_mat, [[-1.0, 0.0]])
    assert_array_equal(task.unsafe[0].b_vec, [-1.5])


def test_disjunction_gives_one_polytope_per_branch(fixtures_dir):
    task = parse_fixture(fixtures_dir, "disjunction.vnnlib")
    assert len(task.unsafe) == 2
    assert_array_equal(task.unsafe[0].a_mat, [[1.0, 0.0]])
    assert_array_equal(task.unsafe[0].b_vec, [0.0])
    assert_array_equal(task.unsafe[1].a_mat, [[0.0, -1.0]])
    assert_array_equal(task.unsafe[1].b_vec, [-2.0])


def test_linear_combinations_and_strict_comparisons(fixtures_dir):
    task = parse_fixture(fixtures_dir, "linear_combo.vnnlib")
    assert_array_equal(task.input_box.lower, [0.0, -0.5])
    assert_array_equal(task.input_box.upper, [0.5, 0.5])
    (unsafe,) = task.unsafe
    assert_allclose(unsafe.a_mat, [[2.0, -2.0], [-1.0, 0.0]])
    assert_allclose(unsafe.b_vec, [-1.0, -0.25])


def test_unbounded_input(fixtures_dir):
    with pytest.raises(ParseError, match="input variable X_1 unbounded") as info:
        parse_fixture(fixtures_dir, "unbounded_input.vnnlib")
    assert info.value.location is not None


def test_nonlinear_atom(fixtures_dir):
    with pytest.raises(ParseError, match="non-linear atom") as info:
        parse_fixture(fixtures_dir, "nonlinear.vnnlib")
    assert info.value.location.startswith("form 9 > assert")


def test_unknown_symbol(fixtures_dir):
    with pytest.raises(ParseError, match="unknown symbol Z_3") as info:
        parse_fixture(fixtures_dir, "unknown_symbol.vnnlib")
    assert info.value.location.startswith("form 9")


def test_variable_beyond_network_dimension():
    with pytest.raises(ParseError, match="unknown symbol Y_5"):
        parse_vnnlib("(declare-const Y_5 Real)", 2, 2)


def test_missing_output_constraint():
    with pytest.raises(ParseError, match="no output constraint"):
        parse_vnnlib(HEADER, 2, 2)


def test_equality_becomes_two_rows():
    (unsafe,) = parse_vnnlib(HEADER + "(assert (= Y_0 Y_1))", 2, 2).unsafe
    assert_array_equal(unsafe.a_mat, [[1.0, -1.0], [-1.0, 1.0]])
    assert_array_equal(unsafe.b_vec, [0.0, 0.0])


def test_disjunctions_are_multiplied_out():
    text = HEADER + "(assert (or (<= Y_0 0) (>= Y_0 1)))\n(assert (or (<= Y_1 0) (>= Y_1 1)))"
    task = parse_vnnlib(text, 2, 2)
    assert len(task.unsafe) == 4
    assert all(polytope.num_constraints == 2 for polytope in task.unsafe)


def test_mixed_atom_rejected():
    with pytest.raises(ParseError, match="mixes input and output"):
        parse_vnnlib(HEADER + "(assert (<= X_0 Y_0))", 2, 2)


@pytest.mark.parametrize(
    ("assertion", "message"),
    [
        ("(>= Y_0 nan)", "non-finite constant nan"),
        ("(<= Y_0 -inf)", "non-finite constant -inf"),
        ("(<= (* inf Y_0) 1)", "non-finite constant inf"),
        ("(<= (* 1e200 1e200 Y_0) 1)", "constant product overflows"),
    ],
)
def test_non_finite_constants_rejected(assertion, message):
    with pytest.raises(ParseError, match=message) as excinfo:
        parse_vnnlib(HEADER + f"(assert {assertion})", 2, 2)
    assert excinfo.value.location.startswith("form 9 > assert")


def test_non_finite_input_bound_rejected():
    with pytest.raises(ParseError, match="non-finite constant infinity"):
        parse_vnnlib(HEADER.replace("(<= X_1 1)", "(<= X_1 infinity)") + "(assert (>= Y_0 1))", 2, 2)


@settings(deadline=None, max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_canonical_rows_agree_with_source(seed):
    rng = np.random.default_rng(seed)
    coefs = np.round(rng.normal(size=2), 3)
    shift = round(float(rng.normal()), 3)
    op = ("<=", ">=")[rng.integers(2)]
    text = HEADER + f"(assert ({op} (+ (* {coefs[0]} Y_0) (* {coefs[1]} Y_1)) {shift}))"
    (unsafe,) = parse_vnnlib(text, 2, 2).unsafe
    for y in rng.normal(scale=3.0, size=(50, 2)):
        value = coefs @ y
        direct = value <= shift if op == "<=" else value >= shift
        if abs(value - shift) > 1e-9:
            assert unsafe.contains(y) == direct


def test_task_validation():
    box = Interval(np.zeros(2), np.ones(2))
    with pytest.raises(ContractError):
        VerificationTask(box, ())
    with pytest.raises(ContractError):
        VerificationTask(box, (HPolytope(np.ones((1, 2)), np.zeros(1)), HPolytope(np.ones((1, 3)), np.zeros(1))))


def test_write_witness_format():
    assert write_witness(np.array([0.5]), np.array([2.0])) == "sat\n((X_0 0.5)\n(Y_0 2))\n"


def test_witness_round_trip():
    rng = np.random.default_rng(11)
    x, y = rng.normal(size=3), rng.normal(size=2)
    parsed_x, parsed_y = parse_witness(write_witness(x, y))
    assert_array_equal(parsed_x, x)
    assert_array_equal(parsed_y, y)


def test_example_counterexample_witness_rechecks(net):
    x = SQRT_HALF * np.array([1.0, -1.0])
    parsed_x, parsed_y = parse_witness(write_witness(x, forward(net, x)))
    assert forward(net, parsed_x)[0] >= 1.5
    assert parsed_y[0] >= 1.5


def test_witness_with_gap_rejected():
    with pytest.raises(ParseError, match="contiguous"):
        parse_witness("sat\n((X_0 1)\n(X_2 1)\n(Y_0 0))")
