import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphonlab.functionals import (
    ENTROPY,
    NEG_SQUARE,
    binary_entropy,
    constant,
    from_table,
    get_functional,
    jensen_gap,
)


def test_entropy_endpoints_and_half():
    assert binary_entropy(0.0) == 0.0
    assert binary_entropy(1.0) == 0.0
    assert binary_entropy(0.5) == pytest.approx(1.0, abs=1e-15)


def test_entropy_matches_log2_formula():
    for x in (0.1, 0.3, 0.7, 0.999):
        expect = -(x * math.log2(x) + (1 - x) * math.log2(1 - x))
        assert binary_entropy(x) == pytest.approx(expect, abs=1e-14)


def test_entropy_of_point_seven():
    assert binary_entropy(0.7) == pytest.approx(0.8812908992306927, abs=1e-15)


def test_entropy_vectorised():
    out = ENTROPY(np.array([[0.0, 0.5], [0.5, 1.0]]))
    assert out.shape == (2, 2)
    assert np.allclose(out, [[0, 1], [1, 0]])


def test_neg_square():
    assert NEG_SQUARE(0.5) == -0.25
    assert NEG_SQUARE(1.0) == -1.0


def test_builtin_lookup():
    assert get_functional("H") is ENTROPY
    assert get_functional("neg_square") is NEG_SQUARE
    assert get_functional(ENTROPY) is ENTROPY
    with pytest.raises(ValueError, match="unknown functional"):
        get_functional("cubic")


def test_table_interpolates_and_is_not_strict():
    f = from_table([0, 0.5, 1], [0, 1, 0])
    assert f(0.25) == pytest.approx(0.5)
    assert not f.strictly_concave
    assert ENTROPY.strictly_concave and NEG_SQUARE.strictly_concave


@pytest.mark.parametrize(
    "xs, ys",
    [([0, 1], [0]), ([0.1, 1], [0, 0]), ([0, 0.5, 0.5, 1], [0, 1, 1, 0]), ([0, 1], [0, np.inf])],
)
def test_table_rejects_bad_input(xs, ys):
    with pytest.raises(ValueError):
        from_table(xs, ys)


def test_constant_table():
    assert constant(3.0)(0.37) == 3.0


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=12),
    st.data(),
    st.sampled_from(["H", "neg_square"]),
)
def test_jensen_primitive(values, data, name):
    weights = data.draw(st.lists(st.floats(0.01, 10), min_size=len(values), max_size=len(values)))
    assert jensen_gap(get_functional(name), values, weights) >= -1e-9
