import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzavg.errors import ConfigurationError
from byzavg.vectors import (
    VectorFamily,
    diameter_cw,
    diameter_cw_norm,
    diameter_l2,
    diameter_lr,
    family_mean,
)
from byzavg.verify import diameter_l2_oracle

from conftest import assert_bounded


def test_diameter_l2_right_triangle():
    assert diameter_l2(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0


def test_diameter_l2_singleton_is_zero():
    assert diameter_l2(np.array([[7.0, 7.0]])) == 0.0


def test_diameter_l2_scalars_brute_force():
    fam = np.array([[0.0], [1.0], [5.0]])
    assert diameter_l2(fam) == diameter_l2_oracle(fam) == 5.0


def test_diameter_cw_example():
    got = diameter_cw(np.array([[0.0, 10.0], [3.0, 4.0]]))
    assert np.array_equal(got, np.array([3.0, 6.0]))


def test_diameter_cw_degenerate_families():
    assert np.array_equal(diameter_cw(np.array([[1.0, 2.0, 3.0]])), np.zeros(3))
    same = np.tile(np.array([2.0, -1.0]), (4, 1))
    assert np.array_equal(diameter_cw(same), np.zeros(2))


def test_diameter_cw_norm_example():
    fam = np.array([[0.0, 10.0], [3.0, 4.0]])
    assert math.isclose(diameter_cw_norm(fam, 2.0), math.sqrt(45.0), rel_tol=1e-12)
    assert diameter_cw_norm(fam, math.inf) == 6.0
    assert diameter_cw_norm(np.tile([1.0, 2.0], (3, 1)), 1.3) == 0.0


def test_diameter_cw_norm_rejects_small_order():
    with pytest.raises(ConfigurationError):
        diameter_cw_norm(np.zeros((2, 2)), 0.5)


def test_family_mean_examples():
    assert family_mean(np.array([[0.0], [1.0], [5.0]])) == np.array([2.0])
    v = np.array([[3.0, -2.0]])
    assert np.array_equal(family_mean(v), v[0])
    assert np.array_equal(family_mean(np.array([[1.0, 2.0], [-1.0, -2.0]])), np.zeros(2))


def test_vector_family_invariants():
    with pytest.raises(ConfigurationError):
        VectorFamily(np.empty((0, 3)))
    with pytest.raises(ConfigurationError):
        VectorFamily(np.array([[1.0, np.nan]]))
    fam = VectorFamily(np.array([1.0, 2.0]))
    assert fam.dim == 1 and len(fam) == 2
    with pytest.raises(ValueError):
        fam.vectors[0, 0] = 9.0  # frozen storage


finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False, width=32)


@st.composite
def families(draw, max_h=6, max_d=4):
    h = draw(st.integers(1, max_h))
    d = draw(st.integers(1, max_d))
    rows = draw(
        st.lists(st.lists(finite_floats, min_size=d, max_size=d), min_size=h, max_size=h)
    )
    return np.array(rows, dtype=float)


@settings(max_examples=150, deadline=None)
@given(families(), st.sampled_from([1.0, 2.0, math.inf]))
def test_sandwich_property(fam, r):
    h, d = fam.shape
    lower = diameter_lr(fam, r)
    cw = diameter_cw_norm(fam, r)
    factor = 1.0 if math.isinf(r) else min(d ** (1 / r), 2 * h ** (1 / r))
    assert_bounded(lower, cw, label="pairwise vs coordinate-wise")
    assert_bounded(cw, factor * lower, label="coordinate-wise cap")


@settings(max_examples=150, deadline=None)
@given(families())
def test_permutation_invariance(fam):
    perm = np.random.default_rng(0).permutation(fam.shape[0])
    assert diameter_l2(fam) == diameter_l2(fam[perm])
    assert np.array_equal(diameter_cw(fam), diameter_cw(fam[perm]))
    assert np.allclose(family_mean(fam), family_mean(fam[perm]), rtol=0, atol=1e-9)


@settings(max_examples=150, deadline=None)
@given(families(), families())
def test_triangle_inequality(F, G):
    h = min(F.shape[0], G.shape[0])
    d = min(F.shape[1], G.shape[1])
    F, G = F[:h, :d], G[:h, :d]
    lhs = diameter_cw(F + G)
    rhs = diameter_cw(F) + diameter_cw(G)
    assert np.all(lhs <= rhs * (1 + 1e-9) + 1e-6)
    assert_bounded(diameter_l2(F + G), diameter_l2(F) + diameter_l2(G), abs_tol=1e-6)
