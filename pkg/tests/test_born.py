import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaylab import born as B
from decaylab import gevrey as g
from decaylab import operators as O

PROF = g.ThetaProfile.exp_power(0.5)


@pytest.fixture(scope="module")
def op_a():
    return O.build_operator(O.Grid("radial", 200, 20.0), O.PotentialSpec.exponential(PROF, 0.5, 0.4))


@pytest.fixture(scope="module")
def op_b():
    # h = 0.1 so the obstacle radius sits on the grid
    return O.build_operator(O.Grid("exterior", 289, 30.0, d=3, a=1.0),
                            O.PotentialSpec.exponential(PROF, 0.5, 0.0, case="b"))


@pytest.fixture(scope="module")
def gamma_a(op_a):
    return B.auto_gamma(op_a, 1.0)


def test_auto_gamma_contraction(op_a, gamma_a):
    for lam in (1.0 - gamma_a, 1.0 + gamma_a):
        assert B.born_series_assemble(op_a, lam, 1.0, gamma_a).contraction <= 0.5


@pytest.mark.parametrize("frac", [-1.0, -0.3, 0.5, 1.0])
def test_case_a_matches_direct(op_a, gamma_a, frac):
    lam = 1.0 + frac * gamma_a
    res = B.born_series_assemble(op_a, lam, 1.0, gamma_a)
    assert res.case == "a"
    assert res.compare(B.direct_weighted_resolvent(op_a, lam)) < 1e-7
    assert "gradient_block" in res.blocks


def test_anchor_point_is_exact(op_a, gamma_a):
    res = B.born_series_assemble(op_a, 1.0, 1.0, gamma_a)
    assert res.contraction == 0.0
    assert res.compare(B.direct_weighted_resolvent(op_a, 1.0)) < 1e-12


def test_anchor_independence(op_a, gamma_a):
    z2 = 1.0 + 0.5 * gamma_a
    g2 = B.auto_gamma(op_a, z2)
    lam = 1.0 + 0.4 * min(gamma_a, g2)
    G1 = B.born_series_assemble(op_a, lam, 1.0, gamma_a).G
    G2 = B.born_series_assemble(op_a, lam, z2, g2).G
    assert O.matrix_norm(G1 - G2) / O.matrix_norm(G1) < 1e-7


def test_gamma_violation(op_a, gamma_a):
    with pytest.raises(B.GammaTooLargeError):
        B.born_series_assemble(op_a, 1.0 + 2 * gamma_a, 1.0, gamma_a)


def test_contraction_over_half_rejected(op_a):
    with pytest.raises(B.GammaTooLargeError):
        B.born_series_assemble(op_a, 1.5, 1.0, gamma=1.0)


@settings(max_examples=10, deadline=None)
@given(st.floats(-1.0, 1.0))
def test_case_a_property(op_a, gamma_a, frac):
    lam = 1.0 + frac * gamma_a
    res = B.born_series_assemble(op_a, lam, 1.0, gamma_a)
    assert res.contraction <= 0.5
    assert res.compare(B.direct_weighted_resolvent(op_a, lam)) < 1e-7


def test_case_b_matches_direct(op_b):
    gamma = B.auto_gamma(op_b, 1.0)
    for lam in (1.0 - gamma, 1.0 + 0.5 * gamma):
        res = B.born_series_assemble(op_b, lam, 1.0, gamma)
        assert res.case == "b"
        assert res.compare(B.direct_weighted_resolvent(op_b, lam)) < 1e-7


def test_case_b_needs_grid_aligned_obstacle():
    op = O.build_operator(O.Grid("exterior", 100, 30.0, d=3, a=1.0),
                          O.PotentialSpec.exponential(PROF, 0.5, 0.0, case="b"))
    with pytest.raises(ValueError):
        B.born_series_assemble(op, 1.0, 1.0, gamma=0.1)


def test_direct_resolvent_is_symmetric(op_b):
    # complex symmetric: mu (P + iW - lam^2)^{-1} mu with real P
    G = B.direct_weighted_resolvent(op_b, 1.2)
    assert np.allclose(G, G.T, atol=1e-12)
