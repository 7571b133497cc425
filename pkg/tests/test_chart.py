import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weylcps.chart import (Chart, ScalarField, VectorField, coordinate_field, eval_field, fd_oracle,
                           lie_bracket)
from weylcps.errors import DimensionError, OutOfChart
from weylcps.metric_lab import kahler_warped_torus

TORUS = Chart(("s", "t"), periods=(1.0, 1.0))


def test_chart_invariants():
    with pytest.raises(DimensionError):
        Chart(("s",), periods=(1.0,))
    with pytest.raises(ValueError):
        Chart(("s", "s"), periods=(1.0, 1.0))


def test_constant_field_jet():
    v, g, h = eval_field(ScalarField(TORUS, "1"), [0.3, 0.4])
    assert v == 1.0 and not g.any() and not h.any()


def test_coordinate_field_value():
    v, g, _ = eval_field(ScalarField(TORUS, "t"), [0.2, 0.9])
    assert v == 0.9
    np.testing.assert_array_equal(g, [0.0, 1.0])


def test_periodic_reduction_before_evaluation():
    f = ScalarField(TORUS, "sin(2*pi*t)")
    reduced = f.values([0.0, 1.25])
    direct = f.values([0.0, 1.25], reduce=False)
    assert reduced == pytest.approx(1.0, abs=1e-15)
    assert abs(reduced - direct) < 1e-12


@given(st.integers(0, 63), st.integers(0, 63), st.integers(-5, 5), st.integers(-5, 5))
def test_integer_period_shifts_are_bit_exact(i, j, k, m):
    # dyadic points so the modular reduction is exact
    f = ScalarField(TORUS, "exp(0.3*sin(2*pi*s))*cos(2*pi*t) + s*t")
    p = np.array([i / 64, j / 64])
    a = f.jet(p)
    b = f.jet(p + np.array([k, m]))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_out_of_chart():
    c = Chart(("r", "t"), periods=(None, 1.0), bounds=((0.0, 1.0), None))
    with pytest.raises(OutOfChart):
        ScalarField(c, "r").values([1.5, 0.0])


def test_bracket_of_coordinate_fields_vanishes():
    p = np.array([0.3, 0.6])
    np.testing.assert_array_equal(lie_bracket(coordinate_field(TORUS, 0), coordinate_field(TORUS, 1), p), 0.0)


def test_bracket_with_linear_coefficient():
    X = coordinate_field(TORUS, 0)
    Y = VectorField(TORUS, ["0", "s"])
    p = np.array([0.3, 0.6])
    br = lie_bracket(X, Y, p)
    np.testing.assert_allclose(br, [0.0, 1.0], atol=1e-15)
    # finite-difference oracle on the same formula
    xv, yv = X.values(p), Y.values(p)
    _, xd, _ = fd_oracle(X, p)
    _, yd, _ = fd_oracle(Y, p)
    np.testing.assert_allclose(yd @ xv - xd @ yv, br, atol=1e-9)


def test_bracket_of_unit_field_and_its_rotation():
    cps = kahler_warped_torus()
    p = np.array([0.1, 0.2, 0.0, 0.0])
    jxi = coordinate_field(cps.chart, 1)
    br = lie_bracket(cps.xi, jxi, p)
    phi = ScalarField(cps.chart, "0.3*sin(2*pi*s)*cos(2*pi*t)")
    _, dphi, _ = fd_oracle(phi, p)
    np.testing.assert_allclose(br, -dphi[1] * cps.xi.values(p), atol=1e-9)


POLY = ["1 + s*t", "t^2 - s", "s^3", "s*t*t", "2*s - t^2", "t + s^2"]


def test_bracket_antisymmetry_and_jacobi():
    c = Chart(("s", "t"), periods=(None, None), bounds=((-2.0, 2.0), (-2.0, 2.0)))
    X, Y, Z = VectorField(c, POLY[0:2]), VectorField(c, POLY[2:4]), VectorField(c, POLY[4:6])
    pts = np.random.default_rng(0).uniform(-1, 1, (100, 2))
    np.testing.assert_array_equal(lie_bracket(X, Y, pts), -lie_bracket(Y, X, pts))

    def nested(A, B, C, p):
        # [A, [B, C]] with the derivative of [B, C] assembled from exact Hessians
        av, ad, _ = A.jet(p)
        bv, bd, bh = B.jet(p)
        cv, cd, ch = C.jet(p)
        bc = lie_bracket(B, C, p)
        dbc = (np.einsum("bkli,bl->bki", ch, bv) + np.einsum("bkl,bli->bki", cd, bd)
               - np.einsum("bkli,bl->bki", bh, cv) - np.einsum("bkl,bli->bki", bd, cd))
        return np.einsum("bki,bi->bk", dbc, av) - np.einsum("bkl,bl->bk", ad, bc)

    jac = nested(X, Y, Z, pts) + nested(Y, Z, X, pts) + nested(Z, X, Y, pts)
    assert np.max(np.abs(jac)) < 1e-9


def test_fd_oracle_examples():
    v, g, h = fd_oracle(ScalarField(TORUS, "7"), [0.1, 0.2])
    assert not g.any() and not h.any()
    _, g, _ = fd_oracle(ScalarField(TORUS, "sin(2*pi*s)"), [0.0, 0.0])
    assert g[0] == pytest.approx(2 * math.pi, rel=1e-6)
    c = Chart(("s", "t"), periods=(None, None), bounds=((-1.0, 1.0), (-1.0, 1.0)))
    _, _, h = fd_oracle(ScalarField(c, "s^2"), [0.3, 0.1])
    assert h[0, 0] == pytest.approx(2.0, abs=1e-4)
    with pytest.raises(OutOfChart):
        fd_oracle(ScalarField(c, "s"), [1.0, 0.0])


def test_halton_sample_is_reproducible():
    a, b = TORUS.sample(50, 3), TORUS.sample(50, 3)
    assert np.array_equal(a, b) and a.min() >= 0 and a.max() < 1
