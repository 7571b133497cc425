import math

import numpy as np
import pytest

from weylcps.chart import Chart, OneFormField, VectorField, coordinate_field, lie_bracket
from weylcps.connection import (ConnectionSample, WeylData, christoffels, covariant_derivative, curvature,
                                curvature_on_endo, differential_forms, differential_ops, lee_endomorphism,
                                nabla_endo, weyl_derivative, wedge)
from weylcps.jets import jeinsum
from weylcps.metric_lab import (MetricField, conformal_product, flat_torus, kahler_warped_torus, sphere_chart,
                                surface_conformal_torus)
from weylcps.selfcheck import fd_christoffels, rel_err

SQ = Chart(("x", "y"), periods=(1.0, 1.0))
FLAT = MetricField(SQ, [[1, 0], [0, 1]])


def _builtins():
    g1, g2 = flat_torus(2, names=("s", "u")), flat_torus(2, names=("t", "v"))
    return [flat_torus(4), sphere_chart(), kahler_warped_torus(), surface_conformal_torus(),
            conformal_product(g1, g2, "0.3*sin(2*pi*t)*cos(2*pi*u)", "0.2*cos(2*pi*s)")]


BUILTINS = _builtins()
IDS = [c.name for c in BUILTINS]


def _poly_fields(chart, seed):
    rng = np.random.default_rng(seed)
    n = chart.dim
    out = []
    for _ in range(2):
        comps = []
        for _k in range(n):
            a, b = rng.integers(0, n, 2)
            c = rng.uniform(-1, 1, 3)
            comps.append(f"{c[0]:.3f} + {c[1]:.3f}*{chart.names[a]} + {c[2]:.3f}*{chart.names[a]}*{chart.names[b]}")
        out.append(VectorField(chart, comps))
    return out


def test_flat_christoffels_vanish():
    cs = christoffels(flat_torus(3).metric, flat_torus(3).chart.sample(10, 0))
    assert not cs.christoffel.val.any()
    cs = christoffels(MetricField(SQ, [["exp(0.6)", 0], [0, "exp(0.6)"]]), [0.2, 0.3])
    assert not cs.christoffel.val.any()


def test_sphere_christoffel_value():
    cps = sphere_chart()
    p = np.array([[math.pi / 3, 0.4]])
    cs = christoffels(cps.metric, p)
    assert cs.christoffel.val[0, 0, 1, 1] == pytest.approx(-math.sqrt(3) / 4, abs=1e-14)
    assert fd_christoffels(cps.metric, p)[0, 0, 1, 1] == pytest.approx(-math.sqrt(3) / 4, abs=1e-6)
    G = cs.christoffel.val
    assert np.array_equal(G, np.swapaxes(G, 2, 3))


@pytest.mark.parametrize("cps", BUILTINS, ids=IDS)
def test_christoffels_against_differences(cps):
    pts = cps.chart.sample(32, 1)
    cs = ConnectionSample(cps.metric, pts)
    assert rel_err(cs.christoffel.val, fd_christoffels(cps.metric, pts)).max() < 1e-6


def test_weyl_reduces_to_levi_civita_without_lee():
    cps = kahler_warped_torus()
    pts = cps.chart.sample(20, 0)
    X, Y = _poly_fields(cps.chart, 0)
    a = weyl_derivative(WeylData(cps.metric), X, Y, pts)
    b = covariant_derivative(cps.metric, Y, X, pts)
    assert np.array_equal(a, b)


def test_weyl_derivative_for_constant_lee_form():
    W = WeylData(FLAT, OneFormField(SQ, ["1", "0"]))
    dx, dy = coordinate_field(SQ, 0), coordinate_field(SQ, 1)
    p = [0.3, 0.3]
    np.testing.assert_array_equal(weyl_derivative(W, dx, dx, p), [1.0, 0.0])
    np.testing.assert_array_equal(weyl_derivative(W, dy, dy, p), [-1.0, 0.0])
    np.testing.assert_array_equal(weyl_derivative(W, dx, dy, p), [0.0, 1.0])


def test_unit_field_derivative_stays_in_its_line():
    cps = kahler_warped_torus()
    pts = cps.chart.sample(100, 3)
    X = np.random.default_rng(0).standard_normal((100, 4))
    D = weyl_derivative(WeylData(cps.metric, cps.lee), X, cps.xi, pts)
    xi = cps.xi.values(pts)
    cs = ConnectionSample(cps.metric, pts)
    perp = D - cs.inner(D, xi)[:, None] * xi
    assert np.abs(perp).max() < 1e-9


@pytest.mark.parametrize("cps", BUILTINS, ids=IDS)
def test_weyl_connection_is_torsion_free(cps):
    pts = cps.chart.sample(50, 2)
    X, Y = _poly_fields(cps.chart, 4)
    W = WeylData(cps.metric, cps.lee)
    res = weyl_derivative(W, X, Y, pts) - weyl_derivative(W, Y, X, pts) - lie_bracket(X, Y, cps.chart.reduce(pts))
    assert np.abs(res).max() < 1e-9


@pytest.mark.parametrize("cps", BUILTINS, ids=IDS)
def test_weyl_metric_compatibility(cps):
    pts = cps.chart.sample(50, 3)
    cs = ConnectionSample(cps.metric, pts, cps.lee)
    g, dg = cs.g.val, cs.g.der  # dg[i, j, l] = d_l g_ij
    Wc = cs.weyl.val  # Wc[k, l, i]: D_l d_i
    Dg = dg - np.einsum("bkli,bkj->bijl", Wc, g) - np.einsum("bklj,bik->bijl", Wc, g)
    res = Dg + 2 * np.einsum("bl,bij->bijl", cs.theta.val, g)
    assert np.abs(res).max() < 1e-9


def test_exact_lee_form_gives_rescaled_levi_civita():
    cps = kahler_warped_torus()
    phi = "0.1*sin(2*pi*s)"
    lee = OneFormField(cps.chart, ["0.2*pi*cos(2*pi*s)", "0", "0", "0"])
    pts = cps.chart.sample(100, 4)
    weyl = ConnectionSample(cps.metric, pts, lee).weyl.val
    lc = ConnectionSample(cps.metric.conformal(phi), pts).christoffel.val
    assert np.abs(weyl - lc).max() < 1e-8


def test_levi_civita_metric_compatibility_on_sphere():
    cps = sphere_chart()
    pts = cps.chart.sample(100, 5)
    X = np.random.default_rng(1).standard_normal((100, 2))
    assert np.abs(covariant_derivative(cps.metric, cps.metric, X, pts)).max() < 1e-10


def test_constant_form_is_parallel_on_flat_chart():
    w = OneFormField(SQ, ["0.3", "-1.2"])
    np.testing.assert_array_equal(covariant_derivative(FLAT, w, [1.0, 0.5], [0.2, 0.7]), 0.0)


def test_lee_endomorphism_trace():
    W = WeylData(FLAT, OneFormField(SQ, ["0", "sin(2*pi*y)"]))
    T = lee_endomorphism(W, [0.3, 0.0])
    assert np.trace(T) == pytest.approx(2 * math.pi, rel=1e-14)


def test_flat_curvature_vanishes():
    cps = flat_torus(4)
    pts = cps.chart.sample(10, 0)
    assert np.abs(ConnectionSample(cps.metric, pts).riemann).max() < 1e-12


def test_sphere_sectional_curvature():
    cps = sphere_chart()
    p = np.array([math.pi / 4, 1.0])
    dth, dph = coordinate_field(cps.chart, 0), coordinate_field(cps.chart, 1)
    r = curvature(cps.metric, dth, dph, dph, p)
    g = cps.metric.values(p)
    assert (r @ g @ [1.0, 0.0]) / (g[0, 0] * g[1, 1]) == pytest.approx(1.0, abs=1e-7)


def test_first_bianchi_identity():
    cps = sphere_chart()
    pts = cps.chart.sample(50, 6)
    rng = np.random.default_rng(2)
    X, Y, Z = (rng.standard_normal((50, 2)) for _ in range(3))
    res = (curvature(cps.metric, X, Y, Z, pts) + curvature(cps.metric, Y, Z, X, pts)
           + curvature(cps.metric, Z, X, Y, pts))
    assert np.abs(res).max() < 1e-8


@pytest.mark.parametrize("cps", [kahler_warped_torus(), surface_conformal_torus()], ids=["warped", "surface"])
def test_complex_structure_is_parallel(cps):
    pts = cps.chart.sample(100, 7)
    cs = ConnectionSample(cps.metric, pts)
    assert np.abs(nabla_endo(cs, cps.J.jet1(pts))).max() < 1e-8


def test_kahler_curvature_commutes_with_J():
    cps = kahler_warped_torus()
    pts = cps.chart.sample(50, 8)
    rng = np.random.default_rng(3)
    X, Y = rng.standard_normal((50, 4)), rng.standard_normal((50, 4))
    J = cps.J.values(pts)
    S = rng.standard_normal((4, 4))
    JX, JY = np.einsum("bij,bj->bi", J, X), np.einsum("bij,bj->bi", J, Y)
    res = curvature_on_endo(cps.metric, X, Y, S, pts) - curvature_on_endo(cps.metric, JX, JY, S, pts)
    assert np.abs(res).max() < 1e-7


def test_closed_constant_form():
    ops = differential_ops(FLAT, None, OneFormField(SQ, ["2", "3"]), [0.4, 0.1])
    np.testing.assert_array_equal(ops["d"], 0.0)


def test_codifferential_sign():
    ops = differential_ops(FLAT, None, OneFormField(SQ, ["0", "sin(2*pi*y)"]), [0.4, 0.0])
    assert ops["delta"] == pytest.approx(-2 * math.pi, rel=1e-14)


def test_unit_field_differentials():
    cps = kahler_warped_torus()
    pts = cps.chart.sample(100, 9)
    cs = ConnectionSample(cps.metric, pts, cps.lee)
    xi = cps.xi.jet1(pts)
    xi_flat = jeinsum("ij,j->i", cs.g, xi)
    J = cps.J.values(pts)
    ops = differential_forms(cs, xi_flat, J)
    theta = cs.theta.val
    jxi = np.einsum("bij,bj->bi", J, xi.val)
    assert np.abs(ops["d"] - wedge(xi_flat.val, theta)).max() < 1e-8
    assert np.abs(ops["dc"] - wedge(cs.flat(jxi), theta)).max() < 1e-8
    assert np.abs(ops["delta"]).max() < 1e-8
    assert np.abs(np.einsum("bi,bi->b", theta, xi.val)).max() < 1e-12
    assert np.abs(ops["deltac"] + np.einsum("bi,bi->b", theta, jxi)).max() < 1e-8
