import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from weylcps import structure as sv
from weylcps.chart import OneFormField, VectorField
from weylcps.connection import ConnectionSample
from weylcps.errors import DimensionError, PreconditionError
from weylcps.metric_lab import (conformal_product, flat_torus, kahler_warped_torus, sphere_chart,
                                surface_conformal_torus)

WARPED = kahler_warped_torus()
PTS = WARPED.chart.sample(200, 11)


def perturbed_lee(cps):
    """Canonical Lee form plus 0.1 ds."""
    comps = cps.lee.source()
    comps[0] = f"({comps[0]}) + 0.1"
    return OneFormField(cps.chart, comps)


def conformal_example():
    g1, g2 = flat_torus(2, names=("s", "u")), flat_torus(2, names=("t", "v"))
    return conformal_product(g1, g2, "0.3*sin(2*pi*t) + 0.2*cos(2*pi*v)", "0.1*cos(2*pi*s)*sin(2*pi*u)")


# --------------------------------------------------------- symmetric product

def test_symmetric_product_examples():
    g = np.eye(3)
    e1, e2 = np.eye(3)[0], np.eye(3)[1]
    np.testing.assert_array_equal(sv.symmetric_product(e1, e1, g), np.diag([2.0, 0, 0]))
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = 1.0
    np.testing.assert_array_equal(sv.symmetric_product(e1, e2, g), expected)


vec3 = arrays(np.float64, 3, elements=st.floats(-3, 3))


@given(vec3, vec3, arrays(np.float64, (3, 3), elements=st.floats(-1, 1)))
def test_symmetric_product_trace_and_symmetry(X, Y, A):
    g = A @ A.T + np.eye(3)
    P = sv.symmetric_product(X, Y, g)
    assert abs(np.trace(P) - 2 * X @ g @ Y) < 1e-12 * (1 + abs(X @ g @ Y) + np.abs(P).max())
    gP = g @ P
    np.testing.assert_allclose(gP, gP.T, atol=1e-12)


# --------------------------------------------------------- splitting object

@pytest.mark.parametrize("cps", [flat_torus(4, rank=2), sphere_chart(), WARPED, conformal_example(),
                                 surface_conformal_torus()], ids=lambda c: c.name)
def test_splitting_invariants(cps):
    ss = sv.StructureSample(cps, cps.chart.sample(100, 0))
    inv = ss.splitting.invariants(ss.cs)
    for key, v in inv.items():
        assert v.max() < 1e-10, key
    assert np.all(np.trace(ss.S.val, axis1=1, axis2=2).round(12) == cps.dim - 2 * ss.splitting.rank)


def test_witness_invariants():
    ss = sv.StructureSample(WARPED, PTS)
    for key, v in ss.witness.invariants(ss.cs).items():
        assert v.max() < 1e-10, key


# --------------------------------------------------------------- checks

def test_derivS_trivial_product():
    cps = flat_torus(4, rank=2)
    rep = sv.check_derivS(sv.StructureSample(cps, cps.chart.sample(50, 0)), tol=1e-10)
    assert rep.passed and rep.max == 0.0


@pytest.mark.parametrize("cps", [WARPED, conformal_example(), sphere_chart(), surface_conformal_torus()],
                         ids=lambda c: c.name)
def test_derivS_both_routes_agree(cps):
    rep = sv.check_derivS(sv.StructureSample(cps, cps.chart.sample(100, 1)))
    formula, parallel = rep.find("nabla_S_formula"), rep.find("D_S_parallel")
    assert formula.passed and parallel.passed
    assert formula.max < 1e-8 and parallel.max < 1e-8


def test_derivS_detects_perturbation():
    ss = sv.StructureSample(WARPED, PTS, perturbed_lee(WARPED))
    rep = sv.check_derivS(ss)
    assert not rep.passed
    # both routes see it
    assert rep.find("nabla_S_formula").max > 1e-3 and rep.find("D_S_parallel").max > 1e-3


def test_parallel_splitting_valid_and_levi_civita_control():
    cps = conformal_example()
    pts = cps.chart.sample(100, 2)
    assert sv.check_parallel_splitting(sv.StructureSample(cps, pts)).passed
    zero = OneFormField(cps.chart, ["0"] * 4)
    rep = sv.check_parallel_splitting(sv.StructureSample(cps, pts, zero), tol=1e-3, expect="violation")
    assert rep.passed and rep.max > 1e-3


def test_parallel_splitting_product_metric():
    cps = flat_torus(4, rank=2)
    rep = sv.check_parallel_splitting(sv.StructureSample(cps, cps.chart.sample(30, 0)))
    assert rep.passed and rep.max == 0.0


def test_curvS_cases():
    flat = flat_torus(4)
    rep = sv.check_curvS(sv.StructureSample(flat, flat.chart.sample(20, 0)))
    assert rep.passed and rep.max < 1e-12
    rep = sv.check_curvS(sv.StructureSample(WARPED, PTS[:100]))
    assert rep.passed
    for k in ("curvS", "curvJ_S", "curvS_minus_curvJ_S", "kahler_symmetry"):
        assert rep.find(k).max < 1e-7
    bad = sv.check_curvS(sv.StructureSample(WARPED, PTS[:100], perturbed_lee(WARPED)))
    assert bad.max > 1e-3


def test_trace_lemma_cases():
    flat = kahler_warped_torus("0")
    rep = sv.check_trace_lemma(sv.StructureSample(flat, flat.chart.sample(20, 0)))
    assert rep.passed and rep.max == 0.0
    rep = sv.check_trace_lemma(sv.StructureSample(WARPED, PTS))
    assert rep.find("i").max < 1e-8 and rep.find("iii").max < 1e-7 and rep.passed


def test_trace_chain_values_and_integrals():
    rep = sv.check_trace_chain(sv.StructureSample(WARPED, PTS), quadrature=[64, 64, 1, 1])
    assert rep.passed
    assert rep.values["trS"] == pytest.approx(2.0, abs=1e-12)
    assert rep.values["trJSJS"] == pytest.approx(0.0, abs=1e-12)
    for key in ("delta_theta", "delta_S_theta", "delta_JSJS_theta", "rank1_defect"):
        assert abs(rep.values[key]) < 1e-10
    # the codifferential integrands are not zero pointwise: their integrals vanish by cancellation
    ss = sv.StructureSample(WARPED, PTS)
    q = sv._trace_terms(ss)
    assert np.abs(q["delta_th"]).max() > 0.1
    # the rank-one defect vanishes pointwise because theta(xi) = 0
    assert np.abs(q["norm2"] - q["th_Sth"]).max() < 1e-14


def test_trace_chain_zero_lee():
    flat = kahler_warped_torus("0")
    rep = sv.check_trace_chain(sv.StructureSample(flat, flat.chart.sample(20, 0)), quadrature=[8, 8, 1, 1])
    assert rep.passed and rep.max == 0.0


def test_integer_identity():
    assert sv.ineqtheta_integer_identity(40) == []
    for n in range(4, 41):
        for r in range(2, n // 2 + 1):
            assert n * n - 3 * n + (n - 2 * r) ** 2 - n - 2 * (n - 2) * (n - 2 * r) == 4 * r * (r - 2)


def test_ineq_equality_cases():
    for n in (2, 4, 6, 8):
        J = sv.standard_complex_structure(n)
        for S in (np.eye(n), -np.eye(n)):
            assert np.trace(J @ S @ J @ S) == -n
            assert np.array_equal(S @ J, J @ S)


def test_ineq_random_pairs():
    rep = sv.check_ineq_linear_algebra(8, 1000, seed=0)
    assert rep.passed
    assert rep.find("lower_bound").max < 1e-10
    with pytest.raises(DimensionError):
        sv.check_ineq_linear_algebra(5, 10, 0)


@settings(max_examples=200)
@given(st.integers(2, 5), st.integers(0, 2 ** 32 - 1))
def test_ineq_bound_brute_force(half, seed):
    n = 2 * half
    rng = np.random.default_rng(seed)
    r = int(rng.integers(0, n + 1))
    Q = sv.random_orthogonal(n, rng)
    S = Q @ np.diag([1.0] * (n - r) + [-1.0] * r) @ Q.T
    P = sv.random_orthogonal(n, rng)
    J = P @ sv.standard_complex_structure(n) @ P.T
    JS, SJ = J @ S, S @ J
    val = np.trace(J @ S @ J @ S)
    assert val >= -n - 1e-10
    # tr(JSJS) = -<JS, SJ> in the Frobenius pairing
    assert val == pytest.approx(-np.sum(JS * SJ), abs=1e-10)


def test_rank1_suite_cases():
    const = kahler_warped_torus("0.2")
    rep = sv.check_rank1_suite(sv.StructureSample(const, const.chart.sample(20, 0)))
    assert rep.passed and rep.max < 1e-14
    rep = sv.check_rank1_suite(sv.StructureSample(WARPED, PTS))
    assert rep.passed
    for k in "abcdefghij":
        assert rep.find(k).max < 1e-7, k
    assert rep.find("theta_xi").max < 1e-10


def test_rank1_suite_detects_perturbation():
    rep = sv.check_rank1_suite(sv.StructureSample(WARPED, PTS, perturbed_lee(WARPED)), tol=1e-3, expect="violation")
    assert rep.passed and rep.max > 1e-3


# ------------------------------------------------------------ constructions

def test_construct_from_eta_flat():
    cps = kahler_warped_torus("0")
    pts = cps.chart.sample(50, 0)
    eta = OneFormField(cps.chart, ["0", "1", "0", "0"])
    E = [VectorField(cps.chart, [0, 0, 1, 0]), VectorField(cps.chart, [0, 0, 0, 1])]
    theta, rep = sv.construct_weyl_from_eta(cps, eta, E, pts)
    assert rep.passed and np.abs(theta).max() < 1e-14


def test_construct_from_eta_recovers_lee_form():
    eta = OneFormField(WARPED.chart, ["0", "1", "0", "0"])
    E = [VectorField(WARPED.chart, [0, 0, 1, 0]), VectorField(WARPED.chart, [0, 0, 0, 1])]
    theta, rep = sv.construct_weyl_from_eta(WARPED, eta, E, PTS)
    assert rep.passed
    np.testing.assert_allclose(theta, WARPED.lee.values(PTS), atol=1e-8)


def test_construct_from_eta_rejects_bad_eta():
    eta = OneFormField(WARPED.chart, ["0.2", "1", "0", "0"])
    E = [VectorField(WARPED.chart, [0, 0, 1, 0]), VectorField(WARPED.chart, [0, 0, 0, 1])]
    with pytest.raises(PreconditionError):
        sv.construct_weyl_from_eta(WARPED, eta, E, PTS)


def test_surface_flat_case():
    cps = surface_conformal_torus("0")
    theta, rep = sv.construct_surface_weyl(cps, cps.chart.sample(30, 0))
    assert rep.passed and not theta.any()


def test_surface_conformal_case():
    cps = surface_conformal_torus()
    pts = cps.chart.sample(100, 3)
    theta, rep = sv.construct_surface_weyl(cps, pts)
    assert rep.passed and rep.find("D_parallel").max < 1e-8
    np.testing.assert_allclose(theta, cps.lee.values(pts), atol=1e-12)


def test_surface_rotated_field():
    cps = surface_conformal_torus()
    c = 0.7
    psi = "0.2*sin(2*pi*s)*sin(2*pi*t)"
    rot = VectorField(cps.chart, [f"{math.cos(c)!r}*exp(-{psi})", f"{math.sin(c)!r}*exp(-{psi})"])
    _theta, rep = sv.construct_surface_weyl(cps, cps.chart.sample(100, 4), xi=rot)
    assert rep.passed


def test_surface_needs_two_dimensions():
    with pytest.raises(DimensionError):
        sv.construct_surface_weyl(WARPED, PTS)


def test_J_on_forms_convention():
    cps = surface_conformal_torus()
    pts = cps.chart.sample(50, 5)
    cs = ConnectionSample(cps.metric, pts)
    J = cps.J.values(pts)
    alpha = np.random.default_rng(0).standard_normal((50, 2))
    # (J alpha)# = J(alpha#)
    np.testing.assert_allclose(cs.sharp(sv.J_on_form(J, alpha)), np.einsum("bij,bj->bi", J, cs.sharp(alpha)),
                               atol=1e-12)
    _t, good = sv.construct_surface_weyl(cps, pts)
    _t, bad = sv.construct_surface_weyl(cps, pts, J_sign=-1, tol=1e-3, expect="violation")
    assert good.passed and bad.passed and bad.max > 1e-3


# --------------------------------------------------------------- misc

def test_lee_solver_reproduces_canonical_forms():
    for cps in (WARPED, conformal_example(), sphere_chart()):
        pts = cps.chart.sample(50, 6)
        np.testing.assert_allclose(sv.solve_lee_from_splitting(cps.metric, cps.t1, cps.t2, pts),
                                   cps.lee.values(pts), atol=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_weyl_axioms_random_lee(seed):
    lee = sv.random_lee_form(WARPED.chart, seed)
    assert sv.check_weyl_axioms(sv.StructureSample(WARPED, PTS, lee)).passed


def test_exactness():
    assert sv.check_exactness(WARPED, "0.1*sin(2*pi*s)", PTS).passed


def test_geodesic_field():
    rep = sv.check_geodesic_field(sv.StructureSample(WARPED, PTS))
    assert rep.passed


def test_report_serialization():
    rep = sv.check_derivS(sv.StructureSample(WARPED, PTS[:20]))
    d = rep.to_dict()
    assert d["max"] >= d["mean"] >= 0 and d["samples"] > 0 and "subchecks" in d
    assert rep.summary_line().startswith("[PASS] derivS")
