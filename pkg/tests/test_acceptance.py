"""One test per acceptance criterion; each prints a single PASS/FAIL line.

Every test drives the shipped scenario files through the same code path as
``weylcps run`` and then asserts the stated tolerance on the reported
residuals, so a loosened default tolerance inside a check cannot hide a
regression here.
"""
import time
from pathlib import Path

import numpy as np

from weylcps.scenario import load_scenario, run
from weylcps.selfcheck import selfcheck

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def _run(name, **kw):
    return run(load_scenario(SCENARIOS / f"{name}.json"), **kw)


def _check(report, name):
    for c in report.checks:
        if c.name == name:
            return c
    raise KeyError(name)


def test_weyl_connection_axioms_for_random_lee_forms(acceptance):
    """Weyl axioms: D g + 2 theta (x) g and torsion below 1e-9 for 5 random Lee forms on three metrics"""
    t0 = time.perf_counter()
    worst, samples = 0.0, 0
    for name in ("weyl_axioms_flat_torus", "weyl_axioms_sphere", "weyl_axioms_kahler_warped"):
        rep = _check(_run(name), "weyl_axioms")
        assert len(rep.subchecks) == 5
        for sub in rep.subchecks:
            for part in ("metric", "torsion"):
                r = sub.find(part)
                samples = max(samples, r.samples)
                worst = max(worst, r.max)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-9 and samples == 1000 and elapsed < 10.0
    assert acceptance.verdict(ok, f"max residual {worst:.2e} over {samples} points, {elapsed:.1f} s")


def test_exact_lee_form_is_levi_civita_of_rescaled_metric(acceptance):
    """Exactness: Weyl coefficients for theta = d phi equal Christoffels of exp(2 phi) g within 1e-8"""
    rep = _check(_run("exactness"), "exactness")
    r = rep.find("christoffel_match").max
    assert acceptance.verdict(r < 1e-8, f"max coefficient mismatch {r:.2e}")


def test_parallel_involution_both_routes_and_control(acceptance):
    """Parallel involution: nabla S formula and D S = 0 both below 1e-8; perturbed control above 1e-3"""
    worst = 0.0
    for name in ("parallel_involution", "parallel_involution_kahler"):
        rep = _check(_run(name), "derivS")
        assert rep.subchecks[0].samples == 200
        worst = max(worst, rep.find("nabla_S_formula").max, rep.find("D_S_parallel").max)
    bad = _check(_run("perturbed_control"), "derivS")
    control = min(bad.find("nabla_S_formula").max, bad.find("D_S_parallel").max)
    ok = worst < 1e-8 and control > 1e-3
    assert acceptance.verdict(ok, f"valid max {worst:.2e}, perturbed min over routes {control:.2e}")


def test_conformal_product_lee_form_follows_parallel_condition(acceptance):
    """Product Lee form: solved theta matches the constructor within 1e-8 and differs from the same-factor form"""
    rep = _run("conformal_product_lee")
    lee = _check(rep, "lee_solve")
    match = lee.find("parallel_condition")
    differ = lee.find("same_factor_form")
    control = _check(rep, "levi_civita_control")
    ok = match.max < 1e-8 and match.samples == 100 and differ.max > 1e-3 and control.passed
    assert acceptance.verdict(ok, f"solved vs constructor {match.max:.2e}, vs same-factor form {differ.max:.2e}")


def test_kahler_curvature_and_trace_identities(acceptance):
    """Kahler machinery: nabla J < 1e-8; curvature of S, trace_lemma check and trace identities < 1e-7 at 200 points"""
    rep = _run("kahler_machinery")
    nabla_J = _check(rep, "kahler").find("nabla_J").max
    curv = _check(rep, "curvS")
    lemma = _check(rep, "trace_lemma")
    chain = _check(rep, "trace_chain")
    second = max([curv.find(k).max for k in ("curvS", "curvJ_S", "kahler_symmetry")]
                 + [lemma.find(k).max for k in ("i", "ii", "iii")]
                 + [chain.find(k).max for k in ("curv_Y_S", "trace", "trace2", "trace3")])
    ok = nabla_J < 1e-8 and second < 1e-7 and lemma.find("i").samples == 200
    assert acceptance.verdict(ok, f"nabla J {nabla_J:.2e}, worst curvature/trace residual {second:.2e}")


def test_codifferential_integrals_vanish(acceptance):
    """Stokes quadrature: the three codifferential integrals and the rank-one defect integral below 1e-10 on 64^2"""
    rep = _check(_run("stokes_quadrature"), "trace_chain")
    keys = ("delta_theta", "delta_S_theta", "delta_JSJS_theta", "rank1_defect")
    vals = {k: abs(rep.values[k]) for k in keys}
    worst = max(vals.values())
    assert acceptance.verdict(worst < 1e-10, ", ".join(f"{k} {v:.1e}" for k, v in vals.items()))


def test_rank_one_derivation_chain(acceptance):
    """Rank-one suite: sub-checks (a)-(j) below 1e-7 and |theta(xi)| below 1e-10"""
    rep = _check(_run("rank1_suite"), "rank1_suite")
    chain = max(rep.find(k).max for k in "abcdefghij")
    theta_xi = rep.find("theta_xi").max
    ok = chain < 1e-7 and theta_xi < 1e-10
    assert acceptance.verdict(ok, f"max sub-check {chain:.2e}, |theta(xi)| {theta_xi:.2e}")


def test_rotated_unit_field_is_geodesic(acceptance):
    """Geodesic field: nabla_zeta zeta < 1e-9 for zeta = d/dt; geodesic s-drift < 1e-6 over length 10"""
    rep = _run("geodesic_field")
    acc = _check(rep, "geodesic_field").find("nabla_zeta_zeta").max
    drift = _check(rep, "geodesic").find("s_drift").max
    ok = acc < 1e-9 and drift < 1e-6
    assert acceptance.verdict(ok, f"|nabla_zeta zeta| {acc:.2e}, s-drift {drift:.2e}")


def test_transport_preserves_the_splitting(acceptance):
    """Holonomy: 20 loops keep T1/T2 within 1e-5, length scaling matches exp(-int theta) within 2 tol; control > 1e-3"""
    scen = load_scenario(SCENARIOS / "holonomy.json")
    tol = scen.transport_tol
    rep = _check(run(scen), "holonomy")
    angles = rep.find("principal_angles")
    scaling = rep.find("length_scaling").max
    bad = _check(_run("holonomy_perturbed"), "holonomy").find("principal_angles").max
    ok = angles.samples == 20 and angles.max < 1e-5 and scaling < 2 * tol and bad > 1e-3
    assert acceptance.verdict(ok, f"max angle {angles.max:.2e}, scaling mismatch {scaling:.2e}, perturbed {bad:.2e}")


def test_surface_unit_field_construction(acceptance):
    """Surface construction: theta = J alpha makes the line field of xi D-parallel within 1e-8"""
    rep = _run("surface_construction")
    plain = _check(rep, "construct_surface").find("D_parallel").max
    rotated = _check(rep, "construct_surface_rotated").find("D_parallel").max
    opposite = _check(rep, "opposite_J_convention")
    ok = max(plain, rotated) < 1e-8 and opposite.passed
    assert acceptance.verdict(ok, f"residual {plain:.2e}, rotated field {rotated:.2e}, "
                                  f"opposite convention {opposite.max:.2e}")


def test_weyl_structure_from_closed_unit_form(acceptance):
    """Construction from eta: eta = dt with E = TK reproduces (d phi/dt) dt within 1e-8"""
    rep = _check(_run("construct_eta"), "construct_eta")
    match = rep.find("theta_match").max
    ok = match < 1e-8 and rep.passed
    assert acceptance.verdict(ok, f"max |theta - (d phi/dt) dt| {match:.2e}")


def test_trace_inequality_for_involutions_and_complex_structures(acceptance):
    """Trace inequality: 10^4 random pairs for n = 4, 6, 8 respect tr(JSJS) >= -n; equality and integer identity exact"""
    rep = _run("ineq_linear_algebra")
    viol = eq = 0.0
    trials = []
    integer = []
    for n in (4, 6, 8):
        c = _check(rep, f"ineq_la_n{n}")
        trials.append(c.values["trials"])
        viol = max(viol, c.find("lower_bound").max)
        eq = max(eq, c.find("equality").max)
        integer.append(c.find("integer_identity").max)
    ok = viol <= 1e-10 and eq < 1e-10 and all(v == 0 for v in integer) and trials == [10000] * 3
    assert acceptance.verdict(ok, f"worst violation {viol:.1e}, equality error {eq:.1e}, integer failures {int(sum(integer))}")


def test_jet_derivatives_agree_with_finite_differences(acceptance):
    """Oracle battery: jet Christoffels match central differences within 1e-6 relative; reports byte-identical"""
    res = selfcheck(seed=0)
    worst = max(c["max"] for c in res["checks"])
    names = {c["name"] for c in res["checks"]}
    builtins = {"flat_torus", "sphere_chart", "conformal_product", "kahler_warped_torus", "surface_conformal_torus"}
    ok = worst <= 1e-6 and res["deterministic"] and builtins <= names and np.isfinite(worst)
    assert acceptance.verdict(ok, f"max relative error {worst:.2e}, deterministic={res['deterministic']}")
