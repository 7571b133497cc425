import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from weylcps.estimator import WeylStructureVerifier
from weylcps.metric_lab import kahler_warped_torus

X = kahler_warped_torus().chart.sample(40, 0)


def test_valid_structure_scores_one():
    est = WeylStructureVerifier().fit(X)
    assert est.passed_ and est.n_features_in_ == 4
    Z = est.transform(X)
    assert Z.shape == (40, 2) and Z.max() <= 1.0
    assert est.predict(X).all() and est.score(X) == 1.0


def test_perturbed_structure_scores_zero():
    est = WeylStructureVerifier(lee_form={"auto_plus": ["0.1", "0", "0", "0"]}).fit(X)
    assert not est.passed_
    assert est.score(X) == 0.0


def test_fit_transform_matches_fit_then_transform():
    est = WeylStructureVerifier(checks=("derivS", "curvS", "trace_lemma"))
    a = est.fit_transform(X)
    b = est.fit(X).transform(X)
    assert np.array_equal(a, b) and a.shape == (40, 3)


def test_params_and_clone():
    est = WeylStructureVerifier(metric="surface_conformal_torus", checks=("construct_surface",), tol_scale=2.0)
    c = clone(est)
    assert c.get_params() == est.get_params()
    c.set_params(tol_scale=3.0)
    assert c.tol_scale == 3.0 and est.tol_scale == 2.0


def test_input_validation():
    est = WeylStructureVerifier()
    with pytest.raises(NotFittedError):
        est.transform(X)
    with pytest.raises(ValueError):
        est.fit(X[:, :3])
    with pytest.raises(ValueError):
        WeylStructureVerifier(checks=("holonomy",)).fit(X)


def test_other_builtins():
    params = {"psi": "0.2*sin(2*pi*s)*sin(2*pi*t)"}
    est = WeylStructureVerifier(metric="surface_conformal_torus", metric_params=params,
                                checks=("derivS", "construct_surface"))
    pts = np.random.default_rng(0).random((30, 2))
    assert est.fit(pts).score(pts) == 1.0
