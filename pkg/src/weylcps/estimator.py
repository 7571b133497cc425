"""scikit-learn style front end to the residual suites.

``X`` is an array of chart points ``(n_samples, dim)``.  ``fit`` runs the
configured checks on ``X`` and stores the reports; ``transform`` returns
per-point residuals in units of each check's tolerance, one column per
check; ``predict`` flags points where every residual is within tolerance.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .scenario import CHECK_NAMES, build_scenario, run

POINTWISE_CHECKS = ("weyl_axioms", "kahler", "derivS", "parallel_splitting", "curvS", "trace_lemma",
                    "trace_chain", "rank1_suite", "geodesic_field", "construct_surface", "exactness")


class WeylStructureVerifier(TransformerMixin, BaseEstimator):
    """Certify a conformal product structure at a set of sample points.

    Parameters
    ----------
    metric : str
        Builtin constructor name.
    metric_params : dict, optional
        Keyword arguments for the constructor (scenario syntax).
    lee_form : str or dict
        ``"auto"``, ``"zero"`` or a scenario Lee form object.
    checks : tuple of str
        Check names; only checks with per-point residuals are allowed.
    tol_scale : float
        Multiplies every tolerance.
    """

    def __init__(self, metric="kahler_warped_torus", metric_params=None, lee_form="auto",
                 checks=("derivS", "parallel_splitting"), tol_scale=1.0):
        self.metric = metric
        self.metric_params = metric_params
        self.lee_form = lee_form
        self.checks = checks
        self.tol_scale = tol_scale

    def _scenario(self):
        for c in self.checks:
            if c not in CHECK_NAMES or c not in POINTWISE_CHECKS:
                raise ValueError(f"check {c!r} has no per-point residual")
        data = {"metric": {"constructor": self.metric, "params": dict(self.metric_params or {})},
                "lee_form": self.lee_form, "checks": list(self.checks)}
        return build_scenario(data)

    def _reports(self, X):
        scen = self._scenario()
        dim = scen.cps.dim
        if X.shape[1] != dim:
            raise ValueError(f"X has {X.shape[1]} columns, the chart has {dim}")
        scen.fixed_points = X
        return run(scen, tol_scale=self.tol_scale)

    def fit(self, X, y=None):
        """Run the checks at ``X``; sets ``reports_``, ``passed_`` and ``n_features_in_``."""
        X = check_array(X, dtype=np.float64)
        report = self._reports(X)
        self.reports_ = report.checks
        self.passed_ = report.passed
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Residual over tolerance, shape ``(n_samples, n_checks)``."""
        check_is_fitted(self, "reports_")
        X = check_array(X, dtype=np.float64)
        reports = self._reports(X).checks
        cols = []
        for rep in reports:
            if rep.pointwise is None:
                raise RuntimeError(f"{rep.name}: {rep.error or 'no per-point residual'}")
            cols.append(rep.pointwise)
        return np.stack(cols, axis=1)

    def predict(self, X):
        """True where every check is within tolerance."""
        return np.all(self.transform(X) <= 1.0, axis=1)

    def score(self, X, y=None):
        """Fraction of points passing every check."""
        return float(np.mean(self.predict(X)))
