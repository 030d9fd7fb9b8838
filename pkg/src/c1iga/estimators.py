"""scikit-learn style wrappers around the C1 discretization and the convergence study."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .biharmonic import evaluate, manufactured_problem, measure_errors, run_study, solve
from .c1space import C1_NULLSPACE_TOL, build_c0_space, build_c1_basis, num_spans_for_level
from .catalog import catalog
from .geometry import MultiPatchGeometry

__all__ = ["C1BiharmonicSolver", "ConvergenceStudy"]


def _geometry(geometry) -> MultiPatchGeometry:
    return catalog(geometry) if isinstance(geometry, str) else geometry


class C1BiharmonicSolver(BaseEstimator):
    """Solve the clamped biharmonic model problem in the C1 isogeometric space.

    ``fit`` builds the spaces and solves the manufactured problem of the
    geometry; ``predict`` evaluates the discrete solution at parametric points
    given as rows ``(patch, u, v)``; ``score`` returns the negative H2 error.
    """

    def __init__(self, geometry="lshape", degree=3, regularity=1, level=2, tol_nullspace=C1_NULLSPACE_TOL):
        self.geometry = geometry
        self.degree = degree
        self.regularity = regularity
        self.level = level
        self.tol_nullspace = tol_nullspace

    def fit(self, X=None, y=None):
        geom = _geometry(self.geometry)
        self.problem_ = manufactured_problem(geom)
        self.space_ = build_c0_space(geom, self.degree, self.regularity, num_spans_for_level(self.level))
        self.basis_ = build_c1_basis(self.space_, tol=self.tol_nullspace)
        self.coef_, self.z_, self.residual_ = solve(self.problem_, self.basis_)
        self.dim_ = self.basis_.dim
        self.spectrum_ = self.basis_.spectrum
        l2, h2, per_patch = measure_errors(self.coef_, self.problem_, self.space_)
        self.errors_ = {"L2": l2, "H2": h2, "per_patch": per_patch}
        return self

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError("call fit before using this estimator")

    def predict(self, X):
        self._check_fitted()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        patch = X[:, 0].astype(int)
        for k in np.unique(patch):
            sel = patch == k
            out[sel] = evaluate(self.space_, self.coef_, int(k), X[sel, 1], X[sel, 2])
        return out

    def score(self, X=None, y=None):
        self._check_fitted()
        return -self.errors_["H2"]


class ConvergenceStudy(BaseEstimator):
    """Refinement study for one (geometry, degree, regularity); ``fit`` runs it."""

    def __init__(self, geometry="lshape", degree=3, regularity=1, levels=4, tol_nullspace=C1_NULLSPACE_TOL):
        self.geometry = geometry
        self.degree = degree
        self.regularity = regularity
        self.levels = levels
        self.tol_nullspace = tol_nullspace

    def fit(self, X=None, y=None):
        problem = manufactured_problem(_geometry(self.geometry))
        self.study_ = run_study(problem, self.degree, self.regularity, self.levels, tol=self.tol_nullspace)
        self.verdict_ = self.study_.verdict
        self.eoc_h2_ = self.study_.eoc_h2
        self.eoc_l2_ = self.study_.eoc_l2
        return self

    def transform(self, X=None):
        """Study table as a list of row dicts."""
        if not hasattr(self, "study_"):
            raise NotFittedError("call fit before using this estimator")
        return self.study_.rows()
