import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from c1iga.splines import (
    SplineFunction,
    SplineSpace1D,
    basis_eval,
    collocation_matrix,
    greville_interpolate,
    h_refine,
    space_dim,
)

spaces = st.integers(1, 5).flatmap(
    lambda p: st.tuples(st.just(p), st.integers(0, p), st.integers(1, 6))
)


def cox_de_boor(kv, i, p, t):
    """Recursive definition, right-continuous except at the last knot."""
    if p == 0:
        if kv[i] <= t < kv[i + 1]:
            return 1.0
        return 1.0 if t == kv[-1] and kv[i] < kv[i + 1] == kv[-1] else 0.0
    out = 0.0
    if kv[i + p] > kv[i]:
        out += (t - kv[i]) / (kv[i + p] - kv[i]) * cox_de_boor(kv, i, p - 1, t)
    if kv[i + p + 1] > kv[i + 1]:
        out += (kv[i + p + 1] - t) / (kv[i + p + 1] - kv[i + 1]) * cox_de_boor(kv, i + 1, p - 1, t)
    return out


def scipy_matrix(space, t, deriv=0):
    kv, p = space.knots, space.degree
    out = np.zeros((len(t), space.dim))
    for i in range(space.dim):
        c = np.zeros(space.dim)
        c[i] = 1.0
        out[:, i] = BSpline(kv, c, p, extrapolate=False)(t, nu=deriv)
    return np.nan_to_num(out)


class TestBasisEval:
    def test_hats(self):
        first, vals = basis_eval(SplineSpace1D(1, 0, 1), 0.5)
        assert first == 0
        np.testing.assert_allclose(vals[0], [0.5, 0.5])

    def test_de_boor_oracle(self):
        sp = SplineSpace1D(2, 1, 2)
        row = collocation_matrix(sp, [0.5])[0]
        oracle = [cox_de_boor(sp.knots, i, 2, 0.5) for i in range(sp.dim)]
        np.testing.assert_allclose(row, oracle, atol=1e-15)

    @given(spaces, st.lists(st.floats(0, 1), min_size=1, max_size=20))
    def test_partition_of_unity(self, pr, t):
        sp = SplineSpace1D(*pr)
        m = collocation_matrix(sp, t)
        np.testing.assert_allclose(m.sum(axis=1), 1, atol=1e-13)
        assert m.min() >= -1e-15

    @given(spaces, st.integers(0, 2))
    def test_matches_scipy(self, pr, d):
        sp = SplineSpace1D(*pr)
        t = np.linspace(0, 1, 37)[:-1] + 1e-3
        scale = np.abs(scipy_matrix(sp, t, d)).max() + 1
        np.testing.assert_allclose(collocation_matrix(sp, t, d), scipy_matrix(sp, t, d), atol=1e-10 * scale)

    @given(spaces, st.floats(0.05, 0.95))
    def test_finite_differences(self, pr, t):
        sp = SplineSpace1D(*pr)
        h = 1e-5
        # stay inside one span so the difference quotient is smooth
        n = sp.num_spans
        k = min(int(t * n), n - 1)
        t = float(np.clip(t, (k + 0.1) / n, (k + 0.9) / n))
        for d in (1, 2):
            lo = collocation_matrix(sp, [t - h], d - 1)[0]
            hi = collocation_matrix(sp, [t + h], d - 1)[0]
            exact = collocation_matrix(sp, [t], d)[0]
            fd = (hi - lo) / (2 * h)
            scale = np.abs(exact).max() + np.abs(collocation_matrix(sp, [t], d - 1)).max()
            assert np.abs(fd - exact).max() <= 1e-6 * scale * max(1, n) ** 2

    def test_outside_interval(self):
        with pytest.raises(ValueError):
            collocation_matrix(SplineSpace1D(2, 1, 2), [1.5])

    def test_second_derivative_of_linears_vanishes(self):
        sp = SplineSpace1D(1, 0, 3)
        assert np.abs(collocation_matrix(sp, [0.1, 0.5, 0.8], 2)).max() == 0

    def test_derivative_order_limited(self):
        with pytest.raises(ValueError):
            basis_eval(SplineSpace1D(3, 1, 2), 0.5, 3)


class TestSpaceDim:
    @pytest.mark.parametrize("r,n", [(3, 1), (3, 5), (4, 2), (7, 8)])
    def test_global_cubics(self, r, n):
        assert space_dim(SplineSpace1D(3, r, n)) == 4

    def test_hand_counts(self):
        assert space_dim(SplineSpace1D(3, 2, 4)) == 7
        assert space_dim(SplineSpace1D(3, 1, 2)) == 6

    @given(spaces)
    def test_equals_collocation_rank(self, pr):
        sp = SplineSpace1D(*pr)
        t = np.linspace(0, 1, 8 * sp.dim)
        assert np.linalg.matrix_rank(collocation_matrix(sp, t)) == sp.dim


class TestRefinement:
    def test_constant(self):
        sp = SplineSpace1D(3, 1, 2)
        _, mat = h_refine(sp)
        np.testing.assert_allclose(mat @ np.ones(sp.dim), 1, atol=1e-14)

    def test_linear_subdivision(self):
        fine, mat = h_refine(SplineSpace1D(1, 0, 1))
        assert fine.num_spans == 2
        np.testing.assert_allclose(mat, [[1, 0], [0.5, 0.5], [0, 1]])

    @given(spaces, st.integers(0, 2**31))
    def test_nested(self, pr, seed):
        sp = SplineSpace1D(*pr)
        c = np.random.default_rng(seed).standard_normal(sp.dim)
        fine, mat = h_refine(sp)
        t = np.random.default_rng(seed + 1).uniform(0, 1, 50)
        np.testing.assert_allclose(
            collocation_matrix(fine, t) @ (mat @ c), collocation_matrix(sp, t) @ c, atol=1e-12
        )


class TestGreville:
    def test_one(self):
        sp = SplineSpace1D(3, 1, 3)
        np.testing.assert_allclose(greville_interpolate(sp, np.ones(sp.dim)).coefficients, 1, atol=1e-13)

    def test_linear_knot_averages(self):
        sp = SplineSpace1D(1, 0, 4)
        g = sp.greville()
        np.testing.assert_allclose(greville_interpolate(sp, g).coefficients, g, atol=1e-14)

    @given(spaces)
    def test_reproduces_monomial(self, pr):
        sp = SplineSpace1D(*pr)
        p = sp.degree
        f = greville_interpolate(sp, sp.greville() ** p)
        t = np.linspace(0, 1, 20)
        np.testing.assert_allclose(f(t), t**p, atol=1e-10)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            greville_interpolate(SplineSpace1D(2, 1, 2), [1.0, 2.0])

    def test_function_size_checked(self):
        with pytest.raises(ValueError):
            SplineFunction(SplineSpace1D(2, 1, 2), np.ones(3))
