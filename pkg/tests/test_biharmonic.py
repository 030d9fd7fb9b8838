import numpy as np
import pytest
import sympy
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import BSpline

from c1iga.biharmonic import (
    LOCKED,
    OPTIMAL,
    SUBOPTIMAL,
    X,
    Y,
    BiharmonicProblem,
    assemble,
    classify_rates,
    eoc,
    evaluate,
    manufactured_problem,
    measure_errors,
    run_study,
    solve,
    solve_system,
    solution_expression,
    write_patch_csv,
    write_study_csv,
)
from c1iga.c1space import build_c0_space, build_c1_basis, num_spans_for_level
from c1iga.catalog import bilinear_patch, catalog
from c1iga.geometry import MultiPatchGeometry, eval_patch
from c1iga.linalg import LinAlgContractError

BUBBLE = X**2 * (1 - X) ** 2 * Y**2 * (1 - Y) ** 2


def unit_square():
    return MultiPatchGeometry([bilinear_patch((0, 0), (1, 0), (1, 1), (0, 1))], [], name="square")


def zero_problem(geom):
    return BiharmonicProblem(geom, lambda x, y: 0.0 * x)


def _gauss_1d(n, q):
    x, w = leggauss(q)
    brk = np.linspace(0, 1, n + 1)
    pts = np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in zip(brk[:-1], brk[1:])])
    wts = np.concatenate([(b - a) / 2 * w for a, b in zip(brk[:-1], brk[1:])])
    return pts, wts


def _scipy_basis(sp1, t, nu):
    out = np.zeros((t.size, sp1.dim))
    for i in range(sp1.dim):
        c = np.zeros(sp1.dim)
        c[i] = 1
        out[:, i] = BSpline(sp1.knots, c, sp1.degree)(t, nu=nu)
    return out


class TestAssembly:
    def test_zero_source(self):
        s = build_c0_space(unit_square(), 3, 1, 2)
        _, b = assemble(zero_problem(unit_square()), s)
        assert not np.any(b)

    def test_symmetric(self):
        s = build_c0_space(catalog("lshape"), 3, 1, 2)
        a, _ = assemble(None, s)
        a = a.toarray()
        assert np.linalg.norm(a - a.T) <= 1e-12 * np.linalg.norm(a)

    def test_identity_patch_tensor_oracle(self):
        # on the identity map the form splits into 1D mass, cross and bending matrices
        s = build_c0_space(unit_square(), 3, 1, 3, bc="none")
        sp1 = s.space.space_u
        t, w = _gauss_1d(sp1.num_spans, 12)
        n0, n2 = _scipy_basis(sp1, t, 0), _scipy_basis(sp1, t, 2)
        m = n0.T @ (w[:, None] * n0)
        c = n2.T @ (w[:, None] * n0)
        k2 = n2.T @ (w[:, None] * n2)
        oracle = np.kron(m, k2) + np.kron(c.T, c) + np.kron(c, c.T) + np.kron(k2, m)
        a, _ = assemble(None, s)
        assert np.abs(a.toarray() - oracle).max() <= 1e-10 * np.abs(oracle).max()

    def test_quadrature_exact_on_parallelograms(self):
        # affine maps keep Lap phi polynomial, so (p+1) Gauss points are already exact
        left = bilinear_patch((-1, 0.5), (0, 0), (0.3, 1), (-0.7, 1.5))
        right = bilinear_patch((0, 0), (1.2, 0.2), (1.5, 1.2), (0.3, 1))
        g = MultiPatchGeometry([left, right], [(0, 1, 1, 0, False)])
        s = build_c0_space(g, 3, 1, 2)
        a1, _ = assemble(None, s)
        a2, _ = assemble(None, s, npts=8)
        assert abs(a1 - a2).max() <= 1e-12 * abs(a2).max()

    def test_quadrature_exact_on_square(self):
        s = build_c0_space(unit_square(), 4, 2, 2)
        a1, _ = assemble(None, s)
        a2, _ = assemble(None, s, npts=10)
        assert abs(a1 - a2).max() <= 1e-12 * abs(a2).max()


class TestSolve:
    def test_zero_source(self):
        b = build_c1_basis(build_c0_space(catalog("lshape"), 3, 1, 2))
        x, z, _ = solve(zero_problem(catalog("lshape")), b)
        assert not np.any(x) and not np.any(z)

    def test_bubble_reproduced(self):
        g = unit_square()
        pr = manufactured_problem(g, BUBBLE)
        b = build_c1_basis(build_c0_space(g, 4, 1, 2))
        x, _, _ = solve(pr, b)
        l2, h2, _ = measure_errors(x, pr, b.space)
        assert h2 < 1e-9

    def test_member_of_v1_reproduced(self):
        b = build_c1_basis(build_c0_space(catalog("lshape"), 3, 1, 2))
        x_ref = b.B @ np.random.default_rng(0).standard_normal(b.dim)
        a, _ = assemble(None, b.space)
        x, _, res = solve_system(a, a @ x_ref, b)
        _, h2, _ = measure_errors(x, None, b.space, reference=(b.space, x_ref))
        _, norm, _ = measure_errors(np.zeros_like(x_ref), None, b.space, reference=(b.space, x_ref))
        assert h2 <= 1e-8 * norm
        assert res < 1e-12

    def test_dense_path_agrees(self):
        pr = manufactured_problem(catalog("lshape"))
        b = build_c1_basis(build_c0_space(catalog("lshape"), 3, 1, 4))
        xs, _, _ = solve(pr, b)
        xd, _, _ = solve(pr, b, dense=True)
        assert np.abs(xs - xd).max() <= 1e-10 * np.abs(xd).max()

    def test_locking_trace_vanishes(self):
        g = catalog("lshape")
        pr = manufactured_problem(g)
        f = g.frame(0)
        v = np.linspace(0, 1, 101)
        w = np.abs(pr.exact(*f.F0(v).T)).max()
        assert w > 1e-2
        for k in range(3):
            b = build_c1_basis(build_c0_space(g, 3, 2, num_spans_for_level(k)))
            x, _, _ = solve(pr, b)
            trace = evaluate(b.space, x, f.left.patch, *f.left.to_patch(0 * v, v))
            assert np.abs(trace).max() <= 1e-8 * w

    def test_singular_projection_detected(self):
        # an unconstrained square without boundary conditions has a kernel (affine functions)
        g = unit_square()
        b = build_c1_basis(build_c0_space(g, 3, 1, 2, bc="none"))
        a, _ = assemble(None, b.space)
        with pytest.raises(LinAlgContractError):
            solve_system(a, np.ones(a.shape[0]), b, dense=True)


class TestErrors:
    def test_exact_discrete(self):
        b = build_c1_basis(build_c0_space(catalog("lshape"), 3, 1, 2))
        x = b.B @ np.ones(b.dim)
        l2, h2, per = measure_errors(x, None, b.space, reference=(b.space, x))
        assert l2 <= 1e-10 and h2 <= 1e-10 and set(per) == {0, 1}

    @pytest.mark.parametrize("name", ["lshape", "quarter_circle3"])
    def test_zero_solution_oversampled(self, name):
        g = catalog(name)
        pr = manufactured_problem(g)
        s = build_c0_space(g, 3, 1, 8)
        l2, _, _ = measure_errors(np.zeros(s.n_unconstrained), pr, s)
        # oracle: 10x more Gauss points per direction, straight from the geometry map
        t, w = _gauss_1d(8, 10 * (s.degree + 2))
        uu, vv = (a.ravel() for a in np.meshgrid(t, t))
        ww = np.outer(w, w).ravel()
        total = 0.0
        for patch in g.patches:
            ev = eval_patch(patch, uu, vv, nderiv=1)
            total += np.sum(ww * np.abs(np.linalg.det(ev.jac)) * pr.exact(*ev.x.T) ** 2)
        assert abs(l2 - np.sqrt(total)) <= 1e-8 * np.sqrt(total)

    def test_needs_reference(self):
        s = build_c0_space(catalog("lshape"), 3, 1, 2)
        with pytest.raises(ValueError):
            measure_errors(np.zeros(s.n_unconstrained), zero_problem(s.geometry), s)

    def test_lshape_rates(self):
        st = run_study(manufactured_problem(catalog("lshape")), 3, 1, 4)
        assert 1.75 <= st.eoc_h2[-1] <= 2.5
        assert st.eoc_l2[-1] >= 3.5
        assert st.verdict == OPTIMAL


class TestManufactured:
    @pytest.mark.parametrize("name", ["lshape", "triangle3", "rectangle4", "quarter_circle3", "smooth5", "circle5", "chevron"])
    def test_clamped_boundary(self, name):
        pr = manufactured_problem(catalog(name))
        val, grad = pr.boundary_defect()
        assert val < 1e-12 and grad < 1e-12

    def test_source_is_bilaplacian(self):
        pr = manufactured_problem(unit_square(), BUBBLE)
        expect = sympy.diff(BUBBLE, X, 4) + 2 * sympy.diff(BUBBLE, X, 2, Y, 2) + sympy.diff(BUBBLE, Y, 4)
        assert abs(pr.source(np.array(0.3), np.array(0.6)) - float(expect.subs({X: 0.3, Y: 0.6}))) < 1e-12

    def test_unit_peak(self):
        g = catalog("lshape")
        fun = sympy.lambdify((X, Y), solution_expression(g))
        t = np.linspace(0, 1, 21)
        uu, vv = (a.ravel() for a in np.meshgrid(t, t))
        peak = max(np.abs(fun(*p(uu, vv).T)).max() for p in g.patches)
        assert abs(peak - 1) < 1e-5


class TestRates:
    def test_eoc(self):
        np.testing.assert_allclose(eoc([1.0, 0.25, 0.0625]), [2, 2])

    def test_classify(self):
        assert classify_rates([1, 1 / 8], 4) == OPTIMAL
        assert classify_rates([1, 0.95], 3) == LOCKED
        assert classify_rates([1, 1 / 4], 4) == SUBOPTIMAL

    def test_threshold_edges(self):
        # p - 1 - 0.25 is still optimal, a 10 % decrease is no longer locked
        assert classify_rates([1, 2 ** -1.75], 3) == OPTIMAL
        assert classify_rates([1, 0.9], 3) == SUBOPTIMAL


def test_csv_outputs(tmp_path):
    st = run_study(manufactured_problem(catalog("lshape")), 3, 1, 2)
    write_study_csv(tmp_path / "study.csv", [st])
    write_patch_csv(tmp_path / "patch.csv", [st])
    lines = (tmp_path / "study.csv").read_text().splitlines()
    assert lines[0].split(",") == ["geometry", "p", "r", "level", "h", "dim_V1", "L2_error", "H2_error", "EOC_L2", "EOC_H2"]
    assert len(lines) == 3
    assert len((tmp_path / "patch.csv").read_text().splitlines()) == 1 + 2 * 2


def test_left_patch_error_against_identity_reference():
    # both geometries cover [-1, 1] x [0, 1] with the identity on the left patch
    expr = solution_expression(catalog("two_patch_identity"))
    left = {}
    for name in ("two_patch_identity", "distorted_rectangle"):
        st = run_study(manufactured_problem(catalog(name), expr), 4, 1, 5)
        left[name] = np.array([lv.per_patch[0][1] for lv in st.levels])
    assert np.all(eoc(left["two_patch_identity"]) > 2.9)
    ratio = left["distorted_rectangle"] / left["two_patch_identity"]
    assert np.all(np.diff(ratio[1:]) > 0)
    assert ratio[-1] > 5
