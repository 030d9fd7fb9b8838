"""Galerkin discretization of the clamped biharmonic problem.

Find ``w`` in the clamped C1 space with ``int Lap(w) Lap(v) = int f v`` for all
test functions ``v``.  The linear system is assembled over the unconstrained
patchwise coefficients and projected with ``B = N0 N1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import sympy

from ._eval import physical_basis, pullback, rational_quotient, weight_derivatives
from .c1space import C1_NULLSPACE_TOL, C0Space, C1Basis, build_c0_space, build_c1_basis, num_spans_for_level
from .geometry import GeometryError, MultiPatchGeometry, Patch, edge_to_patch, eval_patch
from .linalg import LinAlgContractError, spd_solve
from .splines import SplineSpace2D, basis_eval, gauss_points

__all__ = [
    "BiharmonicProblem",
    "ElementData",
    "StudyLevel",
    "StudySolution",
    "element_data",
    "assemble",
    "solve",
    "solve_system",
    "measure_errors",
    "manufactured_problem",
    "solution_expression",
    "boundary_lines",
    "run_study",
    "classify_rates",
    "eoc",
    "write_study_csv",
    "write_patch_csv",
    "OPTIMAL",
    "SUBOPTIMAL",
    "LOCKED",
    "SLOPE_TOL",
    "LOCKING_DECREASE",
]

OPTIMAL, SUBOPTIMAL, LOCKED = "OPTIMAL", "SUBOPTIMAL", "LOCKED"
SLOPE_TOL = 0.25
LOCKING_DECREASE = 0.10

X, Y = sympy.symbols("x y", real=True)


# ---------------------------------------------------------------------------
# problem data


@dataclass
class BiharmonicProblem:
    """Source term and, optionally, the exact solution with derivatives.

    Callables take arrays ``x, y`` of equal shape.  ``exact_grad`` returns an
    array (..., 2) and ``exact_hess`` an array (..., 2, 2).
    """

    geometry: MultiPatchGeometry
    source: Callable
    exact: Callable | None = None
    exact_grad: Callable | None = None
    exact_hess: Callable | None = None
    expression: sympy.Expr | None = field(default=None, repr=False)
    name: str = ""

    @property
    def has_exact(self) -> bool:
        return self.exact is not None and self.exact_grad is not None and self.exact_hess is not None

    def boundary_defect(self, samples: int = 200) -> tuple[float, float]:
        """Largest ``|w|`` and ``|grad w|`` over points spread along the boundary."""
        if not self.has_exact:
            raise ValueError("problem has no exact solution")
        bnd = self.geometry.boundary
        per = max(samples // max(len(bnd), 1), 2)
        s = np.linspace(0.0, 1.0, per)
        val = grad = 0.0
        for k, e in bnd:
            u, v = edge_to_patch(e, np.zeros_like(s), s)
            pts = eval_patch(self.geometry.patches[k], u, v, nderiv=0).x
            val = max(val, np.abs(self.exact(pts[:, 0], pts[:, 1])).max())
            grad = max(grad, np.linalg.norm(self.exact_grad(pts[:, 0], pts[:, 1]), axis=-1).max())
        return float(val), float(grad)


def _lambdify(expr):
    fun = sympy.lambdify((X, Y), expr, "numpy")

    def call(x, y):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(fun(x, np.asarray(y, dtype=float)), dtype=float), x.shape).copy()

    return call


def _edge_is_straight(patch: Patch, edge: int, tol: float = 1e-12):
    s = np.linspace(0.0, 1.0, 7)
    u, v = edge_to_patch(edge, np.zeros_like(s), s)
    pts = eval_patch(patch, u, v, nderiv=0).x
    a, b = pts[0], pts[-1]
    t = b - a
    length = np.linalg.norm(t)
    n = np.array([-t[1], t[0]]) / length
    if np.abs((pts - a) @ n).max() > tol * max(length, 1.0):
        return None
    return n, -n @ a


def boundary_lines(geom: MultiPatchGeometry, tol: float = 1e-12):
    """Distinct lines ``a x + b y + c = 0`` carrying the boundary edges.

    Returns ``None`` when some boundary edge is curved.
    """
    lines = []
    for k, e in geom.boundary:
        line = _edge_is_straight(geom.patches[k], e)
        if line is None:
            return None
        n, c = line
        # canonical sign: first nonzero normal component positive
        if n[0] < -tol or (abs(n[0]) <= tol and n[1] < 0):
            n, c = -n, -c
        if not any(np.allclose(n, m, atol=1e-10) and abs(c - d) < 1e-10 for m, d in lines):
            lines.append((n, c))
    return lines


def _nice(value: float):
    return sympy.nsimplify(value, tolerance=1e-13, rational=True)


_ENVELOPE = sympy.exp(X / 2 + Y / 3)

CURVED_SOLUTIONS = {
    "quarter_circle3": _ENVELOPE * X**2 * Y**2 * (1 - X**2 - Y**2) ** 2,
    "smooth5": _ENVELOPE
    * ((3 - X**2 - 2 * Y) * (3 - X**2 + 2 * Y) * (3 - Y**2 - 2 * X) * (3 - Y**2 + 2 * X)) ** 2
    / sympy.Integer(3) ** 8,
    "circle5": (1 - X**2 - Y**2) ** 2,
}


def solution_expression(geom: MultiPatchGeometry) -> sympy.Expr:
    """Smooth exact solution with ``w = 0`` and ``grad w = 0`` on the boundary.

    Polygonal domains get ``exp(x/2 + y/3)`` times the product of the squared
    boundary lines; curved catalog domains use tabulated level-set products.
    The result is scaled to unit maximum on a sample grid.
    """
    if geom.name in CURVED_SOLUTIONS:
        expr = CURVED_SOLUTIONS[geom.name]
    else:
        lines = boundary_lines(geom)
        if lines is None:
            raise ValueError(f"no manufactured solution for curved domain {geom.name!r}")
        expr = _ENVELOPE
        for n, c in lines:
            expr = expr * (_nice(n[0]) * X + _nice(n[1]) * Y + _nice(c)) ** 2
    fun = _lambdify(expr)
    t = np.linspace(0.0, 1.0, 21)
    uu, vv = (a.ravel() for a in np.meshgrid(t, t))
    peak = max(np.abs(fun(*eval_patch(p, uu, vv, nderiv=0).x.T)).max() for p in geom.patches)
    return expr / _nice(float(f"{peak:.6g}"))


def manufactured_problem(geom: MultiPatchGeometry, expr: sympy.Expr | None = None) -> BiharmonicProblem:
    """Problem with ``f = Lap^2 w`` for the given (or default) exact solution."""
    if expr is None:
        expr = solution_expression(geom)
    wx, wy = sympy.diff(expr, X), sympy.diff(expr, Y)
    wxx, wxy, wyy = sympy.diff(wx, X), sympy.diff(wx, Y), sympy.diff(wy, Y)
    lap = wxx + wyy
    f = sympy.diff(lap, X, 2) + sympy.diff(lap, Y, 2)
    w_f, gx, gy = _lambdify(expr), _lambdify(wx), _lambdify(wy)
    hxx, hxy, hyy = _lambdify(wxx), _lambdify(wxy), _lambdify(wyy)

    def grad(x, y):
        return np.stack([gx(x, y), gy(x, y)], axis=-1)

    def hess(x, y):
        a, b, c = hxx(x, y), hxy(x, y), hyy(x, y)
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    return BiharmonicProblem(geom, _lambdify(f), w_f, grad, hess, expr, geom.name)


# ---------------------------------------------------------------------------
# element data


@dataclass
class ElementData:
    """Basis data of one patch at element quadrature points.

    Arrays have leading shape (E, Q) for E elements and Q points per element;
    ``dofs[e]`` lists the L local patch coefficients active on element ``e``.
    """

    x: np.ndarray
    weights: np.ndarray
    dofs: np.ndarray
    values: np.ndarray
    grad: np.ndarray
    hess: np.ndarray | None


def element_data(space: SplineSpace2D, patch: Patch, npts: int, nderiv: int = 2) -> ElementData:
    """Evaluate all active basis functions at ``npts`` x ``npts`` Gauss points per element."""
    su, sv = space.space_u, space.space_v
    pu, wu = gauss_points(su, npts)
    pv, wv = gauss_points(sv, npts)
    fu, du = basis_eval(su, pu.ravel(), nderiv)
    fv, dv = basis_eval(sv, pv.ravel(), nderiv)
    nu, nv = su.num_spans, sv.num_spans
    lu, lv = su.degree + 1, sv.degree + 1
    du = du.reshape(nderiv + 1, nu, npts, lu)
    dv = dv.reshape(nderiv + 1, nv, npts, lv)
    first_u = fu.reshape(nu, npts)[:, 0]
    first_v = fv.reshape(nv, npts)[:, 0]

    e_count, q_count, l_count = nu * nv, npts * npts, lu * lv
    dofs = (
        (first_v[:, None, None, None] + np.arange(lv)[None, None, :, None]) * su.dim
        + first_u[None, :, None, None]
        + np.arange(lu)[None, None, None, :]
    ).reshape(e_count, l_count)

    def tensor(a, b):
        # element (ev, eu), point (qv, qu), function (jv, iu)
        t = np.einsum("aqj,bpi->abqpji", dv[b], du[a])
        return t.reshape(e_count, q_count, l_count)

    keys = [(0, 0), (1, 0), (0, 1)] + ([(2, 0), (1, 1), (0, 2)] if nderiv >= 2 else [])
    bd = {k: tensor(*k) for k in keys}
    uu = np.broadcast_to(pu[None, :, None, :], (nv, nu, npts, npts)).reshape(e_count, q_count)
    vv = np.broadcast_to(pv[:, None, :, None], (nv, nu, npts, npts)).reshape(e_count, q_count)
    ev = eval_patch(patch, uu.ravel(), vv.ravel(), nderiv=max(nderiv, 1))
    if patch.is_rational:
        wd = weight_derivatives(patch, uu.ravel(), vv.ravel(), nderiv)
        wd = {k: a.reshape(e_count, q_count) for k, a in wd.items()}
        bd = rational_quotient(bd, wd, nderiv)
    det = ev.det.reshape(e_count, q_count)
    if np.any(det == 0.0):
        raise GeometryError("singular Jacobian at a quadrature point")
    jac = ev.jac.reshape(e_count, q_count, 2, 2)
    hess = ev.hess.reshape(e_count, q_count, 2, 2, 2) if nderiv >= 2 else None
    grad, phys_hess = pullback(bd, jac, hess, nderiv)
    w2 = (wv[:, None, :, None] * wu[None, :, None, :]).reshape(e_count, q_count)
    return ElementData(
        x=ev.x.reshape(e_count, q_count, 2),
        weights=w2 * np.abs(det),
        dofs=dofs,
        values=bd[(0, 0)],
        grad=grad,
        hess=phys_hess,
    )


def _patch_elements(space: C0Space, npts: int, nderiv: int = 2):
    for k, patch in enumerate(space.geometry.patches):
        yield k, element_data(space.space, patch, npts, nderiv)


# ---------------------------------------------------------------------------
# assembly and solve


def assemble(problem: BiharmonicProblem | None, space: C0Space, npts: int | None = None):
    """Stiffness matrix and load vector over the unconstrained coefficients.

    Uses ``(p+1)^2`` Gauss points per element by default.  With ``problem=None``
    the load vector is zero.  Returns ``(A, b)`` with ``A`` sparse CSR.
    """
    q = npts or space.degree + 1
    n = space.n_unconstrained
    rows, cols, vals = [], [], []
    b = np.zeros(n)
    for k, ed in _patch_elements(space, q):
        lap = ed.hess[..., 0, 0] + ed.hess[..., 1, 1]
        ke = np.einsum("eq,eqa,eqb->eab", ed.weights, lap, lap)
        g = space.offsets[k] + ed.dofs
        rows.append(np.repeat(g, g.shape[1], axis=1).ravel())
        cols.append(np.tile(g, (1, g.shape[1])).ravel())
        vals.append(ke.ravel())
        if problem is not None:
            f = problem.source(ed.x[..., 0], ed.x[..., 1])
            np.add.at(b, g, np.einsum("eq,eqa,eq->ea", ed.weights, ed.values, f))
    a = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return a, b


@dataclass
class StudyLevel:
    """Solution on one refinement level."""

    level: int
    h: float
    dim_v1: int
    x: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    residual: float
    l2: float = float("nan")
    h2: float = float("nan")
    per_patch: dict = field(default_factory=dict)
    error: str = ""


def solve_system(a, b, basis: C1Basis, dense: bool = False, rtol: float = 1e-10):
    """Solve ``B^T A B z = B^T b`` and return ``(x = B z, z, backward error)``.

    The residual check uses ``|A1 z - b1| / (|A1| |z| + |b1|)`` in Frobenius norms.

    ``dense=True`` uses a Cholesky factorization, which also certifies that the
    projected matrix is positive definite.
    """
    bmat = basis.B
    a1 = bmat.T @ a @ bmat
    a1 = a1.tocsc() if sp.issparse(a1) else np.asarray(a1)
    b1 = bmat.T @ b
    if a1.shape[0] == 0:
        return np.zeros(bmat.shape[0]), np.zeros(0), 0.0
    if not np.any(b1):
        z = np.zeros(a1.shape[0])
    elif dense:
        a1d = a1.toarray() if sp.issparse(a1) else a1
        z = spd_solve(0.5 * (a1d + a1d.T), b1, check=False)
    elif sp.issparse(a1):
        lu = spla.splu(a1, permc_spec="MMD_AT_PLUS_A")
        z = lu.solve(b1)
        for _ in range(3):  # iterative refinement
            z += lu.solve(b1 - a1 @ z)
    else:
        z = np.linalg.solve(a1, b1)
    # normwise relative backward error
    a_norm = spla.norm(a1) if sp.issparse(a1) else np.linalg.norm(a1)
    scale = a_norm * np.linalg.norm(z) + np.linalg.norm(b1)
    res = float(np.linalg.norm(a1 @ z - b1) / max(scale, np.finfo(float).tiny))
    if not np.all(np.isfinite(z)) or (np.any(b1) and res > rtol):
        raise LinAlgContractError(f"projected solve residual {res:.2e} exceeds {rtol:.0e}")
    return bmat @ z, z, res


def solve(problem: BiharmonicProblem, basis: C1Basis, dense: bool = False):
    """Assemble and solve; returns ``(x, z, relative residual)``."""
    a, b = assemble(problem, basis.space)
    return solve_system(a, b, basis, dense=dense)


def evaluate(space: C0Space, coeffs, patch: int, u, v, nderiv: int = 0):
    """Value (and physical derivatives) of a discrete function at parametric points."""
    _, val, grad, hess = physical_basis(space.space, space.geometry.patches[patch], u, v, nderiv)
    c = np.asarray(coeffs)[space.patch_dofs(patch)]
    out = [val @ c]
    if nderiv >= 1:
        out.append(np.einsum("mjd,j->md", grad, c))
    if nderiv >= 2:
        out.append(np.einsum("mjde,j->mde", hess, c))
    return out[0] if nderiv == 0 else tuple(out)


def measure_errors(
    coeffs,
    problem: BiharmonicProblem | None,
    space: C0Space,
    npts: int | None = None,
    reference: tuple[C0Space, np.ndarray] | None = None,
):
    """L2 and full H2 errors with ``(p+2)^2`` Gauss points per element.

    The reference is the exact solution of ``problem`` or, when given, a
    discrete function ``(space, coefficients)`` on the same geometry.
    Returns ``(L2, H2, {patch: (L2, H2)})``.
    """
    if reference is None and (problem is None or not problem.has_exact):
        raise ValueError("missing reference solution")
    q = npts or space.degree + 2
    coeffs = np.asarray(coeffs, dtype=float)
    per_patch = {}
    tot_l2 = tot_h2 = 0.0
    if reference is not None:
        rspace, rcoef = reference
    for k, ed in _patch_elements(space, q):
        c = coeffs[space.offsets[k] + ed.dofs]
        uh = np.einsum("eql,el->eq", ed.values, c)
        gh = np.einsum("eqld,el->eqd", ed.grad, c)
        hh = np.einsum("eqlab,el->eqab", ed.hess, c)
        if reference is None:
            xs, ys = ed.x[..., 0], ed.x[..., 1]
            w, gw, hw = problem.exact(xs, ys), problem.exact_grad(xs, ys), problem.exact_hess(xs, ys)
        else:
            w, gw, hw = _reference_at(rspace, rcoef, k, space, q)
        e0 = np.sum(ed.weights * (uh - w) ** 2)
        e1 = np.sum(ed.weights * np.sum((gh - gw) ** 2, axis=-1))
        e2 = np.sum(ed.weights * np.sum((hh - hw) ** 2, axis=(-2, -1)))
        per_patch[k] = (math.sqrt(e0), math.sqrt(e0 + e1 + e2))
        tot_l2 += e0
        tot_h2 += e0 + e1 + e2
    return math.sqrt(tot_l2), math.sqrt(tot_h2), per_patch


def _reference_at(rspace: C0Space, rcoef, k: int, space: C0Space, q: int):
    """Reference function and derivatives at the element points used for ``space``."""
    su, sv = space.space.space_u, space.space.space_v
    pu, _ = gauss_points(su, q)
    pv, _ = gauss_points(sv, q)
    nu, nv = su.num_spans, sv.num_spans
    uu = np.broadcast_to(pu[None, :, None, :], (nv, nu, q, q)).ravel()
    vv = np.broadcast_to(pv[:, None, :, None], (nv, nu, q, q)).ravel()
    val, grad, hess = evaluate(rspace, rcoef, k, uu, vv, nderiv=2)
    shape = (nu * nv, q * q)
    return val.reshape(shape), grad.reshape(shape + (2,)), hess.reshape(shape + (2, 2))


# ---------------------------------------------------------------------------
# convergence studies


def eoc(errors) -> np.ndarray:
    """Orders ``log2(e_i / e_{i+1})`` between consecutive dyadic levels."""
    e = np.asarray(errors, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log2(e[:-1] / e[1:])


def classify_rates(h2_errors, degree: int) -> str:
    """OPTIMAL, LOCKED or SUBOPTIMAL from the last refinement interval.

    OPTIMAL when the H2 order is at least ``p - 1 - SLOPE_TOL``; LOCKED when the
    H2 error drops by less than ``LOCKING_DECREASE``; SUBOPTIMAL otherwise.
    """
    e = np.asarray(h2_errors, dtype=float)
    if e.size < 2 or not np.all(np.isfinite(e[-2:])):
        return "UNDETERMINED"
    if eoc(e[-2:])[0] >= degree - 1 - SLOPE_TOL:
        return OPTIMAL
    if e[-1] > (1.0 - LOCKING_DECREASE) * e[-2]:
        return LOCKED
    return SUBOPTIMAL


@dataclass
class StudySolution:
    """Results of a convergence study for one (geometry, p, r)."""

    geometry: str
    degree: int
    regularity: int
    levels: list
    verdict: str = ""

    @property
    def h(self):
        return np.array([lv.h for lv in self.levels])

    @property
    def l2(self):
        return np.array([lv.l2 for lv in self.levels])

    @property
    def h2(self):
        return np.array([lv.h2 for lv in self.levels])

    @property
    def eoc_l2(self):
        return eoc(self.l2)

    @property
    def eoc_h2(self):
        return eoc(self.h2)

    def rows(self):
        el2, eh2 = self.eoc_l2, self.eoc_h2
        out = []
        for i, lv in enumerate(self.levels):
            out.append(
                {
                    "geometry": self.geometry,
                    "p": self.degree,
                    "r": self.regularity,
                    "level": lv.level,
                    "h": lv.h,
                    "dim_V1": lv.dim_v1,
                    "L2_error": lv.l2,
                    "H2_error": lv.h2,
                    "EOC_L2": el2[i - 1] if i else float("nan"),
                    "EOC_H2": eh2[i - 1] if i else float("nan"),
                }
            )
        return out


def run_study(
    problem: BiharmonicProblem,
    degree: int,
    regularity: int,
    levels: int | list = 4,
    tol: float = C1_NULLSPACE_TOL,
    dense: bool = False,
) -> StudySolution:
    """Solve on dyadic levels (level ``l`` has ``2^(l+1)`` spans) and classify the rates.

    Numerical failures are recorded on the level and the study continues.
    """
    geom = problem.geometry
    out = []
    for lev in range(levels) if isinstance(levels, int) else levels:
        n = num_spans_for_level(lev)
        h = 1.0 / n
        try:
            space = build_c0_space(geom, degree, regularity, n, bc="clamped")
            basis = build_c1_basis(space, tol=tol)
            x, z, res = solve(problem, basis, dense=dense)
            l2, h2, pp = measure_errors(x, problem, space)
            out.append(StudyLevel(lev, h, basis.dim, x, z, res, l2, h2, pp))
        except (np.linalg.LinAlgError, GeometryError, ValueError, RuntimeError) as exc:
            out.append(StudyLevel(lev, h, -1, np.zeros(0), np.zeros(0), float("nan"), error=str(exc)))
    study = StudySolution(geom.name, degree, regularity, out)
    study.verdict = classify_rates(study.h2, degree)
    return study


STUDY_COLUMNS = ["geometry", "p", "r", "level", "h", "dim_V1", "L2_error", "H2_error", "EOC_L2", "EOC_H2"]


def _fmt(v):
    return f"{v:.10e}" if isinstance(v, float) else v


def write_study_csv(path, studies) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=STUDY_COLUMNS)
        wr.writeheader()
        for st in studies:
            for row in st.rows():
                wr.writerow({k: _fmt(v) for k, v in row.items()})


def write_patch_csv(path, studies) -> None:
    cols = ["geometry", "p", "r", "level", "h", "patch", "L2_error", "H2_error"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for st in studies:
            for lv in st.levels:
                for k, (l2, h2) in sorted(lv.per_patch.items()):
                    wr.writerow([st.geometry, st.degree, st.regularity, lv.level, _fmt(lv.h), k, _fmt(l2), _fmt(h2)])
