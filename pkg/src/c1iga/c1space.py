"""C0 and C1 multi-patch isogeometric spaces.

The C0 space is obtained from the unconstrained patchwise space by merging
coefficients along interfaces (and removing boundary layers); the C1 space is
the null space of the interface gradient-jump functional restricted to the
coefficients that can see an interface.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ._eval import param_basis, physical_basis
from .geometry import MultiPatchGeometry, edge_dofs, eval_patch, make_interface_frame
from .gluing import AsG1Report, transversal_vector
from .linalg import NullSpace, Spectrum, nullspace, svd_nullspace
from .splines import SplineFunction, SplineSpace1D, SplineSpace2D, collocation_matrix, gauss_points

__all__ = [
    "C0Space",
    "C1Basis",
    "TraceDims",
    "InclusionResult",
    "build_c0_space",
    "jump_matrix",
    "assemble_c1_matrix",
    "build_c1_basis",
    "interface_defects",
    "trace_component_dims",
    "predicted_trace_dims",
    "verify_trace_inclusion",
    "spline_dim",
    "write_spectrum_csv",
    "num_spans_for_level",
    "C1_NULLSPACE_TOL",
]


# Relative cutoff on eigenvalues of the constraint matrix (1e-12 on singular
# values of the jump matrix): exact zeros come out near 1e-32, while genuine
# eigenvalues stay above 1e-21 at the refinement levels used here.
C1_NULLSPACE_TOL = 1e-24


def num_spans_for_level(level: int) -> int:
    """Refinement level 0 has two spans per direction."""
    return 2 ** (level + 1)


def spline_dim(degree: int, regularity: int, num_spans: int) -> int:
    """Dimension of S^q_s on ``num_spans`` uniform spans; zero for negative degree."""
    if degree < 0:
        return 0
    if regularity >= degree or num_spans == 1:
        return degree + 1
    return (degree + 1) + (num_spans - 1) * (degree - max(regularity, -1))


class _UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, i):
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


@dataclass
class C0Space:
    """C0 space on a multi-patch geometry with the same S^p_r space on every patch."""

    geometry: MultiPatchGeometry
    degree: int
    regularity: int
    num_spans: int
    bc: str
    space: SplineSpace2D
    offsets: np.ndarray
    dof_map: np.ndarray = field(repr=False)
    n_dofs: int = 0
    coupled: np.ndarray = field(default=None, repr=False)
    N0: sp.csr_matrix = field(default=None, repr=False)

    @property
    def n_unconstrained(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_coupled(self) -> int:
        return int(self.coupled.size)

    def patch_dofs(self, k: int) -> np.ndarray:
        return np.arange(self.offsets[k], self.offsets[k + 1])

    def expand(self, y) -> np.ndarray:
        """Unconstrained coefficients ``N0 y``."""
        return self.N0 @ y


def build_c0_space(
    geom: MultiPatchGeometry, degree: int, regularity: int, num_spans: int = 1, bc: str = "clamped"
) -> C0Space:
    """Merge interface coefficients and drop boundary layers.

    ``bc="clamped"`` removes the two outermost coefficient layers along every
    boundary edge (value and normal derivative vanish); ``bc="none"`` keeps them.
    """
    if bc not in ("clamped", "none"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if regularity < 1:
        raise ValueError(f"C1 constructions need regularity >= 1, got {regularity}")
    space = SplineSpace2D.uniform(degree, regularity, num_spans)
    npatch = len(geom.patches)
    offsets = np.arange(npatch + 1) * space.dim
    uf = _UnionFind(int(offsets[-1]))
    for iface in geom.interfaces:
        da = offsets[iface.patch_a] + edge_dofs(space.shape, iface.edge_a)
        db = offsets[iface.patch_b] + edge_dofs(space.shape, iface.edge_b)
        if iface.flip:
            db = db[::-1]
        for i, j in zip(da, db):
            uf.union(int(i), int(j))
    roots = np.array([uf.find(i) for i in range(offsets[-1])])

    removed = np.zeros(offsets[-1], dtype=bool)
    if bc == "clamped":
        for k, e in geom.boundary:
            for layer in (0, 1):
                removed[offsets[k] + edge_dofs(space.shape, e, layer)] = True
        removed_roots = np.unique(roots[removed])
        removed = np.isin(roots, removed_roots)

    kept_roots = np.unique(roots[~removed])
    index = -np.ones(offsets[-1], dtype=int)
    index[kept_roots] = np.arange(kept_roots.size)
    dof_map = np.where(removed, -1, index[roots])
    rows = np.flatnonzero(dof_map >= 0)
    n0 = sp.csr_matrix(
        (np.ones(rows.size), (rows, dof_map[rows])), shape=(offsets[-1], kept_roots.size)
    )

    near = np.zeros(offsets[-1], dtype=bool)
    for iface in geom.interfaces:
        for k, e in ((iface.patch_a, iface.edge_a), (iface.patch_b, iface.edge_b)):
            for layer in (0, 1):
                near[offsets[k] + edge_dofs(space.shape, e, layer)] = True
    coupled = np.unique(dof_map[near & (dof_map >= 0)])
    return C0Space(
        geometry=geom,
        degree=degree,
        regularity=regularity,
        num_spans=num_spans,
        bc=bc,
        space=space,
        offsets=offsets,
        dof_map=dof_map,
        n_dofs=int(kept_roots.size),
        coupled=coupled,
        N0=n0,
    )


# ---------------------------------------------------------------------------
# C1 constraint


def interface_quadrature_points(space: C0Space) -> int:
    """Gauss points per span on an interface.

    The normal-derivative jump times both Jacobian determinants is a polynomial
    of degree ``p + 4 p_g - 2`` on each span of a polynomial geometry of degree
    ``p_g``, so this many points make a zero weighted jump vector equivalent to
    a vanishing jump.  Rational patches get a generous margin.
    """
    pg = max(pt.degree for pt in space.geometry.patches)
    if space.geometry.is_rational:
        q = space.degree + 8 * pg + 2
    else:
        q = space.degree + 4 * pg - 1
    return max(q, space.degree + 1)


def _edge_points(frame, side, v):
    return frame.side(side).to_patch(np.zeros_like(v), v)


def _side_normal_gradients(space: C0Space, frame, v):
    """Normal derivatives of every basis function on both sides at interface points."""
    _, _, t = frame.interface_derivatives(v)
    tn = np.linalg.norm(t, axis=1)
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / tn[:, None]
    out = {}
    for side in ("L", "R"):
        k = frame.side(side).patch
        u_p, v_p = _edge_points(frame, side, v)
        _, _, grad, _ = physical_basis(space.space, space.geometry.patches[k], u_p, v_p, 1)
        out[side] = (k, np.einsum("mjd,md->mj", grad, normal))
    return out, tn


def jump_matrix(space: C0Space, interfaces=None, npts: int | None = None) -> np.ndarray:
    """Weighted normal-gradient jump evaluations on the coupled C0 coefficients.

    Row ``i`` holds ``sqrt(w_i |F_0'(v_i)|) [grad phi_j . n](v_i)``, so that
    ``J^T J`` is the Gauss approximation of the symmetric C1 constraint matrix.
    """
    geom = space.geometry
    if interfaces is None:
        interfaces = range(len(geom.interfaces))
    q = npts or interface_quadrature_points(space)
    pts, wts = gauss_points(space.space.space_v, q)
    v, w = pts.ravel(), wts.ravel()
    blocks = []
    n0 = space.N0.tocsr()
    for idx in interfaces:
        frame = make_interface_frame(geom, idx)
        grads, tn = _side_normal_gradients(space, frame, v)
        scale = np.sqrt(w * tn)[:, None]
        k_l, g_l = grads["L"]
        k_r, g_r = grads["R"]
        jl = sp.csr_matrix(scale * g_l) @ n0[space.patch_dofs(k_l)]
        jr = sp.csr_matrix(scale * g_r) @ n0[space.patch_dofs(k_r)]
        blocks.append((jl - jr)[:, space.coupled].toarray())
    if not blocks:
        return np.zeros((0, space.n_coupled))
    return np.vstack(blocks)


def assemble_c1_matrix(space: C0Space, interface: int | None = None, npts: int | None = None) -> np.ndarray:
    """Symmetric PSD C1 constraint matrix over the coupled coefficients."""
    ifaces = None if interface is None else [interface]
    j = jump_matrix(space, ifaces, npts)
    return j.T @ j


@dataclass
class C1Basis:
    """Null-space basis of the C1 constraint.

    ``Z`` spans the admissible combinations of the coupled coefficients; the
    remaining C0 coefficients are kept as they are.  ``B = N0 N1`` maps
    coefficients of the C1 basis to unconstrained patch coefficients.
    """

    space: C0Space
    Z: np.ndarray = field(repr=False)
    spectrum: Spectrum = field(repr=False)
    N1: sp.csr_matrix = field(repr=False)
    B: sp.csr_matrix = field(repr=False)
    method: str = "svd"
    tol: float = C1_NULLSPACE_TOL
    notes: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.N1.shape[1]

    @property
    def coupled_columns(self) -> np.ndarray:
        """Column indices of ``B`` belonging to the null-space block."""
        return np.arange(self.dim - self.Z.shape[1], self.dim)


def build_c1_basis(
    space: C0Space, tol: float = C1_NULLSPACE_TOL, method: str = "svd", npts: int | None = None
) -> C1Basis:
    """Extract the C1 subspace.

    ``method="svd"`` takes the basis from the SVD of the weighted jump matrix
    ``J`` and reports the spectrum of the constraint matrix ``J^T J`` as the
    squared singular values, which resolves exact zeros down to about 1e-32
    relative.  ``method="eig"`` diagonalises ``J^T J`` directly; its round-off
    floor is about 1e-16 relative, so it needs ``tol`` well above that.
    """
    j = jump_matrix(space, npts=npts)
    nc = space.n_coupled
    notes = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if not nc:
            ns = NullSpace(np.zeros((0, 0)), Spectrum(np.zeros(0), 0.0, None, np.inf))
        elif method == "svd":
            ns = svd_nullspace(j, tol)
        elif method == "eig":
            ns = nullspace(j.T @ j, tol)
        else:
            raise ValueError(f"unknown method {method!r}")
    spectrum = ns.spectrum
    if spectrum.ambiguous:
        notes.append(f"ambiguous spectral gap ratio {spectrum.gap_ratio:.3e}")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    free = np.setdiff1d(np.arange(space.n_dofs), space.coupled)
    z = ns.basis
    n1 = sp.hstack(
        [
            sp.csr_matrix((np.ones(free.size), (free, np.arange(free.size))), shape=(space.n_dofs, free.size)),
            sp.csr_matrix(_embed(z, space.coupled, space.n_dofs)),
        ]
    ).tocsr()
    return C1Basis(
        space=space,
        Z=z,
        spectrum=spectrum,
        N1=n1,
        B=(space.N0 @ n1).tocsr(),
        method=method,
        tol=tol,
        notes=notes,
    )


def _embed(z, rows, n):
    out = np.zeros((n, z.shape[1]))
    out[rows] = z
    return out


# ---------------------------------------------------------------------------
# pointwise checks


def interface_defects(space: C0Space, coeffs, samples: int = 100, seed: int = 0):
    """Largest value and gradient jumps of the given functions across all interfaces.

    ``coeffs`` holds unconstrained coefficient vectors as columns.  Returns
    ``(value_jump, gradient_jump)`` arrays with one entry per column.
    """
    coeffs = coeffs.toarray() if sp.issparse(coeffs) else np.asarray(coeffs)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    rng = np.random.default_rng(seed)
    vj = np.zeros(coeffs.shape[1])
    gj = np.zeros(coeffs.shape[1])
    for idx in range(len(space.geometry.interfaces)):
        frame = make_interface_frame(space.geometry, idx)
        v = rng.uniform(0.0, 1.0, samples)
        vals, grads = {}, {}
        for side in ("L", "R"):
            k = frame.side(side).patch
            u_p, v_p = _edge_points(frame, side, v)
            _, val, grad, _ = physical_basis(space.space, space.geometry.patches[k], u_p, v_p, 1)
            c = coeffs[space.patch_dofs(k)]
            vals[side] = val @ c
            grads[side] = np.einsum("mjd,jc->mcd", grad, c)
        vj = np.maximum(vj, np.abs(vals["L"] - vals["R"]).max(axis=0))
        gj = np.maximum(gj, np.linalg.norm(grads["L"] - grads["R"], axis=2).max(axis=0))
    return vj, gj


# ---------------------------------------------------------------------------
# trace spaces


@dataclass
class TraceDims:
    g0: int
    g1: int
    ambiguous: bool
    sv_g0: np.ndarray = field(repr=False)
    sv_g1: np.ndarray = field(repr=False)


def _rank(mat, cutoff):
    if mat.size == 0:
        return 0, np.zeros(0), False
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0, s, False
    rank = int(np.count_nonzero(s > cutoff * s[0]))
    amb = bool(np.any((s > cutoff * s[0]) & (s < 1e4 * cutoff * s[0])))
    return rank, s, amb


def _null(mat, cutoff):
    _, s, vt = np.linalg.svd(mat, full_matrices=True)
    if s.size == 0 or s[0] == 0:
        return np.eye(mat.shape[1])
    rank = int(np.count_nonzero(s > cutoff * s[0]))
    return vt[rank:].T


def _as_linear_direction(frame, report: AsG1Report):
    """Transversal vector built from linear AS data of the physical map."""
    a_l, b_l = np.asarray(report.alpha_left), np.asarray(report.beta_left)

    def d(v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        al, _, t = frame.interface_derivatives(v)
        alpha = a_l[0] + a_l[1] * v
        beta = b_l[0] + b_l[1] * v
        return (al - beta[:, None] * t) / alpha[:, None]

    return d


def trace_samples(basis: C1Basis, interface: int, v, report: AsG1Report | None = None):
    """Trace and transversal derivative of the null-space block at interface points.

    Returns ``(T, D)`` of shape (len(v), n_null).
    """
    space = basis.space
    frame = make_interface_frame(space.geometry, interface)
    if report is not None and report.is_as_g1 and report.representation == "planar":
        d = _as_linear_direction(frame, report)
    else:
        d = transversal_vector(None, frame)
    k = frame.left.patch
    u_p, v_p = _edge_points(frame, "L", v)
    _, val, grad, _ = physical_basis(space.space, space.geometry.patches[k], u_p, v_p, 1)
    dvec = d(v)
    loc = space.N0.tocsr()[space.patch_dofs(k)][:, space.coupled].toarray() @ basis.Z
    t = val @ loc
    dd = np.einsum("mjd,md->mj", grad, dvec) @ loc
    return t, dd


def trace_component_dims(
    basis: C1Basis, interface: int = 0, report: AsG1Report | None = None, samples: int = 200, cutoff: float = 1e-8
) -> TraceDims:
    """Dimensions of {g0 : [g0, 0] in V_Gamma} and {g1 : [0, g1] in V_Gamma}.

    Computed by sampling the C1 basis at ``samples`` interior interface points.
    """
    v = np.linspace(0.0, 1.0, samples + 2)[1:-1]
    t, dd = trace_samples(basis, interface, v, report)
    if t.shape[1] == 0:
        return TraceDims(0, 0, False, np.zeros(0), np.zeros(0))
    scale_t = max(np.abs(t).max(), 1e-300)
    scale_d = max(np.abs(dd).max(), 1e-300)
    t, dd = t / scale_t, dd / scale_d
    g0, s0, a0 = _rank(t @ _null(dd, cutoff), cutoff)
    g1, s1, a1 = _rank(dd @ _null(t, cutoff), cutoff)
    return TraceDims(g0, g1, a0 or a1, s0, s1)


def predicted_trace_dims(report: AsG1Report, p: int, r: int, n: int, left_identity: bool = False) -> dict:
    """Bounds or exact values for the trace component dimensions where theory applies."""
    out = {}
    if report.is_as_g1 and not report.trivially_g1:
        if r <= p - 2:
            out["g0_min"] = spline_dim(p, r + 1, n)
            out["g1_min"] = spline_dim(p - 1, r, n)
        if r == p - 1:
            if not report.beta_right_zero or any(abs(c) > 0 for c in report.beta_left or []):
                out["g0_max"] = p + 2
            a_l, a_r = report.alpha_left, report.alpha_right
            if abs(a_l[0] * a_r[1] - a_l[1] * a_r[0]) > 1e-10:
                out["g1_max"] = p
    if report.trivially_g1:
        out["g0_exact"] = spline_dim(p, r, n)
        out["g1_exact"] = spline_dim(p, r, n)
    elif left_identity and not report.is_as_g1 and report.p_alpha is not None and report.p_beta is not None:
        if report.beta_right_zero:
            out["g0_exact"] = spline_dim(p, r, n)
        else:
            out["g0_exact"] = spline_dim(min(p, p - report.p_beta + 1), r + 1, n)
        out["g1_exact"] = spline_dim(p - report.p_alpha, r, n)
    return out


# ---------------------------------------------------------------------------
# explicit extension of trace pairs


@dataclass
class InclusionResult:
    ok: bool
    membership_residual: float
    g1_residual: float

    def __bool__(self):
        return self.ok


def verify_trace_inclusion(
    frame,
    report: AsG1Report,
    p: int,
    r: int,
    num_spans: int,
    g0: SplineFunction,
    g1: SplineFunction,
    tol: float = 1e-10,
) -> InclusionResult:
    """Check that ``g^S = g0 + (beta^S g0' + alpha^S g1) u`` lies in S^p_r on both sides.

    The extension is fitted by least squares into the patch space (in patch
    coordinates) and then checked at independent points; finally the G1
    condition ``alpha^R D_u g^L - alpha^L D_u g^R + beta D_v g0 = 0`` is
    evaluated on the fitted functions.
    """
    if not report.is_as_g1 or report.beta_left is None:
        raise ValueError("inclusion test needs linear AS gluing data")
    space = SplineSpace2D.uniform(p, r, num_spans)
    coef = {
        "L": (np.asarray(report.alpha_left), np.asarray(report.beta_left)),
        "R": (np.asarray(report.alpha_right), np.asarray(report.beta_right)),
    }

    def target(side, u, v):
        a, b = coef[side]
        alpha = a[0] + a[1] * v
        beta = b[0] + b[1] * v
        return g0(v) + (beta * g0(v, 1) + alpha * g1(v)) * u

    rng = np.random.default_rng(1234)
    m = 3 * space.space_u.dim + 5
    fitted = {}
    scale = max(1.0, np.abs(g0.coefficients).max(), np.abs(g1.coefficients).max())
    member = 0.0
    for side, sign in (("L", -1.0), ("R", 1.0)):
        fs = frame.side(side)
        grid = np.linspace(0.0, 1.0, m)
        uu, vv = np.meshgrid(grid, grid)
        u_f, v_f = sign * uu.ravel(), vv.ravel()
        pu, pv = fs.to_patch(u_f, v_f)
        mat = param_basis(space, _PolyPatch, pu, pv, 0)[(0, 0)]
        c, *_ = np.linalg.lstsq(mat, target(side, u_f, v_f), rcond=None)
        fitted[side] = c
        ut, vt = sign * rng.uniform(0, 1, 400), rng.uniform(0, 1, 400)
        pu, pv = fs.to_patch(ut, vt)
        val = param_basis(space, _PolyPatch, pu, pv, 0)[(0, 0)] @ c
        member = max(member, float(np.abs(val - target(side, ut, vt)).max() / scale))

    v = rng.uniform(0, 1, 100)
    du = {}
    for side in ("L", "R"):
        fs = frame.side(side)
        pu, pv = fs.to_patch(np.zeros_like(v), v)
        gd = param_basis(space, _PolyPatch, pu, pv, 1)
        pgrad = np.stack([gd[(1, 0)] @ fitted[side], gd[(0, 1)] @ fitted[side]], axis=-1)
        fgrad = pgrad @ fs.matrix
        du[side] = fgrad[:, 0]
        if side == "L":
            dv0 = fgrad[:, 1]
    a_l, a_r = coef["L"][0], coef["R"][0]
    beta = np.polynomial.polynomial.polyval(v, report.beta)
    res = a_l[0] + a_l[1] * v, a_r[0] + a_r[1] * v
    g1_res = float(np.abs(res[1] * du["L"] - res[0] * du["R"] + beta * dv0).max() / scale)
    return InclusionResult(member <= tol and g1_res <= tol, member, g1_res)


class _PolyPatchType:
    is_rational = False


_PolyPatch = _PolyPatchType()


def write_spectrum_csv(path, rows) -> None:
    """``rows`` is an iterable of (level, Spectrum); one CSV line per eigenvalue."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["refinement_level", "eigenvalue_index", "eigenvalue", "gap_index", "gap_ratio"])
        for level, spec in rows:
            for i, lam in enumerate(spec.eigenvalues):
                w.writerow([level, i, repr(float(lam)), spec.gap_index, repr(float(spec.gap_ratio))])
