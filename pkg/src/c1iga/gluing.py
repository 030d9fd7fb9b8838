"""Gluing data of an interface and the analysis-suitable G1 test.

With ``a^S = D_u F^S(0, v)`` and ``t = D_v F_0(v)`` the gluing functions
(for the normalisation gamma = 1) are::

    alpha_bar^S = det[a^S, t],   beta_bar = det[a^L, a^R],
    beta^S      = a^S . t / |t|^2,

and they satisfy ``alpha^R a^L - alpha^L a^R + beta t = 0`` as well as
``beta = alpha^L beta^R - alpha^R beta^L``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .geometry import GeometryError, InterfaceFrame

__all__ = [
    "GluingData",
    "AsG1Report",
    "compute_gluing_data",
    "classify_as_g1",
    "classify_gluing_samples",
    "transversal_vector",
    "fit_polynomial",
    "sample_points",
]

CLASSIFY_TOL = 1e-9


def _det(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def sample_points(m: int) -> np.ndarray:
    """Chebyshev points of the first kind mapped to (0, 1)."""
    k = np.arange(m)
    return np.sort(0.5 - 0.5 * np.cos((2 * k + 1) * np.pi / (2 * m)))


def fit_polynomial(v, y, max_degree: int, rtol: float = 1e-10):
    """Lowest-degree polynomial (power basis) reproducing the samples.

    Returns ``(coefficients, degree)``; ``(None, None)`` when no degree up to
    ``max_degree`` fits within ``rtol`` relative to ``max(1, |y|)``.  The zero
    function has degree -1 and empty coefficients.
    """
    v = np.asarray(v, dtype=float)
    y = np.asarray(y, dtype=float)
    scale = max(1.0, np.abs(y).max(initial=0.0))
    if np.abs(y).max(initial=0.0) <= rtol * scale:
        return np.zeros(0), -1
    x = 2 * v - 1
    for deg in range(min(max_degree, v.size - 1) + 1):
        cheb = np.polynomial.chebyshev.chebfit(x, y, deg)
        if np.abs(np.polynomial.chebyshev.chebval(x, cheb) - y).max() <= rtol * scale:
            # back to the power basis in v
            poly = np.polynomial.Chebyshev(cheb, domain=[0, 1]).convert(kind=np.polynomial.Polynomial)
            coef = np.zeros(deg + 1)
            coef[: poly.coef.size] = poly.coef[: deg + 1]
            return coef, deg
    return None, None


def _poly_or_none(v, y, max_degree):
    coef, _ = fit_polynomial(v, y, max_degree)
    return None if coef is None else coef.tolist()


@dataclass
class GluingData:
    """Gluing functions of one interface, sampled and (when polynomial) fitted.

    Coefficient lists are in the power basis of ``v``; ``None`` marks a
    function that is not a polynomial of the admissible degree (for instance
    ``beta^S`` is rational in general).
    """

    interface: int
    representation: str
    v: np.ndarray = field(repr=False)
    alpha_left_samples: np.ndarray = field(repr=False)
    alpha_right_samples: np.ndarray = field(repr=False)
    beta_bar_samples: np.ndarray = field(repr=False)
    beta_left_samples: np.ndarray = field(repr=False)
    beta_right_samples: np.ndarray = field(repr=False)
    alpha_left: list | None = None
    alpha_right: list | None = None
    beta_bar: list | None = None
    beta_left: list | None = None
    beta_right: list | None = None
    gamma_normalization: str = "gamma = 1"
    residual: float = 0.0
    decomposition_residual: float = 0.0

    def to_dict(self) -> dict:
        keys = ("alpha_left", "alpha_right", "beta_bar", "beta_left", "beta_right")
        out = {k: getattr(self, k) for k in keys}
        out.update(
            interface=self.interface,
            representation=self.representation,
            gamma_normalization=self.gamma_normalization,
            residual=self.residual,
        )
        return out


def _frame_vectors(frame: InterfaceFrame, v, representation: str):
    if representation == "planar":
        return frame.interface_derivatives(v)
    al, ar, t = frame.homogeneous_interface_derivatives(v)
    if representation == "projection":
        return al[:, :2], ar[:, :2], t[:, :2]
    if representation == "homogeneous":
        return al, ar, t
    raise ValueError(f"unknown representation {representation!r}")


def _max_geometry_degree(frame: InterfaceFrame) -> int:
    return max(p.degree * p.num_spans for p in frame.geometry.patches)


def compute_gluing_data(frame: InterfaceFrame, representation: str = "auto", m: int | None = None) -> GluingData:
    """Gluing data with gamma = 1.

    ``representation`` is ``"planar"`` (physical map), ``"projection"``
    (first two homogeneous components, used for rational patches) or ``"auto"``.
    """
    geom = frame.geometry
    rational = any(
        geom.patches[s.patch].is_rational for s in (frame.left, frame.right)
    )
    if representation == "auto":
        representation = "projection" if rational else "planar"
    pg = _max_geometry_degree(frame)
    if m is None:
        m = max(100, 4 * (2 * pg + 1))
    v = sample_points(m)
    al, ar, t = _frame_vectors(frame, v, representation)
    tt = np.einsum("ij,ij->i", t, t)
    if np.any(tt == 0):
        raise GeometryError("interface tangent vanishes")
    a_l, a_r, b_bar = _det(al, t), _det(ar, t), _det(al, ar)
    if np.any(a_l * a_r <= 0):
        raise GeometryError(f"interface {frame.index}: sign condition violated, parametrization folds")
    b_l = np.einsum("ij,ij->i", al, t) / tt
    b_r = np.einsum("ij,ij->i", ar, t) / tt
    scale = max(np.abs(al).max(), np.abs(ar).max(), np.abs(t).max())
    res = np.abs(a_r[:, None] * al - a_l[:, None] * ar + b_bar[:, None] * t).max() / scale**3
    dec = np.abs(b_bar - (a_l * b_r - a_r * b_l)).max() / max(1.0, np.abs(b_bar).max())
    if res > 1e-10 or dec > 1e-10:
        raise GeometryError(f"gluing identities violated (residual {res:.2e}, {dec:.2e})")
    return GluingData(
        interface=frame.index,
        representation=representation,
        v=v,
        alpha_left_samples=a_l,
        alpha_right_samples=a_r,
        beta_bar_samples=b_bar,
        beta_left_samples=b_l,
        beta_right_samples=b_r,
        alpha_left=_poly_or_none(v, a_l, 2 * pg - 1),
        alpha_right=_poly_or_none(v, a_r, 2 * pg - 1),
        beta_bar=_poly_or_none(v, b_bar, 2 * pg),
        beta_left=_poly_or_none(v, b_l, 2 * pg),
        beta_right=_poly_or_none(v, b_r, 2 * pg),
        residual=float(res),
        decomposition_residual=float(dec),
    )


def transversal_vector(gluing: GluingData | None, frame: InterfaceFrame, side: str = "L"):
    """Return ``d(v)`` along the interface (physical coordinates).

    ``d = [D_u F^S, D_v F_0] (1, -beta^S) / alpha^S`` with gamma = 1 data of
    the physical map, which is the same from both sides.  ``gluing`` is only
    used to validate that it belongs to ``frame``.
    """
    if gluing is not None and gluing.interface != frame.index:
        raise ValueError("gluing data belongs to another interface")

    def d(v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        al, ar, t = frame.interface_derivatives(v)
        a = al if side == "L" else ar
        tt = np.einsum("ij,ij->i", t, t)
        alpha = _det(a, t)
        beta = np.einsum("ij,ij->i", a, t) / tt
        return (a - beta[:, None] * t) / alpha[:, None]

    return d


# ---------------------------------------------------------------------------
# AS G1 classification


@dataclass
class AsG1Report:
    interface: int
    is_as_g1: bool
    status: str
    representation: str
    alpha_left: list | None = None
    alpha_right: list | None = None
    beta: list | None = None
    beta_left: list | None = None
    beta_right: list | None = None
    residual: float = np.inf
    sigma_ratio: float = np.inf
    null_dim: int = 0
    ambiguous: bool = False
    sign_ok: bool = False
    trivially_g1: bool = False
    p_alpha: int | None = None
    p_beta: int | None = None
    beta_right_zero: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        out = asdict(self)
        for k, val in out.items():
            if isinstance(val, float) and not np.isfinite(val):
                out[k] = None
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _lin(c, v):
    return c[0] + c[1] * v


def _quad(c, v):
    return c[0] + c[1] * v + c[2] * v**2


# unknown vector layout: (aL0, aL1, aR0, aR1, b0, b1, b2)
_PREFERRED_ZEROS = ([1, 3, 6], [1, 3], [6], [])


def _solve_homogeneous(rows: np.ndarray, tol: float):
    """Smallest-singular-value solution with a minimal-degree representative."""
    _, s, vt = np.linalg.svd(rows, full_matrices=False)
    ratio = s[-1] / s[0] if s[0] > 0 else 0.0
    null = vt[s <= tol * s[0]].T if s[0] > 0 else np.eye(7)
    if null.shape[1] == 0:
        return vt[-1], ratio, 0
    x = null[:, 0]
    for zeros in _PREFERRED_ZEROS:
        if not zeros:
            break
        sub = null[zeros]
        _, ss, wt = np.linalg.svd(sub)
        rank = int(np.count_nonzero(ss > 1e-10 * max(1.0, ss.max(initial=0.0))))
        if rank < null.shape[1]:
            x = null @ wt[-1]
            break
    return x / np.linalg.norm(x), ratio, null.shape[1]


def _decompose_beta(a_l, a_r, beta, v, bl_ref=None, br_ref=None):
    """Linear (beta^L, beta^R) with beta = alpha^L beta^R - alpha^R beta^L."""
    # coefficients of v^0, v^1, v^2 in alpha^L beta^R - alpha^R beta^L
    mat = np.array(
        [
            [-a_r[0], 0.0, a_l[0], 0.0],
            [-a_r[1], -a_r[0], a_l[1], a_l[0]],
            [0.0, -a_r[1], 0.0, a_l[1]],
        ]
    )
    x0, *_ = np.linalg.lstsq(mat, beta, rcond=None)
    res = np.abs(mat @ x0 - beta).max() / max(1.0, np.abs(beta).max())
    _, s, vt = np.linalg.svd(mat)
    rank = int(np.count_nonzero(s > 1e-12 * s.max()))
    free = vt[rank:].T
    if free.size and bl_ref is not None:
        # pick the member of the solution family closest to the geometric beta^S
        target = np.concatenate([bl_ref, br_ref])
        basis = np.vstack(
            [np.column_stack([_lin(f[:2], v), _lin(f[2:], v)]).T.ravel() for f in free.T]
        ).T
        cur = np.concatenate([_lin(x0[:2], v), _lin(x0[2:], v)])
        coef, *_ = np.linalg.lstsq(basis, target - cur, rcond=None)
        x0 = x0 + free @ coef
    return x0[:2], x0[2:], res


def _finish_report(report: AsG1Report, x, v, tol, bl_ref=None, br_ref=None, left_identity=False):
    a_l, a_r, b = x[:2], x[2:4], x[4:]
    al_v, ar_v = _lin(a_l, v), _lin(a_r, v)
    if np.all(al_v < 0) and np.all(ar_v < 0):
        a_l, a_r, b = -a_l, -a_r, -b
        al_v, ar_v = -al_v, -ar_v
    report.sign_ok = bool(np.all(al_v * ar_v > 0))
    if not report.sign_ok:
        report.notes.append("recovered alpha violates the sign condition")
        return report
    if left_identity and abs(a_l[1]) <= 1e-12 * abs(a_l[0]):
        c = 1.0 / a_l[0]
        report.notes.append("normalised alpha^L = 1")
    else:
        c = np.sign(_lin(a_r, 0.5)) / np.linalg.norm(np.concatenate([a_l, a_r, b]))
    a_l, a_r, b = a_l * c, a_r * c, b * c
    b_l, b_r, dec_res = _decompose_beta(a_l, a_r, b, v, bl_ref, br_ref)
    report.alpha_left, report.alpha_right, report.beta = a_l.tolist(), a_r.tolist(), b.tolist()
    if dec_res > 1e-10:
        report.notes.append(f"beta has no linear decomposition (residual {dec_res:.2e})")
        return report
    report.beta_left, report.beta_right = b_l.tolist(), b_r.tolist()
    small = 1e-10 * max(1.0, np.abs(np.concatenate([a_l, a_r])).max())
    proportional = abs(a_l[0] * a_r[1] - a_l[1] * a_r[0]) <= small
    report.trivially_g1 = bool(
        proportional and np.abs(b_l).max() <= small and np.abs(b_r).max() <= small
    )
    report.is_as_g1 = not report.ambiguous
    report.status = "trivially_g1" if report.trivially_g1 else "as_g1"
    return report


def _degree_linear(c):
    c = np.asarray(c)
    if np.all(np.abs(c) <= 1e-12 * max(1.0, np.abs(c).max())):
        return -1
    return 1 if abs(c[1]) > 1e-12 * max(1.0, np.abs(c).max()) else 0


def classify_gluing_samples(v, alpha_l, alpha_r, beta, tol: float = CLASSIFY_TOL, interface: int = -1) -> AsG1Report:
    """AS G1 test on sampled gluing functions, invariant under a common factor.

    Looks for linear ``aL, aR`` and quadratic ``b`` proportional to the samples:
    ``aL * alpha_r = aR * alpha_l`` and ``aL * beta = b * alpha_l``.
    """
    v = np.asarray(v, dtype=float)
    one, vv = np.ones_like(v), v * v
    z = np.zeros_like(v)
    rows1 = np.column_stack([alpha_r, v * alpha_r, -alpha_l, -v * alpha_l, z, z, z])
    rows2 = np.column_stack([beta, v * beta, z, z, -alpha_l * one, -alpha_l * v, -alpha_l * vv])
    rows = np.vstack([rows1, rows2])
    rows /= np.maximum(np.abs(rows).max(axis=1, keepdims=True), 1e-300)
    report = AsG1Report(interface, False, "not_as_g1", "samples")
    x, ratio, ndim = _solve_homogeneous(rows, tol)
    report.sigma_ratio, report.null_dim = float(ratio), ndim
    report.ambiguous = bool(tol < ratio < 1e3 * tol)
    report.residual = float(np.abs(rows @ x).max())
    if ratio > tol:
        return report
    return _finish_report(report, x, v, tol)


def _geometric_rows(frame: InterfaceFrame, v, representation: str):
    al, ar, t = _frame_vectors(frame, v, representation)
    rows = []
    for k in range(al.shape[1]):
        rows.append(
            np.column_stack(
                [-ar[:, k], -v * ar[:, k], al[:, k], v * al[:, k], t[:, k], v * t[:, k], v * v * t[:, k]]
            )
        )
    # equations of one point share a scale
    scale = np.maximum.reduce([np.abs(r).max(axis=1) for r in rows])
    return np.vstack([r / scale[:, None] for r in rows])


def classify_as_g1(frame: InterfaceFrame, tol: float = CLASSIFY_TOL) -> AsG1Report:
    """Decide whether the interface is analysis-suitable G1.

    Polynomial patches are tested on the planar map.  Rational patches are
    first tested on the homogeneous surface (three equations per sample); if
    that fails the rational planar map is tested, and a failure there is
    reported as ``outside_as_framework``.
    """
    geom = frame.geometry
    pg = _max_geometry_degree(frame)
    m = max(40, 4 * (2 * pg + 1))
    v = sample_points(m)
    rational = any(geom.patches[s.patch].is_rational for s in (frame.left, frame.right))
    reps = ["homogeneous", "planar"] if rational else ["planar"]

    first = None
    for rep in reps:
        report = AsG1Report(frame.index, False, "not_as_g1", rep)
        rows = _geometric_rows(frame, v, rep)
        x, ratio, ndim = _solve_homogeneous(rows, tol)
        report.sigma_ratio, report.null_dim = float(ratio), ndim
        report.ambiguous = bool(tol < ratio < 1e3 * tol)
        report.residual = float(np.abs(rows @ x).max())
        if ratio <= tol:
            gd = compute_gluing_data(frame, "projection" if rep == "homogeneous" else "planar", m=m)
            ref = (np.interp(v, gd.v, gd.beta_left_samples), np.interp(v, gd.v, gd.beta_right_samples))
            report = _finish_report(
                report, x, v, tol, *ref, left_identity=frame.is_left_identity()
            )
        if report.ambiguous:
            report.notes.append(f"ambiguous: sigma ratio {ratio:.2e} within 1e3 of tolerance")
        if report.is_as_g1:
            break
        first = first or report
    if not report.is_as_g1:
        report = first if first is not None else report
        if rational:
            report.status = "outside_as_framework"
            report.notes.append("homogeneous surface is not AS G1 and the rational map has no linear gluing data")
    _set_degrees(report, frame, pg)
    return report


def _set_degrees(report: AsG1Report, frame: InterfaceFrame, pg: int):
    if report.is_as_g1:
        report.p_alpha = max(_degree_linear(report.alpha_left), _degree_linear(report.alpha_right))
        report.p_beta = max(_degree_linear(report.beta_left), _degree_linear(report.beta_right))
        report.beta_right_zero = _degree_linear(report.beta_right) < 0
        return
    try:
        gd = compute_gluing_data(frame, "planar")
    except GeometryError as exc:
        report.notes.append(str(exc))
        return
    if frame.is_left_identity():
        report.notes.append("degrees from the normalisation alpha^L = 1, beta^L = 0")
        _, report.p_alpha = fit_polynomial(gd.v, gd.alpha_right_samples, 2 * pg)
        _, db = fit_polynomial(gd.v, gd.beta_right_samples, 2 * pg)
        report.p_beta = db
        report.beta_right_zero = db == -1
        report.alpha_right = gd.alpha_right
        report.alpha_left = [1.0]
        report.beta_left = []
        report.beta_right = gd.beta_right
    else:
        da = [fit_polynomial(gd.v, s, 2 * pg)[1] for s in (gd.alpha_left_samples, gd.alpha_right_samples)]
        db = [fit_polynomial(gd.v, s, 2 * pg)[1] for s in (gd.beta_left_samples, gd.beta_right_samples)]
        report.p_alpha = None if None in da else max(da)
        report.p_beta = None if None in db else max(db)
