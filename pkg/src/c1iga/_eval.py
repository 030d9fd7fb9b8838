"""Evaluation of discrete basis functions in physical coordinates.

On a rational patch with weight function ``w`` the discrete functions are
``b / w`` with ``b`` in the tensor spline space, so that traces match across
interfaces whenever the homogeneous surfaces are C0.
"""

from __future__ import annotations

import numpy as np

from .geometry import Patch, eval_patch
from .splines import SplineSpace2D, collocation_matrix

DERIVS = {0: [(0, 0)], 1: [(0, 0), (1, 0), (0, 1)], 2: [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}


def weight_derivatives(patch: Patch, u, v, nderiv: int) -> dict:
    """Derivatives of the patch weight function at the point pairs (u, v)."""
    sp = patch.space
    w = patch.control_points[..., 2]
    cu = [collocation_matrix(sp.space_u, u, d) for d in range(nderiv + 1)]
    cv = [collocation_matrix(sp.space_v, v, d) for d in range(nderiv + 1)]
    return {(a, b): np.einsum("nj,ji,ni->n", cv[b], w, cu[a]) for a, b in DERIVS[nderiv]}


def rational_quotient(bd: dict, wd: dict, nderiv: int) -> dict:
    """Derivatives of ``b / w``; ``bd`` arrays have shape (..., nb), ``wd`` shape (...)."""
    w = wd[(0, 0)][..., None]
    g = {(0, 0): bd[(0, 0)] / w}
    if nderiv >= 1:
        wu, wv = wd[(1, 0)][..., None], wd[(0, 1)][..., None]
        g[(1, 0)] = (bd[(1, 0)] - g[(0, 0)] * wu) / w
        g[(0, 1)] = (bd[(0, 1)] - g[(0, 0)] * wv) / w
    if nderiv >= 2:
        wuu, wuv, wvv = (wd[k][..., None] for k in ((2, 0), (1, 1), (0, 2)))
        g[(2, 0)] = (bd[(2, 0)] - 2 * g[(1, 0)] * wu - g[(0, 0)] * wuu) / w
        g[(1, 1)] = (bd[(1, 1)] - g[(1, 0)] * wv - g[(0, 1)] * wu - g[(0, 0)] * wuv) / w
        g[(0, 2)] = (bd[(0, 2)] - 2 * g[(0, 1)] * wv - g[(0, 0)] * wvv) / w
    return g


def pullback(gd: dict, jac: np.ndarray, hess: np.ndarray | None, nderiv: int):
    """Physical gradient (..., nb, 2) and Hessian (..., nb, 2, 2) from parametric derivatives.

    ``jac[..., k, a] = dx_k / du_a`` and ``hess[..., k, a, b]`` for the geometry map.
    """
    ji = np.linalg.inv(jac)
    gu, gv = gd[(1, 0)], gd[(0, 1)]
    # grad_k = sum_a ji[a, k] g_a
    gx = ji[..., 0, 0, None] * gu + ji[..., 1, 0, None] * gv
    gy = ji[..., 0, 1, None] * gu + ji[..., 1, 1, None] * gv
    grad = np.stack([gx, gy], axis=-1)
    if nderiv < 2:
        return grad, None
    m = {}
    for (a, b), key in (((0, 0), (2, 0)), ((0, 1), (1, 1)), ((1, 1), (0, 2))):
        m[(a, b)] = gd[key] - gx * hess[..., 0, a, b, None] - gy * hess[..., 1, a, b, None]
    m[(1, 0)] = m[(0, 1)]
    h = np.empty(grad.shape + (2,))
    for k in range(2):
        for l in range(k, 2):
            acc = 0.0
            for a in range(2):
                for b in range(2):
                    acc = acc + (ji[..., a, k] * ji[..., b, l])[..., None] * m[(a, b)]
            h[..., k, l] = acc
            h[..., l, k] = acc
    return grad, h


def laplacian_from(gd: dict, jac, hess):
    """Physical Laplacian only, cheaper than the full Hessian."""
    _, h = pullback(gd, jac, hess, 2)
    return h[..., 0, 0] + h[..., 1, 1]


def param_basis(space: SplineSpace2D, patch: Patch, u, v, nderiv: int) -> dict:
    """Parametric derivatives of every patch basis function at point pairs.

    Returns ``{(du, dv): array (m, dim)}`` for the discrete functions (divided
    by the weight on rational patches).
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    cu = [collocation_matrix(space.space_u, u, d) for d in range(nderiv + 1)]
    cv = [collocation_matrix(space.space_v, v, d) for d in range(nderiv + 1)]
    m = u.size
    bd = {
        (a, b): (cv[b][:, :, None] * cu[a][:, None, :]).reshape(m, space.dim)
        for a, b in DERIVS[nderiv]
    }
    if not patch.is_rational:
        return bd
    return rational_quotient(bd, weight_derivatives(patch, u, v, nderiv), nderiv)


def physical_basis(space: SplineSpace2D, patch: Patch, u, v, nderiv: int = 1):
    """Values, physical gradients and (optionally) Hessians of all patch basis functions.

    Returns ``(geometry_eval, values (m, dim), grad (m, dim, 2), hess or None)``.
    """
    gd = param_basis(space, patch, u, v, nderiv)
    ev = eval_patch(patch, u, v, nderiv=max(nderiv, 1))
    grad, hess = pullback(gd, ev.jac, ev.hess, nderiv) if nderiv >= 1 else (None, None)
    return ev, gd[(0, 0)], grad, hess
