"""Uniform B-spline spaces of degree ``p`` and regularity ``r`` on [0, 1].

Interior knots are placed at ``i/n`` with multiplicity ``p - r``.  A
regularity ``r >= p`` is read as the global polynomial space of degree ``p``;
such a space still carries ``n`` elements, which are only used to place
quadrature points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "SplineSpace1D",
    "SplineSpace2D",
    "SplineFunction",
    "basis_eval",
    "space_dim",
    "collocation_matrix",
    "h_refine",
    "greville_interpolate",
    "gauss_points",
]


@dataclass(frozen=True)
class SplineSpace1D:
    """Spline space S^p_r on a uniform mesh with ``num_spans`` elements."""

    degree: int
    regularity: int
    num_spans: int = 1

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise ValueError(f"degree must be an integer >= 1, got {self.degree}")
        if self.regularity < 0:
            raise ValueError(f"regularity must be >= 0, got {self.regularity}")
        if self.num_spans < 1:
            raise ValueError(f"num_spans must be >= 1, got {self.num_spans}")

    @property
    def is_polynomial(self) -> bool:
        return self.regularity >= self.degree or self.num_spans == 1

    @property
    def multiplicity(self) -> int:
        """Interior knot multiplicity, zero for the polynomial case."""
        return 0 if self.is_polynomial else self.degree - self.regularity

    @property
    def dim(self) -> int:
        return space_dim(self)

    @property
    def mesh_size(self) -> float:
        return 1.0 / self.num_spans

    @property
    def breakpoints(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.num_spans + 1)

    @property
    def knots(self) -> np.ndarray:
        p, m = self.degree, self.multiplicity
        interior = np.repeat(self.breakpoints[1:-1], m) if m else np.empty(0)
        return np.concatenate([np.zeros(p + 1), interior, np.ones(p + 1)])

    def first_active(self, span) -> np.ndarray:
        """Index of the first basis function that is nonzero on ``span``."""
        return np.asarray(span) * self.multiplicity

    def span_of(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.minimum((t * self.num_spans).astype(int), self.num_spans - 1)

    def greville(self) -> np.ndarray:
        kv, p = self.knots, self.degree
        return np.array([kv[i + 1 : i + p + 1].mean() for i in range(self.dim)])

    def refined(self) -> "SplineSpace1D":
        return SplineSpace1D(self.degree, self.regularity, 2 * self.num_spans)


@dataclass(frozen=True)
class SplineSpace2D:
    """Tensor product space; coefficients are stored row-major, v then u."""

    space_u: SplineSpace1D
    space_v: SplineSpace1D

    @classmethod
    def uniform(cls, degree, regularity, num_spans):
        s = SplineSpace1D(degree, regularity, num_spans)
        return cls(s, s)

    @property
    def dim(self) -> int:
        return self.space_u.dim * self.space_v.dim

    @property
    def shape(self) -> tuple[int, int]:
        return self.space_v.dim, self.space_u.dim


def space_dim(space: SplineSpace1D) -> int:
    p, r, n = space.degree, space.regularity, space.num_spans
    if r >= p or n == 1:
        return p + 1
    return (p + 1) + (n - 1) * (p - r)


def _ders_basis(space: SplineSpace1D, t: np.ndarray, nderiv: int):
    # Piegl & Tiller A2.3, vectorised over the evaluation points.
    p = space.degree
    kv = space.knots
    span = space.span_of(t)
    knot_idx = p + span * space.multiplicity
    npts = t.size

    left = np.zeros((p + 1, npts))
    right = np.zeros((p + 1, npts))
    ndu = np.zeros((p + 1, p + 1, npts))
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = t - kv[knot_idx + 1 - j]
        right[j] = kv[knot_idx + j] - t
        saved = np.zeros(npts)
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((nderiv + 1, npts, p + 1))
    for j in range(p + 1):
        ders[0, :, j] = ndu[j, p]

    a = np.zeros((2, p + 1, npts))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nderiv + 1):
            d = np.zeros(npts)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d += a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, :, r] = d
            s1, s2 = s2, s1

    fac = p
    for k in range(1, nderiv + 1):
        ders[k] *= fac
        fac *= p - k
    return space.first_active(span), ders


def basis_eval(space: SplineSpace1D, t, deriv_order: int = 0):
    """Evaluate the ``p+1`` active basis functions (and derivatives) at ``t``.

    Returns ``(first, values)`` where ``first`` holds the global index of the
    first active function and ``values[k, i, j]`` is the ``k``-th derivative of
    function ``first[i] + j`` at ``t[i]``.  A scalar ``t`` gives a scalar
    ``first`` and ``values`` of shape ``(deriv_order + 1, p + 1)``.
    """
    if deriv_order < 0 or deriv_order > 2:
        raise ValueError("deriv_order must be 0, 1 or 2")
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("evaluation parameter outside [0, 1]")
    first, ders = _ders_basis(space, t, deriv_order)
    if scalar:
        return int(first[0]), ders[:, 0, :]
    return first, ders


def collocation_matrix(space: SplineSpace1D, t, deriv: int = 0) -> np.ndarray:
    """Dense matrix ``B[i, j] = N_j^{(deriv)}(t_i)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    first, ders = basis_eval(space, t, deriv)
    out = np.zeros((t.size, space.dim))
    rows = np.arange(t.size)[:, None]
    cols = first[:, None] + np.arange(space.degree + 1)
    out[rows, cols] = ders[deriv]
    return out


def _insert_knot(kv: np.ndarray, p: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Boehm insertion of ``x``: returns new knots and the (n+1) x n matrix."""
    k = np.searchsorted(kv, x, side="right") - 1
    n = kv.size - p - 1
    mat = np.zeros((n + 1, n))
    for i in range(n + 1):
        if i <= k - p:
            mat[i, i] = 1.0
        elif i > k:
            mat[i, i - 1] = 1.0
        else:
            a = (x - kv[i]) / (kv[i + p] - kv[i])
            mat[i, i] = a
            mat[i, i - 1] = 1.0 - a
    return np.insert(kv, k + 1, x), mat


def h_refine(space: SplineSpace1D):
    """Halve the mesh size by knot insertion.

    Returns the refined space and the prolongation matrix ``P`` such that
    coefficients ``c`` on ``space`` become ``P @ c`` on the refined space.
    """
    fine = space.refined()
    p = space.degree
    if fine.multiplicity == 0:
        return fine, np.eye(space.dim)
    kv = space.knots
    mat = np.eye(space.dim)
    new_knots = (np.arange(space.num_spans) + 0.5) / space.num_spans
    for x in new_knots:
        for _ in range(fine.multiplicity):
            kv, step = _insert_knot(kv, p, x)
            mat = step @ mat
    if not np.allclose(kv, fine.knots):
        raise RuntimeError("knot insertion did not reproduce the refined knot vector")
    return fine, mat


@dataclass
class SplineFunction:
    """A spline given by its coefficients on a 1D or 2D space."""

    space: SplineSpace1D | SplineSpace2D
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if self.coefficients.size != self.space.dim:
            raise ValueError(
                f"expected {self.space.dim} coefficients, got {self.coefficients.size}"
            )

    def __call__(self, t, deriv: int = 0) -> np.ndarray:
        if not isinstance(self.space, SplineSpace1D):
            raise TypeError("use evaluate2d for tensor product splines")
        return collocation_matrix(self.space, t, deriv) @ self.coefficients

    def evaluate2d(self, u, v, du: int = 0, dv: int = 0) -> np.ndarray:
        """Pointwise value of a tensor spline (or a mixed derivative) at ``(u, v)``."""
        cu = collocation_matrix(self.space.space_u, u, du)
        cv = collocation_matrix(self.space.space_v, v, dv)
        c = self.coefficients.reshape(self.space.shape)
        return np.einsum("nj,ji,ni->n", cv, c, cu)


def greville_interpolate(space: SplineSpace1D, samples: Sequence[float]) -> SplineFunction:
    """Interpolate values given at the Greville abscissae of ``space``."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (space.dim,):
        raise ValueError(f"need {space.dim} samples at the Greville abscissae")
    mat = collocation_matrix(space, space.greville())
    cond = np.linalg.cond(mat)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError("singular Greville collocation matrix")
    return SplineFunction(space, np.linalg.solve(mat, samples))


def gauss_points(space: SplineSpace1D, npts: int):
    """Composite Gauss-Legendre rule with ``npts`` points on each element.

    Returns points and weights of shape ``(num_spans, npts)``.
    """
    x, w = np.polynomial.legendre.leggauss(npts)
    bp = space.breakpoints
    a, b = bp[:-1, None], bp[1:, None]
    pts = 0.5 * (b - a) * x[None, :] + 0.5 * (b + a)
    wts = 0.5 * (b - a) * w[None, :]
    return pts, wts
