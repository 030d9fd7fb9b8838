"""Builders for the test geometries.

Coordinates of the shipped geometries::

    two_patch_identity   [-1, 0] x [0, 1] and [0, 1] x [0, 1], identity maps
    chevron              F^L(u, v) = (u, v - 1 - u v), F^R(u, v) = (u, v - 1 + u v)
    lshape               quads (-1,-1),(2,-1),(2,0),(0,0) and (-1,-1),(0,0),(0,1),(-1,1);
                         unequal arms keep alpha^L and alpha^R linearly independent
    triangle3            equilateral triangle (0,0),(1,0),(1/2,sqrt(3)/2) split at the centroid
    quarter_circle3      rational triangular Bezier quarter disk split at the centroid
    rectangle4           [0,2] x [0,1], interior vertex (0.8, 0.45), edge vertices
                         (0.8, 0), (0.8, 1), (0, 0.5), (2, 0.6)
    smooth5              five biquadratic patches with C1 boundary
    distorted_rectangle  identity left patch, F^R(u, v) = (u (1 + 4 d v (1-v)(1-u)), v)
    circle5              unit disk: square [-a, a]^2 plus four rational ring patches
"""

from __future__ import annotations

from math import factorial, sqrt

import numpy as np

from .geometry import MultiPatchGeometry, Patch, detect_topology
from .splines import SplineSpace1D, collocation_matrix

__all__ = ["catalog", "catalog_names", "CATALOG", "patch_from_map", "bilinear_patch"]


def patch_from_map(fun, degree: int, homogeneous: bool = False) -> Patch:
    """Bezier patch of the given degree interpolating ``fun`` on a uniform grid.

    ``fun(u, v)`` returns points of shape (n, 2), or homogeneous triples of
    shape (n, 3) when ``homogeneous`` is set.  Exact when ``fun`` is itself a
    (homogeneous) polynomial of that bidegree.
    """
    t = np.linspace(0.0, 1.0, degree + 1)
    uu, vv = np.meshgrid(t, t)
    vals = np.asarray(fun(uu.ravel(), vv.ravel()), dtype=float)
    if not homogeneous:
        vals = np.column_stack([vals, np.ones(len(vals))])
    vals = vals.reshape(degree + 1, degree + 1, 3)
    c = np.linalg.inv(collocation_matrix(SplineSpace1D(degree, degree, 1), t))
    cp = np.einsum("aj,jic,bi->abc", c, vals, c)
    cp[np.abs(cp) < 1e-15] = 0.0
    return Patch(degree, cp)


def bilinear_patch(p00, p10, p11, p01) -> Patch:
    """Bilinear patch with the given corners (counter-clockwise from (u, v) = (0, 0))."""
    cp = np.array([[p00, p10], [p01, p11]], dtype=float)
    return Patch(1, np.concatenate([cp, np.ones((2, 2, 1))], axis=2))


def _assemble(patches, name: str) -> MultiPatchGeometry:
    interfaces, boundary = detect_topology(patches)
    return MultiPatchGeometry(patches, interfaces, boundary, name=name)


def two_patch_identity() -> MultiPatchGeometry:
    return _assemble(
        [bilinear_patch((-1, 0), (0, 0), (0, 1), (-1, 1)), bilinear_patch((0, 0), (1, 0), (1, 1), (0, 1))],
        "two_patch_identity",
    )


def chevron() -> MultiPatchGeometry:
    left = patch_from_map(lambda u, v: np.column_stack([u - 1.0, 2 * v - 1.0 - u * v]), 1)
    right = patch_from_map(lambda u, v: np.column_stack([u, v - 1.0 + u * v]), 1)
    return _assemble([left, right], "chevron")


def lshape() -> MultiPatchGeometry:
    a, d = (-1.0, -1.0), (0.0, 0.0)
    return _assemble(
        [bilinear_patch(a, (2, -1), (2, 0), d), bilinear_patch(a, d, (0, 1), (-1, 1))],
        "lshape",
    )


def _centroid_quads(c0, c1, c2):
    corners = [np.asarray(c, dtype=float) for c in (c0, c1, c2)]
    centroid = sum(corners) / 3.0
    quads = []
    for i in range(3):
        prev, cur, nxt = corners[i - 1], corners[i], corners[(i + 1) % 3]
        quads.append((cur, 0.5 * (cur + nxt), centroid, 0.5 * (prev + cur)))
    return quads


def triangle3() -> MultiPatchGeometry:
    quads = _centroid_quads((0.0, 0.0), (1.0, 0.0), (0.5, sqrt(3.0) / 2))
    return _assemble([bilinear_patch(*q) for q in quads], "triangle3")


# Triangular quadratic Bezier patch of the quarter disk; coefficient i! j! k! / 2
# multiplies s^i t^j (1 - s - t)^k.
QUARTER_CIRCLE_COEFFS = {
    (0, 0, 2): (0.0, 0.0, 1.0),
    (0, 1, 1): (0.0, sqrt(2.0), 2 * sqrt(2.0)),
    (0, 2, 0): (0.0, 1.0, 1.0),
    (1, 0, 1): (sqrt(2.0), 0.0, 2 * sqrt(2.0)),
    (1, 1, 0): (2 * sqrt(2.0), 2 * sqrt(2.0), 2 * sqrt(2.0)),
    (2, 0, 0): (1.0, 0.0, 1.0),
}


def quarter_circle_map(s, t):
    """Homogeneous triangular Bezier map of the quarter disk, shape (n, 3)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    r = 1.0 - s - t
    out = np.zeros(s.shape + (3,))
    for (i, j, k), g in QUARTER_CIRCLE_COEFFS.items():
        coef = factorial(i) * factorial(j) * factorial(k) / 2.0
        out += coef * (s**i * t**j * r**k)[..., None] * np.asarray(g)
    return out


def quarter_circle3() -> MultiPatchGeometry:
    patches = []
    for q00, q10, q11, q01 in _centroid_quads((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)):

        def fun(u, v, q=(q00, q10, q11, q01)):
            st = (
                np.outer((1 - u) * (1 - v), q[0])
                + np.outer(u * (1 - v), q[1])
                + np.outer(u * v, q[2])
                + np.outer((1 - u) * v, q[3])
            )
            return quarter_circle_map(st[:, 0], st[:, 1])

        patches.append(patch_from_map(fun, 2, homogeneous=True))
    return _assemble(patches, "quarter_circle3")


def rectangle4() -> MultiPatchGeometry:
    # b, x, t share x = 0.8, so the interfaces b-x and x-t are collinear
    x, b, t, l, r = (0.8, 0.45), (0.8, 0.0), (0.8, 1.0), (0.0, 0.5), (2.0, 0.6)
    quads = [
        ((0, 0), b, x, l),
        (b, (2, 0), r, x),
        (x, r, (2, 1), t),
        (l, x, t, (0, 1)),
    ]
    return _assemble([bilinear_patch(*q) for q in quads], "rectangle4")


def _rotate(fun, quarter_turns: int):
    c, s = np.round(np.cos(quarter_turns * np.pi / 2)), np.round(np.sin(quarter_turns * np.pi / 2))
    rot = np.array([[c, -s], [s, c]])

    def rotated(u, v):
        pts = np.asarray(fun(u, v))
        out = pts.copy()
        out[:, :2] = pts[:, :2] @ rot.T
        return out

    return rotated


def smooth5() -> MultiPatchGeometry:
    a1 = (sqrt(17.0) - 3) / 2
    a2 = (sqrt(17.0) - 5) / 2

    def center(u, v):
        return np.column_stack([u - 0.5, v - 0.5])

    def top(u, v):
        c = 1.0 + a1 * v - a2 * v**2
        return np.column_stack([(u - 0.5) * c, 2 * v**2 * (u - u**2) + c / 2])

    patches = [patch_from_map(center, 2)]
    patches += [patch_from_map(_rotate(top, k), 2) for k in range(4)]
    return _assemble(patches, "smooth5")


def distorted_rectangle(delta: float = 0.3) -> MultiPatchGeometry:
    # both patches biquadratic so the interface is conforming
    def right_map(u, v):
        return np.column_stack([u * (1 + 4 * delta * v * (1 - v) * (1 - u)), v])

    left = patch_from_map(lambda u, v: np.column_stack([u - 1.0, v]), 2)
    right = patch_from_map(right_map, 2)
    return _assemble([left, right], "distorted_rectangle")


def circle5(a: float = 0.4) -> MultiPatchGeometry:
    h = sqrt(2.0) / 2
    inner = np.array([[-a, a, 1.0], [0.0, a, 1.0], [a, a, 1.0]])
    outer = np.array([[-h, h, 1.0], [0.0, 1.0, h], [h, h, 1.0]])
    ring = np.stack([inner, 0.5 * (inner + outer), outer])
    patches = [patch_from_map(lambda u, v: np.column_stack([a * (2 * u - 1), a * (2 * v - 1)]), 2)]
    for k in range(4):
        c, s = np.round(np.cos(k * np.pi / 2)), np.round(np.sin(k * np.pi / 2))
        rot = np.array([[c, -s], [s, c]])
        cp = ring.copy()
        cp[..., :2] = ring[..., :2] @ rot.T
        patches.append(Patch(2, cp))
    return _assemble(patches, "circle5")


CATALOG = {
    "two_patch_identity": (two_patch_identity, "two unit squares, identity maps"),
    "chevron": (chevron, "two bilinear patches with nontrivial gluing"),
    "lshape": (lshape, "L-shaped domain, two bilinear patches"),
    "triangle3": (triangle3, "equilateral triangle, three bilinear patches"),
    "quarter_circle3": (quarter_circle3, "quarter disk, three rational biquadratic patches"),
    "rectangle4": (rectangle4, "rectangle, four bilinear patches, two collinear interfaces"),
    "smooth5": (smooth5, "smooth domain, five biquadratic patches"),
    "distorted_rectangle": (distorted_rectangle, "non-AS two-patch rectangle"),
    "circle5": (circle5, "unit disk, central square plus four rational ring patches"),
}


def catalog_names() -> list[str]:
    return list(CATALOG)


def catalog(name: str, **kwargs) -> MultiPatchGeometry:
    try:
        builder = CATALOG[name][0]
    except KeyError:
        raise KeyError(f"unknown catalog geometry {name!r}; known: {', '.join(CATALOG)}") from None
    return builder(**kwargs)
