"""Planar multi-patch geometry in homogeneous coordinates.

Each patch maps the unit square to the plane.  Control points are stored as
homogeneous triples ``(w*x, w*y, w)``; polynomial patches simply have
``w == 1``.  Patch edges are numbered ``0: u=0, 1: u=1, 2: v=0, 3: v=1``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .splines import SplineSpace1D, SplineSpace2D, collocation_matrix

__all__ = [
    "GeometryError",
    "Patch",
    "PatchEval",
    "Interface",
    "MultiPatchGeometry",
    "FrameSide",
    "InterfaceFrame",
    "eval_patch",
    "eval_patch_grid",
    "edge_to_patch",
    "detect_topology",
    "make_interface_frame",
    "load_geometry",
    "save_geometry",
    "geometry_to_json",
    "geometry_from_json",
]

EDGE_NAMES = ("u0", "u1", "v0", "v1")


class GeometryError(ValueError):
    """Raised for invalid, non-conforming or singular geometries."""


@dataclass(frozen=True, eq=False)
class Patch:
    """A B-spline or NURBS patch over the unit square."""

    degree: int
    control_points: np.ndarray = field(repr=False)
    num_spans: int = 1
    regularity: int | None = None

    def __post_init__(self):
        cp = np.asarray(self.control_points, dtype=float)
        if self.regularity is None:
            object.__setattr__(self, "regularity", self.degree)
        if cp.ndim != 3 or cp.shape[2] != 3:
            raise GeometryError("control points must have shape (nv, nu, 3)")
        if cp.shape[:2] != self.space.shape:
            raise GeometryError(
                f"control grid {cp.shape[:2]} does not match space {self.space.shape}"
            )
        if not np.all(np.isfinite(cp)):
            raise GeometryError("non-finite control point")
        if np.any(cp[..., 2] <= 0):
            raise GeometryError("weights must be positive")
        cp.setflags(write=False)
        object.__setattr__(self, "control_points", cp)

    @property
    def space(self) -> SplineSpace2D:
        return SplineSpace2D.uniform(self.degree, self.regularity, self.num_spans)

    @property
    def is_rational(self) -> bool:
        return bool(np.any(self.control_points[..., 2] != 1.0))

    @property
    def weights(self) -> np.ndarray:
        return self.control_points[..., 2]

    def __call__(self, u, v):
        return eval_patch(self, u, v).x


@dataclass
class PatchEval:
    """Point, Jacobian and second derivatives of a map at a set of points.

    ``jac[..., k, a]`` is the derivative of component ``k`` with respect to
    parameter ``a`` (0 = u, 1 = v); ``hess[..., k, a, b]`` likewise.
    """

    x: np.ndarray
    jac: np.ndarray | None = None
    hess: np.ndarray | None = None

    @property
    def det(self) -> np.ndarray:
        j = self.jac
        return j[..., 0, 0] * j[..., 1, 1] - j[..., 0, 1] * j[..., 1, 0]


def _dehomogenize(h, hu, hv, huu, huv, hvv, nderiv) -> PatchEval:
    w = h[..., 2:3]
    x = h[..., :2] / w
    if nderiv == 0:
        return PatchEval(x)
    wu, wv = hu[..., 2:3], hv[..., 2:3]
    xu = (hu[..., :2] - x * wu) / w
    xv = (hv[..., :2] - x * wv) / w
    jac = np.stack([xu, xv], axis=-1)
    if nderiv == 1:
        return PatchEval(x, jac)
    wuu, wuv, wvv = huu[..., 2:3], huv[..., 2:3], hvv[..., 2:3]
    xuu = (huu[..., :2] - 2 * xu * wu - x * wuu) / w
    xuv = (huv[..., :2] - xu * wv - xv * wu - x * wuv) / w
    xvv = (hvv[..., :2] - 2 * xv * wv - x * wvv) / w
    hess = np.stack([np.stack([xuu, xuv], -1), np.stack([xuv, xvv], -1)], -1)
    return PatchEval(x, jac, hess)


def eval_patch(patch: Patch, u, v, nderiv: int = 1) -> PatchEval:
    """Evaluate ``patch`` at the point pairs ``(u[i], v[i])``."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    u, v = np.broadcast_arrays(u, v)
    shape = u.shape
    u, v = u.ravel(), v.ravel()
    sp = patch.space
    cp = patch.control_points
    bu = [collocation_matrix(sp.space_u, u, d) for d in range(nderiv + 1)]
    bv = [collocation_matrix(sp.space_v, v, d) for d in range(nderiv + 1)]

    def comb(du, dv):
        return np.einsum("nj,jic,ni->nc", bv[dv], cp, bu[du])

    h = comb(0, 0)
    hu = hv = huu = huv = hvv = None
    if nderiv >= 1:
        hu, hv = comb(1, 0), comb(0, 1)
    if nderiv >= 2:
        huu, huv, hvv = comb(2, 0), comb(1, 1), comb(0, 2)
    ev = _dehomogenize(h, hu, hv, huu, huv, hvv, nderiv)
    if np.any(h[:, 2] == 0):
        raise GeometryError("zero weight encountered")
    ev.x = ev.x.reshape(shape + (2,))
    if ev.jac is not None:
        ev.jac = ev.jac.reshape(shape + (2, 2))
    if ev.hess is not None:
        ev.hess = ev.hess.reshape(shape + (2, 2, 2))
    return ev


def eval_patch_grid(patch: Patch, u, v, nderiv: int = 1) -> PatchEval:
    """Evaluate on the tensor grid ``v x u``; arrays have leading shape (nv, nu)."""
    sp = patch.space
    cp = patch.control_points
    bu = [collocation_matrix(sp.space_u, u, d) for d in range(nderiv + 1)]
    bv = [collocation_matrix(sp.space_v, v, d) for d in range(nderiv + 1)]

    def comb(du, dv):
        return np.einsum("aj,jic,bi->abc", bv[dv], cp, bu[du])

    h = comb(0, 0)
    hu = hv = huu = huv = hvv = None
    if nderiv >= 1:
        hu, hv = comb(1, 0), comb(0, 1)
    if nderiv >= 2:
        huu, huv, hvv = comb(2, 0), comb(1, 1), comb(0, 2)
    return _dehomogenize(h, hu, hv, huu, huv, hvv, nderiv)


def edge_to_patch(edge: int, s, t):
    """Map (distance from edge ``s``, position along edge ``t``) to patch (u, v)."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if edge == 0:
        return s, t
    if edge == 1:
        return 1.0 - s, t
    if edge == 2:
        return t, s
    if edge == 3:
        return t, 1.0 - s
    raise GeometryError(f"invalid edge {edge}")


def _edge_matrix(edge: int) -> np.ndarray:
    """d(u, v)/d(s, t) for ``edge_to_patch``."""
    return {
        0: np.array([[1.0, 0.0], [0.0, 1.0]]),
        1: np.array([[-1.0, 0.0], [0.0, 1.0]]),
        2: np.array([[0.0, 1.0], [1.0, 0.0]]),
        3: np.array([[0.0, 1.0], [-1.0, 0.0]]),
    }[edge]


def edge_dofs(shape: tuple[int, int], edge: int, layer: int = 0) -> np.ndarray:
    """Local indices (row-major v-then-u) of coefficient layer ``layer`` along ``edge``.

    Ordered by increasing position along the edge.
    """
    nv, nu = shape
    if edge == 0:
        return np.arange(nv) * nu + layer
    if edge == 1:
        return np.arange(nv) * nu + (nu - 1 - layer)
    if edge == 2:
        return layer * nu + np.arange(nu)
    if edge == 3:
        return (nv - 1 - layer) * nu + np.arange(nu)
    raise GeometryError(f"invalid edge {edge}")


@dataclass(frozen=True)
class Interface:
    patch_a: int
    edge_a: int
    patch_b: int
    edge_b: int
    flip: bool = False


class MultiPatchGeometry:
    """Patches plus interface topology; validated on construction."""

    def __init__(self, patches, interfaces, boundary=None, name: str = "", check: bool = True):
        self.patches: list[Patch] = list(patches)
        self.interfaces: list[Interface] = [
            i if isinstance(i, Interface) else Interface(*i) for i in interfaces
        ]
        if boundary is None:
            used = {(i.patch_a, i.edge_a) for i in self.interfaces}
            used |= {(i.patch_b, i.edge_b) for i in self.interfaces}
            boundary = [
                (k, e) for k in range(len(self.patches)) for e in range(4) if (k, e) not in used
            ]
        self.boundary: list[tuple[int, int]] = [tuple(b) for b in boundary]
        self.name = name
        if check:
            self.validate()

    def __repr__(self):
        return (
            f"MultiPatchGeometry(name={self.name!r}, patches={len(self.patches)}, "
            f"interfaces={len(self.interfaces)})"
        )

    @property
    def is_rational(self) -> bool:
        return any(p.is_rational for p in self.patches)

    def validate(self, tol: float = 1e-10):
        seen: dict[tuple[int, int], str] = {}
        for k, iface in enumerate(self.interfaces):
            for key in ((iface.patch_a, iface.edge_a), (iface.patch_b, iface.edge_b)):
                if key in seen:
                    raise GeometryError(f"edge {key} used twice ({seen[key]}, interface {k})")
                seen[key] = f"interface {k}"
        for key in self.boundary:
            if key in seen:
                raise GeometryError(f"edge {key} is both boundary and {seen[key]}")
            seen[key] = "boundary"
        for k in range(len(self.patches)):
            for e in range(4):
                if (k, e) not in seen:
                    raise GeometryError(f"edge {(k, e)} is neither boundary nor interface")
        for k in range(len(self.interfaces)):
            self.interface_mismatch(k, check=tol)
        for k, patch in enumerate(self.patches):
            check_regular(patch, label=f"patch {k}")

    def interface_mismatch(self, index: int, samples: int = 50, check: float | None = None) -> float:
        """Largest distance between the two parametrisations of an interface."""
        iface = self.interfaces[index]
        pa, pb = self.patches[iface.patch_a], self.patches[iface.patch_b]
        if (pa.degree, pa.num_spans, pa.regularity) != (pb.degree, pb.num_spans, pb.regularity):
            raise GeometryError(f"interface {index} joins non-conforming patches")
        t = np.linspace(0.0, 1.0, samples)
        tb = 1.0 - t if iface.flip else t
        xa = pa(*edge_to_patch(iface.edge_a, 0.0, t))
        xb = pb(*edge_to_patch(iface.edge_b, 0.0, tb))
        scale = max(1.0, np.abs(xa).max())
        err = float(np.abs(xa - xb).max() / scale)
        if check is not None and err > check:
            raise GeometryError(f"interface {index} is not C0 (mismatch {err:.3e})")
        return err

    def homogeneous_mismatch(self, index: int) -> float:
        """Mismatch of the homogeneous control points along an interface."""
        iface = self.interfaces[index]
        pa, pb = self.patches[iface.patch_a], self.patches[iface.patch_b]
        shape = pa.space.shape
        ca = pa.control_points.reshape(-1, 3)[edge_dofs(shape, iface.edge_a)]
        cb = pb.control_points.reshape(-1, 3)[edge_dofs(shape, iface.edge_b)]
        if iface.flip:
            cb = cb[::-1]
        return float(np.abs(ca - cb).max())

    def frame(self, index: int) -> "InterfaceFrame":
        return make_interface_frame(self, index)


def check_regular(patch: Patch, grid: int = 20, label: str = "patch") -> float:
    """Raise unless the Jacobian determinant has constant nonzero sign; return its sign."""
    t = np.linspace(0.0, 1.0, grid)
    det = eval_patch_grid(patch, t, t, 1).det
    if np.any(det == 0) or not (np.all(det > 0) or np.all(det < 0)):
        raise GeometryError(f"{label} is singular or folds (det range {det.min():.3e}..{det.max():.3e})")
    return float(np.sign(det[0, 0]))


def detect_topology(patches, tol: float = 1e-10):
    """Find conforming interfaces by matching sampled edge curves."""
    t = np.array([0.0, 0.17, 0.5, 0.83, 1.0])  # symmetric, so reversed edges line up
    curves = {}
    for k, p in enumerate(patches):
        for e in range(4):
            curves[(k, e)] = p(*edge_to_patch(e, 0.0, t))
    keys = sorted(curves)
    interfaces, matched = [], set()
    for i, ka in enumerate(keys):
        if ka in matched:
            continue
        for kb in keys[i + 1 :]:
            if kb in matched or kb[0] == ka[0]:
                continue
            ca, cb = curves[ka], curves[kb]
            scale = max(1.0, np.abs(ca).max())
            for flip in (False, True):
                other = cb[::-1] if flip else cb
                if np.abs(ca - other).max() <= tol * scale:
                    interfaces.append(Interface(ka[0], ka[1], kb[0], kb[1], flip))
                    matched |= {ka, kb}
                    break
            if ka in matched:
                break
    boundary = [k for k in keys if k not in matched]
    return interfaces, boundary


# ---------------------------------------------------------------------------
# interface frames


@dataclass(frozen=True)
class FrameSide:
    """Affine reparametrisation of one patch so that the interface sits at u = 0.

    The left side lives on [-1, 0] x [0, 1], the right side on [0, 1] x [0, 1].
    """

    patch: int
    edge: int
    u_sign: float
    flip: bool

    def to_patch(self, u, v):
        s = self.u_sign * np.asarray(u, dtype=float)
        t = 1.0 - np.asarray(v, dtype=float) if self.flip else np.asarray(v, dtype=float)
        return edge_to_patch(self.edge, s, t)

    @property
    def matrix(self) -> np.ndarray:
        """d(patch u, v)/d(frame u, v)."""
        st = np.diag([self.u_sign, -1.0 if self.flip else 1.0])
        return _edge_matrix(self.edge) @ st


def transform_derivatives(ev: PatchEval, mat: np.ndarray) -> PatchEval:
    """Pull back first/second parametric derivatives through a linear map."""
    jac = hess = None
    if ev.jac is not None:
        jac = ev.jac @ mat
    if ev.hess is not None:
        hess = np.einsum("...kab,ai,bj->...kij", ev.hess, mat, mat)
    return PatchEval(ev.x, jac, hess)


class InterfaceFrame:
    """Canonical left/right parametrisation of one interface."""

    def __init__(self, geometry: MultiPatchGeometry, index: int):
        iface = geometry.interfaces[index]
        self.geometry = geometry
        self.index = index
        self.interface = iface
        self.left = FrameSide(iface.patch_a, iface.edge_a, -1.0, False)
        self.right = FrameSide(iface.patch_b, iface.edge_b, 1.0, iface.flip)

    def side(self, which: str) -> FrameSide:
        return self.left if which == "L" else self.right

    def evaluate(self, which: str, u, v, nderiv: int = 1) -> PatchEval:
        side = self.side(which)
        patch = self.geometry.patches[side.patch]
        ev = eval_patch(patch, *side.to_patch(u, v), nderiv=nderiv)
        return transform_derivatives(ev, side.matrix)

    def F_left(self, u, v):
        return self.evaluate("L", u, v, 0).x

    def F_right(self, u, v):
        return self.evaluate("R", u, v, 0).x

    def F0(self, v):
        return self.F_left(np.zeros_like(np.asarray(v, dtype=float)), v)

    def interface_derivatives(self, v):
        """``(D_u F^L(0,v), D_u F^R(0,v), D_v F_0(v))`` as arrays of shape (n, 2)."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        zero = np.zeros_like(v)
        jl = self.evaluate("L", zero, v).jac
        jr = self.evaluate("R", zero, v).jac
        return jl[..., 0], jr[..., 0], jl[..., 1]

    def homogeneous_interface_derivatives(self, v):
        """Same as :meth:`interface_derivatives` for the homogeneous (3D) surfaces."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        out = []
        for which in ("L", "R"):
            side = self.side(which)
            patch = self.geometry.patches[side.patch]
            pu, pv = side.to_patch(np.zeros_like(v), v)
            sp = patch.space
            cp = patch.control_points
            bu = [collocation_matrix(sp.space_u, pu, d) for d in (0, 1)]
            bv = [collocation_matrix(sp.space_v, pv, d) for d in (0, 1)]
            du = np.einsum("nj,jic,ni->nc", bv[0], cp, bu[1])
            dv = np.einsum("nj,jic,ni->nc", bv[1], cp, bu[0])
            jac = np.stack([du, dv], axis=-1) @ side.matrix
            out.append(jac)
        return out[0][..., 0], out[1][..., 0], out[0][..., 1]

    def is_left_identity(self, tol: float = 1e-12) -> bool:
        """True when F^L(u, v) = (u, v) + const on the frame domain."""
        s = np.linspace(0.0, 1.0, 7)
        uu, vv = np.meshgrid(-s, s)
        jac = self.evaluate("L", uu.ravel(), vv.ravel()).jac
        return bool(np.abs(jac - np.eye(2)).max() <= tol)


def make_interface_frame(geom: MultiPatchGeometry, index: int, samples: int = 50) -> InterfaceFrame:
    if not 0 <= index < len(geom.interfaces):
        raise GeometryError(f"no interface {index}")
    frame = InterfaceFrame(geom, index)
    v = np.linspace(0.0, 1.0, samples)
    zero = np.zeros_like(v)
    xl, xr = frame.F_left(zero, v), frame.F_right(zero, v)
    scale = max(1.0, np.abs(xl).max())
    if np.abs(xl - xr).max() > 1e-10 * scale:
        raise GeometryError(f"interface {index}: edge mismatch, geometry is not C0")
    _, _, tangent = frame.interface_derivatives(v)
    if np.linalg.norm(tangent, axis=1).min() <= 1e-12 * scale:
        raise GeometryError(f"interface {index} is degenerate")
    return frame


# ---------------------------------------------------------------------------
# file format

GEOMETRY_SCHEMA = {
    "type": "object",
    "required": ["patches", "interfaces"],
    "properties": {
        "name": {"type": "string"},
        "patches": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["degree", "num_spans", "regularity", "control_points"],
                "properties": {
                    "degree": {"type": "integer", "minimum": 1},
                    "num_spans": {"type": "integer", "minimum": 1},
                    "regularity": {"type": "integer", "minimum": 1},
                    "control_points": {
                        "type": "array",
                        "items": {
                            "type": "array",
                            "items": {"type": "number"},
                            "minItems": 3,
                            "maxItems": 3,
                        },
                    },
                },
            },
        },
        "interfaces": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["a", "b", "flip"],
                "properties": {
                    "a": {"$ref": "#/$defs/edge"},
                    "b": {"$ref": "#/$defs/edge"},
                    "flip": {"type": "boolean"},
                },
            },
        },
        "boundary": {"type": "array", "items": {"$ref": "#/$defs/edge"}},
    },
    "$defs": {
        "edge": {
            "type": "object",
            "required": ["patch", "edge"],
            "properties": {
                "patch": {"type": "integer", "minimum": 0},
                "edge": {"type": "integer", "minimum": 0, "maximum": 3},
            },
        }
    },
}


def _num(x: float) -> str:
    return format(float(x), ".17g")


def geometry_to_json(geom: MultiPatchGeometry) -> str:
    """Serialise with every coordinate written to 17 significant digits."""
    lines = ["{", f'  "name": {json.dumps(geom.name)},', '  "patches": [']
    for k, p in enumerate(geom.patches):
        pts = ",\n        ".join(
            "[" + ", ".join(_num(c) for c in row) + "]" for row in p.control_points.reshape(-1, 3)
        )
        lines.append(
            f'    {{"degree": {p.degree}, "num_spans": {p.num_spans}, '
            f'"regularity": {p.regularity},\n      "control_points": [\n        {pts}]}}'
            + ("," if k + 1 < len(geom.patches) else "")
        )
    lines.append("  ],")
    ifaces = [
        {
            "a": {"patch": i.patch_a, "edge": i.edge_a},
            "b": {"patch": i.patch_b, "edge": i.edge_b},
            "flip": bool(i.flip),
        }
        for i in geom.interfaces
    ]
    bnd = [{"patch": k, "edge": e} for k, e in geom.boundary]
    lines.append(f'  "interfaces": {json.dumps(ifaces)},')
    lines.append(f'  "boundary": {json.dumps(bnd)}')
    lines.append("}")
    return "\n".join(lines) + "\n"


def geometry_from_json(text: str) -> MultiPatchGeometry:
    data = json.loads(text)
    try:
        jsonschema.validate(data, GEOMETRY_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise GeometryError(f"schema violation: {exc.message}") from exc
    patches = []
    for k, pd in enumerate(data["patches"]):
        sp = SplineSpace2D.uniform(pd["degree"], pd["regularity"], pd["num_spans"])
        cp = np.array(pd["control_points"], dtype=float)
        if cp.shape[0] != sp.dim:
            raise GeometryError(f"patch {k}: expected {sp.dim} control points, got {cp.shape[0]}")
        if np.any(cp[:, 2] <= 0):
            raise GeometryError(f"patch {k}: negative or zero weight")
        patches.append(
            Patch(pd["degree"], cp.reshape(sp.shape + (3,)), pd["num_spans"], pd["regularity"])
        )
    interfaces = [
        Interface(i["a"]["patch"], i["a"]["edge"], i["b"]["patch"], i["b"]["edge"], i["flip"])
        for i in data["interfaces"]
    ]
    for iface in interfaces:
        if max(iface.patch_a, iface.patch_b) >= len(patches):
            raise GeometryError("interface refers to a missing patch")
    boundary = None
    if "boundary" in data:
        boundary = [(b["patch"], b["edge"]) for b in data["boundary"]]
    return MultiPatchGeometry(patches, interfaces, boundary, name=data.get("name", ""))


def save_geometry(geom: MultiPatchGeometry, path) -> None:
    Path(path).write_text(geometry_to_json(geom))


def load_geometry(path) -> MultiPatchGeometry:
    return geometry_from_json(Path(path).read_text())
