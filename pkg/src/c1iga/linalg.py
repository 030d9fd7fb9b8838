"""Dense linear algebra: symmetric eigenproblems, null spaces and SPD solves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

__all__ = [
    "LinAlgContractError",
    "AmbiguousGapWarning",
    "Spectrum",
    "NullSpace",
    "sym_eig",
    "nullspace",
    "svd_nullspace",
    "spd_solve",
    "DEFAULT_NULLSPACE_TOL",
    "AMBIGUOUS_GAP_RATIO",
]

DEFAULT_NULLSPACE_TOL = 1e-8
AMBIGUOUS_GAP_RATIO = 1e4


class LinAlgContractError(np.linalg.LinAlgError):
    """Input or output of a dense routine violates its contract."""


class AmbiguousGapWarning(RuntimeWarning):
    """Null and non-null eigenvalues are not clearly separated."""


@dataclass
class Spectrum:
    """Ascending eigenvalues together with the detected null/non-null split.

    ``gap_index`` is the number of eigenvalues classified as numerically zero
    (``None`` when every eigenvalue is zero or none is).  ``gap_ratio`` is
    ``eigenvalues[gap_index] / |eigenvalues[gap_index - 1]|``.
    """

    eigenvalues: np.ndarray
    threshold: float
    gap_index: int | None
    gap_ratio: float

    @property
    def ambiguous(self) -> bool:
        return self.gap_index is not None and self.gap_ratio < AMBIGUOUS_GAP_RATIO

    @property
    def num_zero(self) -> int:
        return int(np.count_nonzero(self.eigenvalues <= self.threshold))


@dataclass
class NullSpace:
    basis: np.ndarray
    spectrum: Spectrum

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def _check_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise LinAlgContractError("expected a 2D array")
    if not np.all(np.isfinite(m)):
        raise LinAlgContractError("matrix has non-finite entries")
    return m


def _check_symmetric(m: np.ndarray, rtol: float = 1e-12) -> None:
    if m.shape[0] != m.shape[1]:
        raise LinAlgContractError(f"matrix is not square: {m.shape}")
    scale = np.abs(m).max(initial=0.0)
    if np.abs(m - m.T).max(initial=0.0) > rtol * max(scale, np.finfo(float).tiny):
        raise LinAlgContractError("matrix is not symmetric")


def sym_eig(m, check: bool = True):
    """Eigen-decomposition of a symmetric matrix; returns ``(eigenvalues, V)``."""
    m = _check_matrix(m)
    _check_symmetric(m)
    try:
        lam, vec = sla.eigh(m)
    except sla.LinAlgError as exc:
        raise LinAlgContractError("eigensolver did not converge") from exc
    if check and m.size:
        norm = np.linalg.norm(m)
        res = np.linalg.norm(m @ vec - vec * lam)
        orth = np.abs(vec.T @ vec - np.eye(m.shape[0])).max()
        if res > 1e-10 * max(norm, 1.0) or orth > 1e-10:
            raise LinAlgContractError(
                f"eigendecomposition inaccurate (residual {res:.2e}, orthogonality {orth:.2e})"
            )
    return lam, vec


def _spectrum(lam: np.ndarray, tol: float) -> Spectrum:
    lam = np.sort(lam)
    lmax = np.abs(lam).max(initial=0.0)
    threshold = tol * lmax
    k = int(np.count_nonzero(lam <= threshold))
    if lmax == 0.0 or k in (0, lam.size):
        return Spectrum(lam, threshold, None, np.inf)
    below = abs(lam[k - 1])
    ratio = np.inf if below == 0.0 else lam[k] / below
    return Spectrum(lam, threshold, k, float(ratio))


def _warn_if_ambiguous(spec: Spectrum) -> None:
    if spec.ambiguous:
        warnings.warn(
            f"ambiguous spectral gap: ratio {spec.gap_ratio:.3e} at index {spec.gap_index}",
            AmbiguousGapWarning,
            stacklevel=3,
        )


def nullspace(m, tol: float = DEFAULT_NULLSPACE_TOL, warn: bool = True) -> NullSpace:
    """Orthonormal basis of the eigenvectors of a PSD matrix below ``tol * lambda_max``.

    An all-zero matrix has the identity as null basis.
    """
    m = _check_matrix(m)
    _check_symmetric(m)
    n = m.shape[0]
    if not np.any(m):
        return NullSpace(np.eye(n), Spectrum(np.zeros(n), 0.0, None, np.inf))
    lam, vec = sym_eig(m, check=False)
    spec = _spectrum(lam, tol)
    if warn:
        _warn_if_ambiguous(spec)
    return NullSpace(vec[:, : spec.num_zero], spec)


def svd_nullspace(j, tol: float = DEFAULT_NULLSPACE_TOL, warn: bool = True) -> NullSpace:
    """Null space of ``J^T J`` computed from the SVD of the rectangular factor ``J``.

    The threshold matches :func:`nullspace` applied to ``J^T J``, i.e. singular
    values below ``sqrt(tol) * sigma_max`` are rejected, but the basis keeps
    the full accuracy of the SVD instead of the square-rooted accuracy of the
    Gram eigenproblem.  The reported spectrum holds the squared singular values.
    """
    j = _check_matrix(j)
    n = j.shape[1]
    if not np.any(j):
        return NullSpace(np.eye(n), Spectrum(np.zeros(n), 0.0, None, np.inf))
    _, s, vt = sla.svd(j, full_matrices=True, lapack_driver="gesvd")
    lam = np.zeros(n)
    lam[: s.size] = s**2
    order = np.argsort(lam, kind="stable")
    spec = _spectrum(lam[order], tol)
    if warn:
        _warn_if_ambiguous(spec)
    return NullSpace(vt[order[: spec.num_zero]].T.copy(), spec)


def spd_solve(a, b, check: bool = True) -> np.ndarray:
    """Cholesky solve of ``a z = b`` for symmetric positive-definite ``a``."""
    a = _check_matrix(a)
    _check_symmetric(a, rtol=1e-10)
    b = np.asarray(b, dtype=float)
    try:
        factor = sla.cho_factor(a, lower=True, check_finite=False)
    except sla.LinAlgError as exc:
        raise LinAlgContractError(
            "non-positive pivot: projected system is rank deficient"
        ) from exc
    z = sla.cho_solve(factor, b, check_finite=False)
    if check:
        res = np.linalg.norm(a @ z - b)
        bound = 1e-10 * (np.linalg.norm(a, 2) * np.linalg.norm(z) + np.linalg.norm(b))
        if res > max(bound, np.finfo(float).tiny):
            raise LinAlgContractError(f"solve residual {res:.2e} exceeds tolerance")
    return z
