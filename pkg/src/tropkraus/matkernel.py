"""Dense matrix kernel: symmetric eigendecomposition, PD square roots,
symmetric absolute value, matrix exponential, geometric mean, PSD tests.

All routines operate on plain ``numpy.ndarray`` values (dtype float64).
Symmetric results are re-symmetrized before they are returned so that
round-off drift never accumulates across compositions.  Every function is
pure; nothing here holds state, so values can be shared freely across
threads.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DomainError, NumericFailure, UsageError

__all__ = [
    "symmetrize",
    "require_symmetric",
    "require_square",
    "pd_tolerance",
    "eig_sym",
    "sqrt_pd",
    "abs_sym",
    "matexp",
    "inner",
    "min_eigenvalue",
    "is_psd",
    "geometric_mean",
]

#: Relative symmetry tolerance: |M - M^T| <= SYM_RTOL * (1 + max|M|).
SYM_RTOL = 1e-12


def symmetrize(m):
    """Return (M + M^T)/2 as a new array."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def require_square(m, name="matrix"):
    """Validate that ``m`` is a finite square 2-d array and return it."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise UsageError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise UsageError(f"{name} has non-finite entries")
    return m


def require_symmetric(m, name="matrix"):
    """Validate symmetry up to SYM_RTOL * (1 + max|M|) and return the
    symmetrized array."""
    m = require_square(m, name)
    scale = 1.0 + (np.max(np.abs(m)) if m.size else 0.0)
    if np.max(np.abs(m - m.T), initial=0.0) > SYM_RTOL * scale:
        raise UsageError(f"{name} is not symmetric within tolerance")
    return symmetrize(m)


def pd_tolerance(m):
    """Relative floor for positive-definiteness checks,
    1e-12 * (1 + trace(M)/n), clamped below at 1e-12."""
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    rel = np.trace(m) / n if n else 0.0
    return 1e-12 * (1.0 + max(rel, 0.0))


def eig_sym(m):
    """Eigendecomposition of a symmetric matrix.

    Returns ``(w, u)`` with eigenvalues ``w`` sorted ascending and
    orthonormal eigenvectors in the columns of ``u`` so that
    ``m = u @ diag(w) @ u.T``.

    Raises NumericFailure if the underlying solver does not converge.
    """
    m = require_symmetric(m)
    try:
        w, u = np.linalg.eigh(m)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure(f"symmetric eigensolver failed: {exc}") from exc
    return w, u


def sqrt_pd(m):
    """Unique positive definite square root of a positive definite matrix.

    Raises DomainError (reporting the offending eigenvalue) when the
    smallest eigenvalue does not exceed ``pd_tolerance(m)``.
    """
    w, u = eig_sym(m)
    tol = pd_tolerance(m)
    if w[0] <= tol:
        raise DomainError(
            f"matrix is not positive definite: min eigenvalue {w[0]:.6e} "
            f"<= tolerance {tol:.6e}"
        )
    return symmetrize((u * np.sqrt(w)) @ u.T)


def abs_sym(m):
    """Symmetric absolute value |M| = (M M^T)^{1/2} = U |diag| U^T."""
    w, u = eig_sym(m)
    return symmetrize((u * np.abs(w)) @ u.T)


def matexp(m):
    """Matrix exponential of a real square matrix (scaling and squaring
    with a diagonal Pade approximant).

    Raises NumericFailure if the result overflows.
    """
    m = require_square(m)
    with np.errstate(over="ignore", invalid="ignore"):
        result = scipy.linalg.expm(m)
    if not np.all(np.isfinite(result)):
        raise NumericFailure(
            f"matrix exponential overflowed (input norm {np.linalg.norm(m):.3e})"
        )
    return result


def inner(p, q):
    """Frobenius inner product <P, Q> = trace(PQ) of two symmetric
    matrices of equal dimension."""
    p = require_symmetric(p, "P")
    q = require_symmetric(q, "Q")
    if p.shape != q.shape:
        raise UsageError(f"dimension mismatch: {p.shape} vs {q.shape}")
    return float(np.trace(p @ q))


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix."""
    m = require_symmetric(m)
    return float(np.linalg.eigvalsh(m)[0])


def is_psd(m, tol=None):
    """True iff min_eigenvalue(m) >= -tol.  ``tol=None`` uses the
    relative floor pd_tolerance(m)."""
    if tol is None:
        tol = pd_tolerance(m)
    return min_eigenvalue(m) >= -tol


def geometric_mean(p, q):
    """Riemannian barycenter P # Q = P^{1/2} (P^{-1/2} Q P^{-1/2})^{1/2} P^{1/2}
    of two positive definite matrices."""
    p = require_symmetric(p, "P")
    q = require_symmetric(q, "Q")
    if p.shape != q.shape:
        raise UsageError(f"dimension mismatch: {p.shape} vs {q.shape}")
    w, u = eig_sym(p)
    tol = pd_tolerance(p)
    if w[0] <= tol:
        raise DomainError(f"P is not positive definite (min eigenvalue {w[0]:.6e})")
    sw = np.sqrt(w)
    p_half = (u * sw) @ u.T
    p_nhalf = (u / sw) @ u.T
    mid = symmetrize(p_nhalf @ q @ p_nhalf)
    wm = np.linalg.eigvalsh(mid)
    if wm[0] <= pd_tolerance(mid):
        raise DomainError(f"Q is not positive definite (min eigenvalue of "
                          f"P^-1/2 Q P^-1/2 is {wm[0]:.6e})")
    return symmetrize(p_half @ sqrt_pd(mid) @ p_half)
