"""Minimal upper bounds of symmetric matrices in the Loewner order.

Two matrices that are not comparable have no supremum, only a continuum of
minimal upper bounds.  Each positive definite selector matrix C exposes one
of them:

    X_C = (P+Q)/2 + 1/2 * C^{-1/2} |C^{1/2} (P-Q) C^{1/2}| C^{-1/2}

The trace selection uses C = I at every step; the det selection (minimum
volume enclosing ellipsoid at pairs) uses C = P^{-1}.  Sets of more than two
matrices are reduced by a right-associated sequential fold of pair bounds,
which approximates (and upper-bounds) the exact multi-matrix selection.

Everything here is pure and safe for concurrent use.  The ``_batch``
helpers apply the same pair formula to stacks of matrices at once; the
iteration drivers rely on them for speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .matkernel import (
    abs_sym,
    eig_sym,
    min_eigenvalue,
    pd_tolerance,
    require_symmetric,
    symmetrize,
)

__all__ = [
    "Selection",
    "TRACE",
    "DET",
    "mub_pair",
    "mub_fold",
    "is_upper_bound",
    "minimality_witness",
]


@dataclass(frozen=True, eq=False)
class Selection:
    """A rule picking one minimal upper bound per pair.

    kind is one of "trace" (C = I), "det" (C = P^{-1} in pair folds) or
    "custom" (a fixed positive definite C supplied by the caller).
    """

    kind: str
    c: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("trace", "det", "custom"):
            raise UsageError(f"unknown selection kind {self.kind!r}")
        if self.kind == "custom":
            c = require_symmetric(self.c, "selector C")
            if min_eigenvalue(c) <= pd_tolerance(c):
                raise DomainError("custom selector C must be positive definite")
            object.__setattr__(self, "c", c)
        elif self.c is not None:
            raise UsageError(f"selection {self.kind!r} takes no selector matrix")

    @classmethod
    def trace(cls):
        return cls("trace")

    @classmethod
    def det(cls):
        return cls("det")

    @classmethod
    def custom(cls, c):
        return cls("custom", np.asarray(c, dtype=float))

    def __repr__(self):
        return f"Selection({self.kind!r})"


TRACE = Selection.trace()
DET = Selection.det()


def mub_pair(p, q, c=None):
    """Minimal upper bound of {P, Q} selected by the positive definite
    matrix C (C = I when omitted)."""
    p = require_symmetric(p, "P")
    q = require_symmetric(q, "Q")
    if p.shape != q.shape:
        raise UsageError(f"dimension mismatch: {p.shape} vs {q.shape}")
    if c is None:
        return symmetrize(0.5 * (p + q) + 0.5 * abs_sym(p - q))
    c = require_symmetric(c, "C")
    if c.shape != p.shape:
        raise UsageError(f"selector dimension mismatch: {c.shape} vs {p.shape}")
    w, u = eig_sym(c)
    if w[0] <= pd_tolerance(c):
        raise DomainError(
            f"selector C is not positive definite (min eigenvalue {w[0]:.6e})"
        )
    sw = np.sqrt(w)
    c_half = (u * sw) @ u.T
    c_nhalf = (u / sw) @ u.T
    inner_abs = abs_sym(symmetrize(c_half @ (p - q) @ c_half))
    return symmetrize(0.5 * (p + q) + 0.5 * (c_nhalf @ inner_abs @ c_nhalf))


def _mub_pair_det(p, q):
    """Pair bound with C = P^{-1}: C^{1/2} = P^{-1/2}, C^{-1/2} = P^{1/2}."""
    w, u = eig_sym(p)
    if w[0] <= pd_tolerance(p):
        raise DomainError(
            f"det selection requires positive definite entries "
            f"(min eigenvalue {w[0]:.6e})"
        )
    sw = np.sqrt(w)
    p_half = (u * sw) @ u.T
    p_nhalf = (u / sw) @ u.T
    inner_abs = abs_sym(symmetrize(p_nhalf @ (p - q) @ p_nhalf))
    return symmetrize(0.5 * (p + q) + 0.5 * (p_half @ inner_abs @ p_half))


def mub_fold(mats, sel=TRACE):
    """Right-associated sequential fold Q_1 u (Q_2 u (... u Q_k)) of pair
    bounds under the given selection.

    The fold order is exactly the order of ``mats``; callers that need
    reproducible results must fix that order themselves.  A singleton list
    returns its (symmetrized) element.
    """
    mats = [require_symmetric(m) for m in mats]
    if not mats:
        raise UsageError("mub_fold requires a nonempty list")
    if any(m.shape != mats[0].shape for m in mats):
        raise UsageError("mub_fold entries must share one dimension")
    acc = mats[-1]
    for m in reversed(mats[:-1]):
        if sel.kind == "trace":
            acc = mub_pair(m, acc)
        elif sel.kind == "det":
            acc = _mub_pair_det(m, acc)
        else:
            acc = mub_pair(m, acc, sel.c)
    return acc


def is_upper_bound(x, mats, tol):
    """True iff min_eigenvalue(X - Q_i) >= -tol for every Q_i."""
    x = require_symmetric(x, "X")
    return all(min_eigenvalue(symmetrize(x - q)) >= -tol for q in mats)


def minimality_witness(x, mats, trials=200, step=None, rng=0, tol=None):
    """Probabilistic necessary condition for X being a minimal upper bound.

    Samples ``trials`` random unit-Frobenius-norm PSD directions D and
    returns True iff X - step*D fails to be an upper bound for every one of
    them.  False means a strictly smaller upper bound was found, so X is
    certainly not minimal; True is only a necessary condition.
    """
    x = require_symmetric(x, "X")
    n = x.shape[0]
    if step is None:
        step = 1e-3 * np.linalg.norm(x)
    if tol is None:
        tol = 1e-9 * (1.0 + np.linalg.norm(x))
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    for _ in range(trials):
        g = gen.standard_normal((n, n))
        d = g @ g.T
        d /= np.linalg.norm(d)
        if is_upper_bound(x - step * d, mats, tol):
            return False
    return True


# -- batched variants on stacks of shape (..., n, n) ------------------------
#
# These reproduce mub_pair / mub_fold slice by slice (np.linalg.eigh applies
# the same LAPACK routine per slice), so results match the scalar API up to
# the usual floating-point reproducibility of the platform.


def _sym_batch(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


def _abs_sym_batch(d):
    if d.shape[-1] == 1:
        return np.abs(d)
    w, v = np.linalg.eigh(d)
    return _sym_batch((v * np.abs(w)[..., None, :]) @ np.swapaxes(v, -1, -2))


def _pd_split_batch(p, context):
    """(P^{1/2}, P^{-1/2}) for a stack of PD matrices."""
    n = p.shape[-1]
    tol = 1e-12 * (1.0 + np.maximum(np.trace(p, axis1=-2, axis2=-1) / n, 0.0))
    if n == 1:
        if np.any(p[..., 0, 0] <= tol):
            raise DomainError(f"{context}: entry is not positive definite")
        s = np.sqrt(p)
        return s, 1.0 / s
    w, v = np.linalg.eigh(p)
    if np.any(w[..., 0] <= tol):
        raise DomainError(
            f"{context}: entry is not positive definite "
            f"(min eigenvalue {np.min(w[..., 0]):.6e})"
        )
    sw = np.sqrt(w)
    vt = np.swapaxes(v, -1, -2)
    return (v * sw[..., None, :]) @ vt, (v / sw[..., None, :]) @ vt


def _mub_pair_batch(p, q, sel):
    """mub_pair applied slice-wise to stacks p, q of shape (..., n, n)."""
    if sel.kind == "trace":
        return _sym_batch(0.5 * (p + q) + 0.5 * _abs_sym_batch(_sym_batch(p - q)))
    if sel.kind == "det":
        p_half, p_nhalf = _pd_split_batch(p, "det selection")
        inner_abs = _abs_sym_batch(_sym_batch(p_nhalf @ (p - q) @ p_nhalf))
        return _sym_batch(0.5 * (p + q) + 0.5 * (p_half @ inner_abs @ p_half))
    w, u = eig_sym(sel.c)
    sw = np.sqrt(w)
    c_half = (u * sw) @ u.T
    c_nhalf = (u / sw) @ u.T
    inner_abs = _abs_sym_batch(_sym_batch(c_half @ (p - q) @ c_half))
    return _sym_batch(0.5 * (p + q) + 0.5 * (c_nhalf @ inner_abs @ c_nhalf))


def _mub_fold_stacked(terms, sel):
    """Right fold along axis 0 of a (k, ..., n, n) stack, all slices at once."""
    acc = terms[-1]
    for t in range(terms.shape[0] - 2, -1, -1):
        acc = _mub_pair_batch(terms[t], acc, sel)
    return acc
