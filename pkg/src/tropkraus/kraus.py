"""Tropical Kraus maps and the eigeniteration that certifies joint
spectral radius bounds.

A state is a tuple X = (X_1, ..., X_p) of PSD matrices indexed by the
nodes of an automaton, stored as one ndarray of shape (p, n, n).  The map

    T_j(X) = fold{ A_sigma^T X_i A_sigma + eps*I : edges (i, sigma, j) }

replaces the sum of a completely positive map by a sequential minimal
upper bound in the Loewner order.  The damped, trace-normalized iteration

    X <- 1/2 [ T(X) / <I, T(X)> + X ]

is run on the simplex {sum_j trace(X_j) = 1}; its fixed points are
non-linear eigenvectors of T.  Whatever the iteration returns, converged
or not, `certify` extracts a bound rho with rho^2 X_j >= A_sigma^T X_i
A_sigma on every edge, which is a sound upper bound on the joint spectral
radius of the family.

Per-node folds are mutually independent given the input state; the batched
implementation exploits that.  The fold inside one node is sequential and
follows the canonical edge order, so results are reproducible bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .automaton import automaton_from_json, automaton_to_json, edges, family_hash
from .errors import DivergenceError, DomainError, InstanceError, UsageError
from .loewner import (
    TRACE,
    _mub_fold_stacked,
    _pd_split_batch,
    _sym_batch,
    mub_fold,
)
from .matkernel import min_eigenvalue, symmetrize

__all__ = [
    "EigenResult",
    "Certificate",
    "uniform_state",
    "trace_sum",
    "state_norm",
    "apply_T",
    "km_iterate",
    "km_iterate_multiplicative",
    "certify",
    "extremal_norm",
    "verify_certificate",
    "certificate_to_json",
    "certificate_from_json",
]


def uniform_state(n, p):
    """Barycenter of the simplex: X_j = I_n / (n*p) for every node."""
    return np.broadcast_to(np.eye(n) / (n * p), (p, n, n)).copy()


def trace_sum(state):
    """<I_n^p, X> = sum_j trace(X_j)."""
    return float(np.trace(np.asarray(state), axis1=-2, axis2=-1).sum())


def state_norm(state):
    """Frobenius norm of the stacked tuple."""
    return float(np.linalg.norm(np.asarray(state)))


@dataclass(frozen=True, eq=False)
class EigenResult:
    """Outcome of an eigeniteration run.

    ``rho_cert`` is the certified joint-spectral-radius bound extracted
    from the final state; it is sound regardless of ``converged``.
    ``eigenvalue`` (the report field "lambda") is <I, T(X)> at the final
    iterate and is diagnostic only: the epsilon perturbation is inside it,
    while ``rho_cert`` checks the unperturbed edge inequalities.
    """

    state: np.ndarray
    eigenvalue: float
    rho_cert: float
    iterations: int
    residual: float
    epsilon: float
    converged: bool


class _FoldPlan:
    """Incoming edges per node, grouped for batched congruence sweeps."""

    def __init__(self, aut):
        incoming = [[] for _ in range(aut.p)]
        for i, s, j in edges(aut):
            incoming[j].append((i, s))
        for j, lst in enumerate(incoming):
            if not lst:
                raise InstanceError(f"node {j} has no incoming edge")
        self.m = aut.m
        self.p = aut.p
        self.incoming = incoming
        degrees = {len(lst) for lst in incoming}
        self.uniform_degree = degrees.pop() if len(degrees) == 1 else None
        if self.uniform_degree is not None:
            k = self.uniform_degree
            self.src = np.array(
                [[lst[t][0] for lst in incoming] for t in range(k)], dtype=np.int64
            )
            let = np.array(
                [[lst[t][1] for lst in incoming] for t in range(k)], dtype=np.int64
            )
            self.groups = [
                [np.nonzero(let[t] == s)[0] for s in range(aut.m)] for t in range(k)
            ]

    def congruence_terms(self, x, mats, eps):
        """Stack terms[t, j] = A^T X_i A + eps*I over incoming edges."""
        k = self.uniform_degree
        p, n = x.shape[0], x.shape[1]
        terms = np.empty((k, p, n, n))
        for t in range(k):
            for s, pos in enumerate(self.groups[t]):
                if pos.size:
                    a = mats[s]
                    terms[t, pos] = a.T @ x[self.src[t, pos]] @ a
        terms = _sym_batch(terms)
        if eps:
            terms += eps * np.eye(n)
        return terms


def _apply_planned(x, mats, plan, sel, eps):
    if plan.uniform_degree is not None:
        return _mub_fold_stacked(plan.congruence_terms(x, mats, eps), sel)
    n = x.shape[1]
    shift = eps * np.eye(n)
    out = np.empty_like(x)
    for j, lst in enumerate(plan.incoming):
        terms = [symmetrize(mats[s].T @ x[i] @ mats[s]) + shift for i, s in lst]
        out[j] = mub_fold(terms, sel)
    return out


def _check_state(state, family, aut):
    x = np.asarray(state, dtype=float)
    if x.shape != (aut.p, family.n, family.n):
        raise UsageError(
            f"state must have shape ({aut.p}, {family.n}, {family.n}), "
            f"got {x.shape}"
        )
    if family.m != aut.m:
        raise InstanceError(
            f"family has {family.m} modes but automaton reads {aut.m} letters"
        )
    return x


def apply_T(state, family, aut, sel=TRACE, eps=0.0):
    """One application of the selected tropical Kraus map.

    result_j = mub_fold([A_sigma^T X_i A_sigma + eps*I for incoming edges
    of j in canonical order], sel).  Entries are positive definite
    whenever eps > 0.
    """
    x = _check_state(state, family, aut)
    if eps < 0:
        raise UsageError(f"eps must be >= 0, got {eps}")
    return _apply_planned(x, family.matrices, _FoldPlan(aut), sel, eps)


def _prepare_x0(x0, family, aut, normalize):
    if x0 is None:
        x = uniform_state(family.n, aut.p)
    else:
        x = _check_state(x0, family, aut).copy()
        if normalize:
            s = trace_sum(x)
            if not math.isfinite(s) or s <= 0:
                raise UsageError("x0 must have positive total trace")
            x /= s
    return x


def km_iterate(family, aut, sel=TRACE, eps=1e-3, x0=None, tol=1e-9, max_iter=10000):
    """Damped power iteration for a non-linear eigenvector of T.

    Iterates X <- 1/2 [T(X)/<I,T(X)> + X] on the trace-one simplex,
    re-normalizing each step to kill rounding drift, until the successive
    Frobenius difference drops to ``tol`` or ``max_iter`` is hit.  The
    returned certificate bound is sound either way.
    """
    if tol <= 0:
        raise UsageError(f"tol must be positive, got {tol}")
    if eps < 0:
        raise UsageError(f"eps must be >= 0, got {eps}")
    mats = family.matrices
    plan = _FoldPlan(aut)
    x = _prepare_x0(x0, family, aut, normalize=True)
    iterations = 0
    converged = False
    for k in range(1, max_iter + 1):
        tx = _apply_planned(x, mats, plan, sel, eps)
        s = trace_sum(tx)
        if not math.isfinite(s) or s <= 0:
            raise DivergenceError(
                f"trace of T(X) became {s} at iteration {k}", iterations=k
            )
        xn = 0.5 * (tx / s + x)
        xn /= trace_sum(xn)
        if not np.all(np.isfinite(xn)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", iterations=k)
        diff = state_norm(xn - x)
        x = xn
        iterations = k
        if diff <= tol:
            converged = True
            break
    tx = _apply_planned(x, mats, plan, sel, eps)
    lam = trace_sum(tx)
    residual = state_norm(tx / lam - x)
    return EigenResult(
        state=x,
        eigenvalue=lam,
        rho_cert=certify(x, family, aut),
        iterations=iterations,
        residual=residual,
        epsilon=eps,
        converged=converged,
    )


def _sqrt_pd_batch(p, context):
    half, _ = _pd_split_batch(p, context)
    return half


def _geometric_mean_batch(p, q):
    p_half, p_nhalf = _pd_split_batch(p, "geometric mean")
    mid = _sym_batch(p_nhalf @ q @ p_nhalf)
    return _sym_batch(p_half @ _sqrt_pd_batch(mid, "geometric mean") @ p_half)


def km_iterate_multiplicative(
    family, aut, sel=TRACE, eps=1e-3, x0=None, tol=1e-9, max_iter=10000
):
    """Multiplicative eigeniteration: X <- [T(X)/<I,T(X)>] # X, the
    Riemannian barycenter of the normalized image and the iterate.

    Same stopping contract as km_iterate; loss of positive definiteness
    raises DivergenceError.
    """
    if tol <= 0:
        raise UsageError(f"tol must be positive, got {tol}")
    if eps < 0:
        raise UsageError(f"eps must be >= 0, got {eps}")
    mats = family.matrices
    plan = _FoldPlan(aut)
    x = _prepare_x0(x0, family, aut, normalize=True)
    iterations = 0
    converged = False
    for k in range(1, max_iter + 1):
        tx = _apply_planned(x, mats, plan, sel, eps)
        s = trace_sum(tx)
        if not math.isfinite(s) or s <= 0:
            raise DivergenceError(
                f"trace of T(X) became {s} at iteration {k}", iterations=k
            )
        try:
            xn = _geometric_mean_batch(tx / s, x)
        except DomainError as exc:
            raise DivergenceError(
                f"positive definiteness lost at iteration {k}: {exc}", iterations=k
            ) from exc
        if not np.all(np.isfinite(xn)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", iterations=k)
        diff = state_norm(xn - x)
        x = xn
        iterations = k
        if diff <= tol:
            converged = True
            break
    tx = _apply_planned(x, mats, plan, sel, eps)
    lam = trace_sum(tx)
    residual = state_norm(tx / lam - x)
    return EigenResult(
        state=x,
        eigenvalue=lam,
        rho_cert=certify(x, family, aut),
        iterations=iterations,
        residual=residual,
        epsilon=eps,
        converged=converged,
    )


def certify(state, family, aut):
    """Tightest rho with rho^2 X_j >= A_sigma^T X_i A_sigma on every edge.

    With X_j = L_j L_j^T this is the max over edges of
    sqrt(lambda_max(L_j^{-1} A^T X_i A L_j^{-T})); the inequality then
    holds by construction, so the joint spectral radius of the family
    cannot exceed the returned value.  Requires every X_j positive
    definite.
    """
    x = _check_state(state, family, aut)
    mats = family.matrices
    chols = []
    for j in range(aut.p):
        try:
            chols.append(np.linalg.cholesky(x[j]))
        except np.linalg.LinAlgError as exc:
            raise DomainError(
                f"state entry {j} is not positive definite; cannot certify"
            ) from exc
    worst = 0.0
    for i, s, j in edges(aut):
        target = symmetrize(mats[s].T @ x[i] @ mats[s])
        l = chols[j]
        half = scipy.linalg.solve_triangular(l, target, lower=True)
        whitened = scipy.linalg.solve_triangular(l, half.T, lower=True)
        lam_max = float(np.linalg.eigvalsh(symmetrize(whitened))[-1])
        worst = max(worst, lam_max)
    return math.sqrt(max(worst, 0.0))


def extremal_norm(state, z):
    """v(z) = max_j sqrt(z^T X_j z).  A norm whenever sum_j X_j is
    positive definite."""
    x = np.asarray(state, dtype=float)
    z = np.asarray(z, dtype=float)
    vals = np.einsum("pij,i,j->p", x, z, z)
    return float(np.sqrt(max(float(vals.max()), 0.0)))


def verify_certificate(state, rho, family, aut, tol=1e-8):
    """Independent re-check of a certificate (used by the CLI `check`).

    Verifies min_eigenvalue(rho^2 X_j - A^T X_i A) >= -tol relative to the
    edge scale, for every edge, plus positive definiteness of sum_j X_j.
    Deliberately avoids the Cholesky route used by `certify`.

    Returns (valid, worst_margin) where worst_margin is the smallest
    relative edge margin encountered.
    """
    x = _check_state(state, family, aut)
    mats = family.matrices
    worst = math.inf
    for i, s, j in edges(aut):
        target = symmetrize(mats[s].T @ x[i] @ mats[s])
        gap = symmetrize(rho * rho * x[j] - target)
        scale = 1.0 + rho * rho * np.linalg.norm(x[j]) + np.linalg.norm(target)
        worst = min(worst, min_eigenvalue(gap) / scale)
    total = symmetrize(x.sum(axis=0))
    n = total.shape[0]
    sum_pd = min_eigenvalue(total) > 1e-12 * (1.0 + max(np.trace(total) / n, 0.0))
    return (worst >= -tol) and sum_pd, worst


@dataclass(frozen=True, eq=False)
class Certificate:
    """On-disk certificate: bound rho, the automaton, the eigenvector
    tuple X, the perturbation used, and a hash of the matrix family."""

    rho: float
    automaton: object
    state: np.ndarray
    epsilon: float
    family_hash: str


def certificate_to_json(cert):
    return {
        "rho": float(cert.rho),
        "automaton": automaton_to_json(cert.automaton),
        "X": [[[float(v) for v in row] for row in mat] for mat in cert.state],
        "epsilon": float(cert.epsilon),
        "family_hash": cert.family_hash,
    }


def certificate_from_json(doc):
    try:
        rho = float(doc["rho"])
        aut = automaton_from_json(doc["automaton"])
        state = np.asarray(doc["X"], dtype=float)
        epsilon = float(doc["epsilon"])
        fhash = str(doc["family_hash"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed certificate JSON: {exc}") from exc
    if state.ndim != 3 or state.shape[0] != aut.p or state.shape[1] != state.shape[2]:
        raise UsageError(f"certificate X has inconsistent shape {state.shape}")
    return Certificate(
        rho=rho, automaton=aut, state=state, epsilon=epsilon, family_hash=fhash
    )
