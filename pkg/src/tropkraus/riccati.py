"""Switched linear-quadratic machinery.

Per mode sigma the data (A, B, D) and a gain bound gamma define the
Hamiltonian

    H_sigma(x, q) = (A x)^T q + 1/2 x^T D x + 1/2 q^T Qc q,
    Qc = gamma^{-2} B B^T,

and the indefinite Riccati flow  dP/dt = A^T P + P A + P Qc P + D.  The
flow on a quadratic form is evaluated analytically through the 2n x 2n
matrix

    [[-A, -Qc], [D, A^T]]

as P(tau) = Y(tau) X(tau)^{-1} with (X; Y) = exp(tau * blocks) (I; P0).
The lower-right block is A^T, which is what the displayed ODE requires;
the RK4 oracle in `oracles` pins this choice down in the tests.

The time-step tropical map folds flowed quadratics over automaton edges,
exactly like the discrete map in `kraus` but with Riccati propagation in
place of congruence, and its plain fixed-point iteration produces
piecewise quadratic under-approximations V(x) = max_i x^T X_i x of the
switched value function.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .automaton import automaton_from_json, automaton_to_json, edges
from .errors import (
    DivergenceError,
    InstanceError,
    RiccatiEscapeError,
    UsageError,
)
from .kraus import _FoldPlan, state_norm
from .loewner import DET, _mub_fold_stacked, _sym_batch, mub_fold
from .matkernel import matexp, require_square, require_symmetric, symmetrize

__all__ = [
    "LQMode",
    "LQProblem",
    "ValueApprox",
    "HJBResult",
    "hamiltonian_matrix",
    "riccati_flow",
    "RiccatiStepper",
    "apply_M_tau",
    "hjb_fixed_point",
    "value_and_gradient",
    "backsub_error",
    "subinvariance_check",
    "lq_to_json",
    "lq_from_json",
    "lq_hash",
    "value_to_json",
    "value_from_json",
]

#: Iterates whose stacked Frobenius norm exceeds this are declared divergent.
DIVERGENCE_NORM = 1e12


@dataclass(frozen=True, eq=False)
class LQMode:
    """One mode: drift A (n x n), input map B (n x p_u), state cost D."""

    a: np.ndarray
    b: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        a = require_square(self.a, "A")
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise UsageError(f"B must be {a.shape[0]} x p_u, got shape {b.shape}")
        if not np.all(np.isfinite(b)):
            raise UsageError("B has non-finite entries")
        d = require_symmetric(self.d, "D")
        if d.shape != a.shape:
            raise UsageError(f"D must match A, got {d.shape} vs {a.shape}")
        for name, arr in (("a", a), ("b", b), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


@dataclass(frozen=True, eq=False)
class LQProblem:
    """Per-mode LQ data plus the gain bound gamma > 0."""

    modes: tuple
    gamma: float

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise UsageError("an LQ problem needs at least one mode")
        n = modes[0].a.shape[0]
        if any(md.a.shape[0] != n for md in modes):
            raise UsageError("all modes must share the state dimension")
        if not (self.gamma > 0):
            raise UsageError(f"gamma must be positive, got {self.gamma}")
        object.__setattr__(self, "modes", modes)
        qctrl = tuple(
            symmetrize(md.b @ md.b.T) / (self.gamma**2) for md in modes
        )
        for q in qctrl:
            q.setflags(write=False)
        object.__setattr__(self, "_qctrl", qctrl)

    @property
    def n(self):
        return self.modes[0].a.shape[0]

    @property
    def m(self):
        return len(self.modes)

    def qctrl(self, sigma):
        """Control weight gamma^{-2} B B^T of the given mode."""
        return self._qctrl[sigma]


def hamiltonian_matrix(prob, sigma):
    """2n x 2n generator [[-A, -Qc], [D, A^T]] of the Riccati flow."""
    md = prob.modes[sigma]
    n = prob.n
    h = np.zeros((2 * n, 2 * n))
    h[:n, :n] = -md.a
    h[:n, n:] = -prob.qctrl(sigma)
    h[n:, :n] = md.d
    h[n:, n:] = md.a.T
    return h


class RiccatiStepper:
    """Caches exp(tau * hamiltonian) blocks for repeated flow evaluation."""

    def __init__(self, prob, tau):
        if tau < 0:
            raise UsageError(f"tau must be >= 0, got {tau}")
        self.prob = prob
        self.tau = float(tau)
        self.n = prob.n
        self._blocks = []
        n = prob.n
        for sigma in range(prob.m):
            e = matexp(hamiltonian_matrix(prob, sigma) * tau)
            self._blocks.append((e[:n, :n], e[:n, n:], e[n:, :n], e[n:, n:]))

    def flow(self, sigma, p0):
        return self.flow_stack(sigma, np.asarray(p0, dtype=float)[None])[0]

    def flow_stack(self, sigma, p_stack):
        """Propagate a (b, n, n) stack of quadratic forms through mode sigma."""
        if self.tau == 0.0:
            return p_stack.copy()
        e11, e12, e21, e22 = self._blocks[sigma]
        x = e11 + e12 @ p_stack
        y = e21 + e22 @ p_stack
        sv = np.linalg.svd(x, compute_uv=False)
        # X(0) = I has positive determinant; a sign flip at tau means the
        # flow crossed a singularity strictly before tau (escape happened
        # even though X(tau) itself is regular).
        sign, _ = np.linalg.slogdet(x)
        bad = (sv[..., -1] <= 1e-12 * np.maximum(1.0, sv[..., 0])) | (sign <= 0)
        if np.any(bad):
            idx = int(np.argmax(bad))
            exc = RiccatiEscapeError(
                f"Riccati flow escaped: X(tau) singular "
                f"(smallest singular value {sv[idx, -1]:.3e}) "
                f"for mode {sigma} at tau={self.tau}",
                smallest_singular_value=float(sv[idx, -1]),
                tau=self.tau,
                mode=sigma,
            )
            exc.slice_index = idx
            raise exc
        p_new = np.linalg.solve(np.swapaxes(x, -1, -2), np.swapaxes(y, -1, -2))
        return _sym_batch(np.swapaxes(p_new, -1, -2))


def riccati_flow(prob, sigma, p0, tau):
    """Time-tau solution of dP/dt = A^T P + P A + P Qc P + D from P0.

    Raises RiccatiEscapeError (carrying the smallest singular value) when
    the flow escapes in finite time before tau.
    """
    p0 = require_symmetric(p0, "P0")
    if p0.shape != (prob.n, prob.n):
        raise UsageError(f"P0 must be {prob.n} x {prob.n}, got {p0.shape}")
    if tau == 0:
        return p0.copy()
    return RiccatiStepper(prob, tau).flow(sigma, p0)


def _check_lq_state(state, prob, aut):
    x = np.asarray(state, dtype=float)
    if x.shape != (aut.p, prob.n, prob.n):
        raise UsageError(
            f"state must have shape ({aut.p}, {prob.n}, {prob.n}), got {x.shape}"
        )
    if prob.m != aut.m:
        raise InstanceError(
            f"problem has {prob.m} modes but automaton reads {aut.m} letters"
        )
    return x


def _apply_m_planned(x, stepper, plan, sel):
    if plan.uniform_degree is not None:
        k = plan.uniform_degree
        p, n = x.shape[0], x.shape[1]
        terms = np.empty((k, p, n, n))
        for t in range(k):
            for s, pos in enumerate(plan.groups[t]):
                if pos.size:
                    try:
                        terms[t, pos] = stepper.flow_stack(s, x[plan.src[t, pos]])
                    except RiccatiEscapeError as exc:
                        j = int(pos[exc.slice_index])
                        i = int(plan.src[t, j])
                        raise RiccatiEscapeError(
                            f"{exc} on edge ({i}, {s}, {j})",
                            smallest_singular_value=exc.smallest_singular_value,
                            tau=exc.tau,
                            mode=s,
                        ) from exc
        return _mub_fold_stacked(terms, sel)
    out = np.empty_like(x)
    for j, lst in enumerate(plan.incoming):
        terms = []
        for i, s in lst:
            try:
                terms.append(stepper.flow(s, x[i]))
            except RiccatiEscapeError as exc:
                raise RiccatiEscapeError(
                    f"{exc} on edge ({i}, {s}, {j})",
                    smallest_singular_value=exc.smallest_singular_value,
                    tau=exc.tau,
                    mode=s,
                ) from exc
        out[j] = mub_fold(terms, sel)
    return out


def apply_M_tau(state, prob, aut, sel=DET, tau=0.1):
    """One application of the time-step tropical map:
    result_j = mub_fold([flow_sigma(X_i, tau) for incoming edges of j in
    canonical order], sel)."""
    x = _check_lq_state(state, prob, aut)
    return _apply_m_planned(x, RiccatiStepper(prob, tau), _FoldPlan(aut), sel)


@dataclass(frozen=True, eq=False)
class ValueApprox:
    """Piecewise quadratic value approximation V(x) = max_i x^T X_i x."""

    state: np.ndarray
    tau: float
    automaton: object


@dataclass(frozen=True, eq=False)
class HJBResult:
    value: ValueApprox
    residual: float
    iterations: int
    converged: bool


def hjb_fixed_point(prob, aut, sel=DET, tau=0.1, x0=None, tol=1e-9, max_iter=10000):
    """Plain fixed-point iteration X <- M_tau(X) for the switched LQ value
    function.  No normalization (the map is not homogeneous).

    x0 defaults to 0.1 * I on every node.  Divergence (norm beyond 1e12 or
    non-finite entries) raises DivergenceError; a Riccati escape
    propagates with the offending edge identified.
    """
    if tol <= 0:
        raise UsageError(f"tol must be positive, got {tol}")
    if x0 is None:
        x = np.broadcast_to(0.1 * np.eye(prob.n), (aut.p, prob.n, prob.n)).copy()
    else:
        x = _check_lq_state(x0, prob, aut).copy()
    stepper = RiccatiStepper(prob, tau)
    plan = _FoldPlan(aut)
    iterations = 0
    converged = False
    residual = math.inf
    for k in range(1, max_iter + 1):
        xn = _apply_m_planned(x, stepper, plan, sel)
        if not np.all(np.isfinite(xn)) or state_norm(xn) > DIVERGENCE_NORM:
            raise DivergenceError(
                f"fixed-point iteration diverged after {k} steps", iterations=k
            )
        residual = state_norm(xn - x)
        x = xn
        iterations = k
        if residual <= tol:
            converged = True
            break
    return HJBResult(
        value=ValueApprox(state=x, tau=float(tau), automaton=aut),
        residual=residual,
        iterations=iterations,
        converged=converged,
    )


def value_and_gradient(va, x):
    """Evaluate V(x) = max_i x^T X_i x.

    Returns (V, gradient, argmax index); the gradient is 2 X_i* x at the
    lowest maximizing index, which on the measure-zero switching ridges
    picks one subgradient deterministically.
    """
    x = np.asarray(x, dtype=float)
    vals = np.einsum("kij,i,j->k", va.state, x, x)
    idx = int(np.argmax(vals))
    return float(vals[idx]), 2.0 * (va.state[idx] @ x), idx


def _hamiltonian_values(prob, xs, qs):
    """max_sigma H_sigma(x, q) for rows of xs with matching costates qs."""
    best = None
    for sigma in range(prob.m):
        md = prob.modes[sigma]
        qc = prob.qctrl(sigma)
        drift = np.einsum("si,si->s", xs @ md.a.T, qs)
        cost = 0.5 * np.einsum("si,si->s", xs @ md.d, xs)
        ctrl = 0.5 * np.einsum("si,si->s", qs @ qc, qs)
        h = drift + cost + ctrl
        best = h if best is None else np.maximum(best, h)
    return best


def backsub_error(va, prob, samples=720):
    """Stationarity diagnostic: max over a theta grid on the unit circle in
    span{e1, e2} of |max_sigma H_sigma(x, q(x))|, where q(x) = X_i* x is
    the costate of the active quadratic piece.

    The Riccati coefficients propagate the half-quadratic x^T P x / ...
    convention-free under max, but the Hamiltonian pairs with the costate
    P x: with q = P x a stationary solution of A^T P + P A + P Qc P + D = 0
    makes H vanish identically, which is the calibration this diagnostic
    relies on.  Since everything is 2-homogeneous along rays, the circle
    maximum equals the maximum over the unit disk.
    """
    if prob.n < 2:
        raise UsageError("backsub_error needs state dimension >= 2")
    if samples < 1:
        raise UsageError("samples must be >= 1")
    theta = 2.0 * np.pi * np.arange(samples) / samples
    xs = np.zeros((samples, prob.n))
    xs[:, 0] = np.cos(theta)
    xs[:, 1] = np.sin(theta)
    vals = np.einsum("kij,si,sj->sk", va.state, xs, xs)
    idx = np.argmax(vals, axis=1)
    costates = np.einsum("sij,sj->si", va.state[idx], xs)
    return float(np.max(np.abs(_hamiltonian_values(prob, xs, costates))))


def subinvariance_check(va, prob, tau, samples=256, seed=0):
    """Largest sampled violation of the one-step dominance property
    max over modes sigma, pieces i and unit z of
    z^T flow_sigma(X_i, tau) z - V(z).

    At an exact fixed point of the time-step map this is <= 0 up to
    round-off; positive values measure how far the state is from
    sub-invariance under the evolution semigroup.
    """
    if samples < 1:
        raise UsageError("samples must be >= 1")
    stepper = RiccatiStepper(prob, tau)
    flowed = np.stack(
        [stepper.flow_stack(s, va.state) for s in range(prob.m)]
    )  # (m, p, n, n)
    gen = np.random.default_rng(seed)
    zs = gen.standard_normal((samples, prob.n))
    zs /= np.linalg.norm(zs, axis=1, keepdims=True)
    fvals = np.einsum("mkij,si,sj->smk", flowed, zs, zs).reshape(samples, -1)
    vvals = np.einsum("kij,si,sj->sk", va.state, zs, zs)
    return float(np.max(fvals.max(axis=1) - vvals.max(axis=1)))


# -- JSON forms --------------------------------------------------------------


def lq_to_json(prob):
    return {
        "n": prob.n,
        "gamma": float(prob.gamma),
        "modes": [
            {
                "A": [[float(v) for v in row] for row in md.a],
                "B": [[float(v) for v in row] for row in md.b],
                "D": [[float(v) for v in row] for row in md.d],
            }
            for md in prob.modes
        ],
    }


def lq_from_json(doc):
    try:
        n = int(doc["n"])
        gamma = float(doc["gamma"])
        modes = tuple(
            LQMode(
                a=np.asarray(md["A"], dtype=float),
                b=np.asarray(md["B"], dtype=float),
                d=np.asarray(md["D"], dtype=float),
            )
            for md in doc["modes"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed LQ problem JSON: {exc}") from exc
    prob = LQProblem(modes=modes, gamma=gamma)
    if prob.n != n:
        raise UsageError(f"problem declares n={n} but modes are {prob.n}-dimensional")
    return prob


def lq_hash(prob):
    blob = json.dumps(lq_to_json(prob), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


def value_to_json(va, prob=None):
    """Certificate-shaped export of a value approximation (plus tau)."""
    doc = {
        "automaton": automaton_to_json(va.automaton),
        "X": [[[float(v) for v in row] for row in mat] for mat in va.state],
        "tau": float(va.tau),
    }
    if prob is not None:
        doc["family_hash"] = lq_hash(prob)
    return doc


def value_from_json(doc):
    try:
        aut = automaton_from_json(doc["automaton"])
        state = np.asarray(doc["X"], dtype=float)
        tau = float(doc["tau"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed value-approximation JSON: {exc}") from exc
    return ValueApprox(state=state, tau=tau, automaton=aut)
