"""Independent reference computations used to validate the main
algorithms: brute-force joint-spectral-radius bounds from exhaustive
products, Karp's maximum cycle mean, and Runge-Kutta integration of the
Riccati equation.  None of these share code with the paths they check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .automaton import edges
from .errors import ResourceLimitError, RiccatiEscapeError, UsageError
from .matkernel import require_symmetric, symmetrize

__all__ = [
    "ProductBound",
    "jsr_bruteforce",
    "max_cycle_mean",
    "riccati_rk4",
]

_CHUNK = 1 << 14


@dataclass(frozen=True)
class ProductBound:
    """Two-sided joint-spectral-radius estimate from products up to a
    fixed length: lower = max spectral radius^(1/k), upper = min over k of
    (max 2-norm at length k)^(1/k)."""

    lower: float
    upper: float
    depth: int

    def __post_init__(self):
        if self.lower > self.upper + 1e-9:
            raise UsageError(
                f"inconsistent bound: lower {self.lower} > upper {self.upper}"
            )


def _batched_spectral_radius(prods):
    out = 0.0
    for lo in range(0, prods.shape[0], _CHUNK):
        vals = np.linalg.eigvals(prods[lo : lo + _CHUNK])
        out = max(out, float(np.abs(vals).max()))
    return out


def _batched_two_norm(prods):
    out = 0.0
    for lo in range(0, prods.shape[0], _CHUNK):
        sv = np.linalg.svd(prods[lo : lo + _CHUNK], compute_uv=False)
        out = max(out, float(sv[..., 0].max()))
    return out


def jsr_bruteforce(family, max_depth):
    """Enumerate every product of length <= max_depth.

    The spectral radius of any length-k product, taken to the power 1/k,
    lower-bounds the joint spectral radius; the max operator 2-norm at
    length k, to the power 1/k, upper-bounds it.  Requires
    m**max_depth <= 1e6.
    """
    if max_depth < 1:
        raise UsageError(f"max_depth must be >= 1, got {max_depth}")
    if family.m**max_depth > 10**6:
        raise ResourceLimitError(
            f"{family.m}**{max_depth} products exceed the 1e6 budget"
        )
    mats = np.stack(family.matrices)
    prods = mats.copy()
    lower = 0.0
    upper = math.inf
    for k in range(1, max_depth + 1):
        if k > 1:
            # extend every product by every generator, order-consistent
            m, n = mats.shape[0], mats.shape[1]
            prods = np.matmul(prods[:, None, :, :], mats[None, :, :, :]).reshape(
                -1, n, n
            )
        lower = max(lower, _batched_spectral_radius(prods) ** (1.0 / k))
        upper = min(upper, _batched_two_norm(prods) ** (1.0 / k))
    return ProductBound(lower=lower, upper=upper, depth=max_depth)


def max_cycle_mean(aut, weights):
    """Karp's maximum cycle mean over the weighted edges of an automaton.

    ``weights`` must align with the canonical edge order of
    ``automaton.edges``.  Uses the multi-source variant (walks may start
    anywhere), which handles nodes without incoming edges.
    """
    edge_list = edges(aut)
    w = np.asarray(weights, dtype=float)
    if w.shape != (len(edge_list),):
        raise UsageError(
            f"need one weight per edge ({len(edge_list)}), got shape {w.shape}"
        )
    p = aut.p
    neg_inf = -math.inf
    # d[k][v] = max weight of a walk with exactly k edges ending at v
    d = np.full((p + 1, p), neg_inf)
    d[0] = 0.0
    for k in range(1, p + 1):
        prev = d[k - 1]
        cur = d[k]
        for (i, _, j), wij in zip(edge_list, w):
            cand = prev[i] + wij
            if cand > cur[j]:
                cur[j] = cand
    best = neg_inf
    for v in range(p):
        if d[p, v] == neg_inf:
            continue
        worst = math.inf
        for k in range(p):
            if d[k, v] == neg_inf:
                continue
            worst = min(worst, (d[p, v] - d[k, v]) / (p - k))
        best = max(best, worst)
    return float(best)


def riccati_rk4(prob, sigma, p0, tau, step=None):
    """Classical 4th-order integration of dP/dt = A^T P + P A + P Qc P + D,
    symmetrized each step.  Default step is tau/1000.

    Raises RiccatiEscapeError when the iterate norm exceeds 1e12 (the
    analytic flow escapes in finite time on such instances).
    """
    p = require_symmetric(p0, "P0")
    if tau < 0:
        raise UsageError(f"tau must be >= 0, got {tau}")
    if tau == 0:
        return p.copy()
    if step is None:
        step = tau / 1000.0
    if step <= 0:
        raise UsageError(f"step must be positive, got {step}")
    a = prob.modes[sigma].a
    dmat = prob.modes[sigma].d
    q = prob.qctrl(sigma)
    nsteps = max(1, math.ceil(tau / step))
    h = tau / nsteps

    def rhs(x):
        return a.T @ x + x @ a + x @ q @ x + dmat

    for _ in range(nsteps):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * h * k1)
        k3 = rhs(p + 0.5 * h * k2)
        k4 = rhs(p + h * k3)
        p = symmetrize(p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if not np.all(np.isfinite(p)) or np.linalg.norm(p) > 1e12:
            raise RiccatiEscapeError(
                f"RK4 iterate blew up integrating mode {sigma} over tau={tau}",
                tau=tau,
                mode=sigma,
            )
    return p
