"""Deterministic transition structures over (nodes, alphabet).

An :class:`Automaton` is a total map ``delta(i, sigma) -> j``; totality is
exactly path-completeness for deterministic labeled graphs.  De Bruijn
graphs of order d (nodes = words of length d, edges shift in one letter)
are the only topology the experiments need, but any total ``delta`` works.

Edge enumeration order is part of the contract: edges are listed
lexicographically in (target j, source i, letter sigma).  All sequential
folds downstream consume edges in this order, which pins down every
result bit for bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import InstanceError, ResourceLimitError, UsageError

__all__ = [
    "Automaton",
    "MatrixFamily",
    "de_bruijn",
    "edges",
    "lift",
    "irreducible",
    "automaton_to_json",
    "automaton_from_json",
    "family_to_json",
    "family_from_json",
    "family_hash",
]


@dataclass(frozen=True, eq=False)
class Automaton:
    """Total deterministic transition map on p nodes over m letters."""

    m: int
    p: int
    delta: np.ndarray  # shape (p, m), delta[i, sigma] = i . sigma
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.m < 1 or self.p < 1:
            raise UsageError("automaton needs m >= 1 letters and p >= 1 nodes")
        delta = np.asarray(self.delta, dtype=np.int64)
        if delta.shape != (self.p, self.m):
            raise UsageError(
                f"delta must have shape ({self.p}, {self.m}), got {delta.shape}"
            )
        if delta.min() < 0 or delta.max() >= self.p:
            raise UsageError("delta entries must be node indices in [0, p)")
        delta.setflags(write=False)
        object.__setattr__(self, "delta", delta)
        if self.labels is not None:
            labels = tuple(str(x) for x in self.labels)
            if len(labels) != self.p:
                raise UsageError("labels must have one entry per node")
            object.__setattr__(self, "labels", labels)

    def step(self, i, sigma):
        return int(self.delta[i, sigma])


@dataclass(frozen=True, eq=False)
class MatrixFamily:
    """A finite set of real n x n matrices, one per mode."""

    matrices: tuple
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        mats = tuple(np.asarray(a, dtype=float) for a in self.matrices)
        if not mats:
            raise UsageError("a matrix family needs at least one matrix")
        n = mats[0].shape[0]
        for a in mats:
            if a.ndim != 2 or a.shape != (n, n):
                raise UsageError("family matrices must share one square shape")
            if not np.all(np.isfinite(a)):
                raise UsageError("family matrices must be finite")
            a.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != len(mats):
                raise UsageError("names must have one entry per matrix")
            object.__setattr__(self, "names", names)

    @property
    def n(self):
        return self.matrices[0].shape[0]

    @property
    def m(self):
        return len(self.matrices)


def _word_label(index, m, d):
    if d == 0:
        return ""
    digits = []
    for _ in range(d):
        digits.append(index % m)
        index //= m
    digits.reverse()
    sep = "" if m <= 10 else "."
    return sep.join(str(x) for x in digits)


def de_bruijn(m, d, max_nodes=10**6):
    """De Bruijn automaton of order d over m letters.

    Nodes are the m**d words of length d; reading letter sigma in node
    s1...sd leads to s2...sd sigma.  Order 0 gives the single node with m
    self-loops.  Path-complete by construction.
    """
    if m < 1:
        raise UsageError(f"alphabet size must be >= 1, got {m}")
    if d < 0:
        raise UsageError(f"order must be >= 0, got {d}")
    p = m**d
    if p > max_nodes:
        raise ResourceLimitError(f"De Bruijn graph would have {p} > {max_nodes} nodes")
    idx = np.arange(p, dtype=np.int64)
    sig = np.arange(m, dtype=np.int64)
    delta = (idx[:, None] * m + sig[None, :]) % p
    labels = tuple(_word_label(i, m, d) for i in range(p))
    return Automaton(m=m, p=p, delta=delta, labels=labels)


def edges(aut):
    """All edges (i, sigma, j), lexicographic in (j, i, sigma).

    This grouping by target j is the canonical fold order consumed by the
    tropical map modules.
    """
    out = [
        (i, s, int(aut.delta[i, s]))
        for i in range(aut.p)
        for s in range(aut.m)
    ]
    out.sort(key=lambda e: (e[2], e[0], e[1]))
    return out


def lift(family, aut, max_dim=4096):
    """Lifted matrices E_ij (x) A_sigma of dimension n*p, one per edge in
    canonical order.  E_ij is the (i, j) unit matrix of size p."""
    if family.m != aut.m:
        raise InstanceError(
            f"family has {family.m} modes but automaton reads {aut.m} letters"
        )
    n = family.n
    k = n * aut.p
    if k > max_dim:
        raise ResourceLimitError(f"lifted dimension {k} exceeds cap {max_dim}")
    lifted = []
    for i, s, j in edges(aut):
        e = np.zeros((aut.p, aut.p))
        e[i, j] = 1.0
        lifted.append(np.kron(e, family.matrices[s]))
    return lifted


def irreducible(lifted, seed=0):
    """Probabilistic common-invariant-subspace test for a matrix set.

    Runs the completely positive map Phi(X) = sum_a A_a^T X A_a on a random
    rank-one start X0 = x x^T, accumulates Z = sum_{t<k} Phi^t(X0), and
    declares irreducibility when Z is (relatively) positive definite.
    Majority vote over three seeds.  True means no common invariant
    subspace was detected; it is not a proof.
    """
    mats = [np.asarray(a, dtype=float) for a in lifted]
    if not mats:
        raise UsageError("irreducibility test needs a nonempty matrix list")
    k = mats[0].shape[0]
    votes = 0
    for t in range(3):
        gen = np.random.default_rng(seed + t)
        x = gen.standard_normal(k)
        x /= np.linalg.norm(x)
        s = np.outer(x, x)
        z = s.copy()
        for _ in range(k - 1):
            s = sum(a.T @ s @ a for a in mats)
            z = z + s
            scale = np.linalg.norm(z)
            if scale > 1e150:  # rescaling both = scaling X0, test is invariant
                z /= scale
                s /= scale
        z = 0.5 * (z + z.T)
        if np.linalg.eigvalsh(z)[0] > 1e-10 * np.trace(z) / k:
            votes += 1
    return votes >= 2


# -- JSON forms --------------------------------------------------------------


def automaton_to_json(aut):
    doc = {
        "m": aut.m,
        "p": aut.p,
        "delta": [[int(x) for x in row] for row in aut.delta],
    }
    if aut.labels is not None:
        doc["labels"] = list(aut.labels)
    return doc


def automaton_from_json(doc):
    try:
        m = int(doc["m"])
        p = int(doc["p"])
        delta = np.asarray(doc["delta"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed automaton JSON: {exc}") from exc
    labels = doc.get("labels")
    return Automaton(m=m, p=p, delta=delta, labels=tuple(labels) if labels else None)


def family_to_json(family):
    doc = {
        "n": family.n,
        "matrices": [[[float(x) for x in row] for row in a] for a in family.matrices],
    }
    if family.names is not None:
        doc["names"] = list(family.names)
    return doc


def family_from_json(doc):
    try:
        n = int(doc["n"])
        mats = [np.asarray(a, dtype=float) for a in doc["matrices"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed family JSON: {exc}") from exc
    fam = MatrixFamily(
        matrices=tuple(mats),
        names=tuple(doc["names"]) if doc.get("names") else None,
    )
    if fam.n != n:
        raise UsageError(f"family declares n={n} but matrices are {fam.n}x{fam.n}")
    return fam


def family_hash(family):
    """Hex SHA-256 of the canonical family JSON (sorted keys, no spaces).
    Ties certificates to the exact numeric content of the family."""
    doc = {
        "n": family.n,
        "matrices": [[[float(x) for x in row] for row in a] for a in family.matrices],
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("ascii")).hexdigest()
