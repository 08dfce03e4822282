"""Shared generators for the test suite.

Everything is seeded; tests derive their generators from fixed integer
seed sequences so repeated runs are bit-identical.
"""

import numpy as np

import tropkraus as tk


def rand_sym(rng, n, scale=1.0):
    g = rng.standard_normal((n, n))
    return scale * 0.5 * (g + g.T)


def rand_pd(rng, n, shift=0.1):
    g = rng.standard_normal((n, n))
    return g @ g.T / n + shift * np.eye(n)


def noncomparable_pd_pair(rng, n, shift=0.5, gap=1e-3):
    """Two PD matrices with neither P >= Q nor Q >= P (requires n >= 2)."""
    while True:
        p = rand_pd(rng, n, shift)
        q = rand_pd(rng, n, shift)
        w = np.linalg.eigvalsh(p - q)
        if w[0] < -gap and w[-1] > gap:
            return p, q


def guglielmi_family():
    """The 3x3 benchmark pair with joint spectral radius 1.78893."""
    a1 = np.array([[-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0], [0.0, 1.0, 1.0]])
    a2 = np.array([[-1.0, 1.0, -1.0], [-1.0, -1.0, 0.0], [1.0, 1.0, 1.0]])
    return tk.MatrixFamily(matrices=(a1, a2), names=("A1", "A2"))


GUGLIELMI_JSR = 1.78893


def scalar_instance(idx):
    """Seeded n=1 family plus De Bruijn automaton (m <= 3, d <= 4)."""
    rng = np.random.default_rng([904, idx])
    m = int(rng.integers(1, 4))
    d = int(rng.integers(1, 5))
    mags = rng.uniform(0.5, 2.0, size=m) * rng.choice([-1.0, 1.0], size=m)
    fam = tk.MatrixFamily(matrices=tuple(np.array([[v]]) for v in mags))
    return fam, tk.de_bruijn(m, d)


def scalar_karp_bound(fam, aut):
    """exp(max cycle mean / 2) of the log-squared edge weights: the exact
    joint spectral radius of a scalar family over this automaton."""
    import math

    weights = [
        math.log(fam.matrices[s][0, 0] ** 2) for (_, s, _) in tk.edges(aut)
    ]
    return math.exp(0.5 * tk.max_cycle_mean(aut, weights))


def random_family(idx, dims=(2, 11), modes=(2, 4)):
    """Seeded dense family with standard normal entries."""
    rng = np.random.default_rng([902, idx])
    n = int(rng.integers(*dims))
    m = int(rng.integers(*modes))
    return tk.MatrixFamily(matrices=tuple(rng.standard_normal((m, n, n))))


def lq_instance(idx, seed_tag=907):
    """Seeded switched LQ instance with a stable common drift and mild
    per-mode variations (the regime where the value function is finite
    and the time-step iteration settles)."""
    rng = np.random.default_rng([seed_tag, idx])
    n = int(rng.choice([4, 10, 20]))
    m = int(rng.choice([2, 4]))
    base = 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    base -= (0.8 + 0.4 * rng.random()) * np.eye(n)
    modes = []
    for _ in range(m):
        a = base + 0.15 * rng.standard_normal((n, n)) / np.sqrt(n)
        b = 0.5 * rng.standard_normal((n, 2))
        g = rng.standard_normal((n, n))
        d = float(rng.uniform(0.2, 0.8)) * (g @ g.T) / n + 0.3 * np.eye(n)
        modes.append(tk.LQMode(a=a, b=b, d=d))
    return tk.LQProblem(modes=tuple(modes), gamma=4.0)


def riccati_instance(idx):
    """Seeded single-mode LQ data for flow cross-validation (n in 2,5,10)."""
    rng = np.random.default_rng([906, idx])
    n = int(rng.choice([2, 5, 10]))
    a = rng.standard_normal((n, n)) / np.sqrt(n) - 0.5 * np.eye(n)
    b = 0.3 * rng.standard_normal((n, 2))
    d = rand_sym(rng, n, scale=0.3)
    prob = tk.LQProblem(modes=(tk.LQMode(a=a, b=b, d=d),), gamma=1.0)
    p0 = rand_pd(rng, n, shift=0.1)
    return prob, p0
