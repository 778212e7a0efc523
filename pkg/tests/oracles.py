"""Independent reference computations used by the tests.

None of these reuse library code paths: drop probabilities come from
explicit per-attempt outcome trees, special functions from mpmath or the
standard library, integrals from fixed-grid Simpson rules.
"""

from __future__ import annotations

import math
from functools import lru_cache

import mpmath
import numpy as np
from scipy.integrate import simpson


def tree_pdp(p, q, counter=frozenset(), noncoop=False):
    """Drop probability by expanding every attempt as a success/failure branch.

    ``counter`` holds the 0-based hops whose successor learns the exact
    leftover ``q + r - a``; every other successor learns ``max(q - a, 0)``.
    """
    p = tuple(p)
    q = tuple(q)
    n = len(p)

    @lru_cache(maxsize=None)
    def hop(i, r):
        if i == n:
            return 0.0
        budget = q[i] + (0 if noncoop else r)
        return attempt(i, r, budget, 1)

    @lru_cache(maxsize=None)
    def attempt(i, r, budget, a):
        # probability of a drop from here on, given attempts 1..a-1 failed at hop i
        if a > budget:
            return 1.0
        if i in counter:
            nxt = q[i] + r - a
        else:
            nxt = max(q[i] - a, 0)
        ok = (1.0 - p[i]) * hop(i + 1, nxt)
        fail = p[i] * attempt(i, r, budget, a + 1)
        return ok + fail

    return hop(0, 0)


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ricean_pdf_mp(c: float, snr: float, gamma: float) -> float:
    """Density of the SNR with mpmath's Bessel function."""
    s = 1.0 - c
    z = 2.0 * mpmath.sqrt(c * gamma / snr) / s
    return float(mpmath.exp(-(gamma / snr + c) / s) * mpmath.besseli(0, z) / (s * snr))


def ricean_pdf_series(c: float, snr: float, gamma: float, terms: int = 200) -> float:
    """Density with I0 summed from its power series."""
    s = 1.0 - c
    z = 2.0 * math.sqrt(c * gamma / snr) / s
    half_sq = (z / 2.0) ** 2
    term, total = 1.0, 1.0
    for k in range(1, terms):
        term *= half_sq / (k * k)
        total += term
        if term < 1e-17 * total:
            break
    return math.exp(-(gamma / snr + c) / s) * total / (s * snr)


def finite_outage_simpson(c: float, snr_db: float, rate: float, k: int, points: int = 400_001) -> float:
    """Outage at blocklength ``k`` by dense Simpson integration on a fixed grid."""
    snr = 10.0 ** (snr_db / 10.0)
    hi = snr * (1.0 + 4.0 * c + 40.0 * (1.0 - c))
    g = np.linspace(0.0, hi, points)
    x = g / snr
    s = 1.0 - c
    z = 2.0 * np.sqrt(c * x) / s
    from scipy.special import i0e  # vectorised Bessel for the grid only

    f = np.exp(-(x + c) / s + z) * i0e(z) / (s * snr)
    cap = np.log2(1.0 + g)
    v = 0.5 * g * (g + 2.0) / (g + 1.0) ** 2 * math.log2(math.e) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(v > 0, np.sqrt(k / np.where(v > 0, v, 1.0)) * (cap - rate), -np.inf)
    eps = np.array([q_function(a) if np.isfinite(a) else 1.0 for a in arg])
    return float(simpson(eps * f, x=g))


def fibonacci(n: int) -> int:
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a
