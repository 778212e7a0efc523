"""Per-hop decoding-error probabilities for quasi-static Ricean links.

A hop is described by its line-of-sight fraction ``c``, average SNR, code
rate and blocklength. The instantaneous SNR is ``|h|^2 * snr`` with
``h = sqrt(c/2)(1+j) + sqrt((1-c)/2)(n_re + j n_im)`` and standard normal
``n_re``, ``n_im``, so that ``E|h|^2 = 1``.

Finite-blocklength error probabilities average the normal approximation
``Q(sqrt(K/V) (C - R))`` over the SNR density by adaptive quadrature;
the asymptotic regime reduces to the SNR CDF at ``2^R - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate, special, stats

__all__ = [
    "ASYMPTOTIC",
    "LinkSpec",
    "OutageProfile",
    "QuadratureError",
    "capacity",
    "dispersion",
    "outage_probability",
    "outage_profile",
    "q_function",
    "sample_snr",
    "snr_pdf",
    "snr_threshold",
]

ASYMPTOTIC = math.inf
"""Blocklength value selecting the K -> infinity outage regime."""

LOG2E_SQ = math.log2(math.e) ** 2

_QUAD_EPSABS = 1e-10
_TAIL_RATIO = 1e-16


class QuadratureError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, error_estimate: float):
        super().__init__(f"{message} (error estimate {error_estimate:.3g})")
        self.error_estimate = error_estimate


@dataclass(frozen=True)
class LinkSpec:
    """Physical parameters of one hop."""

    los_c: float
    snr_db: float
    rate: float
    blocklength: float = ASYMPTOTIC

    def __post_init__(self):
        if not 0.0 <= self.los_c <= 1.0:
            raise ValueError(f"los_c must lie in [0, 1], got {self.los_c}")
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if self.blocklength != ASYMPTOTIC:
            if self.blocklength < 1 or int(self.blocklength) != self.blocklength:
                raise ValueError(
                    f"blocklength must be a positive integer or ASYMPTOTIC, got {self.blocklength}"
                )

    @property
    def snr(self) -> float:
        """Average SNR on a linear scale."""
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def asymptotic(self) -> bool:
        return self.blocklength == ASYMPTOTIC


@dataclass(frozen=True)
class OutageProfile:
    """Per-hop decoding-error probabilities ``(P_1, ..., P_N)``."""

    p: tuple[float, ...]

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if not p:
            raise ValueError("outage profile must be non-empty")
        for i, x in enumerate(p):
            if not 0.0 <= x <= 1.0:
                raise ValueError(f"P[{i}] = {x} is outside [0, 1]")
        object.__setattr__(self, "p", p)

    def __len__(self):
        return len(self.p)

    def __iter__(self):
        return iter(self.p)

    def __getitem__(self, i):
        return self.p[i]


def q_function(x):
    """Gaussian tail probability ``Q(x) = P(Z > x)``."""
    return special.ndtr(np.negative(x)) if np.ndim(x) else float(special.ndtr(-x))


def capacity(gamma):
    """Shannon capacity ``log2(1 + gamma)`` in bits per channel use."""
    if np.any(np.asarray(gamma) < 0):
        raise ValueError("gamma must be non-negative")
    return np.log2(np.add(1.0, gamma)) if np.ndim(gamma) else math.log2(1.0 + gamma)


def dispersion(gamma):
    """Channel dispersion ``V(gamma)`` of the AWGN channel, in bits^2."""
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    v = 0.5 * g * (g + 2.0) / (g + 1.0) ** 2 * LOG2E_SQ
    return v if np.ndim(gamma) else float(v)


def snr_threshold(rate: float) -> float:
    """SNR below which rate ``rate`` is not supported, ``2^R - 1``."""
    return math.expm1(rate * math.log(2.0))


def _log_pdf(c: float, snr: float, gamma):
    """log f_Gamma(gamma) for 0 <= c < 1 (vectorised)."""
    g = np.asarray(gamma, dtype=float)
    x = g / snr
    s = 1.0 - c
    z = 2.0 * np.sqrt(c * x) / s
    # i0e(z) = exp(-z) I0(z) keeps the Bessel factor finite at large z.
    with np.errstate(divide="ignore"):
        return -math.log(s * snr) - (x + c) / s + z + np.log(special.i0e(z))


def snr_pdf(link: LinkSpec, gamma):
    """Density of the instantaneous SNR of ``link`` at ``gamma`` >= 0."""
    if link.los_c >= 1.0:
        raise ValueError("pure line-of-sight link (c = 1) has a point mass at the average SNR")
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("gamma must be non-negative")
    out = np.exp(_log_pdf(link.los_c, link.snr, g))
    return out if np.ndim(gamma) else float(out)


def _snr_cdf(link: LinkSpec, gamma: float) -> float:
    c, snr = link.los_c, link.snr
    if c >= 1.0:
        return 1.0 if snr <= gamma else 0.0
    x = gamma / snr
    if c == 0.0:
        return -math.expm1(-x)
    # 2|h|^2/(1-c) is noncentral chi-square with 2 dof and noncentrality 2c/(1-c)
    return float(stats.ncx2.cdf(2.0 * x / (1.0 - c), 2, 2.0 * c / (1.0 - c)))


def _support(link: LinkSpec) -> tuple[float, float]:
    """Mode and upper truncation point of the SNR density."""
    c, snr = link.los_c, link.snr
    grid = snr * np.linspace(0.0, 1.0 + 4.0 * c + 8.0 * (1.0 - c), 2001)
    logf = _log_pdf(c, snr, grid)
    mode = float(grid[int(np.argmax(logf))])
    cutoff = float(np.max(logf)) + math.log(_TAIL_RATIO)
    hi = max(mode, snr)
    while _log_pdf(c, snr, hi) > cutoff:
        hi *= 2.0
    return mode, hi


def _block_error(gamma, k: float, rate: float):
    g = np.asarray(gamma, dtype=float)
    v = dispersion(g)
    gap = capacity(g) - rate
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(v > 0, np.sqrt(k / np.where(v > 0, v, 1.0)) * gap, np.where(gap < 0, -np.inf, np.inf))
    return special.ndtr(-arg)


def outage_probability(link: LinkSpec) -> float:
    """Decoding-error probability of one transmission attempt over ``link``.

    Raises :class:`QuadratureError` when the adaptive quadrature cannot meet
    its absolute tolerance.
    """
    thr = snr_threshold(link.rate)
    if link.asymptotic:
        return _snr_cdf(link, thr)
    k = float(link.blocklength)
    if link.los_c >= 1.0:
        return float(_block_error(link.snr, k, link.rate))

    _, hi = _support(link)
    # the Q-factor switches from 1 to 0 over a window of this width around thr
    width = (1.0 + thr) * math.log(2.0) * math.sqrt(dispersion(thr) / k)
    knots = sorted({0.0, hi, *(min(max(thr + m * width, 0.0), hi) for m in (-12, -3, 0, 3, 12))})

    def integrand(g):
        return float(_block_error(g, k, link.rate)) * math.exp(_log_pdf(link.los_c, link.snr, g))

    total, err = 0.0, 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        if b <= a:
            continue
        res = integrate.quad(integrand, a, b, epsabs=_QUAD_EPSABS / len(knots), epsrel=1e-10,
                             limit=200, full_output=1)
        total += res[0]
        err += res[1]
        if len(res) > 3:
            raise QuadratureError(f"outage quadrature failed on [{a:.4g}, {b:.4g}]: {res[3]}", err)
    if err > 10 * _QUAD_EPSABS:
        raise QuadratureError("outage quadrature did not converge", err)
    return min(max(total, 0.0), 1.0)


def outage_profile(links: Sequence[LinkSpec]) -> OutageProfile:
    """Evaluate :func:`outage_probability` for every hop."""
    return OutageProfile(tuple(outage_probability(link) for link in links))


def sample_snr(link: LinkSpec, rng: np.random.Generator, size=None):
    """Draw instantaneous SNR values for ``link`` using the caller's generator."""
    c, snr = link.los_c, link.snr
    if c >= 1.0:
        return np.full(size, snr) if size is not None else snr
    n = rng.standard_normal((2,) if size is None else (2,) + tuple(np.atleast_1d(size)))
    los = math.sqrt(c / 2.0)
    scat = math.sqrt((1.0 - c) / 2.0)
    re = los + scat * n[0]
    im = los + scat * n[1]
    out = (re * re + im * im) * snr
    return float(out) if size is None else out
