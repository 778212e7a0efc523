"""Seeded Monte-Carlo packet simulation of ARQ-budgeted relaying.

Packets are independent. For each packet and hop the simulator draws the
number of attempts the hop would need to get the packet through, then walks
the route applying the same residual rules as the exact evaluators:
listening successors learn ``max(q - a, 0)``, counter successors inside a
cluster learn ``q + r - a``.

Delay bookkeeping
-----------------
* every attempt costs ``tau_p + tau_d + tau_nack`` (or ``tau_p + tau_d``
  plus ``tau_nack`` on failed attempts only, see ``nack_on_success``);
* every counter-updating node the packet leaves successfully adds ``t_c``.

Packets are simulated in fixed-size blocks; block ``b`` draws from its own
counter-based generator keyed by ``(seed, b)``, so the report does not
depend on how many threads process the blocks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import LinkSpec, OutageProfile, _block_error, sample_snr, snr_threshold
from .pdp import NetworkLayout, Strategy
from .validation import check_allocation

__all__ = [
    "BLOCK_SIZE",
    "DelayModel",
    "DelayProfile",
    "SimulationReport",
    "delay_profile",
    "simulate",
    "thread_count",
]

BLOCK_SIZE = 1 << 16
THREADS_ENV = "ARQPLAN_THREADS"
_NEVER = np.iinfo(np.int64).max // 4


@dataclass(frozen=True)
class DelayModel:
    """Timing parameters in microseconds.

    ``deadline`` defaults to ``q_sum * (tau_p + tau_d)`` for the simulated
    allocation.
    """

    tau_p: float
    tau_d: float
    tau_nack: float = 0.0
    t_c: float = 0.0
    deadline: float | None = None
    nack_on_success: bool = True

    def __post_init__(self):
        for name in ("tau_p", "tau_d", "tau_nack", "t_c"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite non-negative number, got {v}")
        if self.deadline is not None and not self.deadline >= 0:
            raise ValueError(f"deadline must be non-negative, got {self.deadline}")

    @classmethod
    def with_overhead(cls, tau_p: float, tau_d: float, overhead_factor: float, **kw) -> "DelayModel":
        """Counter overhead given as a multiple of ``tau_p + tau_d``."""
        if overhead_factor < 0:
            raise ValueError("overhead_factor must be non-negative")
        return cls(tau_p, tau_d, t_c=overhead_factor * (tau_p + tau_d), **kw)

    @property
    def slot(self) -> float:
        return self.tau_p + self.tau_d

    def deadline_for(self, q_sum: int) -> float:
        return self.deadline if self.deadline is not None else q_sum * self.slot


@dataclass(frozen=True)
class SimulationReport:
    pdp_hat: float
    avg_delay: float
    w_drop: float
    w_deadline: float
    eta: float
    pdv: float
    delay_histogram: dict[float, int]
    packets: int
    seed: int
    delivered: int
    deadline: float
    bin_width: float
    nack_on_success: bool = True
    avg_dropped_delay: float = math.nan
    attempts_mean: float = math.nan

    @property
    def dropped(self) -> int:
        return self.packets - self.delivered

    def std_error(self) -> float:
        """Binomial standard deviation of :attr:`pdp_hat`."""
        p = self.pdp_hat
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.packets)


@dataclass(frozen=True)
class DelayProfile:
    rows: tuple[tuple[float, float], ...]
    p_nd: float
    empty: bool = field(default=False)


def thread_count() -> int:
    """Worker threads allowed by ``ARQPLAN_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# per-block kernels


def _attempts_from_outage(rng: np.random.Generator, p: float, n: int, cap: int) -> np.ndarray:
    if p >= 1.0:
        return np.full(n, _NEVER, dtype=np.int64)
    if p <= 0.0:
        return np.ones(n, dtype=np.int64)
    return rng.geometric(1.0 - p, size=n).astype(np.int64)


def _attempts_from_link(rng: np.random.Generator, link: LinkSpec, n: int, cap: int) -> np.ndarray:
    """Attempts to first success with a fresh fading draw per attempt (capped)."""
    if cap <= 0:
        return np.full(n, _NEVER, dtype=np.int64)
    gamma = sample_snr(link, rng, (n, cap))
    if link.asymptotic:
        ok = gamma >= snr_threshold(link.rate)
    else:
        ok = rng.random((n, cap)) >= _block_error(gamma, float(link.blocklength), link.rate)
    first = np.argmax(ok, axis=1).astype(np.int64) + 1
    return np.where(ok.any(axis=1), first, _NEVER)


@dataclass(frozen=True)
class _Setup:
    q: np.ndarray
    source: tuple  # floats (outage) or LinkSpecs
    counter: tuple[bool, ...]
    updating: tuple[bool, ...]
    noncoop: bool
    delay: DelayModel
    deadline: float
    bin_width: float
    seed: int


@dataclass
class _Partial:
    delivered: int = 0
    late: int = 0
    delay_sum: float = 0.0
    dropped_delay_sum: float = 0.0
    attempts_sum: int = 0
    bins: dict[int, int] = field(default_factory=dict)


def _simulate_block(setup: _Setup, block: int, n: int) -> _Partial:
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([setup.seed, block])))
    n_hops = len(setup.q)
    cap = int(setup.q.sum())
    resid = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    attempts = np.zeros(n, dtype=np.int64)
    failures = np.zeros(n, dtype=np.int64)
    updates = np.zeros(n, dtype=np.int64)
    for i in range(n_hops):
        src = setup.source[i]
        if isinstance(src, LinkSpec):
            need = _attempts_from_link(rng, src, n, cap)
        else:
            need = _attempts_from_outage(rng, src, n, cap)
        qi = int(setup.q[i])
        budget = qi + (0 if setup.noncoop else resid)
        ok = alive & (need <= budget)
        used = np.where(ok, need, np.where(alive, budget, 0))
        attempts += used
        failures += np.where(ok, used - 1, used)
        if setup.counter[i]:
            resid = np.where(ok, budget - need, 0)
        else:
            resid = np.where(ok, np.maximum(qi - need, 0), 0)
        if setup.updating[i]:
            updates += ok
        alive = ok
    d = setup.delay
    if d.nack_on_success:
        delay = attempts * (d.slot + d.tau_nack)
    else:
        delay = attempts * d.slot + failures * d.tau_nack
    delay = delay + updates * d.t_c
    part = _Partial()
    part.delivered = int(alive.sum())
    got = delay[alive]
    part.late = int(np.count_nonzero(got > setup.deadline))
    part.delay_sum = float(got.sum())
    part.dropped_delay_sum = float(delay[~alive].sum())
    part.attempts_sum = int(attempts.sum())
    keys, counts = np.unique(np.rint(got / setup.bin_width).astype(np.int64), return_counts=True)
    part.bins = dict(zip(keys.tolist(), counts.tolist()))
    return part


# ---------------------------------------------------------------------------
# public API


def _source(layout: NetworkLayout, channel) -> tuple:
    items = list(channel.p) if isinstance(channel, OutageProfile) else list(channel)
    if len(items) != layout.n_hops:
        raise ValueError(f"layout has {layout.n_hops} hops but {len(items)} channel entries were given")
    if all(isinstance(x, LinkSpec) for x in items):
        return tuple(items)
    return OutageProfile(tuple(items)).p


def simulate(
    layout: NetworkLayout,
    q: Sequence[int],
    channel,
    delay: DelayModel,
    n_packets: int,
    seed: int,
    *,
    bin_width: float = 0.1,
    threads: int | None = None,
    block_size: int = BLOCK_SIZE,
) -> SimulationReport:
    """Simulate ``n_packets`` packets over ``layout`` with allocation ``q``.

    ``channel`` is either per-hop outage probabilities or per-hop
    :class:`~arqplan.channel.LinkSpec` (fresh fading draw per attempt).
    """
    q = np.asarray(check_allocation(q, layout.n_hops), dtype=np.int64)
    if int(n_packets) != n_packets or n_packets < 1:
        raise ValueError("n_packets must be a positive integer")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if block_size < 1:
        raise ValueError("block_size must be positive")
    source = _source(layout, channel)
    counter = layout.counter_hops if layout.strategy is Strategy.CSC else frozenset()
    updating = layout.updating_hops if layout.strategy is Strategy.CSC else frozenset()
    n = layout.n_hops
    setup = _Setup(
        q=q,
        source=source,
        counter=tuple(i in counter for i in range(n)),
        updating=tuple(i in updating for i in range(n)),
        noncoop=layout.strategy is Strategy.NON_COOP,
        delay=delay,
        deadline=delay.deadline_for(int(q.sum())),
        bin_width=float(bin_width),
        seed=int(seed),
    )
    n_packets = int(n_packets)
    blocks = [(b, min(block_size, n_packets - b * block_size)) for b in range(-(-n_packets // block_size))]
    workers = min(threads or thread_count(), len(blocks))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda bn: _simulate_block(setup, *bn), blocks))
    else:
        parts = [_simulate_block(setup, *bn) for bn in blocks]

    delivered = sum(p.delivered for p in parts)
    late = sum(p.late for p in parts)
    bins: dict[int, int] = {}
    for p in parts:
        for k, c in p.bins.items():
            bins[k] = bins.get(k, 0) + c
    dropped = n_packets - delivered
    w_drop = dropped / n_packets
    w_deadline = late / n_packets
    pdv = w_drop + w_deadline
    return SimulationReport(
        pdp_hat=w_drop,
        avg_delay=math.fsum(p.delay_sum for p in parts) / delivered if delivered else math.nan,
        w_drop=w_drop,
        w_deadline=w_deadline,
        eta=_eta(dropped, late, n_packets),
        pdv=pdv,
        delay_histogram={round(k * setup.bin_width, 12): bins[k] for k in sorted(bins)},
        packets=n_packets,
        seed=int(seed),
        delivered=delivered,
        deadline=setup.deadline,
        bin_width=setup.bin_width,
        nack_on_success=delay.nack_on_success,
        avg_dropped_delay=math.fsum(p.dropped_delay_sum for p in parts) / dropped if dropped else math.nan,
        attempts_mean=sum(p.attempts_sum for p in parts) / n_packets,
    )


def _eta(dropped: int, late: int, n: int) -> float:
    # with no drops the ratio is 1 when nothing was late and unbounded otherwise
    if dropped:
        return (dropped + late) / dropped
    return 1.0 if late == 0 else math.inf


def delay_profile(report: SimulationReport) -> DelayProfile:
    """Delay pmf of the delivered packets and the delivered fraction ``P_nd``."""
    p_nd = report.delivered / report.packets
    if not report.delivered:
        return DelayProfile((), p_nd, empty=True)
    rows = tuple((d, c / report.delivered) for d, c in report.delay_histogram.items())
    return DelayProfile(rows, p_nd)
