"""Exact packet-drop probability of ARQ-budgeted multi-hop relays.

Every evaluator walks the hops once, carrying the probability mass over the
number of residual (allocated but unused) attempts a node can pass on:

* by *listening*, the successor of a node that holds ``q`` attempts and
  succeeded on attempt ``a`` knows ``max(q - a, 0)`` attempts are left;
* by the in-packet *counter*, inside a cluster the successor learns the
  full leftover ``q + r_in - a``.

A node with allocation ``q`` and incoming residual ``r`` may transmit up to
``q + r`` times; the packet is dropped if all of them fail.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .channel import OutageProfile

__all__ = [
    "ClusterCase",
    "ClusterSpec",
    "NetworkLayout",
    "ResidualDistribution",
    "Strategy",
    "VirtualNetwork",
    "admissible_patterns",
    "canonicalize_cluster",
    "collapse_cluster",
    "evaluate_pdp",
    "pdp_csc_exact",
    "pdp_non_cooperative",
    "pdp_sc_exact",
    "pdp_sc_sequence_form",
    "pdp_virtual",
    "psp_at_cluster_exit",
]


class Strategy(str, enum.Enum):
    NON_COOP = "non_coop"
    SC = "sc"
    CSC = "csc"


class ClusterCase(enum.IntEnum):
    CASE1 = 1  # cluster at the source end
    CASE2 = 2  # cluster between two semi-cumulative segments
    CASE3 = 3  # cluster at the destination end


@dataclass(frozen=True)
class ClusterSpec:
    case: ClusterCase
    n_su: int
    n_cy: int
    n_sw: int

    def __post_init__(self):
        object.__setattr__(self, "case", ClusterCase(self.case))
        if min(self.n_su, self.n_sw) < 0:
            raise ValueError("segment sizes must be non-negative")
        if self.n_cy < 2:
            raise ValueError(f"a cluster needs at least 2 nodes, got n_cy={self.n_cy}")
        if self.case is ClusterCase.CASE1 and self.n_su != 0:
            raise ValueError("CASE1 places the cluster first: n_su must be 0")
        if self.case is ClusterCase.CASE3 and self.n_sw != 0:
            raise ValueError("CASE3 places the cluster last: n_sw must be 0")
        if self.case is ClusterCase.CASE2 and (self.n_su < 1 or self.n_sw < 1):
            raise ValueError("CASE2 needs semi-cumulative hops on both sides of the cluster")


@dataclass(frozen=True)
class NetworkLayout:
    n_hops: int
    strategy: Strategy = Strategy.SC
    cluster: ClusterSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        if self.n_hops < 1:
            raise ValueError("n_hops must be positive")
        if self.strategy is Strategy.CSC:
            if self.cluster is None:
                raise ValueError("CSC layout requires a cluster")
            total = self.cluster.n_su + self.cluster.n_cy + self.cluster.n_sw
            if total != self.n_hops:
                raise ValueError(f"cluster segments sum to {total}, expected n_hops={self.n_hops}")
        elif self.cluster is not None:
            raise ValueError(f"{self.strategy.value} layout takes no cluster")

    @classmethod
    def csc(cls, case, n_su: int, n_cy: int, n_sw: int) -> "NetworkLayout":
        spec = ClusterSpec(ClusterCase(case), n_su, n_cy, n_sw)
        return cls(n_su + n_cy + n_sw, Strategy.CSC, spec)

    @property
    def cluster_range(self) -> range:
        if self.cluster is None:
            return range(0)
        return range(self.cluster.n_su, self.cluster.n_su + self.cluster.n_cy)

    @property
    def counter_hops(self) -> frozenset[int]:
        """Hops (0-based) whose residual travels on to the next hop via the counter."""
        r = self.cluster_range
        return frozenset(r[:-1])

    @property
    def updating_hops(self) -> frozenset[int]:
        """Hops whose transmitter rewrites (and encrypts) the counter."""
        r = self.cluster_range
        if self.cluster is not None and self.cluster.case is ClusterCase.CASE1:
            return frozenset(r[1:])
        return frozenset(r)

    @property
    def n_virtual(self) -> int:
        if self.cluster is None:
            return self.n_hops
        if self.cluster.case is ClusterCase.CASE3:
            return self.n_hops - self.cluster.n_cy + 1
        return self.n_hops - (self.cluster.n_cy - 1) + 1


@dataclass
class ResidualDistribution:
    """Survival mass split by residual count, plus the drop mass so far."""

    mass: np.ndarray
    dropped: float = 0.0

    @property
    def survival(self) -> float:
        return float(np.sum(self.mass))

    def __getitem__(self, r: int) -> float:
        return float(self.mass[r]) if 0 <= r < len(self.mass) else 0.0


# ---------------------------------------------------------------------------
# stage kernels


@dataclass(frozen=True)
class _Stage:
    outage: tuple[float, ...]  # one hop, or the chain of hops of a collapsed node
    counter: bool  # residual leaves through the counter rather than listening


def _listen_step(mass: Sequence[float], q: int, p: float):
    drop = 0.0
    zero = 0.0
    if q >= 1:
        pq1 = p ** (q - 1)
        total = 0.0
        for r, m in enumerate(mass):
            if m:
                tail = m * p ** (q + r)
                drop += tail
                zero += m * pq1 - tail
                total += m
        out = [zero] + [total * p ** (q - k - 1) * (1.0 - p) for k in range(1, q)]
    else:
        for r, m in enumerate(mass):
            if m:
                tail = m * p**r
                drop += tail
                zero += m - tail
        out = [zero]
    return out, drop


def _counter_step(mass: Sequence[float], q: int, p: float):
    top = q + len(mass) - 1
    if top <= 0:
        return [0.0], float(sum(mass))
    drop = 0.0
    out = [0.0] * top
    acc = 0.0
    # out[k] = (1-p) * sum_{B > k} m[B-q] p^(B-k-1)
    for b in range(top, 0, -1):
        m = mass[b - q] if b >= q else 0.0
        acc = m + p * acc
        out[b - 1] = (1.0 - p) * acc
    for r, m in enumerate(mass):
        if m:
            drop += m * p ** (q + r)
    return out, drop


@lru_cache(maxsize=4096)
def _chain_kernel(outage: tuple[float, ...], size: int) -> np.ndarray:
    """pmf of the total number of attempts a chain of hops spends to get through."""
    pmf = np.zeros(1)
    pmf[0] = 1.0
    a = np.arange(size)
    for p in outage:
        geo = np.where(a >= 1, (1.0 - p) * np.power(p, np.maximum(a - 1, 0)), 0.0)
        pmf = np.convolve(pmf, geo)[:size]
    out = np.zeros(size)
    out[: len(pmf)] = pmf
    out.flags.writeable = False
    return out


def _chain_step(mass: Sequence[float], q: int, outage: tuple[float, ...], counter: bool):
    # the collapsed node is its hops in sequence, all attempts on the first
    def through(m):
        m, drop = _counter_step(m, q, outage[0])
        for p in outage[1:]:
            m, d = _counter_step(m, 0, p)
            drop += d
        return m, drop

    if counter:
        return through(mass)
    out = [0.0] * max(q, 1)
    drop = 0.0
    for r, m0 in enumerate(mass):
        if not m0:
            continue
        left, d = through([0.0] * r + [m0])
        drop += d
        for rc, m in enumerate(left):
            out[max(rc - r, 0)] += m
    return out, drop


def _advance(mass, q: int, stage: _Stage):
    if q < 0:
        raise ValueError("allocations must be non-negative")
    if len(stage.outage) == 1:
        p = stage.outage[0]
        return _counter_step(mass, q, p) if stage.counter else _listen_step(mass, q, p)
    return _chain_step(mass, q, stage.outage, stage.counter)


def _run(stages: Sequence[_Stage], q: Sequence[int], upto: int | None = None) -> ResidualDistribution:
    mass: Sequence[float] = [1.0]
    dropped = 0.0
    for stage, qi in zip(stages[:upto], q):
        mass, d = _advance(mass, int(qi), stage)
        dropped += d
    return ResidualDistribution(np.asarray(mass, dtype=float), dropped)


def _drop(stages: Sequence[_Stage], q: Sequence[int]) -> float:
    mass: Sequence[float] = [1.0]
    dropped = 0.0
    for stage, qi in zip(stages, q):
        mass, d = _advance(mass, int(qi), stage)
        dropped += d
    return min(max(dropped, 0.0), 1.0)


def _physical_stages(p: Sequence[float], layout: NetworkLayout) -> list[_Stage]:
    counter = layout.counter_hops if layout.strategy is Strategy.CSC else frozenset()
    return [_Stage((float(pi),), i in counter) for i, pi in enumerate(p)]


def _check(p, q, n: int | None = None):
    p = tuple(OutageProfile(tuple(p)).p)
    q = tuple(int(x) for x in q)
    if len(p) != len(q):
        raise ValueError(f"outage profile has {len(p)} hops but allocation has {len(q)}")
    if n is not None and len(p) != n:
        raise ValueError(f"layout has {n} hops but {len(p)} were given")
    if any(x < 0 for x in q):
        raise ValueError("allocations must be non-negative")
    return p, q


# ---------------------------------------------------------------------------
# evaluators


def pdp_non_cooperative(p, q) -> float:
    """Drop probability when every hop only ever uses its own attempts."""
    p, q = _check(p, q)
    survive = 1.0
    for pi, qi in zip(p, q):
        survive *= 1.0 - pi**qi
    return 1.0 - survive


def pdp_sc_exact(p, q) -> float:
    """Drop probability under one-hop listening (semi-cumulative sharing)."""
    p, q = _check(p, q)
    return _drop(_physical_stages(p, NetworkLayout(len(p))), q)


def pdp_csc_exact(p, q, layout: NetworkLayout) -> float:
    """Drop probability with a counter-sharing cluster embedded in ``layout``."""
    if layout.strategy is not Strategy.CSC:
        raise ValueError("pdp_csc_exact needs a CSC layout")
    p, q = _check(p, q, layout.n_hops)
    return _drop(_physical_stages(p, layout), q)


def evaluate_pdp(p, q, layout: NetworkLayout) -> float:
    """Dispatch to the evaluator matching ``layout.strategy``."""
    if layout.strategy is Strategy.NON_COOP:
        _check(p, q, layout.n_hops)
        return pdp_non_cooperative(p, q)
    if layout.strategy is Strategy.SC:
        _check(p, q, layout.n_hops)
        return pdp_sc_exact(p, q)
    return pdp_csc_exact(p, q, layout)


def admissible_patterns(k: int):
    """Borrowing patterns of length ``k``: leading 0, no two adjacent 1s."""
    for bits in itertools.product((0, 1), repeat=k - 1):
        seq = (0,) + bits
        if all(not (a and b) for a, b in zip(seq, seq[1:])):
            yield seq


def pdp_sc_sequence_form(p, q) -> float:
    """Semi-cumulative drop probability summed over borrowing patterns.

    For a drop at hop ``k``, bit ``m < k`` marks that node ``m`` needed more
    attempts than its own allocation (so it borrowed and left nothing for
    its successor); the last bit marks that hop ``k`` inherited a positive
    residual. Each pattern contributes a product of truncated geometric
    sums over attempt counts.
    """
    p, q = _check(p, q)

    def succ(i, lo, hi):
        # P(first success at attempt a) summed over lo <= a <= hi
        if hi < lo:
            return 0.0
        return p[i] ** (lo - 1) - p[i] ** hi

    def lend_then_borrow(i):
        # node i finishes early (a < q_i); node i+1 then needs more than q_{i+1}
        total = 0.0
        for a in range(1, q[i]):
            total += p[i] ** (a - 1) * (1.0 - p[i]) * succ(i + 1, q[i + 1] + 1, q[i + 1] + q[i] - a)
        return total

    pdp = 0.0
    for k in range(1, len(p) + 1):
        last = k - 1
        if k == 1:
            pdp += p[0] ** q[0]
            continue
        for seq in admissible_patterns(k):
            term = 1.0
            m = 0
            while m < last - 1:  # surviving nodes before the final pair
                if seq[m + 1]:
                    term *= lend_then_borrow(m)
                    m += 2
                else:
                    term *= succ(m, 1, q[m])
                    m += 1
            if m == last - 1:
                prev = last - 1
                if seq[last]:
                    # prev finished with a < q_prev, passing q_prev - a on
                    term *= sum(
                        p[prev] ** (a - 1) * (1.0 - p[prev]) * p[last] ** (q[last] + q[prev] - a)
                        for a in range(1, q[prev])
                    )
                else:
                    # prev used exactly its own allocation
                    term *= (succ(prev, q[prev], q[prev]) if q[prev] >= 1 else 0.0) * p[last] ** q[last]
            else:
                # prev borrowed (handled in the pair above), nothing inherited
                term *= p[last] ** q[last]
            pdp += term
    return pdp


# ---------------------------------------------------------------------------
# cluster structure


def _cluster_slices(layout: NetworkLayout):
    if layout.strategy is not Strategy.CSC:
        raise ValueError("a CSC layout is required")
    c = layout.cluster
    return c.n_su, c.n_su + c.n_cy


def canonicalize_cluster(q, layout: NetworkLayout) -> tuple[int, ...]:
    """Move intra-cluster attempts onto the first cluster node.

    The last cluster node keeps its own attempts unless the cluster ends
    the route (CASE3), in which case everything moves.
    """
    lo, hi = _cluster_slices(layout)
    q = [int(x) for x in q]
    if len(q) != layout.n_hops:
        raise ValueError("allocation length does not match layout")
    keep_last = layout.cluster.case is not ClusterCase.CASE3
    end = hi - 1 if keep_last else hi
    q[lo] = sum(q[lo:end])
    for j in range(lo + 1, end):
        q[j] = 0
    return tuple(q)


@dataclass(frozen=True)
class VirtualNetwork:
    """Route with the cluster collapsed into node ``v`` (and ``v+1``)."""

    layout: NetworkLayout
    allocation: tuple[int, ...]
    v_index: int
    stages: tuple[_Stage, ...] = field(repr=False, default=())

    @property
    def n_virtual(self) -> int:
        return len(self.allocation)

    @property
    def q_v(self) -> int:
        return self.allocation[self.v_index]

    @property
    def q_v_plus_1(self) -> int | None:
        if self.layout.cluster.case is ClusterCase.CASE3:
            return None
        return self.allocation[self.v_index + 1]

    def v_kernel(self, size: int) -> np.ndarray:
        """pmf of attempts node ``v`` spends to reach node ``v+1``."""
        return _chain_kernel(self.stages[self.v_index].outage, size)

    def expand(self) -> tuple[int, ...]:
        return expand_virtual(self.allocation, self.layout)


def virtual_stages(p, layout: NetworkLayout) -> tuple[_Stage, ...]:
    """Stage list of the collapsed route for outage profile ``p``."""
    lo, hi = _cluster_slices(layout)
    p = tuple(float(x) for x in p)
    if len(p) != layout.n_hops:
        raise ValueError("outage profile length does not match layout")
    case3 = layout.cluster.case is ClusterCase.CASE3
    stages = [_Stage((x,), False) for x in p[:lo]]
    if case3:
        stages.append(_Stage(p[lo:hi], False))
    else:
        stages.append(_Stage(p[lo : hi - 1], True))
        stages.append(_Stage((p[hi - 1],), False))
    stages.extend(_Stage((x,), False) for x in p[hi:])
    return tuple(stages)


def collapse_cluster(q, layout: NetworkLayout, p=None) -> VirtualNetwork:
    """Collapse the cluster of ``layout`` into virtual node(s).

    ``q_v`` is the cluster's total minus the last node's share (CASE1/2) or
    the whole cluster total (CASE3). ``p`` attaches the stage kernels so the
    result can be evaluated with :func:`pdp_virtual`.
    """
    lo, hi = _cluster_slices(layout)
    q = tuple(int(x) for x in q)
    if len(q) != layout.n_hops:
        raise ValueError("allocation length does not match layout")
    if layout.cluster.case is ClusterCase.CASE3:
        virt = q[:lo] + (sum(q[lo:hi]),) + q[hi:]
    else:
        virt = q[:lo] + (sum(q[lo : hi - 1]), q[hi - 1]) + q[hi:]
    stages = virtual_stages(p, layout) if p is not None else ()
    return VirtualNetwork(layout, virt, lo, stages)


def expand_virtual(virt, layout: NetworkLayout) -> tuple[int, ...]:
    """Inverse of :func:`collapse_cluster` onto the canonical physical allocation."""
    lo, hi = _cluster_slices(layout)
    virt = tuple(int(x) for x in virt)
    if len(virt) != layout.n_virtual:
        raise ValueError("virtual allocation length does not match layout")
    n_cy = layout.cluster.n_cy
    if layout.cluster.case is ClusterCase.CASE3:
        cluster = (virt[lo],) + (0,) * (n_cy - 1)
        rest = virt[lo + 1 :]
    else:
        cluster = (virt[lo],) + (0,) * (n_cy - 2) + (virt[lo + 1],)
        rest = virt[lo + 2 :]
    return virt[:lo] + cluster + rest


def pdp_virtual(vnet: VirtualNetwork, p=None) -> float:
    """Evaluate the collapsed route; ``p`` overrides the attached outages."""
    stages = virtual_stages(p, vnet.layout) if p is not None else vnet.stages
    if not stages:
        raise ValueError("virtual network has no outage data attached")
    return _drop(stages, vnet.allocation)


def psp_at_cluster_exit(p, q, layout: NetworkLayout) -> ResidualDistribution:
    """Survival mass by residual count at the end of the shared-counter run.

    For CASE1/2 this is the residual entering the last cluster node; for
    CASE3 it is the counter value after the last cluster hop.
    """
    p, q = _check(p, q, layout.n_hops)
    lo, hi = _cluster_slices(layout)
    stages = _physical_stages(p, layout)
    if layout.cluster.case is ClusterCase.CASE3:
        stages[hi - 1] = _Stage(stages[hi - 1].outage, True)
        return _run(stages, q, upto=hi)
    return _run(stages, q, upto=hi - 1)
