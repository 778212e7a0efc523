"""Search for the ARQ allocation that minimises the drop probability.

All searches work on a *stage list*: the physical hops for the
non-cooperative and semi-cumulative strategies, and the collapsed route
(cluster replaced by node ``v`` and, unless the cluster ends the route,
``v+1``) for the clustered strategy. Prefix states of the residual dynamic
program are memoised per request, so a candidate that extends an already
evaluated prefix only pays for the hops it adds.

Methods
-------
``EXHAUSTIVE``
    Every non-negative composition of ``q_sum``.
``ONE_FOLD``
    Every non-negative prefix of length ``n - 2``; the last two hops are
    split optimally by :func:`optimal_tail_split`. Exact.
``MULTI_FOLD``
    The list algorithms that fold the route two hops at a time, with the
    stage ranges of the published pseudocode.
``GREEDY``
    ``MULTI_FOLD`` keeping, per stage budget, only the best prefix and the
    prefix obtained by moving one attempt from its last to its
    penultimate hop.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .channel import OutageProfile
from .pdp import (
    ClusterCase,
    NetworkLayout,
    Strategy,
    _advance,
    _physical_stages,
    _Stage,
    expand_virtual,
    virtual_stages,
)

__all__ = [
    "EmptySearchSpace",
    "Method",
    "OptimizationReport",
    "OptimizationRequest",
    "exhaustive_search",
    "greedy_prune",
    "max_folds",
    "multi_fold_csc_case1",
    "multi_fold_csc_case2",
    "multi_fold_csc_case3",
    "multi_fold_sc",
    "one_fold",
    "optimal_tail_split",
    "optimize",
    "search_space_size",
]

EXHAUSTIVE_LIMIT = 5_000_000


class Method(str, enum.Enum):
    EXHAUSTIVE = "exhaustive"
    ONE_FOLD = "one_fold"
    MULTI_FOLD = "multi_fold"
    GREEDY = "greedy"


class EmptySearchSpace(ValueError):
    """The stage ranges admit no allocation for this budget."""


@dataclass(frozen=True)
class OptimizationRequest:
    """What to optimise.

    ``folds`` applies to ``MULTI_FOLD``/``GREEDY`` and defaults to the
    largest number the route admits; larger values are clamped.
    ``canonical`` restricts ``EXHAUSTIVE`` on a clustered route to the
    collapsed (canonical) allocations. ``tail`` selects how the last two
    hops are split: ``"scan"`` tries every split, ``"closed_form"`` uses the
    analytic optimum where it applies and scans otherwise.
    """

    layout: NetworkLayout
    outage: OutageProfile
    q_sum: int
    method: Method = Method.EXHAUSTIVE
    folds: int | None = None
    canonical: bool = True
    tail: str = "scan"

    def __post_init__(self):
        outage = self.outage if isinstance(self.outage, OutageProfile) else OutageProfile(tuple(self.outage))
        object.__setattr__(self, "outage", outage)
        object.__setattr__(self, "method", Method(self.method))
        if len(outage) != self.layout.n_hops:
            raise ValueError(f"outage profile has {len(outage)} hops, layout has {self.layout.n_hops}")
        if int(self.q_sum) != self.q_sum or self.q_sum < self.layout.n_hops:
            raise ValueError(f"q_sum must be an integer >= n_hops={self.layout.n_hops}, got {self.q_sum}")
        object.__setattr__(self, "q_sum", int(self.q_sum))
        if self.folds is not None and self.folds < 1:
            raise ValueError("folds must be at least 1")
        if self.tail not in ("scan", "closed_form"):
            raise ValueError(f"tail must be 'scan' or 'closed_form', got {self.tail!r}")
        if self.layout.strategy is Strategy.NON_COOP and self.method in (Method.MULTI_FOLD, Method.GREEDY):
            raise ValueError(f"{self.method.value} is defined for the sc and csc strategies only")


@dataclass(frozen=True)
class OptimizationReport:
    best_allocation: tuple[int, ...]
    best_pdp: float
    list_size: int
    evaluations: int
    method: Method
    folds: int | None = None
    virtual_allocation: tuple[int, ...] | None = None
    stage_sizes: dict[int, int] = field(default_factory=dict)
    candidates: tuple[tuple[int, ...], ...] = field(default=(), repr=False)


# ---------------------------------------------------------------------------
# memoised objective


def _noncoop_step(mass, q, stage):
    p = stage.outage[0]
    m = mass[0]
    return [m * (1.0 - p**q)], m * p**q


class _Objective:
    """Drop probability of allocation prefixes over a fixed stage list."""

    def __init__(self, stages: Sequence[_Stage], noncoop: bool = False):
        self.stages = tuple(stages)
        self.n = len(self.stages)
        self._step = _noncoop_step if noncoop else (lambda m, q, st: _advance(m, q, st))
        self._memo: dict[tuple[int, ...], tuple[list[float], float]] = {(): ([1.0], 0.0)}

    @property
    def evaluations(self) -> int:
        return len(self._memo) - 1

    def state(self, prefix: tuple[int, ...]):
        hit = self._memo.get(prefix)
        if hit is None:
            mass, dropped = self.state(prefix[:-1])
            out, d = self._step(mass, prefix[-1], self.stages[len(prefix) - 1])
            hit = (out, dropped + d)
            self._memo[prefix] = hit
        return hit

    def drop(self, prefix: tuple[int, ...]) -> float:
        return min(max(self.state(prefix)[1], 0.0), 1.0)


# drop probabilities this close are the same value up to rounding
TIE_RTOL = 1e-12


def _better(a: tuple[float, tuple[int, ...]], b: tuple[float, tuple[int, ...]] | None) -> bool:
    """``a`` has the lower drop probability, or ties and is lexicographically smaller."""
    if b is None:
        return True
    if math.isclose(a[0], b[0], rel_tol=TIE_RTOL, abs_tol=1e-300):
        return a[1] < b[1]
    return a[0] < b[0]


def _closed_form_last(obj: _Objective, prefix: tuple[int, ...]) -> int | None:
    """Analytic optimum of the last hop's share; ``None`` when it does not apply."""
    k = len(prefix)
    pen, last = obj.stages[k], obj.stages[k + 1]
    if len(pen.outage) != 1 or len(last.outage) != 1 or pen.counter:
        return None
    p, s = pen.outage[0], last.outage[0]
    if not (0.0 < p < 1.0 and 0.0 < s < 1.0):
        return None
    mass, _ = obj.state(prefix)
    big_m = math.fsum(mass)
    big_a = math.fsum(m * p**r for r, m in enumerate(mass))
    if big_a <= 0.0 or big_m <= 0.0:
        return None
    rho = big_a * (1.0 - p) / (big_a * (s - p) + big_m * (1.0 - s))
    if not 0.0 < rho <= 1.0:
        return None
    return math.floor(math.log(rho) / math.log(s)) + 1


def _scan_tail(obj: _Objective, prefix: tuple[int, ...], budget: int, y_min: int = 0, closed_form: bool = False):
    """Best ``(x, y)`` with ``x + y = budget`` appended to ``prefix``."""
    if budget < y_min:
        raise ValueError(f"tail budget {budget} is below the required last-hop share {y_min}")
    if closed_form and y_min == 0:
        y_star = _closed_form_last(obj, prefix)
        if y_star is not None:
            y = min(budget, y_star)
            return budget - y, y
    best = None
    for x in range(budget - y_min + 1):
        alloc = prefix + (x, budget - x)
        cand = (obj.drop(alloc), alloc)
        if _better(cand, best):
            best = cand
    return best[1][-2:]


# ---------------------------------------------------------------------------
# public helpers


def _stages_for(layout: NetworkLayout, outage: Sequence[float], canonical: bool = True):
    if layout.strategy is Strategy.CSC and canonical:
        return virtual_stages(outage, layout)
    return tuple(_physical_stages(outage, layout))


def _to_physical(virt: tuple[int, ...], layout: NetworkLayout, canonical: bool = True) -> tuple[int, ...]:
    if layout.strategy is Strategy.CSC and canonical:
        return expand_virtual(virt, layout)
    return virt


def search_space_size(layout: NetworkLayout, q_sum: int, canonical: bool = True) -> int:
    """Number of non-negative compositions of ``q_sum`` over the searched route.

    A clustered route is counted on its collapsed length unless
    ``canonical`` is false.
    """
    if q_sum < 0:
        raise ValueError("q_sum must be non-negative")
    n = layout.n_virtual if (layout.strategy is Strategy.CSC and canonical) else layout.n_hops
    size = math.comb(q_sum + n - 1, n - 1)
    if size > 2**63 - 1:
        raise OverflowError(f"search space of {n} hops with q_sum={q_sum} exceeds 64-bit range")
    return size


def optimal_tail_split(prefix, tail_budget: int, outage, layout: NetworkLayout, closed_form: bool = False):
    """Best split ``(q_{n-1}, q_n)`` of ``tail_budget`` given the first ``n - 2`` shares.

    For a clustered layout ``prefix`` is given on the collapsed route.
    """
    if tail_budget < 0:
        raise ValueError("tail budget must be non-negative")
    outage = tuple(OutageProfile(tuple(outage)).p)
    stages = _stages_for(layout, outage)
    prefix = tuple(int(x) for x in prefix)
    if len(prefix) != len(stages) - 2:
        raise ValueError(f"prefix must hold {len(stages) - 2} shares, got {len(prefix)}")
    obj = _Objective(stages, layout.strategy is Strategy.NON_COOP)
    return _scan_tail(obj, prefix, tail_budget, closed_form=closed_form)


def max_folds(n: int) -> int:
    """Largest fold count a route of ``n`` (collapsed) hops admits."""
    return max((n - 1) // 2, 1) if n >= 2 else 0


# ---------------------------------------------------------------------------
# enumeration helpers


def _compositions(total: int, parts: int) -> Iterable[tuple[int, ...]]:
    """Non-negative compositions in lexicographic order."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _bounded_tuples(parts: int, limit: int) -> list[tuple[int, ...]]:
    """All non-negative tuples of length ``parts`` with sum at most ``limit``."""
    if limit < 0:
        return []
    return [t for total in range(limit + 1) for t in _compositions(total, parts)]


def _stage_seeds(level: int, lo: int, hi: int) -> list[tuple[int, ...]]:
    """Seed lists of the fold algorithms: positive entries, sum in ``[lo, hi]``."""
    if level == 1:
        return [(q,) for q in range(max(lo, 1), hi + 1)]
    return [(a, b - a) for b in range(max(lo, 2), hi + 1) for a in range(1, b)]


def _prune(obj: _Objective, entries: list[tuple[int, ...]]) -> list[tuple[int, ...]]:
    """Greedy step: per stage sum keep the best prefix and its shifted sibling.

    The sibling moves one attempt from the last to the penultimate hop and
    is kept only if the unpruned list holds it, so the pruned list is always
    a subset.
    """
    best: dict[int, tuple[float, tuple[int, ...]]] = {}
    for e in entries:
        cand = (obj.drop(e), e)
        s = sum(e)
        if _better(cand, best.get(s)):
            best[s] = cand
    present = set(entries)
    kept = set()
    for _, e in best.values():
        kept.add(e)
        if len(e) >= 2:
            sibling = e[:-2] + (e[-2] + 1, e[-1] - 1)
            if sibling in present:
                kept.add(sibling)
    return sorted(kept)


# ---------------------------------------------------------------------------
# fold engine


@dataclass
class _FoldPlan:
    """Stage ranges of one fold run over ``obj.stages[:n]``."""

    n: int
    seeds: list[tuple[int, ...]]
    stage_lo: Callable[[int], int]
    stage_hi: Callable[[int], int]
    final_total: int
    final_y_min: int = 0
    final: bool = True  # otherwise stop at the last intermediate stage


def _fold(obj: _Objective, plan: _FoldPlan, greedy: bool, closed_form: bool, sizes: dict[int, int]):
    level = len(plan.seeds[0]) if plan.seeds else 0
    # seed lists are given sets; greedy retention applies to computed stages
    entries = sorted(set(plan.seeds))
    sizes[level] = len(entries)
    j = level + 2
    last = plan.n if plan.final else plan.n - 1
    while j <= last:
        nxt: set[tuple[int, ...]] = set()
        if j == plan.n and plan.final:
            for pre in entries:
                budget = plan.final_total - sum(pre)
                if budget >= plan.final_y_min:
                    nxt.add(pre + _scan_tail(obj, pre, budget, plan.final_y_min, closed_form))
            entries = sorted(nxt)
        else:
            lo, hi = plan.stage_lo(j), plan.stage_hi(j)
            for pre in entries:
                room = hi - sum(pre)
                if room < 0:
                    continue
                y = _scan_tail(obj, pre, room, closed_form=closed_form)[1]
                for budget in range(lo, hi + 1):
                    x = budget - sum(pre) - y
                    if x >= 0:
                        nxt.add(pre + (x, y))
            entries = sorted(nxt)
            if greedy:
                entries = _prune(obj, entries)
        sizes[j] = len(entries)
        j += 2
    return entries


def _seed_level(n: int, folds: int | None) -> tuple[int, int]:
    top = max_folds(n)
    f = top if folds is None else min(folds, top)
    return n - 2 * f, f


def _standard_plan(n: int, budget: int, folds: int | None, offset: int = 0,
                   final_total: int | None = None, final_y_min: int = 0):
    """Fold ranges ``[j + offset, budget - (n - j) + 1]`` used by the SC-style runs."""
    level, f = _seed_level(n, folds)

    def lo(j):
        return j + offset

    def hi(j):
        return budget - (n - j) + 1

    if level in (1, 2):
        seeds = _stage_seeds(level, lo(level), hi(level))
    else:
        seeds = _bounded_tuples(level, budget)
    total = budget if final_total is None else final_total
    return _FoldPlan(n, seeds, lo, hi, total, final_y_min), f


# ---------------------------------------------------------------------------
# searches


def _finish(obj: _Objective, finals: Iterable[tuple[int, ...]], req: OptimizationRequest, folds=None,
            sizes=None, canonical: bool = True) -> OptimizationReport:
    finals = sorted(set(finals))
    if not finals:
        raise EmptySearchSpace(f"{req.method.value} produced no candidate for q_sum={req.q_sum}")
    best = None
    for alloc in finals:
        cand = (obj.drop(alloc), alloc)
        if _better(cand, best):
            best = cand
    pdp, virt = best
    physical = _to_physical(virt, req.layout, canonical)
    return OptimizationReport(
        best_allocation=physical,
        best_pdp=pdp,
        list_size=len(finals),
        evaluations=obj.evaluations,
        method=req.method,
        folds=folds,
        virtual_allocation=virt if physical != virt else None,
        stage_sizes=dict(sizes or {}),
        candidates=tuple(finals),
    )


def _objective(req: OptimizationRequest, canonical: bool = True) -> _Objective:
    stages = _stages_for(req.layout, req.outage.p, canonical)
    return _Objective(stages, req.layout.strategy is Strategy.NON_COOP)


def exhaustive_search(req: OptimizationRequest) -> OptimizationReport:
    """Minimum over every non-negative composition of ``q_sum``."""
    canonical = req.canonical
    size = search_space_size(req.layout, req.q_sum, canonical)
    if size > EXHAUSTIVE_LIMIT:
        raise OverflowError(f"exhaustive search over {size} allocations exceeds the limit of {EXHAUSTIVE_LIMIT}")
    obj = _objective(req, canonical)
    n = obj.n
    best = None
    count = 0
    evals = 0
    # depth-first walk sharing prefix states without storing them
    stack = [((), [1.0], 0.0)]
    while stack:
        prefix, mass, dropped = stack.pop()
        left = req.q_sum - sum(prefix)
        k = len(prefix)
        if k == n - 1:
            alloc = prefix + (left,)
            _, d = obj._step(mass, left, obj.stages[k])
            evals += 1
            count += 1
            cand = (min(max(dropped + d, 0.0), 1.0), alloc)
            if _better(cand, best):
                best = cand
            continue
        for q in range(left, -1, -1):
            out, d = obj._step(mass, q, obj.stages[k])
            evals += 1
            stack.append((prefix + (q,), out, dropped + d))
    pdp, virt = best
    physical = _to_physical(virt, req.layout, canonical)
    return OptimizationReport(
        best_allocation=physical,
        best_pdp=pdp,
        list_size=count,
        evaluations=evals,
        method=Method.EXHAUSTIVE,
        virtual_allocation=virt if physical != virt else None,
        stage_sizes={n: count},
    )


def one_fold(req: OptimizationRequest) -> OptimizationReport:
    """Every prefix of ``n - 2`` shares with the optimal split of the rest."""
    obj = _objective(req)
    n = obj.n
    closed = req.tail == "closed_form"
    if n == 1:
        return _finish(obj, [(req.q_sum,)], req, folds=1)
    finals = []
    prefixes = _bounded_tuples(n - 2, req.q_sum)
    for pre in prefixes:
        finals.append(pre + _scan_tail(obj, pre, req.q_sum - sum(pre), closed_form=closed))
    return _finish(obj, finals, req, folds=1, sizes={n - 2: len(prefixes), n: len(set(finals))})


def _run_plan(req: OptimizationRequest, plan_factory, greedy: bool) -> OptimizationReport:
    obj = _objective(req)
    sizes: dict[int, int] = {}
    plan, f = plan_factory(obj.n)
    if obj.n == 1:
        return _finish(obj, [(req.q_sum,)], req, folds=0)
    finals = _fold(obj, plan, greedy, req.tail == "closed_form", sizes)
    return _finish(obj, finals, req, folds=f, sizes=sizes)


def multi_fold_sc(req: OptimizationRequest, greedy: bool = False) -> OptimizationReport:
    """Fold list algorithm for the semi-cumulative route."""
    if req.layout.strategy is not Strategy.SC:
        raise ValueError("multi_fold_sc needs an sc layout")
    return _run_plan(req, lambda n: _standard_plan(n, req.q_sum, req.folds), greedy)


def _require_case(req: OptimizationRequest, case: ClusterCase):
    c = req.layout.cluster
    if req.layout.strategy is not Strategy.CSC or c.case is not case:
        raise ValueError(f"this search needs a csc layout with cluster case {case.value}")
    return c


def multi_fold_csc_case1(req: OptimizationRequest, greedy: bool = False) -> OptimizationReport:
    """Fold list algorithm for a cluster at the source end (collapsed route)."""
    c = _require_case(req, ClusterCase.CASE1)
    # node v carries the n_cy - 1 first cluster hops
    return _run_plan(req, lambda n: _standard_plan(n, req.q_sum, req.folds, offset=c.n_cy - 2), greedy)


def multi_fold_csc_case3(req: OptimizationRequest, greedy: bool = False) -> OptimizationReport:
    """Fold list algorithm for a cluster at the destination end.

    The semi-cumulative part plus the first cluster hop is folded with the
    budget left after reserving one attempt per remaining cluster hop; the
    final split places at least those reserved attempts on node ``v``.
    """
    c = _require_case(req, ClusterCase.CASE3)
    reserve = c.n_cy - 1
    base = req.q_sum - reserve
    return _run_plan(
        req,
        lambda n: _standard_plan(n, base, req.folds, final_total=req.q_sum, final_y_min=reserve),
        greedy,
    )


def _case2_filter(entry: tuple[int, ...], n_cy: int) -> bool:
    k = len(entry)
    for j in range(k - 2):
        if entry[j] <= 1 and entry[j + 1] == 0:
            return False
    if k >= 2 and entry[k - 2] <= 1 and entry[k - 1] < n_cy - 1:
        return False
    return True


def multi_fold_csc_case2(req: OptimizationRequest, greedy: bool = False) -> OptimizationReport:
    """Fold list algorithm for a cluster between two semi-cumulative segments.

    The collapsed route is split into the head (semi-cumulative hops and
    ``v``), folded per head budget like a destination-end cluster, and the
    tail (``v+1`` and the following hops), folded two hops at a time.
    """
    c = _require_case(req, ClusterCase.CASE2)
    obj = _objective(req)
    n = obj.n
    n1 = c.n_su + 1
    n2 = c.n_cy - 2
    n3 = c.n_sw + 1
    closed = req.tail == "closed_form"
    sizes: dict[int, int] = {}
    head: set[tuple[int, ...]] = set()
    folds_used = None
    for budget in range(c.n_su + 1, req.q_sum - (n2 + n3) + 1):
        plan, folds_used = _standard_plan(n1, budget, req.folds, final_total=budget + n2, final_y_min=n2)
        if not plan.seeds and n1 > 2:
            continue
        inner: dict[int, int] = {}
        for e in _fold(obj, plan, greedy, closed, inner):
            if _case2_filter(e, c.n_cy):
                head.add(e)
    entries = sorted(head)
    if greedy:
        entries = _prune(obj, entries)
    sizes[n1] = len(entries)
    last = n - 1 if n3 % 2 else n
    j = n1 + 2
    while j <= last:
        nxt: set[tuple[int, ...]] = set()
        if j == n:
            for pre in entries:
                room = req.q_sum - sum(pre)
                if room >= 0:
                    nxt.add(pre + _scan_tail(obj, pre, room, closed_form=closed))
        else:
            lo, hi = j + n2, req.q_sum - (n - j) + 1
            for pre in entries:
                room = hi - sum(pre)
                if room < 0:
                    continue
                y = _scan_tail(obj, pre, room, closed_form=closed)[1]
                for b in range(lo, hi + 1):
                    x = b - sum(pre) - y
                    if x >= 0:
                        nxt.add(pre + (x, y))
        entries = sorted(nxt)
        if greedy and j != n:
            entries = _prune(obj, entries)
        sizes[j] = len(entries)
        j += 2
    if n3 % 2:
        entries = [e + (req.q_sum - sum(e),) for e in entries if sum(e) <= req.q_sum]
        sizes[n] = len(entries)
    return _finish(obj, entries, req, folds=folds_used, sizes=sizes)


def greedy_prune(req: OptimizationRequest) -> OptimizationReport:
    """Greedy variant of the fold list algorithm matching the layout."""
    return _dispatch_fold(req, greedy=True)


def _dispatch_fold(req: OptimizationRequest, greedy: bool) -> OptimizationReport:
    layout = req.layout
    if layout.strategy is Strategy.SC:
        return multi_fold_sc(req, greedy)
    if layout.strategy is Strategy.CSC:
        search = {
            ClusterCase.CASE1: multi_fold_csc_case1,
            ClusterCase.CASE2: multi_fold_csc_case2,
            ClusterCase.CASE3: multi_fold_csc_case3,
        }[layout.cluster.case]
        return search(req, greedy)
    raise ValueError("fold algorithms are defined for the sc and csc strategies only")


def optimize(req: OptimizationRequest) -> OptimizationReport:
    """Run the method named in ``req``."""
    if req.method is Method.EXHAUSTIVE:
        return exhaustive_search(req)
    if req.method is Method.ONE_FOLD:
        return one_fold(req)
    return _dispatch_fold(req, greedy=req.method is Method.GREEDY)
