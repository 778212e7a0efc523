"""Acceptance criteria 1-11.

Each test records one ``criterion N: PASS|FAIL ...`` line (shown in the
terminal summary) before asserting.
"""

from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest
from scipy import integrate

from arqplan import (
    ASYMPTOTIC,
    ClusterCase,
    DelayModel,
    LinkSpec,
    Method,
    NetworkLayout,
    OptimizationRequest,
    Strategy,
    canonicalize_cluster,
    evaluate_pdp,
    optimize,
    outage_probability,
    outage_profile,
    pdp_csc_exact,
    pdp_non_cooperative,
    pdp_sc_exact,
    pdp_sc_sequence_form,
    simulate,
    snr_pdf,
)
from oracles import tree_pdp

SC_ROUTES = {
    "c1": (0.1, 0.3, 0.1, 0.5, 0.2),
    "c2": (0.5,) * 5,
    "c3": (0.9, 0.2, 0.4, 0.7, 0.1, 0.5),
    "c4": (0.3,) * 6,
}
CLUSTER_LOS = (0.9, 0.2, 0.4, 0.7, 0.1, 0.5)
SWEEP = range(8, 15)


def _outage(los, snr_db=10.0, k=500):
    return outage_profile([LinkSpec(c, snr_db, 1.0, k) for c in los]).p


def _random_composition(rng, q_sum, n):
    cuts = np.sort(rng.integers(0, q_sum + 1, size=n - 1))
    return tuple(int(x) for x in np.diff(np.concatenate(([0], cuts, [q_sum]))))


def _random_csc(rng, n_hops):
    case = ClusterCase(int(rng.integers(1, 4 if n_hops >= 4 else 3)))
    if case is ClusterCase.CASE2 and n_hops < 4:
        case = ClusterCase.CASE3
    if case is ClusterCase.CASE2:
        n_cy = int(rng.integers(2, n_hops - 1))
        n_su = int(rng.integers(1, n_hops - n_cy))
        return NetworkLayout.csc(case, n_su, n_cy, n_hops - n_cy - n_su)
    n_cy = int(rng.integers(2, n_hops + 1))
    rest = n_hops - n_cy
    return NetworkLayout.csc(case, 0, n_cy, rest) if case is ClusterCase.CASE1 else NetworkLayout.csc(case, rest, n_cy, 0)


def test_criterion_01_evaluator_matches_enumeration_oracle(acceptance):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_oracle = worst_seq = 0.0
    instances = 40
    for _ in range(instances):
        n = int(rng.integers(2, 7))
        q_sum = int(rng.integers(n, 15))
        p = tuple(rng.uniform(0.05, 0.9, n))
        q = _random_composition(rng, q_sum, n)
        exact = pdp_sc_exact(p, q)
        worst_oracle = max(worst_oracle, abs(exact - tree_pdp(p, q)))
        worst_seq = max(worst_seq, abs(pdp_sc_sequence_form(p, q) - exact))
    elapsed = time.perf_counter() - start
    ok = worst_oracle <= 1e-10 and worst_seq <= 1e-12 and elapsed < 10.0
    acceptance.record(1, ok, f"{instances} instances, max|exact-oracle|={worst_oracle:.2e}, "
                             f"max|sequence-exact|={worst_seq:.2e}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_monte_carlo_matches_exact(acceptance):
    p6 = (0.3, 0.15, 0.25, 0.2, 0.35, 0.1)
    p5 = p6[:5]
    configs = [
        (NetworkLayout(5, Strategy.NON_COOP), p5, (3, 2, 2, 2, 3)),
        (NetworkLayout(5, Strategy.NON_COOP), p5, (2, 2, 2, 2, 2)),
        (NetworkLayout(5, Strategy.SC), p5, (3, 1, 2, 1, 3)),
        (NetworkLayout(6, Strategy.SC), p6, (2, 2, 1, 2, 2, 3)),
        (NetworkLayout(6, Strategy.SC), p6, (4, 0, 2, 2, 1, 3)),
        (NetworkLayout.csc(1, 0, 3, 3), p6, (4, 0, 2, 2, 2, 2)),
        (NetworkLayout.csc(1, 0, 3, 2), p5, (2, 1, 2, 2, 3)),
        (NetworkLayout.csc(2, 2, 3, 1), p6, (2, 2, 3, 0, 2, 3)),
        (NetworkLayout.csc(2, 1, 2, 2), p5, (2, 3, 1, 2, 2)),
        (NetworkLayout.csc(3, 3, 3, 0), p6, (2, 2, 2, 4, 1, 1)),
    ]
    start = time.perf_counter()
    worst = 0.0
    details = []
    for i, (layout, p, q) in enumerate(configs):
        exact = evaluate_pdp(p, q, layout)
        rep = simulate(layout, q, p, DelayModel(1.0, 0.0), 1_000_000, seed=1000 + i)
        sigma = math.sqrt(exact * (1 - exact) / rep.packets)
        z = abs(rep.pdp_hat - exact) / sigma
        worst = max(worst, z)
        details.append(f"{z:.2f}")
    elapsed = time.perf_counter() - start
    ok = worst <= 3.0 and elapsed < 120.0
    acceptance.record(2, ok, f"10 configs x 1e6 packets, |z| = [{', '.join(details)}], "
                             f"max {worst:.2f} sigma, {elapsed:.1f}s")
    assert ok


def test_criterion_03_dominance_chain(acceptance):
    rng = np.random.default_rng(303)
    violations = 0
    worst = -math.inf
    for _ in range(1000):
        n = int(rng.integers(3, 7))
        p = tuple(rng.uniform(0.01, 0.95, n))
        q = _random_composition(rng, int(rng.integers(n, 16)), n)
        layout = _random_csc(rng, n)
        csc = pdp_csc_exact(p, q, layout)
        sc = pdp_sc_exact(p, q)
        nc = pdp_non_cooperative(p, q)
        gap = max(csc - sc, sc - nc)
        worst = max(worst, gap)
        violations += gap > 1e-12
    acceptance.record(3, violations == 0, f"1000 instances, {violations} violations, "
                                          f"largest ordering gap {worst:.2e}")
    assert violations == 0


def test_criterion_04_one_fold_is_exact(acceptance):
    rng = np.random.default_rng(404)
    worst = 0.0
    checked = 0
    cases = []
    for n in (4, 5):
        for _ in range(3):
            cases.append((NetworkLayout(n, Strategy.SC), tuple(rng.uniform(0.05, 0.9, n))))
        cases.append((NetworkLayout(n, Strategy.SC), _outage(SC_ROUTES["c1"][:n])))
    p67 = _outage(CLUSTER_LOS)
    cases.append((NetworkLayout.csc(1, 0, 3, 3), p67))
    cases.append((NetworkLayout.csc(3, 3, 3, 0), p67))
    cases.append((NetworkLayout.csc(1, 0, 3, 3), _outage((0.1, 0.3, 0.1, 0.5, 0.2, 0.4))))
    cases.append((NetworkLayout.csc(3, 3, 3, 0), _outage((0.1, 0.3, 0.1, 0.5, 0.2, 0.4))))
    for layout, p in cases:
        sweep = range(8, 13) if layout.strategy is Strategy.SC else SWEEP
        for q_sum in sweep:
            ex = optimize(OptimizationRequest(layout, p, q_sum, Method.EXHAUSTIVE))
            one = optimize(OptimizationRequest(layout, p, q_sum, Method.ONE_FOLD))
            worst = max(worst, abs(one.best_pdp - ex.best_pdp))
            checked += 1
    ok = worst <= 1e-12
    acceptance.record(4, ok, f"{checked} (route, q_sum) pairs, max|one_fold-exhaustive| = {worst:.2e}")
    assert ok


def test_criterion_05_greedy_on_reference_routes(acceptance):
    ratios = {}
    for name, los in SC_ROUTES.items():
        p = _outage(los)
        layout = NetworkLayout(len(los), Strategy.SC)
        for q_sum in SWEEP:
            ex = optimize(OptimizationRequest(layout, p, q_sum, Method.EXHAUSTIVE)).best_pdp
            gr = optimize(OptimizationRequest(layout, p, q_sum, Method.GREEDY)).best_pdp
            ratios[(name, q_sum)] = gr / ex
    worst_key = max(ratios, key=ratios.get)
    ok = all(r <= 1.05 for r in ratios.values())
    lines = "; ".join(
        f"{name}: " + " ".join(f"{ratios[(name, q)]:.7f}" for q in SWEEP) for name in SC_ROUTES
    )
    acceptance.record(5, ok, f"greedy/exhaustive PDP ratio for q_sum 8..14 -> {lines}; "
                             f"worst {ratios[worst_key]:.7f} at {worst_key}")
    assert ok


def test_criterion_06_list_size_ordering(acceptance):
    routes = [(f"sc {k}", NetworkLayout(len(v), Strategy.SC), _outage(v)) for k, v in SC_ROUTES.items()]
    p67 = _outage(CLUSTER_LOS)
    routes += [
        ("case1", NetworkLayout.csc(1, 0, 3, 3), p67),
        ("case2", NetworkLayout.csc(2, 2, 3, 1), p67),
        ("case3", NetworkLayout.csc(3, 3, 3, 0), p67),
    ]
    failures = []
    for name, layout, p in routes:
        n_phys = layout.n_hops
        for q_sum in SWEEP:
            sizes = {
                m: optimize(OptimizationRequest(layout, p, q_sum, m)).list_size
                for m in (Method.GREEDY, Method.MULTI_FOLD, Method.ONE_FOLD, Method.EXHAUSTIVE)
            }
            binom = math.comb(q_sum + n_phys - 1, n_phys - 1)
            n_searched = layout.n_virtual
            chain = sizes[Method.GREEDY] <= sizes[Method.MULTI_FOLD] <= sizes[Method.ONE_FOLD] <= binom
            exact = sizes[Method.EXHAUSTIVE] == math.comb(q_sum + n_searched - 1, n_searched - 1)
            if layout.strategy is Strategy.CSC:
                physical = optimize(OptimizationRequest(layout, p, q_sum, Method.EXHAUSTIVE, canonical=False))
                exact = exact and physical.list_size == binom
            if not (chain and exact):
                failures.append((name, q_sum, sizes))
    ok = not failures
    acceptance.record(6, ok, f"{len(routes)} routes x q_sum 8..14, {len(failures)} ordering/binomial failures")
    assert ok, failures


def test_criterion_07_canonical_cluster_form(acceptance):
    rng = np.random.default_rng(707)
    layouts = [NetworkLayout.csc(1, 0, 3, 1), NetworkLayout.csc(2, 1, 3, 1), NetworkLayout.csc(3, 1, 3, 0)]
    violations = 0
    checked = 0
    worst = -math.inf
    for _ in range(50):
        for layout in layouts:
            n = layout.n_hops
            p = tuple(rng.uniform(0.05, 0.9, n))
            lo = layout.cluster_range.start
            outside = [i for i in range(n) if i not in layout.cluster_range]
            fixed = {i: int(rng.integers(1, 4)) for i in outside}
            for budget in range(0, 9):
                for split in itertools.product(range(budget + 1), repeat=3):
                    if sum(split) != budget:
                        continue
                    q = [0] * n
                    for i, v in fixed.items():
                        q[i] = v
                    q[lo : lo + 3] = split
                    canon = canonicalize_cluster(q, layout)
                    gap = pdp_csc_exact(p, canon, layout) - pdp_csc_exact(p, q, layout)
                    worst = max(worst, gap)
                    violations += gap > 1e-12
                    checked += 1
    ok = violations == 0
    acceptance.record(7, ok, f"{checked} intra-cluster splits over 50 random P x 3 cases, "
                             f"{violations} beat the canonical form (max excess {worst:.2e})")
    assert ok


def test_criterion_08_cluster_at_destination_is_best(acceptance):
    p = _outage(CLUSTER_LOS)
    layouts = {
        1: NetworkLayout.csc(1, 0, 3, 3),
        2: NetworkLayout.csc(2, 2, 3, 1),
        3: NetworkLayout.csc(3, 3, 3, 0),
    }
    bad = []
    rows = []
    for q_sum in SWEEP:
        best = {c: optimize(OptimizationRequest(lay, p, q_sum, Method.EXHAUSTIVE, canonical=False)).best_pdp
                for c, lay in layouts.items()}
        rows.append(f"{q_sum}:({best[1]:.5f},{best[2]:.5f},{best[3]:.5f})")
        if best[3] > min(best[1], best[2]) + 1e-12:
            bad.append(q_sum)
    ok = not bad
    acceptance.record(8, ok, f"optimal PDP (case1,case2,case3) per q_sum: {' '.join(rows)}; "
                             f"case3 not minimal at q_sum {bad}")
    assert ok


def test_criterion_09_deadline_accounting(acceptance):
    layout = NetworkLayout(5, Strategy.SC)
    p = _outage(SC_ROUTES["c1"])
    q = (2, 2, 2, 2, 2)
    tau_p, tau_d = 1.0, 0.5
    base = simulate(layout, q, p, DelayModel(tau_p, tau_d, 0.0, deadline=10 * (tau_p + tau_d)), 200_000, seed=9)
    zero_ok = base.w_deadline == 0.0 and base.eta == 1.0
    prev = base
    monotone = True
    trail = []
    for nack in (0.2, 0.4, 0.6, 1.0):
        rep = simulate(layout, q, p, DelayModel(tau_p, tau_d, nack, deadline=10 * (tau_p + tau_d)), 200_000, seed=9)
        monotone &= rep.w_deadline >= prev.w_deadline and rep.avg_delay >= prev.avg_delay
        trail.append(f"{nack}:{rep.w_deadline:.4f}/{rep.avg_delay:.3f}")
        prev = rep
    ok = zero_ok and monotone
    acceptance.record(9, ok, f"tau_nack=0 -> w_deadline={base.w_deadline}, eta={base.eta}; "
                             f"w_deadline/avg_delay by tau_nack {' '.join(trail)}")
    assert ok


def test_criterion_10_counter_overhead(acceptance):
    p = _outage(CLUSTER_LOS)
    q12 = (2, 2, 2, 2, 2, 2)
    sc = NetworkLayout(6, Strategy.SC)
    sc_pdv = {simulate(sc, q12, p, DelayModel.with_overhead(1.0, 0.0, a, deadline=12.0), 200_000, seed=5).pdv
              for a in (0.0, 0.5, 1.0)}
    sc_ok = len(sc_pdv) == 1

    csc_ok = True
    trail = []
    for layout in (NetworkLayout.csc(1, 0, 3, 3), NetworkLayout.csc(2, 2, 3, 1), NetworkLayout.csc(3, 3, 3, 0)):
        pdvs = [simulate(layout, q12, p, DelayModel.with_overhead(1.0, 0.0, a, deadline=12.0), 200_000, seed=5).pdv
                for a in (0.0, 0.5, 1.0)]
        csc_ok &= pdvs[0] <= pdvs[1] <= pdvs[2]
        trail.append(f"case{layout.cluster.case.value}:" + "/".join(f"{x:.4f}" for x in pdvs))

    overhead_ok = True
    t_c = 0.25
    zeros = (0.0,) * 6
    plain = simulate(sc, q12, zeros, DelayModel(1.0, 0.0), 1000, seed=1).avg_delay
    extra = {}
    for layout in (NetworkLayout.csc(1, 0, 3, 3), NetworkLayout.csc(2, 2, 3, 1), NetworkLayout.csc(3, 3, 3, 0)):
        rep = simulate(layout, q12, zeros, DelayModel(1.0, 0.0, t_c=t_c), 1000, seed=1)
        n_cy = layout.cluster.n_cy
        want = (n_cy - 1) * t_c if layout.cluster.case is ClusterCase.CASE1 else n_cy * t_c
        extra[layout.cluster.case.value] = rep.avg_delay - plain
        overhead_ok &= rep.delivered == 1000 and math.isclose(rep.avg_delay - plain, want, abs_tol=1e-12)
    ok = sc_ok and csc_ok and overhead_ok
    acceptance.record(10, ok, f"SC PDV over alpha {sorted(sc_pdv)}; CSC PDV by alpha {' '.join(trail)}; "
                              f"per-packet overhead {extra} with t_c={t_c}")
    assert ok


def test_criterion_11_channel_math(acceptance):
    worst_rayleigh = 0.0
    for snr_db in (-5.0, 0.0, 5.0, 10.0, 20.0):
        for rate in (0.5, 1.0, 2.0):
            snr = 10 ** (snr_db / 10)
            want = -math.expm1(-(2**rate - 1) / snr)
            got = outage_probability(LinkSpec(0.0, snr_db, rate, ASYMPTOTIC))
            worst_rayleigh = max(worst_rayleigh, abs(got - want))
    worst_norm = 0.0
    for c in (0.0, 0.3, 0.7, 0.95):
        for snr_db in (0.0, 10.0, 20.0):
            link = LinkSpec(c, snr_db, 1.0)
            total, _ = integrate.quad(lambda g: snr_pdf(link, g), 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=400)
            worst_norm = max(worst_norm, abs(total - 1.0))
    # operating point of the reference routes: 10 dB, R = 1, LOS fraction swept over ten values
    grid = [(c, 10.0) for c in np.linspace(0.0, 0.9, 10)]
    exceed = [
        outage_probability(LinkSpec(c, s, 1.0, 500)) > outage_probability(LinkSpec(c, s, 1.0, ASYMPTOTIC))
        for c, s in grid
    ]
    ok = worst_rayleigh <= 1e-8 and worst_norm <= 1e-8 and all(exceed)
    acceptance.record(11, ok, f"Rayleigh closed-form error {worst_rayleigh:.2e}, pdf normalisation error "
                              f"{worst_norm:.2e}, finite-K > asymptotic on {sum(exceed)}/10 grid points")
    assert ok
