"""Acceptance checks. Each test prints one PASS/FAIL line and then asserts.

The desk-scale matrix (2e6 ticks, 5 seeds, every variant) is run once per
workload and shared by the criteria that read it.
"""

import math
import random
import statistics
import time

import pytest

from conftest import brute_force_survivors, build_random_heap
from learned_gc import harness
from learned_gc.harness import (ExperimentConfig, build_matrix, compare_variants,
                                convergence_epoch, io_window_ratio, run)
from learned_gc.heap import BACKENDS
from learned_gc.mdp import GcState
from learned_gc.policy import LearnerConfig, QLearner, QTable, opt_action, q_update, select_action
from learned_gc.workloads import WORKLOADS, WorkloadSpec

SEEDS = [0, 1, 2, 3, 4]
VARIANTS = ["never", "q", "qp", "qps", "qpsi"]
LEARNED = ["q", "qp", "qps", "qpsi"]
MB16 = 16 * 1024 * 1024


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


_matrices = {}


def desk_matrix(kind):
    """Full desk-scale comparison for one workload, with its wall time."""
    if kind not in _matrices:
        base = ExperimentConfig(WorkloadSpec(kind))
        start = time.perf_counter()
        table = compare_variants(build_matrix(base, [base.workload], VARIANTS, SEEDS), trace=True)
        _matrices[kind] = (table, time.perf_counter() - start)
    return _matrices[kind]


def test_oracle_equivalence(capsys):
    start = time.perf_counter()
    checked = 0
    mismatches = 0
    for cls in BACKENDS.values():
        for seed in range(100):
            for g in (1, 2, 3):
                h = build_random_heap(cls, 10_000 + seed, max_objects=1000)
                before = set(h.object_ids())
                young = {o for o in before if h.generation(o) <= g}
                expected = young - brute_force_survivors(h, g)
                h.collect(g)
                mismatches += (before - set(h.object_ids())) != expected
                checked += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 10
    report(capsys, 1, ok, f"{checked} heap/generation cases over {len(BACKENDS)} backend(s), "
                          f"{mismatches} mismatches, {elapsed:.2f}s (limit 10s)")


def test_refcount_soundness(capsys):
    details = []
    ok = True
    for name, cls in BACKENDS.items():
        rng = random.Random(2024)
        start = time.perf_counter()
        h = cls()
        roots = []
        for _ in range(100_000):
            r = rng.random()
            if r < 0.35 or not roots:
                refs = [rng.choice(roots)] if roots and rng.random() < 0.5 else []
                oid = h.allocate(rng.randrange(4), rng.randint(1, 64), refs)
                h.add_root(oid)
                roots.append(oid)
            elif r < 0.65:
                h.remove_root(roots.pop(rng.randrange(len(roots))))
            elif r < 0.85:
                h.add_ref(rng.choice(roots), rng.choice(roots))
            elif r < 0.98:
                src = rng.choice(roots)
                out = h.get(src).out_refs
                if out:
                    h.remove_ref(src, rng.choice(out))
            else:
                h.collect(rng.randint(1, 3))
        counts_ok = h.recount_refs() == {o: h.ref_count(o) for o in h.object_ids()}
        bytes_ok = h.live_bytes == sum(h.get(o).size for o in h.object_ids())
        elapsed = time.perf_counter() - start
        ok &= counts_ok and bytes_ok and elapsed < 5
        details.append(f"{name}: refcounts {'exact' if counts_ok else 'WRONG'}, "
                       f"live_bytes {'exact' if bytes_ok else 'WRONG'}, {elapsed:.2f}s")
    report(capsys, 2, ok, "1e5 mutations; " + "; ".join(details) + " (limit 5s)")


def test_q_update_identities(capsys):
    rng = random.Random(3)
    worst = 0.0
    s, s2 = GcState(1, 0), GcState(2, 5)
    for _ in range(20_000):
        alpha = rng.choice([0.1, 1.0, rng.uniform(1e-3, 1.0)])
        gamma = rng.choice([0.9999, rng.uniform(1e-3, 1.0)])
        t = QTable(3, 64)
        q0 = rng.uniform(-100, 100)
        row = [rng.uniform(-100, 100) for _ in range(4)]
        t.set(s, 1, q0)
        for a, v in enumerate(row):
            t.set(s2, a, v)
        reward = rng.uniform(-1, 1)
        got = q_update(t, s, 1, reward, s2, alpha, gamma)
        worst = max(worst, abs(got - (q0 + alpha * (reward + gamma * max(row) - q0))))
    t = QTable(3, 64)
    t.set(s, 2, 37.5)
    overwrite = q_update(t, s, 2, 0.625, GcState(9, 9), 1.0, 0.9999)
    t = QTable(3, 64)
    t.set(s2, 0, 2.0)
    default = q_update(t, s, 0, 0.5, s2, 0.1, 0.9999)
    default_err = abs(default - 0.1 * (0.5 + 0.9999 * 2.0))
    ok = worst <= 1e-12 and overwrite == 0.625 and default_err <= 1e-12
    report(capsys, 3, ok, f"max error {worst:.2e} over 20000 random updates, alpha=1 overwrite "
                          f"{'exact' if overwrite == 0.625 else overwrite}, "
                          f"alpha=0.1/gamma=0.9999 error {default_err:.2e} (limit 1e-12)")


def test_exploration_distribution(capsys):
    n = 1_000_000
    start = time.perf_counter()
    results = []
    ok = True
    for prior, p in ((False, 0.75), (True, 1 / 700)):
        cfg = LearnerConfig(enable_P=prior)
        t = QTable(3, 64)
        rng = random.Random(11)
        state = GcState(1, 3)
        collects = sum(1 for _ in range(n) if select_action(t, state, cfg, 1.0, rng))
        sigma = math.sqrt(n * p * (1 - p))
        z = (collects - n * p) / sigma
        ok &= abs(z) <= 3
        results.append(f"{'prior' if prior else 'no prior'} {collects / n:.5f} vs {p:.5f} "
                       f"(z={z:+.2f})")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 10
    report(capsys, 4, ok, "; ".join(results) + f"; {elapsed:.2f}s (limit 3 sigma, 10s)")


def test_saturation_initialisation(capsys):
    learner = QLearner(LearnerConfig(), 3, 64, random.Random(0))
    bad = []
    for site in list(range(0, 50)) + [101, 208, 305, 10**6]:
        state = GcState(site, 64)
        row = learner.table.row(state)
        if list(row) != [-100.0, -100.0, -100.0, row[3]] or opt_action(learner.table, state)[0] != 3:
            bad.append(site)
    learner.epsilon = 0.0
    greedy = {learner.decide(GcState(site, 64)) for site in (7, 8, 9)}
    ok = not bad and greedy == {3}
    report(capsys, 5, ok, f"{54 - len(bad)}/54 saturation states read -100 on non-full actions "
                          f"and pick the full collection")


@pytest.mark.parametrize("kind", sorted(WORKLOADS))
def test_threshold_safety(capsys, kind):
    table, _ = desk_matrix(kind)
    runs = 0
    violations = []
    for (wl, variant, seed), r in sorted(table.results.items()):
        runs += 1
        limit = r.threshold_M + r.max_event_bytes
        if r.peak_live_bytes > limit:
            violations.append(f"{variant}/{seed} peak {r.peak_live_bytes} > {limit}")
        trace = r.trace
        breaches = 0
        for i, (k, _ep, value, _clock) in enumerate(trace):
            if k == "breach":
                breaches += 1
                if value > limit:
                    violations.append(f"{variant}/{seed} breach at {value} > {limit}")
                if i + 1 >= len(trace) or trace[i + 1][0] != "forced" or trace[i + 1][2] != 3:
                    violations.append(f"{variant}/{seed} breach without full collection")
        if breaches != r.forced_full_collections:
            violations.append(f"{variant}/{seed} breach/forced count mismatch")
    report(capsys, 6, not violations,
           f"{kind}: {runs} runs, {len(violations)} violations {violations[:3]}")


def test_lru_variant_ordering(capsys):
    table, elapsed = desk_matrix("lru")
    cells = [table.cells["lru", v] for v in LEARNED]
    gaps = [b - a for a, b in zip(cells, cells[1:])]
    ok = cells[0] <= -50 and all(g >= -2 for g in gaps) and cells[-1] > 0 and elapsed < 300
    shown = ", ".join(f"{v}={c:+.2f}%" for v, c in zip(LEARNED, cells))
    report(capsys, 7, ok, f"lru {shown}; adjacent gaps {[round(g, 2) for g in gaps]}; "
                          f"{elapsed:.0f}s (need q<=-50, gaps>=-2, qpsi>0, <300s)")


def test_webserver_io_overlap(capsys):
    table, elapsed = desk_matrix("webserver")
    improvement = table.cells["webserver", "qpsi"]
    io_sites = WORKLOADS["webserver"].io_sites
    ratios = [io_window_ratio(table.results["webserver", "qpsi", s], io_sites) for s in SEEDS]
    ratio = statistics.median(ratios)
    ok = improvement > 0 and ratio >= 2 and elapsed < 180
    report(capsys, 8, ok, f"webserver qpsi {improvement:+.2f}%, I/O-window collection ratio "
                          f"median {ratio:.2f} (per seed {[round(x, 2) for x in ratios]}); "
                          f"{elapsed:.0f}s (need >0%, >=2x, <180s)")


def test_tx_difficulty(capsys):
    table, _ = desk_matrix("tx")
    q, qpsi = table.cells["tx", "q"], table.cells["tx", "qpsi"]
    ok = qpsi >= -10 and qpsi > q
    report(capsys, 9, ok, f"tx qpsi {qpsi:+.2f}% vs q {q:+.2f}% (need >=-10% and > q)")


def test_convergence_speed(capsys):
    table, _ = desk_matrix("lru")
    per_seed = {}
    for s in SEEDS:
        epochs = table.results["lru", "qpsi", s].epochs
        per_seed[s] = (convergence_epoch(epochs), len(epochs))
    limit = {s: 0.4 * n for s, (_, n) in per_seed.items()}
    ok = all(c is not None and c <= limit[s] for s, (c, _) in per_seed.items())
    shown = ", ".join(f"seed {s}: {c}/{n}" for s, (c, n) in per_seed.items())
    report(capsys, 10, ok, f"lru qpsi converged at epoch {shown} (limit 40% of run)")


def test_table_footprint(capsys):
    largest = 0
    runs = 0
    for kind in sorted(WORKLOADS):
        table, _ = desk_matrix(kind)
        for r in table.results.values():
            runs += 1
            largest = max(largest, max((e.table_bytes for e in r.epochs), default=0))
    report(capsys, 11, largest < MB16,
           f"largest table over {runs} desk-scale runs {largest} bytes (limit 16 MB)")


def test_determinism(capsys):
    differing = []
    checked = 0
    for kind in sorted(WORKLOADS):
        table, _ = desk_matrix(kind)
        for variant in ("baseline", "qpsi"):
            for seed in (0, 3):
                first = table.results[kind, variant, seed]
                again = run(first.config, threshold_M=first.threshold_M)
                checked += 1
                if again.epochs_csv().encode() != first.epochs_csv().encode():
                    differing.append(f"{kind}/{variant}/{seed}")
        # from the config alone, recalibrating the threshold from scratch
        first = table.results[kind, "qpsi", 0]
        harness._calibration_cache.clear()
        checked += 1
        if run(first.config).epochs_csv().encode() != first.epochs_csv().encode():
            differing.append(f"{kind}/qpsi/0 recalibrated")
    report(capsys, 12, not differing,
           f"{checked} desk-scale reruns, {len(differing)} differ {differing}")
