"""Acceptance suite: one PASS/FAIL line per criterion on the terminal."""

import functools
import math
import time

import numpy as np
import pytest

from flagsim import harness
from flagsim.concentration import construct_witness, run_concentration_ribbon
from flagsim.counter import beta_for, simulate_counts
from flagsim.flag import Boost, ScriptedRibbon, UpDown, boost_threshold, noisy_rows
from flagsim.hybrid import TRADEOFF_COLUMNS
from flagsim.ribbon import ApproxCount, BubbleSort, ExactCount, ExactSilentCount
from flagsim.sim import build_grid, build_line, run, trial_rng
from flagsim.validators import canonical_coloring, validate_exact_flag, validate_exact_ribbon

KS = (2, 3, 5)
EXACT = {"exact-count": ExactCount, "silent-count": ExactSilentCount,
         "bubble-sort": BubbleSort}
APPROX_EPS = 0.1  # below 1/(2(k-1)) for every k in KS


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'} ({detail})")
    return emit


def _metrics(tr):
    return (tr.rounds, tr.quiescent_round, tr.total_message_bits, tr.peak_memory_bits)


@functools.lru_cache(maxsize=None)
def exact_sweep(sizes):
    """Validity and metrics for every exact program, n in ``sizes``, k in KS, every start."""
    out = {}
    elapsed = {}
    for name, prog in EXACT.items():
        t0 = time.perf_counter()
        for k in KS:
            for n in sizes:
                line = build_line(n)
                ref_ok = None
                for s in range(n):
                    tr = run(prog(k), line, s)
                    ok = all(c is not None for c in tr.colors) and \
                        bool(validate_exact_ribbon(tr.colors, k))
                    out[name, k, n, s] = (ok,) + _metrics(tr)
        elapsed[name] = time.perf_counter() - t0
    return out, elapsed


@functools.lru_cache(maxsize=None)
def approx_sweep(sizes):
    out = {}
    for k in KS:
        for n in sizes:
            line = build_line(n)
            for s in range(n):
                tr = run(ApproxCount(k, APPROX_EPS), line, s, rng=trial_rng(n, s))
                out[k, n, s] = tr.rounds
    return out


SMALL = tuple(range(1, 65))
LARGE = (128, 256)


def test_criterion_1_exactness_sweep(report):
    res, elapsed = exact_sweep(SMALL)
    fails = [key for key, v in res.items() if not v[0]]
    total = sum(elapsed.values())
    ok = not fails and total < 120
    report(1, ok, f"{len(res)} runs, {len(fails)} invalid, {total:.1f}s")
    assert not fails, fails[:5]
    assert total < 120


def test_criterion_2_round_and_bit_bounds(report):
    small, _ = exact_sweep(SMALL)
    large, _ = exact_sweep(LARGE)
    bad = []
    for (name, k, n, s), (ok, rounds, quiet, bits, mem) in {**small, **large}.items():
        if not ok:
            bad.append((name, k, n, s, "invalid"))
        elif name == "exact-count" and rounds > (2 - 1 / k) * n + 2 * k:
            bad.append((name, k, n, s, rounds))
        elif name == "silent-count" and (rounds > 3 * n or bits > 6 * n):
            bad.append((name, k, n, s, rounds, bits))
        elif name == "bubble-sort" and (quiet is None or quiet > 3 * n):
            bad.append((name, k, n, s, quiet))
    approx = {**approx_sweep(SMALL), **approx_sweep(LARGE)}
    bad += [("approx-count",) + key for key, r in approx.items() if r > 2 * key[1]]
    worst = max(v[2] / key[2] for key, v in {**small, **large}.items()
                if key[0] == "bubble-sort" and v[2] is not None)
    report(2, not bad, f"{len(small) + len(large) + len(approx)} runs, {len(bad)} over bound, "
                       f"worst bubble quiescence {worst:.2f}n")
    assert not bad, bad[:5]


def test_criterion_3_memory(report):
    bad = []
    peaks = {}
    for n in (64, 256, 1024):
        line = build_line(n)
        for k in KS:
            for s in sorted({0, n // 3, n // 2, n - 1}):
                e = run(ExactCount(k), line, s).peak_memory_bits
                q = run(ExactSilentCount(k), line, s).peak_memory_bits
                peaks[n] = max(peaks.get(n, (0, 0))[0], e), max(peaks.get(n, (0, 0))[1], q)
                if e > 3 * math.log2(n) + math.log2(k) + 16:
                    bad.append(("exact", n, k, s, e))
                if q > 2 * math.log2(n) + math.log2(k) + 16:
                    bad.append(("silent", n, k, s, q))
    report(3, not bad, "peak bits (exact, silent) by n: " +
           ", ".join(f"{n}: {p}" for n, p in peaks.items()))
    assert not bad, bad


def test_criterion_4_counter_mean(report):
    t0 = time.perf_counter()
    bad = []
    worst = 0.0
    for delta in range(5):
        b = beta_for(delta)
        for n in (16, 256, 4096):
            C = simulate_counts(n, delta, 10_000, trial_rng(delta, n))
            x = b ** C.astype(float)
            se = x.std(ddof=1) / math.sqrt(x.size)
            z = abs(x.mean() - ((b - 1) * n + b)) / se
            worst = max(worst, z)
            if z > 3:
                bad.append((delta, n, z))
    took = time.perf_counter() - t0
    report(4, not bad and took < 60, f"max |z| = {worst:.2f}, {took:.1f}s")
    assert not bad and took < 60


@functools.lru_cache(maxsize=None)
def crit5_csv():
    cfg = harness.RunConfig(algo="approx-count", n=3000, k=3, eps=0.2, trials=200,
                            start="random", seed=2024)
    text, code, records = harness.cmd_run(cfg)
    return text, code, records


def crit5_fresh():
    return crit5_csv.__wrapped__()


def test_criterion_5_approx_count(report):
    _, code, records = crit5_csv()
    frac = sum(r["valid_eps"] is True for r in records) / len(records)
    report(5, frac >= 0.95, f"eps-approximate in {frac:.3f} of {len(records)} trials")
    assert frac >= 0.95


def test_criterion_6_concentration(report):
    mism = 0
    for n in range(1, 201):
        for k in range(2, 6):
            ref = canonical_coloring(n, k)
            for alpha in (0.5, 1.0, 2.0):
                c1 = run_concentration_ribbon(n, 1.0, alpha, k).colors
                c2 = run_concentration_ribbon(n, 1e3, alpha, k).colors
                mism += (c1 != ref) + (c1 != c2)
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(1000):
        b = float(rng.uniform(0.01, 10))
        a = b * float(rng.uniform(1.0001, 20))
        eps = float(rng.uniform(0, 1 / 6))
        while eps <= 0:
            eps = float(rng.uniform(0, 1 / 6))
        w = construct_witness(a, b, eps)
        worst = max(worst, *w.residuals())
    ok = mism == 0 and worst < 1e-9
    report(6, ok, f"{mism} coloring mismatches, worst witness residual {worst:.1e}")
    assert ok


def test_criterion_7_two_dimensional(report):
    bad = 0
    runs = 0
    for a in range(1, 13):
        for b in range(1, 13):
            topo = build_grid(a, b)
            for k in KS:
                for s in range(a * b):
                    tr = run(UpDown(ExactCount(k)), topo, s)
                    runs += 1
                    bad += not validate_exact_flag(tr.colors, k, a, b)
    k = 3
    h = 1
    while 10 * k * boost_threshold(h) != h:
        h = 10 * k * boost_threshold(h)
    T = boost_threshold(h)
    wrong = 0
    for trial in range(100):
        prog = Boost(ScriptedRibbon(k, noisy_rows(k, lambda agent: 2, 1 / (6 * k))))
        tr = run(prog, build_grid(1, h), 0, rng=trial_rng(7, trial))
        wrong += any(c != 2 for c in tr.colors)
    ok = bad == 0 and wrong == 0
    report(7, ok, f"up-down {bad}/{runs} invalid; boost column h={h}, T={T}: "
                  f"{wrong}/100 wrong winners")
    assert ok


@functools.lru_cache(maxsize=None)
def crit8_csv():
    cfg = harness.RunConfig(model="hybrid", algo="repair", n=1000, sigma=2 / 1000, trials=500,
                            seed=808)
    records = harness.run_trials(cfg)
    rows = [r["_tradeoff"] for r in records]
    text = harness.records_to_csv([dict(zip(TRADEOFF_COLUMNS, x)) for x in rows],
                                  TRADEOFF_COLUMNS)
    return text, records


def crit8_fresh():
    return crit8_csv.__wrapped__()


def test_criterion_8_hybrid_tradeoff(report):
    _, records = crit8_csv()
    tr = [r["_tradeoff"] for r in records]
    improve = float(np.mean([row[6] > row[5] for row in tr]))
    rounds_ok = float(np.mean([r["bound_ok"] for r in records]))
    s_means = harness.mean_s_by_sigma(1000, [m / 1000 for m in (1, 2, 4, 8)], 200, seed=809)
    mono = all(x <= y for x, y in zip(s_means, s_means[1:]))
    ok = improve >= 0.95 and rounds_ok == 1.0 and mono
    report(8, ok, f"strict improvement {improve:.3f} (need 0.95); rounds within 2s+2 in "
                  f"{rounds_ok:.3f}; mean s " + ", ".join(f"{v:.1f}" for v in s_means))
    assert improve >= 0.95
    assert rounds_ok == 1.0
    assert mono


def test_criterion_9_lower_bound_scenarios(report):
    reps = [harness.diagnose_line(30, 3), harness.diagnose_line(60, 3),
            harness.diagnose_grid(8, 8)]
    ok = all(r.ok for r in reps)
    detail = "; ".join(
        f"{r.name} {r.details.get('n', '8x8')}: decided {r.details.get('decision_round_n', r.details.get('decision_round'))}"
        f" >= {r.details['bound']:g}" for r in reps)
    report(9, ok, detail)
    assert ok, [r.violations for r in reps]


def test_criterion_10_determinism(report):
    a5, _, _ = crit5_csv()
    b5, _, _ = crit5_fresh()
    a8, _ = crit8_csv()
    b8, _ = crit8_fresh()
    cfg = harness.RunConfig(algo="bubble-sort", n=64, k=5, trials=64, start="sweep", seed=3)
    c1 = harness.cmd_run(cfg)[0]
    c2 = harness.cmd_run(cfg)[0]
    ok = a5 == b5 and a8 == b8 and c1 == c2
    report(10, ok, "approx-count, hybrid and bubble-sort CSVs byte-identical on rerun"
           if ok else "rerun differs")
    assert ok
