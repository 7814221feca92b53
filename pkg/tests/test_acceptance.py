"""Acceptance criteria, one test each, with a PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` or directly with
``python tests/test_acceptance.py``. Runtimes cover the code under test;
reference computations are timed separately and not charged.
"""
from __future__ import annotations

import math
import sys
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import best_group_direct, best_margin_direct, delta_direct, epsilon_direct  # noqa: E402

from sgdvideo.group_decoder import (DecoderConfig, Outage, delta_margin, epsilon_margin,  # noqa: E402
                                    greedy_partition, select_optimal_group)
from sgdvideo.link_adaptation import hybrid_select, mmse_rates, select_mcs, uep_backoff  # noqa: E402
from sgdvideo.rate_alloc import allocate_rates  # noqa: E402
from sgdvideo.resource_alloc import RateGrid, exhaustive_allocation, objective, solve_allocation  # noqa: E402
from sgdvideo.sim import SimulationSpec, rows_to_csv, run_sweep  # noqa: E402
from sgdvideo.video_model import QualityModel  # noqa: E402

MARGIN_TOL = 1e-9
RATIO = 0.95


@dataclass
class Outcome:
    number: int
    title: str
    ok: bool
    detail: str
    seconds: float
    bound: float | None

    @property
    def passed(self) -> bool:
        return self.ok and (self.bound is None or self.seconds < self.bound)

    def line(self) -> str:
        limit = f" < {self.bound:g}s" if self.bound is not None else ""
        return (f"{'PASS' if self.passed else 'FAIL'} [{self.number}] {self.title}: {self.detail} "
                f"(runtime {self.seconds:.2f}s{limit})")


def cn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


def channel(rng, rows, cols):
    return cn(rng, rows, cols) * math.sqrt(rng.uniform(0.3, 30.0))


class Clock:
    def __init__(self):
        self.total = 0.0

    def __call__(self, fn, *args, **kw):
        t = time.perf_counter()
        out = fn(*args, **kw)
        self.total += time.perf_counter() - t
        return out


# -- criteria --------------------------------------------------------------

def margin_formulas(seed=1) -> Outcome:
    rng = np.random.default_rng(seed)
    clock, worst = Clock(), 0.0
    for _ in range(1000):
        M, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        H, R = channel(rng, m, M), rng.uniform(0, 4, M)
        labels = rng.integers(0, 3, M)  # 0: D / A, 1: B, 2: neither
        D = [t for t in range(M) if labels[t] == 0] or [0]
        B = [t for t in range(M) if labels[t] == 1 and t not in D]
        worst = max(worst, abs(clock(delta_margin, H, D, B, R) - delta_direct(H, D, B, R)))
        A = [t for t in D if rng.random() < 0.8]
        worst = max(worst, abs(clock(epsilon_margin, H, A, B, R) - epsilon_direct(H, A, B, R)))
    return Outcome(1, "margin formulas vs direct evaluation", worst <= MARGIN_TOL,
                   f"1000 instances, max abs error {worst:.2e} (tol 1e-9)", clock.total, 10)


def greedy_optimality(seed=2) -> Outcome:
    rng = np.random.default_rng(seed)
    clock, worst, outage_mismatch = Clock(), 0.0, 0
    for _ in range(500):
        M, mu = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        H, R = channel(rng, int(rng.integers(1, 5)), M), rng.uniform(0, 4, M)
        desired = [t for t in range(M) if rng.random() < 0.6] or [int(rng.integers(M))]
        cfg = DecoderConfig(max_group_size=mu)
        full = clock(greedy_partition, H, R, cfg, desired, stop_on_outage=False)
        verdict = clock(greedy_partition, H, R, cfg, desired)
        ref = best_margin_direct(H, R, desired, mu)
        got = (full.partition if isinstance(full, Outage) else full).margin
        worst = max(worst, abs(got - ref))
        outage_mismatch += isinstance(verdict, Outage) != (ref < 0)
    ok = worst <= MARGIN_TOL and outage_mismatch == 0
    return Outcome(2, "greedy partition vs exhaustive partitions", ok,
                   f"500 instances, max margin gap {worst:.2e}, outage disagreements {outage_mismatch}",
                   clock.total, 60)


def fast_group_search(seed=3) -> Outcome:
    rng = np.random.default_rng(seed)
    clock, mismatches = Clock(), 0
    for _ in range(500):
        M, mu = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        H, R = channel(rng, int(rng.integers(1, 5)), M), rng.uniform(0, 4, M)
        S = [t for t in range(M) if rng.random() < 0.8] or [0]
        g_fast, v_fast = clock(select_optimal_group, H, S, R, mu, "fast")
        g_full, v_full = clock(select_optimal_group, H, S, R, mu, "exhaustive")
        ref = best_group_direct(H, S, R, mu)
        if g_fast != g_full or abs(v_fast - ref) > MARGIN_TOL or abs(v_full - ref) > MARGIN_TOL:
            mismatches += 1
    return Outcome(3, "shrinking group search vs exhaustive", mismatches == 0,
                   f"500 instances with |S| <= 5, mismatches {mismatches}", clock.total, 30)


def allocation_self_consistency(seed=4) -> Outcome:
    rng = np.random.default_rng(seed)
    clock, outages = Clock(), 0
    for _ in range(200):
        K, M = int(rng.integers(2, 4)), int(rng.integers(1, 5))
        cfg = DecoderConfig(max_group_size=int(rng.integers(1, min(M, 2) + 1)))
        chans = [channel(rng, int(rng.integers(1, 5)), M) for _ in range(K)]
        desired = [[t for t in range(M) if rng.random() < 0.6] or [int(rng.integers(M))]
                   for _ in range(K)]
        targets = np.zeros(M) if rng.random() < 0.5 else rng.uniform(0, 0.5, M)
        R = clock(allocate_rates, chans, targets, cfg, desired)
        for Hk, Sk in zip(chans, desired):
            outages += isinstance(clock(greedy_partition, Hk, R, cfg, Sk), Outage)
    return Outcome(4, "allocated rates decodable by every receiver", outages == 0,
                   f"200 multi-user instances, outages {outages}", clock.total, 30)


def mmse_implies_sgd(seed=5) -> Outcome:
    rng = np.random.default_rng(seed)
    clock, found, outages = Clock(), 0, 0
    while found < 500:
        M = int(rng.integers(1, 5))
        H = channel(rng, int(rng.integers(1, 5)), M)
        mm = clock(mmse_rates, H, 1.0)
        r = mm * rng.uniform(0, 1.2, M)
        desired = [t for t in range(M) if rng.random() < 0.7]
        if clock(hybrid_select, mm, r, desired, 0.0) != "mmse":
            continue
        found += 1
        cfg = DecoderConfig(max_group_size=int(rng.integers(1, 3)))
        outages += isinstance(clock(greedy_partition, H, r, cfg, desired), Outage)
    return Outcome(5, "MMSE-decodable implies SGD-decodable", outages == 0,
                   f"500 instances passing the switch with delta 0, SGD outages {outages}",
                   clock.total, 30)


def mcs_quantization() -> Outcome:
    t0 = time.perf_counter()
    over = 0
    for R in np.linspace(0, 12, 6001):
        for gamma in (0.0, 0.10, 0.13, 0.15, 0.3):
            e = select_mcs(float(R), gamma)
            over += e.spectral_rate > uep_backoff(float(R), gamma, e.bits_per_symbol)
    a = uep_backoff(2.0, 0.15, 2)
    qpsk = select_mcs(0.8, 0.0)
    qam16 = select_mcs(1.5, 0.0)
    examples = (abs(a - 1.7) < 1e-12,
                (qpsk.modulation, qpsk.code_rate, qpsk.spectral_rate) == ("QPSK", Fraction(1, 3), 2 / 3),
                (qam16.modulation, qam16.code_rate) == ("16QAM", Fraction(1, 3)))
    ok = over == 0 and all(examples)
    return Outcome(6, "MCS quantization", ok,
                   f"30005 grid points above backed-off rate {over}, threshold examples "
                   f"{sum(examples)}/3 exact", time.perf_counter() - t0, None)


def _random_model(rng, layers):
    gaps = rng.uniform(0.5, 6.0, layers)
    slopes = sorted(rng.uniform(0.2, 2.0, layers), reverse=True)
    V = np.cumsum(gaps)
    Q = [30.0]
    for l in range(1, layers):
        Q.append(Q[-1] + slopes[l] * gaps[l])
    return QualityModel(tuple(V), tuple(Q), tuple(slopes))


def allocation_quality(seed=7) -> Outcome:
    rng = np.random.default_rng(seed)
    clock, worst, below = Clock(), math.inf, 0
    for _ in range(200):
        N = int(rng.integers(1, 4))
        models = [_random_model(rng, int(rng.integers(1, 3))) for _ in range(2)]
        L1 = max(m.num_layers for m in models)
        rates = np.round(rng.uniform(0, 4, (N, 2, 2, L1)), 2)
        rates[rng.random(rates.shape) < 0.15] = 0.0
        grid = RateGrid(rates)
        got = objective(clock(solve_allocation, grid, models), grid, models)
        best = objective(exhaustive_allocation(grid, models), grid, models)
        ratio = got / best if best > 0 else 1.0
        worst = min(worst, ratio)
        below += ratio < RATIO
    return Outcome(7, "allocation solver vs exhaustive optimum", below == 0,
                   f"200 instances, worst ratio {worst:.4f} (need >= {RATIO}), below {below}",
                   clock.total, 120)


def decoder_comparison() -> Outcome:
    spec = SimulationSpec()
    t0 = time.perf_counter()
    rows = run_sweep(spec, ("mmse", "hybrid"), workers=1)
    dt = time.perf_counter() - t0
    by = {(r.snr_db, r.decoder): r.mean_psnr_db for r in rows}
    gains = [by[(s, "hybrid")] - by[(s, "mmse")] for s in spec.snr_sweep]
    mid = gains[1:-1]
    ok = min(gains) >= 0 and max(mid) > 0
    table = " ".join(f"{s:g}:{g:+.2f}" for s, g in zip(spec.snr_sweep, gains))
    return Outcome(8, "hybrid vs MMSE mean PSNR", ok,
                   f"{spec.trials} trials x {len(spec.snr_sweep)} SNR points, gain dB {table}", dt, 300)


def determinism() -> Outcome:
    spec = replace(SimulationSpec(), trials=6, snr_sweep=(-3.0, 3.0, 9.0), bler_mode="bernoulli")
    t0 = time.perf_counter()
    outputs = [rows_to_csv(run_sweep(spec, ("mmse", "sgd", "hybrid"), workers=w)) for w in (1, 2, 3)]
    dt = time.perf_counter() - t0
    same = all(o.encode() == outputs[0].encode() for o in outputs)
    return Outcome(9, "byte-identical CSV across worker counts", same,
                   f"workers 1/2/3 {'identical' if same else 'differ'}", dt, None)


CRITERIA = [margin_formulas, greedy_optimality, fast_group_search, allocation_self_consistency,
            mmse_implies_sgd, mcs_quantization, allocation_quality, decoder_comparison, determinism]


def _check(fn, capsys):
    out = fn()
    with capsys.disabled():
        print("\n" + out.line())
    assert out.passed, out.line()


@pytest.mark.parametrize("fn", CRITERIA, ids=[f"criterion_{i + 1}_{f.__name__}" for i, f in enumerate(CRITERIA)])
def test_criterion(fn, capsys):
    _check(fn, capsys)


if __name__ == "__main__":
    results = [fn() for fn in CRITERIA]
    for r in results:
        print(r.line(), flush=True)
    sys.exit(0 if all(r.passed for r in results) else 1)
