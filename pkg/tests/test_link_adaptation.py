import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import channels, cn
from oracles import mmse_rates_direct
from sgdvideo.group_decoder import DecoderConfig, Outage, greedy_partition
from sgdvideo.link_adaptation import (CODE_RATES, UepProfile, band_modulation, hybrid_select,
                                      mmse_filter, mmse_rates, quantize_code_rate, select_mcs,
                                      simulate_mmse_decode, simulate_sgd_decode, uep_backoff)
from sgdvideo.numerics import inverse_pd


# -- MMSE ------------------------------------------------------------------

def test_filter_small_cases():
    assert np.allclose(mmse_filter(np.eye(2), 1.0), 0.5 * np.eye(2))
    assert np.allclose(mmse_filter(np.diag([2.0, 1.0]), 1.0), np.diag([0.4, 0.5]))


def test_filter_residual(rng):
    for _ in range(10):
        H = cn(rng, 3, 3)
        G = mmse_filter(H, 0.5)
        A = H.conj().T @ H + 0.5 * np.eye(3)
        assert np.allclose(A @ G, H.conj().T, atol=1e-9)
        assert np.allclose(G, inverse_pd(A) @ H.conj().T, atol=1e-12)


def test_rates_identity_channel():
    assert np.allclose(mmse_rates(np.eye(2), 1.0), [1.0, 1.0])


@pytest.mark.parametrize("gain", [0.1, 1.0, 3.0, 40.0])
def test_scalar_rate_hits_matched_filter_bound(gain):
    h = np.array([[math.sqrt(gain) * np.exp(0.3j)]])
    # filter h*/(|h|^2 + 1); signal |h|^4 / (|h|^2+1)^2 over noise |h|^2 / (|h|^2+1)^2
    assert mmse_rates(h, 1.0)[0] == pytest.approx(math.log2(1 + gain), abs=1e-12)


def test_zero_channel_zero_rates():
    assert np.array_equal(mmse_rates(np.zeros((2, 3)), 1.0), np.zeros(3))


@given(channels(), st.floats(0.1, 4.0))
def test_rates_match_loop_formula(H, s2):
    assert np.allclose(mmse_rates(H, s2), mmse_rates_direct(H, s2), atol=1e-9)


@given(channels())
def test_mmse_below_single_stream_capacity(H):
    cap = np.log2(1 + np.sum(np.abs(H) ** 2, axis=0))
    assert np.all(mmse_rates(H, 1.0) <= cap + 1e-9)


# -- hybrid switch ---------------------------------------------------------

def test_hybrid_rule():
    assert hybrid_select([0.0], [5.0], [], 0.2) == "mmse"
    assert hybrid_select([1.5], [1.0], [0], 0.2) == "mmse"
    assert hybrid_select([1.15], [1.0], [0], 0.2) == "sgd"
    assert hybrid_select([1.25, 0.0], [1.0, 9.0], [0], 0.2) == "mmse"


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 2))
def test_mmse_decodable_implies_sgd_decodable(seed, M, mu):
    rng = np.random.default_rng(seed)
    H = cn(rng, int(rng.integers(1, 5)), M) * math.sqrt(rng.uniform(0.5, 30))
    mm = mmse_rates(H, 1.0)
    r = mm * rng.uniform(0, 1, M)
    r[rng.random(M) < 0.3] = rng.uniform(0, 8)  # undesired streams may be far too fast
    desired = [t for t in range(M) if r[t] <= mm[t]]
    if hybrid_select(mm, r, desired, 0.0) == "mmse":
        assert not isinstance(greedy_partition(H, r, DecoderConfig(max_group_size=mu), desired), Outage)


# -- UEP and MCS -----------------------------------------------------------

def test_backoff_examples():
    assert uep_backoff(2.0, 0.15, 2) == pytest.approx(1.7)
    assert uep_backoff(0.1, 0.15, 6) == 0.0
    assert uep_backoff(2.345, 0.0, 4) == 2.345


def test_band_boundaries_resolve_down():
    assert band_modulation(1.0) == "QPSK"
    assert band_modulation(1.0 + 1e-12) == "16QAM"
    assert band_modulation(2.0) == "16QAM"
    assert band_modulation(2.0 + 1e-12) == "64QAM"


def test_quantization_examples():
    e = quantize_code_rate(0.8, "QPSK")
    assert (e.modulation, e.code_rate, e.spectral_rate) == ("QPSK", Fraction(1, 3), pytest.approx(2 / 3))
    e = quantize_code_rate(1.5, "16QAM")
    assert e.code_rate == Fraction(1, 3)
    assert not quantize_code_rate(0.3, "QPSK").usable
    assert quantize_code_rate(0.3, "QPSK").spectral_rate == 0.0


def test_select_mcs_examples():
    # backed-off 0.8 under QPSK
    for R, g in [(0.8, 0.0), (1.1, 0.15)]:
        e = select_mcs(R, g)
        assert (e.modulation, e.code_rate) == ("QPSK", Fraction(1, 3))
        assert e.backed_off_rate == pytest.approx(0.8)
    # backed-off 1.5 under 16QAM
    for R, g in [(1.5, 0.0), (2.1, 0.15)]:
        e = select_mcs(R, g)
        assert (e.modulation, e.code_rate) == ("16QAM", Fraction(1, 3))
        assert e.backed_off_rate == pytest.approx(1.5)
    assert not select_mcs(0.3, 0.0).usable


def test_select_mcs_high_rate_uses_64qam():
    e = select_mcs(5.5, 0.1)
    assert e.modulation == "64QAM" and e.code_rate == Fraction(3, 4)


def test_code_rates_are_exact_fractions():
    assert [float(c) for c in CODE_RATES] == [0.25, 1 / 3, 0.5, 2 / 3, 0.75, 0.875]


@given(st.floats(0, 12), st.sampled_from([0.0, 0.1, 0.13, 0.15, 0.4]))
def test_select_mcs_never_rounds_up(R, gamma):
    e = select_mcs(R, gamma)
    assert e.spectral_rate <= uep_backoff(R, gamma, e.bits_per_symbol)
    assert e.spectral_rate <= R


def test_uep_profile_classes():
    u = UepProfile()
    assert [u.margin(l) for l in range(6)] == [0.15, 0.13, 0.13, 0.13, 0.10, 0.10]
    assert [u.bler(l) for l in range(5)] == [0.001, 0.01, 0.01, 0.01, 0.1]
    with pytest.raises(ValueError):
        UepProfile(margins=(0.1, 0.2), target_bler=(0.1, 0.1), layer_class=(0, 1))
    with pytest.raises(ValueError):
        UepProfile(layer_class=(0, 3))


# -- decode simulation -----------------------------------------------------

def test_mmse_decode_thresholds_rates():
    H = np.eye(2)
    assert simulate_mmse_decode(H, [1.0, 1.01], [0, 1]) == {0: True, 1: False}


def test_bler_draw_fails_block():
    H = np.eye(2) * 5
    ok = simulate_mmse_decode(H, [1.0, 1.0], [0, 1], draws={0: 0.05, 1: 0.5}, bler={0: 0.1, 1: 0.1})
    assert ok == {0: False, 1: True}


def test_sgd_decodes_what_mmse_misses():
    # two streams on one receive antenna: MMSE cannot separate them, SIC can
    H = np.array([[2.0, 1.0]])
    r = [0.5, 0.5]
    assert simulate_mmse_decode(H, r, [1]) == {1: False}
    assert simulate_sgd_decode(H, r, [1], DecoderConfig()) == {1: True}


def test_failed_block_stays_as_interference():
    H = np.array([[2.0, 1.0]])
    r = [0.5, 0.5]
    cfg = DecoderConfig(max_group_size=1)
    # stream 0 is decoded first; if it is lost it cannot be cancelled and
    # stream 1 (SINR 1/5 against 0) cannot clear its rate
    ok = simulate_sgd_decode(H, r, [0, 1], cfg, draws={0: 0.0, 1: 0.9}, bler={0: 0.5, 1: 0.5})
    assert ok == {0: False, 1: False}
    ok = simulate_sgd_decode(H, r, [0, 1], cfg, draws={0: 0.9, 1: 0.9}, bler={0: 0.5, 1: 0.5})
    assert ok == {0: True, 1: True}


@given(st.integers(0, 2**32 - 1))
def test_sgd_decode_dominates_mmse_decode(seed):
    rng = np.random.default_rng(seed)
    M = int(rng.integers(1, 5))
    H = cn(rng, int(rng.integers(1, 5)), M) * math.sqrt(rng.uniform(0.5, 30))
    r = rng.uniform(0, 3, M)
    desired = [t for t in range(M) if rng.random() < 0.6]
    draws = {t: float(rng.random()) for t in range(M)}
    bler = {t: 0.2 for t in range(M)}
    mm = simulate_mmse_decode(H, r, desired, 1.0, draws, bler)
    sg = simulate_sgd_decode(H, r, desired, DecoderConfig(), 1.0, draws, bler)
    if all(mm.values()):
        assert all(sg.values())
