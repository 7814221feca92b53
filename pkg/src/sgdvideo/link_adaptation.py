"""MMSE rates, the hybrid SGD/MMSE switch, UEP back-off and MCS selection,
plus block-level decode simulation for both receiver types."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .group_decoder import OUTAGE_TOL, DecoderConfig, select_optimal_group
from .numerics import inverse_pd

MODULATIONS: dict[str, int] = {"QPSK": 2, "16QAM": 4, "64QAM": 6}
CODE_RATES: tuple[Fraction, ...] = tuple(
    Fraction(n, d) for n, d in ((1, 4), (1, 3), (1, 2), (2, 3), (3, 4), (7, 8)))


@dataclass(frozen=True)
class McsEntry:
    modulation: str
    code_rate: Fraction | None  # None when no code rate fits
    backed_off_rate: float = 0.0

    @property
    def bits_per_symbol(self) -> int:
        return MODULATIONS[self.modulation]

    @property
    def usable(self) -> bool:
        return self.code_rate is not None

    @property
    def spectral_rate(self) -> float:
        if self.code_rate is None:
            return 0.0
        return float(self.code_rate) * self.bits_per_symbol


@dataclass(frozen=True)
class UepProfile:
    """Per-class rate back-off (per modulation bit) and target block error rate.

    ``layer_class[l]`` maps video layer l to a protection class; layers past
    the end use the last class. The default is one base layer, three
    temporal layers and one quality layer.
    """

    margins: tuple[float, ...] = (0.15, 0.13, 0.10)
    target_bler: tuple[float, ...] = (0.001, 0.01, 0.1)
    layer_class: tuple[int, ...] = (0, 1, 1, 1, 2)

    def __post_init__(self):
        if len(self.margins) != len(self.target_bler) or not self.margins:
            raise ValueError("margins and target_bler need the same non-zero length")
        if any(g < 0 for g in self.margins):
            raise ValueError("UEP margins must be >= 0")
        if any(not 0 <= p <= 1 for p in self.target_bler):
            raise ValueError("target BLER must be a probability")
        if any(a < b for a, b in zip(self.margins, self.margins[1:])):
            raise ValueError("UEP margins must be non-increasing from the base class")
        if not self.layer_class or any(not 0 <= c < len(self.margins) for c in self.layer_class):
            raise ValueError("layer_class entries must index a protection class")
        if any(b < a for a, b in zip(self.layer_class, self.layer_class[1:])):
            raise ValueError("layer_class must be non-decreasing")

    def _cls(self, layer: int) -> int:
        return self.layer_class[min(layer, len(self.layer_class) - 1)]

    def margin(self, layer: int) -> float:
        return self.margins[self._cls(layer)]

    def bler(self, layer: int) -> float:
        return self.target_bler[self._cls(layer)]


def mmse_filter(H, sigma2: float) -> np.ndarray:
    """``(H^H H + σ² I)^{-1} H^H``, shape ``M x m_k``."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    H = np.asarray(H, dtype=complex)
    M = H.shape[1]
    return inverse_pd(H.conj().T @ H + sigma2 * np.eye(M)) @ H.conj().T


def mmse_rates(H, sigma2: float) -> np.ndarray:
    """Per-antenna rate ``log2(1 + SINR_t)`` after the MMSE filter.

    The SINR of stream t uses filter row t for the signal, noise and all
    cross-stream interference terms.
    """
    H = np.asarray(H, dtype=complex)
    G = mmse_filter(H, sigma2)
    GH = G @ H
    power = np.abs(GH) ** 2
    signal = np.diag(power)
    interference = power.sum(axis=1) - signal
    noise = sigma2 * np.sum(np.abs(G) ** 2, axis=1)
    denom = noise + interference
    with np.errstate(divide="ignore", invalid="ignore"):
        sinr = np.where(denom > 0, signal / np.where(denom > 0, denom, 1.0), 0.0)
    return np.log2(1.0 + sinr)


def hybrid_select(mmse, targets, desired: Iterable[int], delta: float) -> str:
    """``"mmse"`` when every desired stream clears its target by ``delta``, else ``"sgd"``."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    mmse = np.asarray(mmse, dtype=float)
    targets = np.asarray(targets, dtype=float)
    for t in desired:
        if not mmse[t] - targets[t] >= delta:
            return "sgd"
    return "mmse"


def uep_backoff(R: float, gamma: float, bits_per_symbol: int) -> float:
    """Rate left after reserving ``gamma`` per modulation bit, floored at 0."""
    if R < 0 or gamma < 0:
        raise ValueError("R and gamma must be >= 0")
    return max(0.0, R - gamma * bits_per_symbol)


def band_modulation(R_bar: float) -> str:
    """Modulation whose band contains the backed-off rate; boundaries go down."""
    if R_bar <= 1.0:
        return "QPSK"
    if R_bar <= 2.0:
        return "16QAM"
    return "64QAM"


def quantize_code_rate(R_bar: float, modulation: str) -> McsEntry:
    """Largest code rate not above ``R_bar / bits``; unusable if none fits."""
    ratio = R_bar / MODULATIONS[modulation]
    fitting = [c for c in CODE_RATES if float(c) <= ratio]
    return McsEntry(modulation, max(fitting) if fitting else None, R_bar)


def select_mcs(R: float, gamma: float) -> McsEntry:
    """MCS for spectral rate ``R`` under UEP margin ``gamma``.

    The back-off depends on the constellation size and the constellation is
    picked from the backed-off rate, so every modulation is tried and only
    self-consistent ones are kept; the best spectral rate wins (ties go to
    the smaller constellation). QPSK is the fallback.
    """
    if not R >= 0:
        raise ValueError("R must be >= 0")
    best = None
    for mod, bits in MODULATIONS.items():
        R_bar = uep_backoff(R, gamma, bits)
        if band_modulation(R_bar) != mod:
            continue
        entry = quantize_code_rate(R_bar, mod)
        if best is None or entry.spectral_rate > best.spectral_rate:
            best = entry
    if best is None:
        best = quantize_code_rate(uep_backoff(R, gamma, MODULATIONS["QPSK"]), "QPSK")
    return best


def _block_ok(margin_ok: bool, t: int, draws: Mapping[int, float] | None,
              bler: Mapping[int, float]) -> bool:
    if not margin_ok:
        return False
    if draws is None:
        return True
    return draws[t] >= bler.get(t, 0.0)


def simulate_mmse_decode(H, rates, desired: Iterable[int], sigma2: float = 1.0,
                         draws: Mapping[int, float] | None = None,
                         bler: Mapping[int, float] | None = None) -> dict[int, bool]:
    """Per-stream success of linear MMSE detection against the transmitted rates.

    ``draws`` are uniform variates keyed by stream; a block also fails when its
    draw falls below the stream's target BLER. Without draws only the
    rate condition matters.
    """
    mm = mmse_rates(H, sigma2)
    rates = np.asarray(rates, dtype=float)
    return {t: _block_ok(mm[t] >= rates[t] - OUTAGE_TOL, t, draws, bler or {})
            for t in desired}


def simulate_sgd_decode(H, rates, desired: Iterable[int], cfg: DecoderConfig,
                        sigma2: float = 1.0,
                        draws: Mapping[int, float] | None = None,
                        bler: Mapping[int, float] | None = None) -> dict[int, bool]:
    """Greedy SGD run where a failed block is not cancelled.

    Every stage decodes the best remaining group. If its margin is negative,
    nothing else is decodable and the remaining desired streams fail. A
    block lost to the BLER draw stays in the interference for later stages.
    """
    H = np.asarray(H, dtype=complex)
    R = np.array(rates, dtype=float)
    M = H.shape[1]
    desired = set(int(t) for t in desired)
    bler = bler or {}
    result: dict[int, bool] = {}
    S = list(range(M))
    while desired - set(result):
        if not any(math.isfinite(R[t]) for t in S):
            break
        g, eps = select_optimal_group(H, S, R, cfg.max_group_size, cfg.select_method,
                                      noise_var=sigma2)
        if eps < -OUTAGE_TOL:
            break
        for t in g:
            ok = _block_ok(True, t, draws, bler)
            if t in desired:
                result[t] = ok
            if ok:
                S.remove(t)
            else:
                R[t] = math.inf
    for t in desired - set(result):
        result[t] = False
    return result
