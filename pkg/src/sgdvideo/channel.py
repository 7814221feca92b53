"""Quasi-static block-fading MIMO channels, one matrix per (RB, user)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SystemConfig:
    num_users: int = 2
    num_tx_antennas: int = 4
    rx_antennas: tuple[int, ...] = (4, 4)
    num_rbs: int = 6
    subcarriers_per_rb: int = 12
    snr_db: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "rx_antennas", tuple(int(m) for m in self.rx_antennas))
        if self.num_users < 1 or self.num_tx_antennas < 1 or self.num_rbs < 1:
            raise ValueError("num_users, num_tx_antennas and num_rbs must be >= 1")
        if len(self.rx_antennas) != self.num_users:
            raise ValueError("rx_antennas must list one entry per user")
        if any(m < 1 for m in self.rx_antennas):
            raise ValueError("every user needs at least one receive antenna")
        if self.subcarriers_per_rb < 1:
            raise ValueError("subcarriers_per_rb must be >= 1")
        if not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-user channel stacks ``H[k]`` of shape ``(num_rbs, m_k, M)``.

    Signal power is folded into the channel, so the noise variance is 1 by
    default and every transmit symbol has unit energy.
    """

    H: tuple[np.ndarray, ...]
    noise_variance: float = 1.0

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        for Hk in self.H:
            if not np.all(np.isfinite(Hk)):
                raise ValueError("channel has non-finite entries")

    @property
    def num_users(self) -> int:
        return len(self.H)

    @property
    def num_rbs(self) -> int:
        return self.H[0].shape[0]

    def rb(self, i: int) -> list[np.ndarray]:
        """Channel matrices of every user on resource block ``i``."""
        return [Hk[i] for Hk in self.H]

    def scaled(self, gain: float) -> "ChannelRealization":
        return ChannelRealization(tuple(math.sqrt(gain) * Hk for Hk in self.H), self.noise_variance)


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *key)``; counter-style, order free."""
    return np.random.default_rng([int(seed) & (2**64 - 1), *(int(k) for k in key)])


def unit_fading(config: SystemConfig, seed: int, trial: int = 0) -> ChannelRealization:
    """CN(0, 1) entries; each (trial, rb, user) has its own stream."""
    M = config.num_tx_antennas
    stacks = []
    for k, m_k in enumerate(config.rx_antennas):
        Hk = np.empty((config.num_rbs, m_k, M), dtype=complex)
        for i in range(config.num_rbs):
            z = stream_rng(seed, 0, trial, i, k).standard_normal((2, m_k, M))
            Hk[i] = (z[0] + 1j * z[1]) / math.sqrt(2.0)
        stacks.append(Hk)
    return ChannelRealization(tuple(stacks))


def generate_block_fading(config: SystemConfig, seed: int, trial: int = 0) -> ChannelRealization:
    """Rayleigh block fading with per-entry variance equal to the linear SNR.

    Draws for different SNRs share the same underlying unit fading, which
    makes sweeps use common random numbers.
    """
    return unit_fading(config, seed, trial).scaled(config.snr_linear)
