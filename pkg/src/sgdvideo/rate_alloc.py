"""Broadcast rate allocation from per-receiver successive margin accrual."""
from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .group_decoder import DecoderConfig, OrderedPartition, select_optimal_group


def receiver_rates(H, targets, cfg: DecoderConfig, desired: Iterable[int],
                   noise_var: float = 1.0) -> tuple[np.ndarray, OrderedPartition]:
    """Rates one receiver can support, stage by stage, plus its decoding order.

    Each stage decodes the best group against the targets and lifts the
    group's rates by that stage's margin. Antennas the receiver never needs
    get ``inf``.
    """
    r = np.asarray(targets, dtype=float)
    H = np.asarray(H, dtype=complex)
    M = H.shape[1]
    desired = set(int(t) for t in desired)
    Rk = np.full(M, math.inf)
    undecoded = list(range(M))
    groups, margins = [], []
    while not desired <= set(range(M)) - set(undecoded):
        g, eps = select_optimal_group(H, undecoded, r, cfg.max_group_size,
                                      cfg.select_method, noise_var=noise_var)
        for t in g:
            Rk[t] = r[t] + eps
        groups.append(g)
        margins.append(eps)
        undecoded = [t for t in undecoded if t not in g]
    return Rk, OrderedPartition(tuple(groups), tuple(undecoded), tuple(margins))


def allocate_rates(channels: Sequence, targets, cfg: DecoderConfig,
                   desired: Sequence[Iterable[int]] | None = None,
                   noise_var: float = 1.0) -> np.ndarray:
    """Per-antenna rates decodable by every receiver (max-min increment over ``targets``).

    ``desired[k]`` defaults to every antenna. Entries no receiver needs stay
    ``inf``; the rest are clamped at 0 from below.
    """
    r = np.asarray(targets, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < 0):
        raise ValueError("targets must be finite and >= 0")
    M = len(r)
    if desired is None:
        desired = [range(M)] * len(channels)
    if len(desired) != len(channels):
        raise ValueError("need one desired set per receiver")
    R = np.full(M, math.inf)
    for Hk, Sk in zip(channels, desired):
        Rk, _ = receiver_rates(Hk, r, cfg, Sk, noise_var)
        R = np.minimum(R, Rk)
    return np.where(np.isfinite(R), np.maximum(R, 0.0), R)
