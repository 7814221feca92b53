"""Piecewise-linear rate-quality model for layered video and the effective
rate a user extracts when layers depend on the ones below them."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

# Absolute slack (bits/s) when testing whether a layer is fully delivered.
FULL_TOL = 1e-6


@dataclass(frozen=True)
class QualityModel:
    """Cumulative rates ``V`` (bits/s), PSNR anchors ``Q`` (dB) and slopes (dB per bit/s).

    ``slopes[0]`` governs rates below ``V[0]``; ``slopes[l]`` the segment
    ``[V[l-1], V[l]]``.
    """

    rates: tuple[float, ...]
    psnr: tuple[float, ...]
    slopes: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        V, Q, b = self.rates, self.psnr, self.slopes
        if not (len(V) == len(Q) == len(b)) or not V:
            raise ValueError("rates, psnr and slopes need the same non-zero length")
        if V[0] <= 0 or any(v1 <= v0 for v0, v1 in zip(V, V[1:])):
            raise ValueError("cumulative rates must be positive and strictly increasing")
        if any(s <= 0 for s in b):
            raise ValueError("slopes must be positive")
        for l in range(1, len(V)):
            expect = Q[l - 1] + b[l] * (V[l] - V[l - 1])
            if not math.isclose(Q[l], expect, rel_tol=1e-9, abs_tol=1e-9):
                raise ValueError(f"psnr[{l}] breaks piecewise-linear continuity")
        if any(b1 > b0 for b0, b1 in zip(b, b[1:])):
            warnings.warn(f"quality model {self.name!r} has increasing slopes", stacklevel=2)

    @classmethod
    def from_anchors(cls, rates: Sequence[float], psnr: Sequence[float], floor: float,
                     name: str = "") -> "QualityModel":
        """Build from (rate, PSNR) anchors; ``floor`` is the PSNR at zero rate."""
        V, Q = tuple(map(float, rates)), tuple(map(float, psnr))
        slopes = [(Q[0] - floor) / V[0]]
        slopes += [(Q[l] - Q[l - 1]) / (V[l] - V[l - 1]) for l in range(1, len(V))]
        return cls(V, Q, tuple(slopes), name)

    @property
    def num_layers(self) -> int:
        return len(self.rates)

    @property
    def gaps(self) -> tuple[float, ...]:
        """Bits/s carried by each layer alone."""
        return tuple(v - (self.rates[l - 1] if l else 0.0) for l, v in enumerate(self.rates))

    @property
    def floor(self) -> float:
        return psnr_of_rate(self, 0.0)

    @property
    def ceiling(self) -> float:
        return self.psnr[-1]


def psnr_of_rate(model: QualityModel, r: float) -> float:
    if r < 0:
        raise ValueError("rate must be >= 0")
    V, Q, b = model.rates, model.psnr, model.slopes
    if r < V[0]:
        return Q[0] + b[0] * (r - V[0])
    for l in range(1, len(V)):
        if r <= V[l]:
            return Q[l - 1] + b[l] * (r - V[l - 1])
    return Q[-1]


def layer_effective_rates(model: QualityModel, layer_rates: Sequence[float],
                          counts: Sequence[int], layer_ok: Sequence[bool] | None = None) -> list[float]:
    """Effective extraction rate of every layer.

    A layer delivers ``rate * count`` only when every lower layer delivered
    at least its own share of the stream; ``layer_ok[l] = False`` marks a layer
    lost in transmission.
    """
    gaps = model.gaps
    out = []
    complete = True
    for l in range(model.num_layers):
        raw = layer_rates[l] * counts[l] if (layer_ok is None or layer_ok[l]) else 0.0
        out.append(raw if complete else 0.0)
        complete = complete and raw >= gaps[l] - FULL_TOL
    return out


def effective_layer_rate(alloc, layer_rates: Sequence[float], model: QualityModel,
                         k: int, l: int) -> float:
    """Effective rate of layer ``l`` of user ``k`` under ``alloc``.

    ``layer_rates[q]`` is the bits/s one resource delivers for layer ``q``.
    """
    counts = [alloc.count(k, q) for q in range(model.num_layers)]
    return layer_effective_rates(model, layer_rates, counts)[l]


def delivered_rate(model: QualityModel, layer_rates: Sequence[float], counts: Sequence[int],
                   layer_ok: Sequence[bool] | None = None) -> float:
    """Useful video rate: effective layer rates clipped to each layer's size."""
    eff = layer_effective_rates(model, layer_rates, counts, layer_ok)
    return sum(min(c, g) for c, g in zip(eff, model.gaps))


def mean_psnr(models: Sequence[QualityModel], received_rates: Sequence[float]) -> float:
    if not models or len(models) != len(received_rates):
        raise ValueError("need one received rate per model (K >= 1)")
    return math.fsum(psnr_of_rate(m, r) for m, r in zip(models, received_rates)) / len(models)


# Synthetic stand-ins for two CIF sequences (one base + four enhancement
# layers). These are fixtures, not measured codec data.
FIXTURE_SOCCER = QualityModel.from_anchors(
    [300e3, 600e3, 1000e3, 1500e3, 2200e3], [31.0, 33.5, 35.7, 37.7, 39.5], floor=26.0,
    name="fixture-soccer")
FIXTURE_MOBILE = QualityModel.from_anchors(
    [400e3, 800e3, 1300e3, 2000e3, 2900e3], [29.0, 31.6, 34.0, 36.2, 38.0], floor=24.0,
    name="fixture-mobile")
FIXTURES = {m.name: m for m in (FIXTURE_SOCCER, FIXTURE_MOBILE)}
