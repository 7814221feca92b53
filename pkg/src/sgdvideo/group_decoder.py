"""Rate margins and the successive group decoder (SGD).

Antenna sets are sorted tuples of 0-based column indices of the channel
matrix. Rates are in bits per channel use; ``math.inf`` marks an antenna that
is exempt from decoding: it is never placed in a decoded group and always
stays in the interference set.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .numerics import cholesky_pd, logdet2_pd

# Margins within this distance are treated as ties when ranking groups.
TIE_TOL = 1e-12
# Outage is declared when the margin is below -OUTAGE_TOL.
OUTAGE_TOL = 1e-10

AntennaSet = tuple[int, ...]


@dataclass(frozen=True)
class DecoderConfig:
    max_group_size: int = 2
    hybrid_threshold: float = 0.2
    select_method: str = "auto"

    def __post_init__(self):
        if self.max_group_size < 1:
            raise ValueError("max_group_size must be >= 1")
        if not self.hybrid_threshold >= 0:
            raise ValueError("hybrid_threshold must be >= 0")
        if self.select_method not in ("auto", "exhaustive", "fast"):
            raise ValueError(f"unknown select_method {self.select_method!r}")


@dataclass(frozen=True)
class OrderedPartition:
    """Decoding stages in order, plus the antennas that are never decoded.

    ``margins`` holds the per-stage rate margins when the partition comes
    out of a decoder run; it is empty for hand-built partitions.
    """

    groups: tuple[AntennaSet, ...]
    remainder: AntennaSet = ()
    margins: tuple[float, ...] = ()

    def __post_init__(self):
        seen: set[int] = set()
        for g in (*self.groups, self.remainder):
            if len(set(g)) != len(g) or seen & set(g):
                raise ValueError("partition groups overlap")
            seen |= set(g)
        if any(len(g) == 0 for g in self.groups):
            raise ValueError("partition groups must be non-empty")

    @property
    def decoded(self) -> frozenset[int]:
        return frozenset(t for g in self.groups for t in g)

    @property
    def margin(self) -> float:
        return min(self.margins, default=math.inf)

    def check(self, num_antennas: int, max_group_size: int) -> None:
        for g in (*self.groups, self.remainder):
            if any(not 0 <= t < num_antennas for t in g):
                raise ValueError("antenna index out of range")
        if any(len(g) > max_group_size for g in self.groups):
            raise ValueError("group exceeds the maximum group size")


@dataclass(frozen=True)
class Outage:
    """Greedy partitioning hit a stage whose best group has negative margin.

    ``partition`` holds every attempted stage (through the failing one, or all
    stages when the decoder was asked not to stop).
    """

    partition: OrderedPartition
    stage: int

    @property
    def margin(self) -> float:
        return self.partition.margin


def _aset(s: Iterable[int]) -> AntennaSet:
    return tuple(sorted(int(t) for t in s))


def _rates(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if np.any(np.isnan(R)) or np.any(R < 0):
        raise ValueError("rates must be >= 0")
    return R


def _whitened_gram(H: np.ndarray, A: AntennaSet, B: AntennaSet) -> np.ndarray:
    """Gram matrix ``H_A^H (I + H_B H_B^H)^{-1} H_A``."""
    HA = H[:, A]
    if B:
        HB = H[:, B]
        L = cholesky_pd(np.eye(H.shape[0]) + HB @ HB.conj().T)
        X = np.linalg.solve(L, HA)
    else:
        X = HA
    return X.conj().T @ X


def _check_sets(H: np.ndarray, *sets: AntennaSet) -> None:
    M = H.shape[1]
    union: set[int] = set()
    for s in sets:
        if any(not 0 <= t < M for t in s):
            raise ValueError(f"antenna index out of range in {s}")
        if union & set(s):
            raise ValueError("antenna sets overlap")
        union |= set(s)


def _prep(H, noise_var: float) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2:
        raise ValueError("channel must be a 2-D matrix")
    if noise_var != 1.0:
        H = H / math.sqrt(noise_var)
    return H


def delta_margin(H, D: Iterable[int], B: Iterable[int], R, noise_var: float = 1.0) -> float:
    """Mutual information of ``D`` (``B`` as noise) minus the sum rate of ``D``."""
    H = _prep(H, noise_var)
    D, B, R = _aset(D), _aset(B), _rates(R)
    if not D:
        raise ValueError("D must be non-empty")
    _check_sets(H, D, B)
    if not np.all(np.isfinite(R[list(D)])):
        raise ValueError("D contains an antenna with unbounded rate")
    G = _whitened_gram(H, D, B)
    return logdet2_pd(np.eye(len(D)) + G) - float(np.sum(R[list(D)]))


def _subset_margins(H: np.ndarray, A: AntennaSet, B: AntennaSet, R: np.ndarray):
    """Yield ``(Δ(D)/|D|, D)`` over non-empty subsets of the finite-rate part of ``A``, smallest first."""
    Af = tuple(t for t in A if math.isfinite(R[t]))
    if not Af:
        return
    G = _whitened_gram(H, Af, B)
    for size in range(1, len(Af) + 1):
        for idx in itertools.combinations(range(len(Af)), size):
            sub = G[np.ix_(idx, idx)]
            d = logdet2_pd(np.eye(size) + sub) - float(sum(R[Af[j]] for j in idx))
            yield d / size, tuple(Af[j] for j in idx)


def _epsilon_argmin(H: np.ndarray, A: AntennaSet, B: AntennaSet, R: np.ndarray) -> tuple[float, AntennaSet]:
    """ε over the finite-rate part of ``A`` and the smallest minimizing subset."""
    best, best_D = 0.0, ()
    for v, D in _subset_margins(H, A, B, R):
        # Smaller subsets come first, so only a strict improvement replaces.
        if not best_D or v < best - TIE_TOL:
            best, best_D = v, D
    return best, best_D


def _epsilon_bottlenecks(H: np.ndarray, A: AntennaSet, B: AntennaSet,
                         R: np.ndarray) -> tuple[float, list[AntennaSet]]:
    """ε and every smallest-cardinality subset attaining it (several only on ties)."""
    scored = list(_subset_margins(H, A, B, R))
    if not scored:
        return 0.0, []
    best = min(v for v, _ in scored)
    tied = [D for v, D in scored if v <= best + TIE_TOL]
    size = min(len(D) for D in tied)
    return best, [D for D in tied if len(D) == size]


def epsilon_margin(H, A: Iterable[int], B: Iterable[int], R, noise_var: float = 1.0) -> float:
    """Worst per-stream margin over all non-empty subsets of ``A``; 0 for empty ``A``."""
    H = _prep(H, noise_var)
    A, B, R = _aset(A), _aset(B), _rates(R)
    _check_sets(H, A, B)
    return _epsilon_argmin(H, A, B, R)[0]


def partition_margin(H, P: OrderedPartition, R, noise_var: float = 1.0) -> float:
    """Minimum stage margin when decoding the groups of ``P`` in order."""
    H = _prep(H, noise_var)
    R = _rates(R)
    M = H.shape[1]
    P.check(M, M)
    decoded: set[int] = set()
    margin = math.inf
    for g in P.groups:
        decoded |= set(g)
        rest = tuple(t for t in range(M) if t not in decoded)
        margin = min(margin, _epsilon_argmin(H, _aset(g), rest, R)[0])
    return margin


def noise_covariance(H, undecoded_after: Iterable[int], sigma2: float) -> np.ndarray:
    """``σ² I`` plus the outer products of the still-undecoded columns."""
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    H = np.asarray(H, dtype=complex)
    cols = _aset(undecoded_after)
    _check_sets(H, cols)
    Hu = H[:, cols]
    return sigma2 * np.eye(H.shape[0], dtype=complex) + Hu @ Hu.conj().T


def _better(v: float, g: AntennaSet, best: float, best_g: AntennaSet | None) -> bool:
    if best_g is None or v > best + TIE_TOL:
        return True
    return abs(v - best) <= TIE_TOL and g < best_g


def _select_exhaustive(H, S: AntennaSet, cand: AntennaSet, R, mu: int) -> tuple[AntennaSet, float]:
    best, best_g = -math.inf, None
    for size in range(1, min(mu, len(cand)) + 1):
        for g in itertools.combinations(cand, size):
            rest = tuple(t for t in S if t not in g)
            v = _epsilon_argmin(H, g, rest, R)[0]
            if _better(v, g, best, best_g):
                best, best_g = v, g
    return best_g, best


def _select_fast(H, S: AntennaSet, cand: AntennaSet, R, mu: int) -> tuple[AntennaSet, float]:
    # Start from every group of the maximum admissible size and shrink each by
    # its bottleneck subset (smallest minimizer of Δ/|W|) until it empties or
    # reaches an already visited group. Tied bottlenecks are all followed.
    best, best_g = -math.inf, None
    visited: set[AntennaSet] = set()
    for start in itertools.combinations(cand, min(mu, len(cand))):
        stack = [start]
        while stack:
            g = stack.pop()
            if not g or g in visited:
                continue
            visited.add(g)
            rest = tuple(t for t in S if t not in g)
            v, ws = _epsilon_bottlenecks(H, g, rest, R)
            if _better(v, g, best, best_g):
                best, best_g = v, g
            stack.extend(tuple(t for t in g if t not in w) for w in ws)
    return best_g, best


def _num_groups(n: int, mu: int) -> int:
    return sum(math.comb(n, s) for s in range(1, min(mu, n) + 1))


def select_optimal_group(H, S: Iterable[int], R, mu: int, method: str = "auto",
                         noise_var: float = 1.0) -> tuple[AntennaSet, float]:
    """Group of at most ``mu`` decodable antennas in ``S`` with the largest margin.

    The rest of ``S`` is treated as noise. ``method`` is ``"exhaustive"``,
    ``"fast"`` (shrinking search) or ``"auto"`` (exhaustive for small
    candidate counts). Ties go to the lexicographically smallest group.
    """
    H = _prep(H, noise_var)
    S, R = _aset(S), _rates(R)
    if not S:
        raise ValueError("S must be non-empty")
    if mu < 1:
        raise ValueError("mu must be >= 1")
    _check_sets(H, S)
    cand = tuple(t for t in S if math.isfinite(R[t]))
    if not cand:
        raise ValueError("S has no antenna with a finite rate")
    if method == "auto":
        method = "exhaustive" if _num_groups(len(cand), mu) <= 64 else "fast"
    if method == "exhaustive":
        return _select_exhaustive(H, S, cand, R, mu)
    if method == "fast":
        return _select_fast(H, S, cand, R, mu)
    raise ValueError(f"unknown method {method!r}")


def greedy_partition(H, R, cfg: DecoderConfig, desired: Iterable[int], *,
                     stop_on_outage: bool = True, noise_var: float = 1.0) -> OrderedPartition | Outage:
    """Greedy optimal-order SGD for fixed rates ``R``.

    Stages are added until every desired antenna is decoded. A stage whose
    best group has negative margin is an outage; with ``stop_on_outage=False``
    the search continues so the full greedy margin can be inspected.
    """
    H = _prep(H, noise_var)
    R = _rates(R)
    M = H.shape[1]
    desired = set(_aset(desired))
    _check_sets(H, tuple(desired))
    if not all(math.isfinite(R[t]) for t in desired):
        raise ValueError("desired antennas must have finite rates")
    S = list(range(M))
    groups: list[AntennaSet] = []
    margins: list[float] = []
    outage_stage = None
    while not desired <= set(t for g in groups for t in g):
        g, v = select_optimal_group(H, S, R, cfg.max_group_size, cfg.select_method)
        groups.append(g)
        margins.append(v)
        S = [t for t in S if t not in g]
        if v < -OUTAGE_TOL and outage_stage is None:
            outage_stage = len(groups) - 1
            if stop_on_outage:
                break
    part = OrderedPartition(tuple(groups), tuple(S), tuple(margins))
    if outage_stage is not None:
        return Outage(part, outage_stage)
    return part


def enumerate_partitions(antennas: Sequence[int], desired: Iterable[int], mu: int) -> Iterator[tuple[AntennaSet, ...]]:
    """Every ordered sequence of disjoint groups (size <= mu) that first covers ``desired`` at its last stage."""
    desired = frozenset(desired)
    antennas = _aset(antennas)

    def rec(left: AntennaSet, covered: frozenset, prefix: tuple):
        if desired <= covered:
            yield prefix
            return
        for size in range(1, min(mu, len(left)) + 1):
            for g in itertools.combinations(left, size):
                rest = tuple(t for t in left if t not in g)
                yield from rec(rest, covered | set(g), prefix + (g,))

    yield from rec(antennas, frozenset(), ())


def best_partition_exhaustive(H, R, cfg: DecoderConfig, desired: Iterable[int],
                              noise_var: float = 1.0) -> tuple[OrderedPartition, float]:
    """Reference search over all valid ordered partitions; returns the max-min margin."""
    H = _prep(H, noise_var)
    R = _rates(R)
    M = H.shape[1]
    desired = _aset(desired)
    finite = [t for t in range(M) if math.isfinite(R[t])]
    if not set(desired) <= set(finite):
        raise ValueError("desired antennas must have finite rates")
    best, best_p = -math.inf, None
    for groups in enumerate_partitions(finite, desired, cfg.max_group_size):
        p = OrderedPartition(groups, tuple(t for t in range(M) if all(t not in g for g in groups)))
        v = partition_margin(H, p, R)
        if best_p is None or v > best + TIE_TOL:
            best, best_p = v, p
    return best_p, best
