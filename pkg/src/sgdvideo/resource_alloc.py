"""Assignment of (RB, transmit antenna) resources to (user, layer) pairs."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .video_model import FULL_TOL, QualityModel, layer_effective_rates

GAIN_TOL = 1e-9
MAX_EXHAUSTIVE = 10**7

Resource = tuple[int, int]
Slot = tuple[int, int]


@dataclass(frozen=True)
class RateGrid:
    """Spectral rate ``rates[i, t, k, l]`` (bits/use) if resource (i, t) carries layer l of user k.

    ``uses_per_second`` converts one resource's spectral rate to bits/s.
    """

    rates: np.ndarray
    uses_per_second: float = 1.0

    def __post_init__(self):
        r = np.asarray(self.rates, dtype=float)
        if r.ndim != 4:
            raise ValueError("rate grid must be 4-D (rb, antenna, user, layer)")
        if np.any(~np.isfinite(r)) or np.any(r < 0):
            raise ValueError("rate grid entries must be finite and >= 0")
        object.__setattr__(self, "rates", r)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.rates.shape


@dataclass
class Allocation:
    """``owner[(i, t)] = (k, l)``; one owner per resource by construction."""

    num_rbs: int
    num_antennas: int
    owner: dict[Resource, Slot] = field(default_factory=dict)
    infeasible_users: tuple[int, ...] = ()

    def resources(self, k: int, l: int) -> list[Resource]:
        return sorted(r for r, s in self.owner.items() if s == (k, l))

    def count(self, k: int, l: int) -> int:
        return sum(1 for s in self.owner.values() if s == (k, l))

    @property
    def base_infeasible(self) -> bool:
        return bool(self.infeasible_users)

    def indicator(self, num_users: int, num_layers: int) -> np.ndarray:
        a = np.zeros((self.num_rbs, self.num_antennas, num_users, num_layers), dtype=np.int8)
        for (i, t), (k, l) in self.owner.items():
            a[i, t, k, l] = 1
        return a


def layer_rate_cap(alloc: Allocation, grid: RateGrid, k: int, l: int) -> float:
    """Common spectral rate of a layer: the weakest of its resources (0 if unassigned)."""
    res = alloc.resources(k, l)
    if not res:
        return 0.0
    return float(min(grid.rates[i, t, k, l] for i, t in res))


def layer_rates_bps(alloc: Allocation, grid: RateGrid, k: int, num_layers: int) -> list[float]:
    return [layer_rate_cap(alloc, grid, k, l) * grid.uses_per_second for l in range(num_layers)]


def _user_value(model: QualityModel, caps: Sequence[float], counts: Sequence[int], ups: float) -> float:
    gaps, slopes = model.gaps, model.slopes
    total, complete = 0.0, True
    for l in range(model.num_layers):
        if not complete:
            break
        c = caps[l] * counts[l] * ups
        total += slopes[l] * min(c, gaps[l])
        complete = c >= gaps[l] - FULL_TOL
    return total


def objective(alloc: Allocation, grid: RateGrid, models: Sequence[QualityModel]) -> float:
    """Slope-weighted sum of clipped effective layer rates over users."""
    total = 0.0
    for k, m in enumerate(models):
        rates = layer_rates_bps(alloc, grid, k, m.num_layers)
        counts = [alloc.count(k, l) for l in range(m.num_layers)]
        total += sum(b * min(c, g) for b, c, g in
                     zip(m.slopes, layer_effective_rates(m, rates, counts), m.gaps))
    return total


class _State:
    """Per-(user, layer) count and min-cap bookkeeping for incremental gains."""

    def __init__(self, grid: RateGrid, models: Sequence[QualityModel]):
        self.grid = grid
        self.models = models
        self.ups = grid.uses_per_second
        self.caps = [[math.inf] * m.num_layers for m in models]
        self.counts = [[0] * m.num_layers for m in models]
        self.owner: dict[Resource, Slot] = {}

    def value(self, k: int, caps=None, counts=None) -> float:
        caps = self.caps[k] if caps is None else caps
        counts = self.counts[k] if counts is None else counts
        return _user_value(self.models[k], [c if n else 0.0 for c, n in zip(caps, counts)],
                           counts, self.ups)

    def gain(self, res: Resource, k: int, l: int) -> float:
        i, t = res
        caps = list(self.caps[k])
        counts = list(self.counts[k])
        caps[l] = min(caps[l], self.grid.rates[i, t, k, l])
        counts[l] += 1
        return self.value(k, caps, counts) - self.value(k)

    def assign(self, res: Resource, k: int, l: int) -> None:
        i, t = res
        self.owner[res] = (k, l)
        self.caps[k][l] = min(self.caps[k][l], self.grid.rates[i, t, k, l])
        self.counts[k][l] += 1

    def base_full(self, k: int) -> bool:
        m = self.models[k]
        c = self.caps[k][0] if self.counts[k][0] else 0.0
        return c * self.counts[k][0] * self.ups >= m.gaps[0] - FULL_TOL


def _best_move(state: _State, free: list[Resource], slots: list[Slot]):
    best = None
    for res in free:
        for k, l in slots:
            g = state.gain(res, k, l)
            if g > GAIN_TOL and (best is None or g > best[0] + GAIN_TOL):
                best = (g, res, k, l)
    return best


def _greedy(grid: RateGrid, models: Sequence[QualityModel]) -> _State:
    N, M, K, L1 = grid.shape
    state = _State(grid, models)
    free = [(i, t) for i in range(N) for t in range(M)]

    def run(slots_fn):
        while free:
            slots = slots_fn()
            if not slots:
                return
            move = _best_move(state, free, slots)
            if move is None:
                return
            _, res, k, l = move
            state.assign(res, k, l)
            free.remove(res)

    run(lambda: [(k, 0) for k in range(K) if not state.base_full(k)])
    run(lambda: [(k, l) for k in range(K) for l in range(models[k].num_layers)])
    return state


class _Matcher:
    """Incremental bipartite b-matching of (user, layer) demands onto resources."""

    def __init__(self, grid: RateGrid):
        N, M, _, _ = grid.shape
        self.rates = grid.rates.reshape(N * M, *grid.shape[2:])
        self.holder = [-1] * (N * M)  # slot index holding each resource
        self.adj: dict[int, list[int]] = {}

    def add(self, sid: int, slot: Slot, cap: float, n: int) -> bool:
        """Give slot ``sid`` ``n`` resources rated at least ``cap``; False if impossible."""
        k, l = slot
        col = self.rates[:, k, l]
        self.adj[sid] = [r for r in range(len(col)) if col[r] >= cap]
        for _ in range(n):
            if not self._augment(sid, set()):
                return False
        return True

    def _augment(self, sid: int, seen: set[int]) -> bool:
        for r in self.adj[sid]:
            if r in seen:
                continue
            seen.add(r)
            if self.holder[r] < 0 or self._augment(self.holder[r], seen):
                self.holder[r] = sid
                return True
        return False

    def snapshot(self):
        return list(self.holder), dict(self.adj)

    def restore(self, snap) -> None:
        self.holder, self.adj = list(snap[0]), dict(snap[1])


def _slot_options(grid: RateGrid, model: QualityModel, k: int, l: int) -> list[tuple[float, int, float]]:
    """(cap, count, value) choices for one layer, best value first.

    Counts stop at the smallest one that fills the layer at that cap. A
    filled layer is worth the same at any cap, so for each count only the
    lowest cap that fills it is kept (it accepts the most resources).
    """
    ups = grid.uses_per_second
    gap, beta = model.gaps[l], model.slopes[l]
    out = []
    full: dict[int, float] = {}
    for c in sorted({float(v) for v in grid.rates[:, :, k, l].ravel() if v > 0}):
        n_full = max(1, math.ceil((gap - FULL_TOL) / (c * ups)))
        full.setdefault(n_full, c)
        for n in range(1, n_full):
            out.append((c, n, beta * c * n * ups))
    out.extend((c, n, beta * gap) for n, c in full.items())
    out.sort(key=lambda o: (-o[2], o[1], -o[0]))
    return out


def _refine(grid: RateGrid, models: Sequence[QualityModel], incumbent: float,
            node_budget: int) -> tuple[dict[Slot, tuple[float, int]] | None, float]:
    """Depth-first branch and bound over per-layer (cap, count) choices.

    Layers are decided user by user, bottom layer first; a layer left empty
    or partial ends that user's stack. Feasibility is an exact matching, the
    bound a fractional knapsack over free resources. Returns the best
    configuration beating ``incumbent`` (or None) and its value.
    """
    N, M, K, _ = grid.shape
    ups = grid.uses_per_second
    order = [(k, l) for k in range(K) for l in range(models[k].num_layers)]
    options = {s: _slot_options(grid, models[s[0]], *s) for s in order}
    # Best-case value per resource and resources needed to fill, per layer.
    density = {}
    for (k, l) in order:
        cmax = max((o[0] for o in options[(k, l)]), default=0.0)
        density[(k, l)] = (models[k].slopes[l] * cmax * ups,
                           models[k].gaps[l] / (cmax * ups) if cmax > 0 else 0.0)
    matcher = _Matcher(grid)
    best_val, best_cfg = incumbent, None
    nodes = 0
    chosen: dict[Slot, tuple[float, int]] = {}

    # Value one resource can add to each layer on its own, before any cap.
    per_res = {(k, l): models[k].slopes[l] * ups * grid.rates[:, :, k, l].ravel()
               for (k, l) in order}

    def bound(pos: int, used: int, blocked: set[int]) -> float:
        rest = [s for s in order[pos:] if s[0] not in blocked]
        left = N * M - used
        if not rest or left <= 0:
            return 0.0
        items = sorted((density[s] for s in rest), key=lambda d: -d[0])
        total, room = 0.0, left
        for dens, need in items:
            if room <= 0:
                break
            take = min(need, room)
            total += dens * take
            room -= take
        # Heterogeneous rates: the best ``left`` resources at their best layer.
        w = np.max([per_res[s] for s in rest], axis=0)
        if left < w.size:
            w = np.partition(w, w.size - left)[w.size - left:]
        return min(total, float(w.sum()))

    def rec(pos: int, value: float, used: int, blocked: set[int]):
        nonlocal best_val, best_cfg, nodes
        nodes += 1
        if value > best_val + GAIN_TOL:
            best_val, best_cfg = value, dict(chosen)
        if pos == len(order) or nodes > node_budget:
            return
        if value + bound(pos, used, blocked) <= best_val + GAIN_TOL:
            return
        k, l = order[pos]
        if k in blocked:
            rec(pos + 1, value, used, blocked)
            return
        gap = models[k].gaps[l]
        for c, n, v in options[(k, l)]:
            if used + n > N * M:
                continue
            snap = matcher.snapshot()
            if matcher.add(pos, (k, l), c, n):
                chosen[(k, l)] = (c, n)
                full = c * n * ups >= gap - FULL_TOL
                rec(pos + 1, value + v, used + n, blocked if full else blocked | {k})
                del chosen[(k, l)]
            matcher.restore(snap)
            if nodes > node_budget:
                return
        rec(pos + 1, value, used, blocked | {k})

    rec(0, 0.0, 0, set())
    if best_cfg is None:
        return None, incumbent
    return best_cfg, best_val


def _realize(grid: RateGrid, cfg: dict[Slot, tuple[float, int]]) -> dict[Resource, Slot]:
    N, M, _, _ = grid.shape
    matcher = _Matcher(grid)
    slots = sorted(cfg)
    for sid, s in enumerate(slots):
        if not matcher.add(sid, s, *cfg[s]):
            raise AssertionError("configuration from the search is infeasible")
    return {(r // M, r % M): slots[sid] for r, sid in enumerate(matcher.holder) if sid >= 0}


def solve_allocation(grid: RateGrid, models: Sequence[QualityModel],
                     node_budget: int = 20000) -> Allocation:
    """Allocate resources to maximize the slope-weighted clipped layer rates.

    A base-layer-first greedy on true objective gains gives the starting
    point; a bounded branch and bound over per-layer (cap, count) choices
    then improves on it, and is exact whenever it finishes within
    ``node_budget`` nodes. Users whose base layer cannot be filled are
    reported in ``infeasible_users``.
    """
    N, M, K, L1 = grid.shape
    if len(models) != K or any(m.num_layers > L1 for m in models):
        raise ValueError("grid shape does not match the quality models")
    state = _greedy(grid, models)
    owner = dict(state.owner)
    start = sum(state.value(k) for k in range(K))
    if node_budget > 0:
        cfg, _ = _refine(grid, models, start, node_budget)
        if cfg is not None:
            owner = _realize(grid, cfg)
    alloc = Allocation(N, M, owner)
    final = _State(grid, models)
    for res, (k, l) in sorted(owner.items()):
        final.assign(res, k, l)
    alloc.infeasible_users = tuple(k for k in range(K) if not final.base_full(k))
    return alloc


def _vector_objective(codes: np.ndarray, grid: RateGrid, models: Sequence[QualityModel],
                      slots: list[Slot]) -> np.ndarray:
    """Objective for a batch of assignments; ``codes[:, r]`` is 0 (free) or 1 + slot index."""
    N, M, K, L1 = grid.shape
    flat = grid.rates.reshape(N * M, K, L1)
    ups = grid.uses_per_second
    total = np.zeros(codes.shape[0])
    for k, m in enumerate(models):
        complete = np.ones(codes.shape[0], dtype=bool)
        for l in range(m.num_layers):
            mask = codes == 1 + slots.index((k, l))
            cnt = mask.sum(axis=1)
            cap = np.where(mask, flat[:, k, l][None, :], np.inf).min(axis=1)
            cap = np.where(cnt > 0, cap, 0.0)
            c = np.where(complete, cap * cnt * ups, 0.0)
            total += m.slopes[l] * np.minimum(c, m.gaps[l])
            complete &= c >= m.gaps[l] - FULL_TOL
    return total


def exhaustive_allocation(grid: RateGrid, models: Sequence[QualityModel],
                          chunk: int = 1 << 16) -> Allocation:
    """Globally optimal allocation by enumeration (test oracle).

    Candidates are visited in lexicographic order of per-resource choices
    (slots by (user, layer), then free); the first candidate within
    ``GAIN_TOL`` of the optimum and using the fewest resources wins, which
    favours the lowest (rb, antenna, user, layer) assignments.
    """
    N, M, K, L1 = grid.shape
    slots = [(k, l) for k in range(K) for l in range(models[k].num_layers)]
    n_res = N * M
    total = (len(slots) + 1) ** n_res
    if total > MAX_EXHAUSTIVE:
        raise ValueError(f"{total} candidate allocations exceed the {MAX_EXHAUSTIVE} limit")
    best_val, best_used, best_code = -math.inf, n_res + 1, None
    choice = np.array([*range(1, len(slots) + 1), 0], dtype=np.int16)
    it = itertools.product(range(len(slots) + 1), repeat=n_res)
    while True:
        batch = choice[np.array(list(itertools.islice(it, chunk)), dtype=np.int16).reshape(-1, n_res)]
        if batch.shape[0] == 0:
            break
        vals = _vector_objective(batch, grid, models, slots)
        top = float(vals.max())
        near = np.flatnonzero(vals >= top - GAIN_TOL)
        used = np.count_nonzero(batch[near], axis=1)
        j = int(near[np.argmin(used)])
        n_used = int(used.min())
        if top > best_val + GAIN_TOL or (top >= best_val - GAIN_TOL and n_used < best_used):
            best_val, best_used, best_code = float(vals[j]), n_used, batch[j]
    owner = {}
    for r, c in enumerate(best_code):
        if c:
            owner[(r // M, r % M)] = slots[c - 1]
    alloc = Allocation(N, M, owner)
    state = _State(grid, models)
    for res, (k, l) in owner.items():
        state.assign(res, k, l)
    alloc.infeasible_users = tuple(k for k in range(K) if not state.base_full(k))
    return alloc
