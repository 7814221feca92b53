"""Monte Carlo pipeline: fading, rates, MCS, allocation, decoding, PSNR."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from . import __version__
from .channel import SystemConfig, generate_block_fading, stream_rng
from .group_decoder import DecoderConfig
from .link_adaptation import (UepProfile, hybrid_select, mmse_rates, select_mcs,
                              simulate_mmse_decode, simulate_sgd_decode)
from .rate_alloc import allocate_rates
from .resource_alloc import Allocation, RateGrid, layer_rate_cap, solve_allocation
from .video_model import FIXTURE_MOBILE, FIXTURE_SOCCER, FIXTURES, QualityModel, delivered_rate, psnr_of_rate

DECODERS = ("mmse", "sgd", "hybrid")
BLER_MODES = ("outage_only", "bernoulli")
CSV_COLUMNS = ("snr_db", "decoder", "mean_psnr_db", "stderr_db", "outage_rate")


class ConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class SimulationSpec:
    """Everything a sweep depends on besides the worker count.

    ``symbols_per_second`` is the OFDM symbol rate of one subcarrier; with
    ``system.subcarriers_per_rb`` it converts spectral rate on one
    (RB, antenna) resource into bits/s.
    """

    system: SystemConfig = field(default_factory=SystemConfig)
    decoder: str = "hybrid"
    decoder_cfg: DecoderConfig = field(default_factory=DecoderConfig)
    uep: UepProfile = field(default_factory=UepProfile)
    models: tuple[QualityModel, ...] = (FIXTURE_SOCCER, FIXTURE_MOBILE)
    snr_sweep: tuple[float, ...] = tuple(float(s) for s in range(-6, 16, 3))
    trials: int = 200
    seed: int = 2024
    bler_mode: str = "outage_only"
    symbols_per_second: float = 14000.0
    node_budget: int = 2000

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        object.__setattr__(self, "snr_sweep", tuple(float(s) for s in self.snr_sweep))
        if self.decoder not in DECODERS:
            raise ConfigError(f"decoder must be one of {DECODERS}, got {self.decoder!r}")
        if self.bler_mode not in BLER_MODES:
            raise ConfigError(f"bler_mode must be one of {BLER_MODES}, got {self.bler_mode!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_sweep or not all(math.isfinite(s) for s in self.snr_sweep):
            raise ConfigError("snr_sweep must be a non-empty list of finite values")
        if len(self.models) != self.system.num_users:
            raise ConfigError("need one quality model per user")
        if not self.symbols_per_second > 0:
            raise ConfigError("symbols_per_second must be positive")

    @property
    def uses_per_second(self) -> float:
        return self.system.subcarriers_per_rb * self.symbols_per_second

    @property
    def num_layers(self) -> int:
        return max(m.num_layers for m in self.models)


@dataclass(frozen=True)
class UserOutcome:
    rate_bps: float
    psnr_db: float
    layers_ok: tuple[bool, ...]
    blocks_sent: int
    blocks_lost: int


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one channel draw under one decoder.

    ``decoder_used[i][k]`` is the detector receiver k ran on RB i ("mmse",
    "sgd", or "" when it had nothing to decode there).
    """

    snr_db: float
    trial: int
    decoder: str
    users: tuple[UserOutcome, ...]
    decoder_used: tuple[tuple[str, ...], ...]
    base_infeasible: tuple[int, ...]

    @property
    def mean_psnr(self) -> float:
        return math.fsum(u.psnr_db for u in self.users) / len(self.users)

    @property
    def blocks_sent(self) -> int:
        return sum(u.blocks_sent for u in self.users)

    @property
    def blocks_lost(self) -> int:
        return sum(u.blocks_lost for u in self.users)


@dataclass(frozen=True)
class LinkPlan:
    """Transmitter-side decisions for one channel draw; shared by all decoders."""

    channels: Any
    rates: np.ndarray          # R[i, t] from the broadcast rate allocation
    grid: RateGrid
    alloc: Allocation
    caps: np.ndarray           # caps[k, l] common spectral rate of each layer


def plan_links(spec: SimulationSpec, snr_db: float, trial: int) -> LinkPlan:
    system = dataclasses.replace(spec.system, snr_db=snr_db)
    ch = generate_block_fading(system, spec.seed, trial)
    N, M, K, L = system.num_rbs, system.num_tx_antennas, system.num_users, spec.num_layers
    zeros = np.zeros(M)
    R = np.array([allocate_rates(ch.rb(i), zeros, spec.decoder_cfg) for i in range(N)])
    per_layer = np.empty((N, M, L))
    for l in range(L):
        gamma = spec.uep.margin(l)
        per_layer[:, :, l] = [[select_mcs(R[i, t], gamma).spectral_rate for t in range(M)]
                              for i in range(N)]
    grid = RateGrid(np.repeat(per_layer[:, :, None, :], K, axis=2), spec.uses_per_second)
    alloc = solve_allocation(grid, spec.models, spec.node_budget)
    caps = np.array([[layer_rate_cap(alloc, grid, k, l) for l in range(L)] for k in range(K)])
    return LinkPlan(ch, R, grid, alloc, caps)


def _decode_rb(spec: SimulationSpec, plan: LinkPlan, decoder: str, trial: int, i: int, k: int):
    """Decode outcome per own antenna on RB i at receiver k, and the detector used."""
    M = plan.grid.shape[1]
    active = [t for t in range(M) if (i, t) in plan.alloc.owner]
    own = [j for j, t in enumerate(active) if plan.alloc.owner[(i, t)][0] == k]
    if not own:
        return {}, ""
    H = plan.channels.H[k][i][:, active]
    rates = [plan.caps[plan.alloc.owner[(i, t)]] for t in active]
    draws = bler = None
    if spec.bler_mode == "bernoulli":
        # one uniform per transmit antenna, keyed by receiver so detectors share it
        u = stream_rng(spec.seed, 1, trial, i, k).random(M)
        draws = {j: float(u[t]) for j, t in enumerate(active)}
        bler = {j: spec.uep.bler(plan.alloc.owner[(i, t)][1]) for j, t in enumerate(active)}
    used = decoder
    if decoder == "hybrid":
        used = hybrid_select(mmse_rates(H, 1.0), rates, own, spec.decoder_cfg.hybrid_threshold)
    if used == "mmse":
        ok = simulate_mmse_decode(H, rates, own, 1.0, draws, bler)
    else:
        ok = simulate_sgd_decode(H, rates, own, spec.decoder_cfg, 1.0, draws, bler)
    return {active[j]: v for j, v in ok.items()}, used


def evaluate(spec: SimulationSpec, plan: LinkPlan, decoder: str, snr_db: float,
             trial: int) -> TrialResult:
    """Receiver side of a trial: decode every RB and score the video."""
    N, _, K, L = plan.grid.shape
    ok_by_res: dict[tuple[int, int], bool] = {}
    used = []
    for i in range(N):
        row = []
        for k in range(K):
            ok, det = _decode_rb(spec, plan, decoder, trial, i, k)
            ok_by_res.update({(i, t): v for t, v in ok.items()})
            row.append(det)
        used.append(tuple(row))
    users = []
    for k, model in enumerate(spec.models):
        Lk = model.num_layers
        res = [plan.alloc.resources(k, l) for l in range(Lk)]
        layers_ok = tuple(all(ok_by_res[r] for r in rs) for rs in res)
        counts = [len(rs) for rs in res]
        bps = [plan.caps[k, l] * plan.grid.uses_per_second for l in range(Lk)]
        rate = delivered_rate(model, bps, counts, layers_ok)
        sent = sum(counts)
        lost = sum(1 for rs in res for r in rs if not ok_by_res[r])
        users.append(UserOutcome(rate, psnr_of_rate(model, rate), layers_ok, sent, lost))
    return TrialResult(snr_db, trial, decoder, tuple(users), tuple(used),
                       plan.alloc.infeasible_users)


def run_trial(spec: SimulationSpec, snr_db: float, trial: int) -> TrialResult:
    return evaluate(spec, plan_links(spec, snr_db, trial), spec.decoder, snr_db, trial)


def run_trial_multi(spec: SimulationSpec, snr_db: float, trial: int,
                    decoders: Sequence[str]) -> list[TrialResult]:
    """Same channel and allocation scored under several decoders."""
    plan = plan_links(spec, snr_db, trial)
    return [evaluate(spec, plan, d, snr_db, trial) for d in decoders]


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    decoder: str
    mean_psnr_db: float
    stderr_db: float
    outage_rate: float


def _summary(results: Sequence[TrialResult]) -> tuple[float, float, float]:
    xs = [r.mean_psnr for r in results]
    mean = math.fsum(xs) / len(xs)
    se = statistics.stdev(xs) / math.sqrt(len(xs)) if len(xs) > 1 else 0.0
    sent = sum(r.blocks_sent for r in results)
    lost = sum(r.blocks_lost for r in results)
    return mean, se, (lost / sent if sent else 0.0)


def _work(args) -> list[TrialResult]:
    spec, snr, trial, decoders = args
    return run_trial_multi(spec, snr, trial, decoders)


def run_trials(spec: SimulationSpec, decoders: Sequence[str] | None = None,
               workers: int = 1) -> dict[tuple[float, str], list[TrialResult]]:
    """Every (snr, decoder) cell's trial results, ordered by trial index."""
    decoders = tuple(decoders or (spec.decoder,))
    for d in decoders:
        if d not in DECODERS:
            raise ConfigError(f"unknown decoder {d!r}")
    jobs = [(spec, s, t, decoders) for s in spec.snr_sweep for t in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_work, jobs, chunksize=max(1, len(jobs) // (8 * workers))))
    else:
        batches = [_work(j) for j in jobs]
    cells: dict[tuple[float, str], list[TrialResult]] = {}
    for batch in batches:
        for r in batch:
            cells.setdefault((r.snr_db, r.decoder), []).append(r)
    for rs in cells.values():
        rs.sort(key=lambda r: r.trial)
    return cells


def run_sweep(spec: SimulationSpec, decoders: Sequence[str] | None = None,
              workers: int = 1) -> list[SweepRow]:
    """Mean PSNR with standard error per (snr, decoder).

    Decoders listed together share channel draws and allocations. Results
    depend only on ``spec``; ``workers`` only changes wall time.
    """
    decoders = tuple(decoders or (spec.decoder,))
    cells = run_trials(spec, decoders, workers)
    return [SweepRow(s, d, *_summary(cells[(s, d)]))
            for s in spec.snr_sweep for d in decoders]


def rows_to_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([f"{r.snr_db:.6g}", r.decoder, f"{r.mean_psnr_db:.6f}",
                    f"{r.stderr_db:.6f}", f"{r.outage_rate:.6f}"])
    return buf.getvalue()


# ---- config files --------------------------------------------------------

def parse_sweep(text: str) -> tuple[float, ...]:
    """``"lo:hi:step"`` (inclusive of hi) or a comma list."""
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            n = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return tuple(round(lo + j * step, 10) for j in range(n))
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad SNR sweep {text!r}; expected lo:hi:step") from None


def _model_from(d) -> QualityModel:
    if isinstance(d, str):
        d = {"fixture": d}
    if not isinstance(d, dict):
        raise ConfigError("each model must be a fixture name or a mapping")
    if "fixture" in d:
        if d["fixture"] not in FIXTURES:
            raise ConfigError(f"unknown fixture {d['fixture']!r}; have {sorted(FIXTURES)}")
        return FIXTURES[d["fixture"]]
    name = d.get("name", "custom")
    if "slopes" in d:
        return QualityModel(tuple(d["rates"]), tuple(d["psnr"]), tuple(d["slopes"]), name)
    return QualityModel.from_anchors(d["rates"], d["psnr"], d["floor"], name)


def _model_to(m: QualityModel):
    if FIXTURES.get(m.name) == m:
        return {"fixture": m.name}
    return {"name": m.name, "rates": list(m.rates), "psnr": list(m.psnr), "slopes": list(m.slopes)}


_SECTIONS = {"system": SystemConfig, "decoder_cfg": DecoderConfig, "uep": UepProfile}
_SCALARS = ("decoder", "trials", "seed", "bler_mode", "symbols_per_second", "node_budget")


def spec_from_dict(d: dict | None) -> SimulationSpec:
    d = dict(d or {})
    unknown = set(d) - set(_SECTIONS) - set(_SCALARS) - {"models", "snr_sweep"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw: dict[str, Any] = {}
    try:
        for key, cls in _SECTIONS.items():
            if key in d:
                sub = d[key] or {}
                names = {f.name for f in dataclasses.fields(cls)}
                if not isinstance(sub, dict) or set(sub) - names:
                    raise ConfigError(f"bad {key} section; allowed keys {sorted(names)}")
                kw[key] = cls(**{n: tuple(v) if isinstance(v, list) else v for n, v in sub.items()})
        for key in _SCALARS:
            if key in d:
                kw[key] = d[key]
        if "snr_sweep" in d:
            s = d["snr_sweep"]
            kw["snr_sweep"] = parse_sweep(s) if isinstance(s, str) else tuple(s)
        if "models" in d:
            kw["models"] = tuple(_model_from(m) for m in d["models"])
        elif "system" in kw and kw["system"].num_users != 2:
            n = kw["system"].num_users
            kw["models"] = tuple((FIXTURE_SOCCER, FIXTURE_MOBILE)[j % 2] for j in range(n))
        return SimulationSpec(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def spec_to_dict(spec: SimulationSpec) -> dict:
    def plain(obj):
        return {k: list(v) if isinstance(v, tuple) else v
                for k, v in dataclasses.asdict(obj).items()}
    out = {key: plain(getattr(spec, key)) for key in _SECTIONS}
    out["system"].pop("snr_db")
    out.update({key: getattr(spec, key) for key in _SCALARS})
    out["snr_sweep"] = list(spec.snr_sweep)
    out["models"] = [_model_to(m) for m in spec.models]
    return out


def load_spec(path: str | None) -> SimulationSpec:
    if path is None:
        return SimulationSpec()
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping")
    return spec_from_dict(data)


def manifest(spec: SimulationSpec, decoders: Sequence[str], workers: int) -> str:
    """YAML run record; it loads back through ``load_spec`` (extra keys aside)."""
    doc = {"version": __version__, "decoders": list(decoders), "workers": workers,
           "spec": spec_to_dict(spec)}
    return yaml.safe_dump(doc, sort_keys=False)
