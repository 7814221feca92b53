"""Command-line front end for SNR sweeps."""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Sequence

from .group_decoder import (OUTAGE_TOL, Outage, best_partition_exhaustive, greedy_partition,
                            select_optimal_group)
from .resource_alloc import RateGrid, exhaustive_allocation, objective, solve_allocation
from .sim import (DECODERS, ConfigError, SimulationSpec, load_spec, manifest, parse_sweep,
                  plan_links, rows_to_csv, run_sweep)

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE = 0, 2, 3
ORACLE_TOL = 1e-9
ORACLE_RATIO = 0.95


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sgdvideo-sim",
                description="Mean PSNR versus SNR for layered video over a MIMO-OFDM broadcast.")
    p.add_argument("--config", help="YAML file with simulation settings")
    p.add_argument("--snr", help='SNR sweep in dB as "lo:hi:step" or a comma list')
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--decoder", help="mmse, sgd or hybrid; a comma list runs several on shared draws")
    p.add_argument("--bler", choices=("outage", "bernoulli"))
    p.add_argument("--out", help="CSV path (a .manifest.yaml is written next to it)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--oracle", action="store_true",
                   help="cross-check decoders and allocator against brute force on small cases")
    return p


def resolve(args: argparse.Namespace) -> tuple[SimulationSpec, tuple[str, ...]]:
    spec = load_spec(args.config)
    changes = {}
    if args.snr is not None:
        changes["snr_sweep"] = parse_sweep(args.snr)
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.bler is not None:
        changes["bler_mode"] = "outage_only" if args.bler == "outage" else "bernoulli"
    decoders = (spec.decoder,)
    if args.decoder:
        decoders = tuple(d.strip() for d in args.decoder.split(",") if d.strip())
        bad = [d for d in decoders if d not in DECODERS]
        if bad or not decoders:
            raise ConfigError(f"unknown decoder(s) {bad}; choose from {DECODERS}")
        changes["decoder"] = decoders[0]
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    return dataclasses.replace(spec, **changes), decoders


def oracle_checks(spec: SimulationSpec, max_trials: int = 2) -> list[str]:
    """Brute-force cross-checks on instances drawn from the run; returns mismatches."""
    problems = []
    cfg = spec.decoder_cfg
    for snr in spec.snr_sweep:
        for trial in range(min(max_trials, spec.trials)):
            plan = plan_links(spec, snr, trial)
            tag = f"snr={snr:g} trial={trial}"
            N, M, K, L = plan.grid.shape
            for i in range(N):
                R = plan.rates[i]
                for k, Hk in enumerate(plan.channels.rb(i)):
                    got = greedy_partition(Hk, R, cfg, range(M))
                    _, best = best_partition_exhaustive(Hk, R, cfg, range(M))
                    g_margin = got.margin
                    if isinstance(got, Outage) != (best < -OUTAGE_TOL) or (
                            best >= -OUTAGE_TOL and abs(g_margin - best) > ORACLE_TOL):
                        problems.append(f"{tag} rb={i} user={k}: greedy {g_margin} vs exhaustive {best}")
                    _, fast = select_optimal_group(Hk, range(M), R, cfg.max_group_size, "fast")
                    _, full = select_optimal_group(Hk, range(M), R, cfg.max_group_size, "exhaustive")
                    if abs(fast - full) > ORACLE_TOL:
                        problems.append(f"{tag} rb={i} user={k}: fast group {fast} vs exhaustive {full}")
            small = RateGrid(plan.grid.rates[:1], plan.grid.uses_per_second)
            got = objective(solve_allocation(small, spec.models, spec.node_budget), small, spec.models)
            best = objective(exhaustive_allocation(small, spec.models), small, spec.models)
            if got < ORACLE_RATIO * best - ORACLE_TOL:
                problems.append(f"{tag}: allocation {got} below {ORACLE_RATIO} x exhaustive {best}")
    return problems


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec, decoders = resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.oracle:
        problems = oracle_checks(spec)
        for msg in problems:
            print(f"oracle mismatch: {msg}", file=sys.stderr)
        if problems:
            return EXIT_ORACLE
        print("oracle checks passed", file=sys.stderr)
    text = rows_to_csv(run_sweep(spec, decoders, args.workers))
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        out.with_suffix(".manifest.yaml").write_text(manifest(spec, decoders, args.workers))
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
