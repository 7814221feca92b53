"""Sweep SNR for MMSE and hybrid receivers and print the PSNR gap.

    python scripts/decoder_sweep.py --trials 200 --out results/sweep.csv
"""
from __future__ import annotations

import argparse
import dataclasses
import time
from pathlib import Path

from sgdvideo.sim import SimulationSpec, load_spec, manifest, parse_sweep, rows_to_csv, run_sweep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--snr", help="lo:hi:step or comma list")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    spec = load_spec(args.config) if args.config else SimulationSpec()
    if args.trials:
        spec = dataclasses.replace(spec, trials=args.trials)
    if args.snr:
        spec = dataclasses.replace(spec, snr_sweep=parse_sweep(args.snr))
    decoders = ("mmse", "sgd", "hybrid")

    t0 = time.perf_counter()
    rows = run_sweep(spec, decoders, workers=args.workers)
    elapsed = time.perf_counter() - t0

    by = {(r.snr_db, r.decoder): r for r in rows}
    print(f"{'snr':>6} {'mmse':>8} {'sgd':>8} {'hybrid':>8} {'gain':>7} {'mmse out':>9}")
    for s in spec.snr_sweep:
        m, g, h = (by[(s, d)] for d in decoders)
        print(f"{s:6g} {m.mean_psnr_db:8.2f} {g.mean_psnr_db:8.2f} {h.mean_psnr_db:8.2f} "
              f"{h.mean_psnr_db - m.mean_psnr_db:+7.2f} {m.outage_rate:9.3f}")
    print(f"{spec.trials} trials per point, {elapsed:.1f}s")

    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(rows_to_csv(rows))
        args.out.with_suffix(".manifest.yaml").write_text(manifest(spec, decoders, args.workers))


if __name__ == "__main__":
    main()
