#!/usr/bin/env python3
"""Detector cost profile across horizons: per-update wall-clock of the
sliding-window detector (expected flat in d) and the adaptive detector
(expected at most linear in d), plus their relative cost on a real trace.

    python scripts/bench_detectors.py --config configs/cartpole_desk.json
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from priofd.config import SystemConfig
from priofd.fd_dynamic import ScheduleHistory, ThresholdTable, dfd_evaluate
from priofd.fd_static import StaticDetector


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(REPO / "configs/cartpole_desk.json"))
    ap.add_argument("--horizons", type=int, nargs="+", default=[5, 10, 20, 40])
    ap.add_argument("--updates", type=int, default=50_000)
    args = ap.parse_args()
    SystemConfig.load(args.config)  # fail fast on a broken config
    rng = np.random.default_rng(0)

    print(f"{'d':>4} {'sfd us/update':>14} {'dfd us/update':>14}")
    for d in args.horizons:
        det = StaticDetector(1, 1e12, d)
        q = rng.integers(0, 256, size=args.updates)
        t0 = time.perf_counter()
        for g in q:
            det.update(int(g))
        sfd = (time.perf_counter() - t0) / args.updates

        rounds = 3000
        bits = rng.random(rounds) < 0.3
        qs = rng.integers(0, 256, size=rounds).astype(np.int64)
        hist = ScheduleHistory(1, rounds + 1)
        for bit in bits:
            hist.append(bool(bit))
        entries = np.full((40, 40, d, 2), np.float32(np.inf))
        table = ThresholdTable(0.01, d, 40, 2, 6, 1.0, 0, 0.0, 0, 0, entries)
        t0 = time.perf_counter()
        for k in range(d - 1, rounds):
            dfd_evaluate(hist, qs[k - d + 1:k + 1], table, k)
        dfd = (time.perf_counter() - t0) / (rounds - d + 1)
        print(f"{d:>4} {1e6 * sfd:>14.2f} {1e6 * dfd:>14.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
