"""Pilot run behind the frozen action-drift fixtures of the acceptance suite.

Prints, per seed and per s, the final running max of max_j |I_j(t)-I_j(0)|/eps^2
and the trend statistics of the running max and of 10 block maxima.

    python3 scripts/pilot_action_contrast.py [--dt 0.01] [--T 1000]
"""
import argparse

import numpy as np

from fracnls.experiments import action_drift, trend_test
from fracnls.galerkin import NonlinearitySpec, random_state


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=16)
    ap.add_argument("--r", type=float, default=4.0)
    ap.add_argument("--eps", type=float, default=0.05)
    ap.add_argument("--dt", type=float, default=1e-2)
    ap.add_argument("--T", type=float, default=1e3)
    ap.add_argument("--stride", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--s", type=float, nargs="+", default=[0.75, 1.0])
    args = ap.parse_args()

    batch = np.stack([random_state(args.N, args.eps, args.r, np.random.default_rng(k)).xi for k in args.seeds])
    for s in args.s:
        drift = action_drift(batch, s, NonlinearitySpec.cubic(), args.eps, args.dt, args.T, args.stride)
        for seed, rm, raw in zip(args.seeds, drift.running_max, drift.raw):
            trend = trend_test(drift.times, rm)
            blocks = np.array_split(np.arange(1, len(raw)), 10)
            block_t = np.array([drift.times[b].mean() for b in blocks])
            block = trend_test(block_t, np.array([raw[b].max() for b in blocks]))
            print(f"s={s} seed={seed} final={float(rm[-1])!r} running-max t={trend['t_stat']:.2f} "
                  f"block-max t={block['t_stat']:.2f}")


if __name__ == "__main__":
    main()
