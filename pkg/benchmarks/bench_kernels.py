"""Time the hot kernels and stream generation with numba on and off.

    python benchmarks/bench_kernels.py [--repeat 3] [--duration 10]
"""
import argparse
import dataclasses
import time

import numpy as np

from qdteleport import _accel
from qdteleport.events.generate import generate_timetags
from qdteleport.events.kernels import diff_histogram, greedy_pairs, match_heralds, sample_categorical
from qdteleport.scenario import load_scenario, shipped_scenario_path


def _inputs(n, seed=0):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 50 * n, n))
    ch = rng.integers(0, 4, n)
    sig = np.full((4, 4), -1)
    sig[0, 3] = sig[3, 0] = sig[1, 2] = sig[2, 1] = 0
    sig[0, 2] = sig[2, 0] = sig[1, 3] = sig[3, 1] = 1
    heralds = np.sort(rng.integers(0, 50 * n, n // 2))
    feats = rng.random((n, 8))
    coef = rng.random((8, 16))
    return t, ch, sig, heralds, feats, coef, rng.random(n)


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--duration", type=float, default=10.0, help="seconds of simulated stream")
    args = ap.parse_args(argv)

    t, ch, sig, heralds, feats, coef, u = _inputs(args.size)
    cfg = load_scenario(shipped_scenario_path("reference-fiber")).config
    cfg = dataclasses.replace(cfg, duration=args.duration)
    cases = {
        "sample_categorical": lambda: sample_categorical(feats, coef, u),
        "greedy_pairs": lambda: greedy_pairs(t, ch, 400, sig),
        "match_heralds": lambda: match_heralds(t, heralds, 100, 1000),
        "diff_histogram": lambda: diff_histogram(t, heralds, -5000, 5000, 8),
        "generate_timetags": lambda: generate_timetags(cfg, "H", "HV", 0),
    }
    prev = _accel.set_enabled(True)
    try:
        print(f"{'kernel':<20}{'numba s':>10}{'numpy s':>10}{'speedup':>10}")
        for name, fn in cases.items():
            _accel.set_enabled(True)
            fn()  # compile outside the timing
            fast = _best(fn, args.repeat)
            _accel.set_enabled(False)
            slow = _best(fn, args.repeat)
            print(f"{name:<20}{fast:>10.4f}{slow:>10.4f}{slow / fast:>9.1f}x")
    finally:
        _accel.set_enabled(prev)


if __name__ == "__main__":
    main()
