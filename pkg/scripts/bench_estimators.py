#!/usr/bin/env python3
"""Micro-benchmark of the RTF estimators and the beamformer solve.

Times each batched call on realistic shapes (full bin stack, four head
mics) and reports microseconds per bin, so the cost of per-frame filter
tracking can be budgeted.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from binbeam.beamformer import compute_bmvdr
from binbeam.rtf import estimate_biased, estimate_cw, estimate_sc


def synthetic_state(num_bins: int, num_ch: int, rng: np.random.Generator):
    a = rng.standard_normal((num_bins, num_ch)) + 1j * rng.standard_normal((num_bins, num_ch))
    a /= a[:, :1]
    noise = rng.standard_normal((num_bins, num_ch, num_ch)) + 1j * rng.standard_normal(
        (num_bins, num_ch, num_ch)
    )
    r_n = noise @ np.conj(np.swapaxes(noise, -1, -2)) + np.eye(num_ch)[None]
    r_y = 4.0 * a[:, :, None] * np.conj(a[:, None, :]) + r_n
    cross = 2.0 * a * np.conj(rng.standard_normal(num_bins) + 1j * rng.standard_normal(num_bins))[:, None]
    return a, r_y, r_n, cross


def timed(fn, repeats: int) -> float:
    fn()  # warm cache and JIT-free sanity check
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--bins", type=int, default=129)
    parser.add_argument("--channels", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    a, r_y, r_n, cross = synthetic_state(args.bins, args.channels, rng)

    cases = {
        "biased": lambda: estimate_biased(r_y, "left"),
        "cw": lambda: estimate_cw(r_y, r_n, "left"),
        "sc": lambda: estimate_sc(cross, "left"),
    }
    left = estimate_cw(r_y, r_n, "left")
    right = estimate_cw(r_y, r_n, "right")
    cases["bmvdr solve"] = lambda: compute_bmvdr(r_n, left, right)

    print(f"{args.bins} bins x {args.channels} channels, {args.repeats} repeats")
    print(f"{'call':<14}{'ms/call':>10}{'us/bin':>10}")
    for name, fn in cases.items():
        per_call = timed(fn, args.repeats)
        print(f"{name:<14}{per_call * 1e3:>10.3f}{per_call / args.bins * 1e6:>10.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
