"""Throughput benchmark for the extraction core.

Not a unit test: the >= 1e7 raw bits/s figure is a soft target that this
script measures and reports.  Run with `python benchmarks/bench_extractor.py`.
"""

import time

import numpy as np

from qrbg.extractor import ExtractorParams, HashSeed, extract_stream


def bench(block_n: int, raw_bits: int, h_rate: float = 0.96, repeats: int = 3) -> float:
    rng = np.random.default_rng(1)
    params = ExtractorParams(block_n, 2.0**-64, h_rate)
    raw = rng.integers(0, 2, raw_bits).astype(np.uint8)
    seed = HashSeed(rng.integers(0, 2, params.seed_bits_needed).astype(np.uint8))
    best = 0.0
    for _ in range(repeats):
        t0 = time.perf_counter()
        res = extract_stream(raw, params, seed=seed)
        dt = time.perf_counter() - t0
        best = max(best, res.blocks * params.n / dt)
    return best


if __name__ == "__main__":
    for block_n in (10_000, 100_000, 1_000_000):
        rate = bench(block_n, max(4 * block_n, 2_000_000))
        print(f"block_n={block_n:>9,}  {rate:.3e} raw bits/s")
