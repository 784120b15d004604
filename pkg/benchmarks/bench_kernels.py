"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 100000]

Each kernel is compiled once before timing. Outputs are checked for equality
so a speedup never hides a wrong answer.
"""
import argparse
import time

import numpy as np

from weakmtl import _accel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--size", type=int, default=100_000)
    args = p.parse_args()
    if _accel.numba is None:
        print("numba not importable; only the numpy path exists")
        return

    rng = np.random.default_rng(0)
    n = args.size
    scores = rng.random(n)
    truth = rng.random(n) < 0.1
    pred = scores >= 0.5
    thresholds = np.linspace(0, 1, 101)
    seq = rng.standard_normal((max(n // 500, 1), 50, 409)).astype(np.float32)
    mask = (rng.random(seq.shape[:2]) < 0.8).astype(np.uint8)
    mask[:, 0] = 1
    innov = rng.standard_normal((n, 16))

    cases = {
        "confusion_counts": lambda u: _accel.confusion_counts(pred, truth, use_numba=u),
        "sweep_counts": lambda u: _accel.sweep_counts(scores, truth, thresholds, use_numba=u),
        "masked_mean": lambda u: _accel.masked_mean(seq, mask, use_numba=u),
        "ar1": lambda u: _accel.ar1(innov, 0.5, use_numba=u),
    }
    print(f"{'kernel':<18}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, fn in cases.items():
        ref, fast = fn(False), fn(True)  # warm-up includes JIT compilation
        if not np.allclose(ref, fast, rtol=1e-5, atol=1e-6):
            raise SystemExit(f"{name}: numba and numpy outputs differ")
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        print(f"{name:<18}{1e3 * t_np:>10.2f}{1e3 * t_nb:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
