"""Wall time of the benchmark trajectory kernel: compiled vs. numpy reference.

    python3 benchmarks/bench_kernels.py [--runs N] [--epochs E] [--width W]
"""

import argparse
import time

import numpy as np

from acoustopt import bench


def time_backend(name, runs, epochs, width):
    bench.use_backend(name)
    starts = bench.sample_guesses(runs, seed=0)
    t0 = time.perf_counter()
    finals = [bench.run_single("rosenbrock", s, "nn", "adam", 1e-3, epochs, width).final for s in starts]
    return time.perf_counter() - t0, np.array(finals)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--width", type=int, default=100)
    a = p.parse_args()
    t_py, f_py = time_backend("python", a.runs, a.epochs, a.width)
    print(f"python    {t_py:8.3f} s  ({1e3 * t_py / a.runs:.2f} ms/run)")
    try:
        t_c, f_c = time_backend("compiled", a.runs, a.epochs, a.width)
    except ImportError:
        print("compiled  not built")
        return
    print(f"compiled  {t_c:8.3f} s  ({1e3 * t_c / a.runs:.2f} ms/run)  speedup {t_py / t_c:.1f}x")
    ok = np.isfinite(f_py) & np.isfinite(f_c)
    rel = np.max(np.abs(f_c[ok] - f_py[ok]) / np.maximum(np.abs(f_py[ok]), 1e-300)) if ok.any() else 0.0
    print(f"max relative difference of final costs: {rel:.2e}")


if __name__ == "__main__":
    main()
