"""Compare the compiled kernels against the pure-numpy fall-backs.

Runs the two hot loops (filter-bank attitude estimation and nearest-neighbour
divergence tracking) through both backends on the same synthetic inputs,
reports best-of-N wall times and the largest output disagreement.

    python3 benchmarks/bench_kernels.py [--duration 60] [--series 6000]
                                        [--repeats 3]
"""

import argparse
import time

import numpy as np

from gaitfusion import kernels
from gaitfusion.attitude import estimate_attitude
from gaitfusion.features import EmbeddingConfig, lyapunov_max
from gaitfusion.synth import GaitProfile, generate_trial


def best_of(fn, repeats):
    times = []
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_attitude(duration, repeats):
    trial, _ = generate_trial(GaitProfile(), duration,
                              np.random.default_rng(0))
    t_py, py = best_of(lambda: estimate_attitude(trial, backend="python"),
                       repeats)
    t_nat, nat = best_of(lambda: estimate_attitude(trial, backend="native"),
                         repeats)
    diff = float(np.max(np.abs(py.angles - nat.angles)))
    return f"filter bank ({trial.n} samples)", t_py, t_nat, diff


def bench_divergence(n, repeats):
    fs = 100.0
    x = np.sin(2.0 * np.pi * np.sqrt(2.0) * np.arange(n) / fs)
    x += 0.02 * np.random.default_rng(1).standard_normal(n)
    cfg = EmbeddingConfig(dim=5, delay=17, evolve_steps=50, min_separation=75)
    t_py, py = best_of(lambda: lyapunov_max(x, fs, cfg, backend="python"),
                       repeats)
    t_nat, nat = best_of(lambda: lyapunov_max(x, fs, cfg, backend="native"),
                         repeats)
    return f"divergence curve ({n} points)", t_py, t_nat, abs(py - nat)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--duration", type=float, default=60.0,
                        help="trial length in seconds for the filter bench")
    parser.add_argument("--series", type=int, default=6000,
                        help="series length for the divergence bench")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    if kernels.NATIVE is None:
        raise SystemExit("compiled extension not built; nothing to compare")

    rows = [bench_attitude(args.duration, args.repeats),
            bench_divergence(args.series, args.repeats)]
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'python':>9}  {'native':>9}  "
          f"{'speedup':>7}  {'max diff':>9}")
    for name, t_py, t_nat, diff in rows:
        print(f"{name:<{width}}  {t_py:>8.3f}s  {t_nat:>8.3f}s  "
              f"{t_py / t_nat:>6.1f}x  {diff:>9.2e}")


if __name__ == "__main__":
    main()
