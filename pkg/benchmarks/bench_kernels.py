"""Compare the numba and pure-numpy implementations of each hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat N] [--train]

Times are the best of ``--repeat`` calls after one warm-up call (which also
triggers JIT compilation).  ``--train`` additionally times a short end-to-end
training run under each backend via ``ARGUE_DISABLE_NUMBA``.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from argue import _kernels as K


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    X, C = rng.random((20_000, 20)), rng.random((8, 20))
    scores = np.round(rng.random(100_000), 3)
    labels = rng.integers(0, 2, 100_000)
    doubled = rng.integers(1, 25, 12)
    z = rng.normal(size=(256, 64))
    g = rng.normal(size=(256, 64))
    return [
        ("nearest_center 20000x20, k=8", K.nearest_center_numpy, K.nearest_center_numba, (X, C)),
        ("ranked_sweep n=100000", K.ranked_sweep_numpy, K.ranked_sweep_numba, (scores, labels)),
        ("signed_rank_counts n=12", K.signed_rank_counts_numpy, K.signed_rank_counts_numba, (doubled,)),
        ("leaky_relu 256x64", K.leaky_relu_numpy, K.leaky_relu_numba, (z, 0.01)),
        ("leaky_relu_grad 256x64", K.leaky_relu_grad_numpy, K.leaky_relu_grad_numba, (z, g, 0.01)),
    ]


TRAIN_SNIPPET = """
import time
import numpy as np
from argue.model import ArgueConfig, build
from argue.trainer import TrainConfig, train_argue
X = np.random.default_rng(0).random((4000, 20))
m = build(ArgueConfig(20, [64, 32, 16], 4), 0)
t0 = time.perf_counter()
train_argue(m, X, np.arange(4000) % 4, TrainConfig(epochs_pretrain=3, epochs_detector=3, lr=1e-3))
print(time.perf_counter() - t0)
"""


def train_time(disable):
    env = dict(os.environ, ARGUE_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--train", action="store_true", help="also time a short training run per backend")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':<32}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, f_np, f_nb, fargs in cases(rng):
        a = best_of(f_np, fargs, args.repeat)
        b = best_of(f_nb, fargs, args.repeat)
        print(f"{name:<32}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{a / b:>9.1f}x")
    if args.train:
        a, b = train_time(True), train_time(False)
        print(f"{'train_argue 4000x20, 3+3 epochs':<32}{a * 1e3:>12.0f}{b * 1e3:>12.0f}{a / b:>9.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
