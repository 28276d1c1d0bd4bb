"""Benchmark the compiled kernels against the vectorized numpy fallbacks.

Runs the corrected-learner training loop and the perceptron on the same
synthetic instance through both backends and reports wall times plus the
largest weight discrepancy (expected: roundoff only; the two backends order
their floating-point reductions differently).

Usage: python3 benchmarks/bench_kernels.py [--n 4000] [--q 10] [--d 2]
       [--iters 2000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from unconfused import _kernels
from unconfused.matrixcore import invert
from unconfused.problem import ConfusionMatrix
from unconfused.rng import RngStream
from unconfused.synthgen import SynthConfig, corrupt, generate_concept, generate_dataset


def build_instance(n, q, d, seed):
    cfg = SynthConfig(q_classes=q, dim=d, n_train=n, n_test=10, margin_theta=0.0,
                      seed=seed)
    base = RngStream(seed)
    concept = generate_concept(cfg, base.child("concept"))
    clean = generate_dataset(cfg, concept, base.child("data"))
    mat = np.full((q, q), 0.2 / (q - 1))
    np.fill_diagonal(mat, 0.8)
    confusion = ConfusionMatrix(q, mat)
    noisy = corrupt(clean, confusion, base.child("corrupt"))
    return noisy, confusion


def run_uma(kernel, noisy, confusion, iters, rng_arg):
    q, d, n = noisy.q_classes, noisy.dim, noisy.n
    wt = np.zeros((q, d))
    cinv = invert(confusion.mat)
    priors = np.ones(q)
    tp = np.zeros(iters, dtype=np.int64)
    tq = np.zeros(iters, dtype=np.int64)
    tnorm = np.zeros(iters)
    tesize = np.zeros(iters, dtype=np.int64)
    terr = np.zeros(iters)
    diag = np.zeros(4)
    t0 = time.perf_counter()
    steps = kernel(noisy.features, noisy.noisy_labels.astype(np.int64), wt, cinv,
                   1e-3, 1e-4, iters, _kernels.SEL_ERROR, _kernels.STEP_PERCEPTRON,
                   priors, rng_arg, tp, tq, tnorm, tesize, terr, diag)
    return time.perf_counter() - t0, steps, wt


def run_perceptron(kernel, noisy, epochs, seed):
    q, d, n = noisy.q_classes, noisy.dim, noisy.n
    wt = np.zeros((q, d))
    gen = RngStream(seed).child("epoch-order").generator()
    orders = np.stack([gen.permutation(n) for _ in range(epochs)]).astype(np.int64)
    diag = np.zeros(4)
    t0 = time.perf_counter()
    kernel(noisy.features, noisy.noisy_labels.astype(np.int64), wt, orders, diag)
    return time.perf_counter() - t0, wt


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--q", type=int, default=10)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    if not _kernels.HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return

    noisy, confusion = build_instance(args.n, args.q, args.d, seed=7)
    print(f"instance: n={args.n} q={args.q} d={args.d}; "
          f"{args.iters} update iterations, {args.epochs} perceptron epochs")

    print("compiling kernels (one-time cost)...")
    t0 = time.perf_counter()
    _kernels.warmup()
    print(f"  warmup took {time.perf_counter() - t0:.2f}s")

    gen = RngStream(7).child("bench").generator()
    for name, kernel, rng_arg in (
            ("numba", _kernels.uma_train_numba, np.uint32(1234)),
            ("numpy", _kernels.uma_train_numpy, gen)):
        times = []
        for _ in range(args.repeat):
            dt, steps, wt = run_uma(kernel, noisy, confusion, args.iters, rng_arg)
            times.append(dt)
        per_iter = min(times) / max(1, steps) * 1e6
        print(f"  train/{name}: best {min(times):.3f}s for {steps} updates "
              f"({per_iter:.1f} us/update)")
        if name == "numba":
            wt_ref = wt
    print(f"  train backends max |dW| = {np.abs(wt_ref - wt).max():.3e}")

    for name, kernel in (("numba", _kernels.perceptron_epochs_numba),
                         ("numpy", _kernels.perceptron_epochs_numpy)):
        times = []
        for _ in range(args.repeat):
            dt, wt = run_perceptron(kernel, noisy, args.epochs, seed=9)
            times.append(dt)
        print(f"  perceptron/{name}: best {min(times):.3f}s")
        if name == "numba":
            wt_ref = wt
    print(f"  perceptron backends max |dW| = {np.abs(wt_ref - wt).max():.3e}")


if __name__ == "__main__":
    main()
