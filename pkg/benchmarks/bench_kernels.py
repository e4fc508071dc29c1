"""Benchmark the fixed-point kernel: numba against the pure-numpy fallback.

Runs the same damped Picard solves through both implementations on two
instance families (the pricing-scale problem and the low-temperature mixed
regime) and reports per-solve times plus the speedup. The numba path is
what ARCBANDIT_BACKEND=numba (default) uses in simulations.

    python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from arcbandit import _kernels
from arcbandit.arc import _precompute
from arcbandit.belief import GaussianBelief
from arcbandit.glm import ArmSet, logistic_spec


def pricing_instances(n, seed):
    """Wide-prior pricing problems: large rewards, fast one-hot solves."""
    rng = np.random.default_rng(seed)
    spec = logistic_spec()
    arms = ArmSet.for_pricing([19, 39, 59, 79, 99, 159, 199, 249, 299, 399], 270.0)
    out = []
    for _ in range(n):
        m = rng.normal(scale=[0.5, 0.005], size=2)
        sigma = np.diag(rng.uniform([0.01, 1e-6], [1.0, 1e-4]))
        belief = GaussianBelief(m=m, sigma=sigma)
        arrays = _precompute(belief, arms, spec)
        out.append((*arrays, float(np.linalg.norm(sigma))))
    return out


def mixed_regime_instances(n, seed):
    """Moderate scales where the softmax genuinely mixes; longer solves."""
    rng = np.random.default_rng(seed)
    spec = logistic_spec()
    out = []
    while len(out) < n:
        k = int(rng.integers(2, 11))
        prices = np.sort(rng.uniform(0.5, 2.0, k))
        if len(set(prices.tolist())) < k:
            continue
        arms = ArmSet.for_pricing(prices, float(rng.uniform(5, 30)))
        q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        eig = rng.uniform(0.02, 0.6, 2)
        belief = GaussianBelief(m=rng.standard_normal(2), sigma=(q * eig) @ q.T)
        arrays = _precompute(belief, arms, spec)
        out.append((*arrays, float(np.linalg.norm(belief.sigma))))
    return out


def run(fn, instances, repeats):
    gamma = 364.0
    # warm-up (JIT compile / cache load)
    f, h1, h2, r, w, lam = instances[0]
    fn(f, f, h1, h2, r, w, lam, gamma, 0.5, 1e-8, 500)
    start = time.perf_counter()
    for _ in range(repeats):
        for f, h1, h2, r, w, lam in instances:
            fn(f, f, h1, h2, r, w, lam, gamma, 0.5, 1e-8, 500)
    elapsed = time.perf_counter() - start
    return elapsed / (repeats * len(instances))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=50, help="passes over each instance set")
    parser.add_argument("--instances", type=int, default=50, help="instances per family")
    args = parser.parse_args()

    numpy_fn = _kernels._fixed_point_numpy
    backend, numba_fn = _kernels._build("numba")
    if backend != "numba":
        print("numba unavailable; benchmarking the numpy kernel only")
        numba_fn = None

    for name, maker in (("pricing-scale", pricing_instances), ("mixed-regime", mixed_regime_instances)):
        instances = maker(args.instances, seed=0)
        t_np = run(numpy_fn, instances, args.repeats)
        line = f"{name:14s} numpy {t_np * 1e6:9.1f} us/solve"
        if numba_fn is not None:
            t_nb = run(numba_fn, instances, args.repeats)
            line += f"   numba {t_nb * 1e6:9.1f} us/solve   speedup x{t_np / t_nb:.1f}"
        print(line)


if __name__ == "__main__":
    main()
