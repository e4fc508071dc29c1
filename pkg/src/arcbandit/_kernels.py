"""Hot numeric kernels: the damped fixed-point iteration behind the ARC policy.

Two interchangeable implementations are provided. The default compiles the
loop form with numba (cached on disk, so worker processes pay the compile
cost once per machine). Setting the environment variable

    ARCBANDIT_BACKEND=numpy

selects the vectorised pure-numpy fallback instead; ``benchmarks/`` compares
the two. Both take a starting iterate a0 plus the same precomputed arrays:

    f      (K,)   immediate expected reward per arm
    h1     (K,)   reward slope  h'_j at the posterior-mean predictor
    h2     (K,)   reward curvature h''_j at the posterior-mean predictor
    r      (K,K)  r[k, j] = x_j . Sigma . x_k
    w      (K,)   information weight S_k / (S_k x.Sigma.x + 1)

and iterate towards a = f + gamma * L(a) where L is the softmax-weighted
learning term at temperature lam.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

_ENV_VAR = "ARCBANDIT_BACKEND"

# Convergence uses an absolute tolerance plus a machine-precision relative
# floor: at reward scales ~1e10 the damped iterate cannot land closer to the
# map than a few ulps, so a purely absolute test would spin forever.
REL_FLOOR = 64.0 * np.finfo(float).eps


def softmax(a: np.ndarray, lam: float) -> np.ndarray:
    """Max-subtracted softmax of a / lam."""
    z = np.asarray(a, dtype=float) / lam
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def learning_term_arrays(
    a: np.ndarray,
    h1: np.ndarray,
    h2: np.ndarray,
    r: np.ndarray,
    w: np.ndarray,
    lam: float,
) -> np.ndarray:
    """Learning term L(a) in vectorised form.

    L_k = w_k/2 * [ sum_j nu_j h2_j r_kj^2
                    + (sum_j nu_j (h1_j r_kj)^2 - (sum_j nu_j h1_j r_kj)^2) / lam ]
    """
    nu = softmax(a, lam)
    r2 = r * r
    curv = r2 @ (nu * h2)
    u_sq = r2 @ (nu * h1 * h1)
    u_mean = r @ (nu * h1)
    return 0.5 * w * (curv + (u_sq - u_mean * u_mean) / lam)


def _fixed_point_numpy(a0, f, h1, h2, r, w, lam, gamma, damping, tol, max_iter):
    """Damped Picard iteration, vectorised. Returns (a, nu, residual, iters, ok)."""
    a = a0.copy()
    it = 0
    while True:
        nu = softmax(a, lam)
        target = f + gamma * learning_term_arrays(a, h1, h2, r, w, lam)
        res = float(np.max(np.abs(a - target)))
        if res <= tol + REL_FLOOR * float(np.max(np.abs(target))):
            return a, nu, res, it, True
        if it >= max_iter:
            return a, nu, res, it, False
        a = (1.0 - damping) * a + damping * target
        it += 1


def _fixed_point_loops(a0, f, h1, h2, r, w, lam, gamma, damping, tol, max_iter):
    """Loop form of the same iteration; compiled with numba when enabled."""
    k_arms = f.shape[0]
    rel_floor = REL_FLOOR
    a = a0.copy()
    nu = np.empty(k_arms)
    target = np.empty(k_arms)
    it = 0
    while True:
        a_max = a[0]
        for i in range(1, k_arms):
            if a[i] > a_max:
                a_max = a[i]
        total = 0.0
        for i in range(k_arms):
            nu[i] = np.exp((a[i] - a_max) / lam)
            total += nu[i]
        for i in range(k_arms):
            nu[i] = nu[i] / total
        res = 0.0
        t_max = 0.0
        for i in range(k_arms):
            curv = 0.0
            u_sq = 0.0
            u_mean = 0.0
            for j in range(k_arms):
                rij = r[i, j]
                curv += nu[j] * h2[j] * rij * rij
                u = h1[j] * rij
                u_sq += nu[j] * u * u
                u_mean += nu[j] * u
            ti = f[i] + gamma * 0.5 * w[i] * (curv + (u_sq - u_mean * u_mean) / lam)
            target[i] = ti
            d = abs(a[i] - ti)
            if d > res:
                res = d
            if abs(ti) > t_max:
                t_max = abs(ti)
        if res <= tol + rel_floor * t_max:
            return a, nu, res, it, True
        if it >= max_iter:
            return a, nu, res, it, False
        for i in range(k_arms):
            a[i] = (1.0 - damping) * a[i] + damping * target[i]
        it += 1


def _resolve_backend(requested: str | None) -> str:
    if not requested:
        return "numba"
    value = requested.strip().lower()
    if value in ("numba", "numpy"):
        return value
    warnings.warn(
        f"{_ENV_VAR}={requested!r} not recognised; expected 'numba' or 'numpy'. "
        "Falling back to numba."
    )
    return "numba"


def _build(requested: str):
    if requested == "numba":
        try:
            from numba import njit
        except ImportError:
            warnings.warn("numba not importable; using the numpy kernel fallback")
            return "numpy", _fixed_point_numpy
        return "numba", njit(cache=True)(_fixed_point_loops)
    return "numpy", _fixed_point_numpy


BACKEND, fixed_point = _build(_resolve_backend(os.environ.get(_ENV_VAR)))
