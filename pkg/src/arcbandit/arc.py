"""The ARC policy: semi-index fixed point and entropy-regularised sampling.

Each day the policy solves, for the semi-index vector a,

    a = f + (beta / (1 - beta)) * L(a)

where f_k is arm k's immediate expected reward at the posterior mean and
L(a) values the information an observation of arm k would add, weighted by
the softmax choice probabilities nu(a) at temperature lam = rho * ||Sigma||.
The arm is then sampled from nu(a). As the posterior concentrates, lam and
L shrink together and the policy hardens towards the greedy choice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .belief import GaussianBelief
from .glm import ArmSet, GLMSpec, reward_vector
from .policies import PolicyDecision, decision_from_probs, greedy_decision

log = logging.getLogger(__name__)

# Diagnostic tally of solves that hit the iteration cap even after the
# damping retry. Never raises; read it in long experiments to spot trouble.
NONCONVERGED_SOLVES = 0


@dataclass(frozen=True)
class ArcConfig:
    """Solver and policy parameters.

    rho scales the softmax temperature lam = rho * ||Sigma||_F; beta is the
    discount factor entering the lookahead weight beta / (1 - beta).
    """

    rho: float = 1.0
    beta: float = 0.99
    fp_tol: float = 1e-8
    fp_max: int = 500
    damping: float = 0.5

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie in (0, 1)")
        if self.fp_tol <= 0:
            raise ValueError("fp_tol must be positive")
        if self.fp_max < 1:
            raise ValueError("fp_max must be a positive integer")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")

    @classmethod
    def for_horizon(cls, days: int, rho: float = 1.0, **kwargs) -> "ArcConfig":
        """Default discounting beta = 1 - 1/T for a T-day run."""
        return cls(rho=rho, beta=1.0 - 1.0 / days, **kwargs)


@dataclass(frozen=True)
class ArcSolution:
    """Solved semi-index with its choice distribution and exit diagnostics."""

    a: np.ndarray
    nu: np.ndarray
    lam: float
    residual: float
    iterations: int
    converged: bool


def softmax_nu(a: np.ndarray, lam: float) -> np.ndarray:
    """Choice probabilities nu_k = exp(a_k/lam) / sum_j exp(a_j/lam)."""
    if lam <= 0:
        raise ValueError("temperature must be positive")
    return _kernels.softmax(np.asarray(a, dtype=float), lam)


def eta_matrix(a: np.ndarray, lam: float) -> np.ndarray:
    """Softmax Jacobian factor eta_jk = nu_j (1{j=k} - nu_k)."""
    nu = softmax_nu(a, lam)
    return np.diag(nu) - np.outer(nu, nu)


def f_tilde(belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec) -> np.ndarray:
    """Immediate expected reward of each arm at the posterior mean."""
    return reward_vector(arm_set, spec, arm_set.features @ belief.m)


def _precompute(belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec):
    """Per-decision arrays shared by the learning term and the solver."""
    x = arm_set.features
    base = x @ belief.m
    scale = arm_set.arrivals * arm_set.prices
    f = scale * spec.g1(base)
    h1 = scale * spec.g2(base)
    h2 = scale * spec.g3(base)
    sigma_x = belief.sigma @ x.T  # (l, K)
    r = x @ sigma_x  # r[k, j] = x_k . Sigma . x_j
    xsx = np.diag(r).copy()
    s_bar = arm_set.arrivals * spec.v(base)
    w = s_bar / (s_bar * xsx + 1.0)
    return f, h1, h2, r, w


def learning_term(
    a: np.ndarray,
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    lam: float,
) -> np.ndarray:
    """Expected future-payoff gain from one observation of each arm.

    Combines the reward curvature with the softmax-weighted variance of the
    slope responses; the variance bracket is nonnegative by construction.
    """
    if lam <= 0:
        raise ValueError("temperature must be positive")
    _, h1, h2, r, w = _precompute(belief, arm_set, spec)
    return _kernels.learning_term_arrays(np.asarray(a, dtype=float), h1, h2, r, w, lam)


def _converged(res: float, target: np.ndarray, tol: float) -> bool:
    return res <= tol + _kernels.REL_FLOOR * float(np.max(np.abs(target)))


def _residual(a, f, h1, h2, r, w, lam, gamma):
    target = f + gamma * _kernels.learning_term_arrays(a, h1, h2, r, w, lam)
    return float(np.max(np.abs(a - target))), target


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def _newton_polish(a0, f, h1, h2, r, w, lam, gamma, tol, max_iter=40):
    """Backtracking Newton with the analytic Jacobian; used near a root,
    where stability of the fixed point no longer matters."""
    k_arms = f.size
    r2 = r * r
    a = a0.copy()
    best_a, best_res = a0.copy(), np.inf
    for _ in range(max_iter):
        nu = _kernels.softmax(a, lam)
        u_mean = r @ (nu * h1)
        learn = 0.5 * w * (r2 @ (nu * h2) + (r2 @ (nu * h1 * h1) - u_mean * u_mean) / lam)
        target = f + gamma * learn
        fval = a - target
        res = float(np.max(np.abs(fval)))
        if res < best_res:
            best_a, best_res = a.copy(), res
        if _converged(res, target, tol):
            return a, res, True
        d_learn = 0.5 * w[:, None] * (
            h2[None, :] * r2
            + (h1[None, :] ** 2 * r2 - 2.0 * u_mean[:, None] * (h1[None, :] * r)) / lam
        )
        eta = np.diag(nu) - np.outer(nu, nu)
        jac = np.eye(k_arms) - gamma * (d_learn @ eta) / lam
        try:
            step = np.linalg.solve(jac, -fval)
        except np.linalg.LinAlgError:
            break
        scale = 1.0
        a_next = a + step
        for _ in range(12):
            res_next, _ = _residual(a_next, f, h1, h2, r, w, lam, gamma)
            if res_next < res:
                break
            scale *= 0.5
            a_next = a + scale * step
        else:
            break  # no descent along the Newton direction
        a = a_next
    res, target = _residual(best_a, f, h1, h2, r, w, lam, gamma)
    return best_a, res, _converged(res, target, tol)


def _pair_bisection(i, j, f, h1, h2, r, w, lam, gamma):
    """Exact mixed equilibrium supported on arms {i, j}.

    With every other arm's softmax mass underflowed, the fixed point reduces
    to the scalar root of q = sigmoid((a_i(q) - a_j(q)) / lam), which always
    brackets when the best response to each pure arm is the other one, so
    bisection converges regardless of the equilibrium being repelling for
    the Picard map.
    """
    def evaluate(q):
        nu = np.zeros(f.size)
        nu[i] = q
        nu[j] = 1.0 - q
        a = f + gamma * _learning_of_nu(nu, h1, h2, r, w, lam)
        return _sigmoid_scalar((a[i] - a[j]) / lam) - q, a

    g_lo, a_lo = evaluate(0.0)
    g_hi, a_hi = evaluate(1.0)
    if g_lo == 0.0:
        return a_lo
    if g_hi == 0.0:
        return a_hi
    if np.sign(g_lo) == np.sign(g_hi):
        return None
    lo, hi = 0.0, 1.0
    a = a_lo
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        g_mid, a = evaluate(mid)
        if g_mid == 0.0:
            break
        if np.sign(g_mid) == np.sign(g_lo):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 2e-17:
            break
    return a


def _learning_of_nu(nu, h1, h2, r, w, lam):
    r2 = r * r
    u_mean = r @ (nu * h1)
    return 0.5 * w * (r2 @ (nu * h2) + (r2 @ (nu * h1 * h1) - u_mean * u_mean) / lam)


def _rescue_mixed_equilibrium(a_last, f, h1, h2, r, w, lam, gamma, tol):
    """Fallback for Picard limit cycles around a repelling mixed fixed point.

    A short damped orbit identifies the arms that ever carry softmax mass;
    each candidate pair is solved by bisection and polished by Newton. The
    returned flag reports whether the full K-dimensional residual meets the
    tolerance.
    """
    k_arms = f.size
    seen = np.zeros(k_arms)
    a = a_last.copy()
    for _ in range(120):
        nu = _kernels.softmax(a, lam)
        seen = np.maximum(seen, nu)
        a = 0.5 * a + 0.5 * (f + gamma * _learning_of_nu(nu, h1, h2, r, w, lam))
    candidates = [k for k in np.argsort(-seen) if seen[k] > 1e-9][:5]
    best_res, best_a = np.inf, a_last
    for ii in range(len(candidates)):
        for jj in range(ii + 1, len(candidates)):
            a_try = _pair_bisection(
                candidates[ii], candidates[jj], f, h1, h2, r, w, lam, gamma
            )
            if a_try is None:
                continue
            a_pol, res, ok = _newton_polish(a_try, f, h1, h2, r, w, lam, gamma, tol)
            if ok:
                return a_pol, res, True
            if res < best_res:
                best_res, best_a = res, a_pol
    # Wider support than two arms: start Newton from the orbit-weighted mix.
    if len(candidates) >= 2:
        nu0 = np.zeros(k_arms)
        nu0[candidates] = seen[candidates] / seen[candidates].sum()
        a_mix = f + gamma * _learning_of_nu(nu0, h1, h2, r, w, lam)
        a_pol, res, ok = _newton_polish(a_mix, f, h1, h2, r, w, lam, gamma, tol, max_iter=80)
        if ok:
            return a_pol, res, True
        if res < best_res:
            best_res, best_a = res, a_pol
    return _newton_polish(best_a, f, h1, h2, r, w, lam, gamma, tol, max_iter=80)


def solve_fixed_point(
    belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec, cfg: ArcConfig
) -> ArcSolution:
    """Solve a = f + (beta/(1-beta)) L(a).

    Damped Picard iteration from a = f is the fast path, retried once with
    halved damping. When the iteration orbits instead of settling (the mixed
    fixed point can be repelling at low temperature), a pair-support
    bisection plus Newton polish recovers it. A solve that still misses the
    tolerance returns the best iterate, bumps the diagnostic counter and
    logs a warning; it is never silent.
    """
    lam = cfg.rho * float(np.linalg.norm(belief.sigma))
    if lam <= 0:
        raise ValueError("zero covariance gives a degenerate temperature; "
                         "use arc_select, which short-circuits to greedy")
    f, h1, h2, r, w = _precompute(belief, arm_set, spec)
    gamma = cfg.beta / (1.0 - cfg.beta)
    a, nu, res, iters, ok = _kernels.fixed_point(
        f, f, h1, h2, r, w, lam, gamma, cfg.damping, cfg.fp_tol, cfg.fp_max
    )
    if not ok:
        a, nu, res, extra, ok = _kernels.fixed_point(
            a, f, h1, h2, r, w, lam, gamma, 0.5 * cfg.damping, cfg.fp_tol, cfg.fp_max
        )
        iters += extra
    if not ok:
        a, res, ok = _rescue_mixed_equilibrium(
            a, f, h1, h2, r, w, lam, gamma, cfg.fp_tol
        )
        nu = _kernels.softmax(a, lam)
        if not ok:
            global NONCONVERGED_SOLVES
            NONCONVERGED_SOLVES += 1
            log.warning(
                "fixed point not converged after %d iterations + rescue "
                "(residual %.3e)", iters, res,
            )
    return ArcSolution(a=a, nu=nu, lam=lam, residual=res, iterations=iters, converged=ok)


def arc_select(
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    cfg: ArcConfig,
    zeta: float,
) -> PolicyDecision:
    """Sample an arm from the solved choice distribution.

    An exactly zero covariance makes the temperature degenerate; the limit
    of the softmax is the argmax, so the decision falls back to greedy.
    """
    if belief.is_degenerate():
        return greedy_decision(belief, arm_set, spec)
    solution = solve_fixed_point(belief, arm_set, spec, cfg)
    return decision_from_probs(solution.nu, zeta)
