"""Baseline bandit policies over the shared Gaussian belief.

Every policy returns a ``PolicyDecision``: a probability vector over arms
plus the arm sampled from it by inverse CDF. Deterministic policies return a
one-hot vector. Ties in any argmax resolve to the lowest arm index, so runs
are reproducible bit-for-bit given the RNG streams.

The UCB pair is the exception to the shared belief: it keeps frequentist
per-arm statistics (``IndependentArmStats``) and ignores correlation, which
is exactly why it is included as a baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .belief import GaussianBelief
from .glm import ArmSet, GLMSpec, reward_vector

# Quantile arguments are clamped away from {0, 1}; at t = 1 with c = 0 the
# Bayes-UCB schedule gives p = 0 exactly, which becomes a deeply pessimistic
# but finite quantile rather than an initialisation sweep (the shared belief
# already covers every arm).
QUANTILE_CLAMP = 1e-12


@dataclass(frozen=True)
class PolicyDecision:
    """Probability vector over arms and the arm drawn from it."""

    probs: np.ndarray
    arm: int


def decision_from_probs(probs: np.ndarray, zeta: float) -> PolicyDecision:
    """Sample by inverse CDF: the first arm whose cumulative mass reaches zeta."""
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("probs must be a distribution over arms")
    cdf = np.cumsum(probs)
    arm = int(np.searchsorted(cdf, zeta, side="left"))
    return PolicyDecision(probs=probs, arm=min(arm, probs.size - 1))


def one_hot_decision(k: int, n_arms: int) -> PolicyDecision:
    probs = np.zeros(n_arms)
    probs[k] = 1.0
    return PolicyDecision(probs=probs, arm=int(k))


def posterior_mean_rewards(
    belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec
) -> np.ndarray:
    return reward_vector(arm_set, spec, arm_set.features @ belief.m)


def greedy_decision(
    belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec
) -> PolicyDecision:
    """One-hot on the arm with the largest posterior-mean reward."""
    rewards = posterior_mean_rewards(belief, arm_set, spec)
    return one_hot_decision(int(np.argmax(rewards)), arm_set.n_arms)


def epsilon_greedy(
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    eps: float,
    zeta: float,
) -> PolicyDecision:
    """Greedy with probability 1 - eps, uniform otherwise."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    k = arm_set.n_arms
    best = int(np.argmax(posterior_mean_rewards(belief, arm_set, spec)))
    probs = np.full(k, eps / k)
    probs[best] += 1.0 - eps
    return decision_from_probs(probs, zeta)


def explore_then_commit(
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    t: int,
    horizon: int,
    eps: float,
    zeta: float,
) -> PolicyDecision:
    """Uniform for the first floor(eps * horizon) days, then greedy each day."""
    if not 1 <= t <= horizon:
        raise ValueError("t must lie in 1..horizon")
    if t <= math.floor(eps * horizon):
        k = arm_set.n_arms
        return decision_from_probs(np.full(k, 1.0 / k), zeta)
    return greedy_decision(belief, arm_set, spec)


def thompson(
    belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec, rng: np.random.Generator
) -> PolicyDecision:
    """One posterior draw of the parameter, then greedy under the draw."""
    if belief.is_degenerate():
        return greedy_decision(belief, arm_set, spec)
    theta_hat = belief.m + belief.cholesky() @ rng.standard_normal(belief.dim)
    rewards = reward_vector(arm_set, spec, arm_set.features @ theta_hat)
    return one_hot_decision(int(np.argmax(rewards)), arm_set.n_arms)


def bayes_ucb(
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    t: int,
    horizon: int,
    c: float = 0.0,
) -> PolicyDecision:
    """Greedy on the p-quantile of each arm's reward, p = 1 - 1/(t (log T)^c).

    The reward map is increasing in the linear predictor, so the reward
    quantile is the reward evaluated at the predictor quantile.
    """
    if t < 1 or horizon < 2:
        raise ValueError("need t >= 1 and horizon >= 2")
    p = 1.0 - 1.0 / (t * math.log(horizon) ** c)
    p = min(max(p, QUANTILE_CLAMP), 1.0 - QUANTILE_CLAMP)
    z = ndtri(p)
    x = arm_set.features
    upper = x @ belief.m + z * np.sqrt(np.einsum("ki,ij,kj->k", x, belief.sigma, x))
    rewards = reward_vector(arm_set, spec, upper)
    return one_hot_decision(int(np.argmax(rewards)), arm_set.n_arms)


def knowledge_gradient(
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    beta: float,
    rng: np.random.Generator,
    n_mc: int = 64,
) -> PolicyDecision:
    """One-step lookahead: value each arm by the greedy payoff after a
    simulated batch and its posterior update.

    Per sample, one parameter draw, one arrival count and one set of
    customer-level uniforms are shared across all candidate arms (common
    random numbers), so the comparison noise is differenced away.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    f = posterior_mean_rewards(belief, arm_set, spec)
    if belief.is_degenerate():
        return one_hot_decision(int(np.argmax(f)), arm_set.n_arms)

    x = arm_set.features
    scale = arm_set.arrivals * arm_set.prices
    base = x @ belief.m
    chol = belief.cholesky()
    theta = belief.m + rng.standard_normal((n_mc, belief.dim)) @ chol.T

    if np.all(arm_set.arrivals == arm_set.arrivals[0]):
        arrivals = rng.poisson(arm_set.arrivals[0], size=n_mc)
        arrivals = np.broadcast_to(arrivals[:, None], (n_mc, arm_set.n_arms))
    else:
        from scipy.stats import poisson

        u = rng.random(n_mc)
        arrivals = poisson.ppf(u[:, None], arm_set.arrivals[None, :]).astype(np.int64)

    n_max = int(arrivals.max())
    p_true = spec.g1(spec.phi(theta @ x.T))  # (n_mc, K)
    if n_max == 0:
        successes = np.zeros_like(arrivals)
    else:
        # Comonotone coupling: customer i buys at arm k iff u_i < p_k.
        u_cust = rng.random((n_mc, n_max))
        active = np.arange(n_max)[None, :, None] < arrivals[:, None, :]
        successes = ((u_cust[:, :, None] < p_true[:, None, :]) & active).sum(axis=1)

    p_hat = spec.g1(spec.phi(base))
    with np.errstate(invalid="ignore", divide="ignore"):
        p_obs = np.where(arrivals > 0, successes / np.maximum(arrivals, 1), 0.0)
        psi = base[None, :] + (p_obs - p_hat[None, :]) * spec.psi1(p_hat)[None, :]
        s = arrivals * spec.v(psi)
    bad = ~np.isfinite(psi) | ~np.isfinite(s) | (arrivals == 0)
    psi = np.where(bad, base[None, :], psi)
    s = np.where(bad, 0.0, s)

    r = x @ belief.sigma @ x.T
    xsx = np.diag(r)
    gain = s / (s * xsx[None, :] + 1.0)
    shift = gain * (psi - base[None, :])  # (n_mc, K)
    # Updated predictor of arm j after observing arm k: base_j + shift_k r[k, j]
    predictors = base[None, None, :] + shift[:, :, None] * r[None, :, :]
    values = (scale[None, None, :] * spec.g1(predictors)).max(axis=2)
    lookahead = values.mean(axis=0)

    index = f + (beta / (1.0 - beta)) * lookahead
    return one_hot_decision(int(np.argmax(index)), arm_set.n_arms)


def _info_ratio(delta: float, gain: float) -> float:
    if delta <= 0.0:
        return 0.0
    if gain <= 0.0:
        return math.inf
    return delta * delta / gain


def minimise_info_ratio(delta: np.ndarray, gain: np.ndarray) -> np.ndarray:
    """Distribution over arms minimising (sum u delta)^2 / (sum u gain).

    The minimiser is supported on at most two arms, so the search covers
    pure arms plus the interior critical points of every pair: the
    zero-regret mixture and the root of the ratio's stationarity condition,
    which is linear in the mixing weight. Ties keep the earliest candidate,
    so identical arms resolve to the first one.
    """
    delta = np.asarray(delta, dtype=float)
    gain = np.asarray(gain, dtype=float)
    k_arms = delta.size
    best_probs = np.zeros(k_arms)
    best_probs[0] = 1.0
    best_ratio = _info_ratio(delta[0], gain[0])
    for k in range(1, k_arms):
        ratio = _info_ratio(delta[k], gain[k])
        if ratio < best_ratio:
            best_ratio = ratio
            best_probs = np.zeros(k_arms)
            best_probs[k] = 1.0

    for i in range(k_arms):
        for j in range(i + 1, k_arms):
            di, dj = delta[i], delta[j]
            gi, gj = gain[i], gain[j]
            candidates = []
            if di != dj:
                candidates.append(dj / (dj - di))  # zero-regret mixture
                if gi != gj:
                    candidates.append(
                        (dj * (gi - gj) - 2.0 * (di - dj) * gj)
                        / ((di - dj) * (gi - gj))
                    )
            for q in candidates:
                if not 0.0 < q < 1.0:
                    continue
                ratio = _info_ratio(q * di + (1 - q) * dj, q * gi + (1 - q) * gj)
                if ratio < best_ratio:
                    best_ratio = ratio
                    best_probs = np.zeros(k_arms)
                    best_probs[i] = q
                    best_probs[j] = 1.0 - q
    return best_probs


def ids(
    belief: GaussianBelief,
    arm_set: ArmSet,
    spec: GLMSpec,
    rng: np.random.Generator,
    n_mc: int = 512,
) -> PolicyDecision:
    """Information-directed sampling over the Gaussian belief.

    Expected single-step regret per arm is Monte-Carlo over the posterior;
    the information gain is the exact entropy drop of the Gaussian after one
    batch, 0.5 log(1 + S x.Sigma.x). The minimiser of regret^2 / gain over
    the simplex is supported on at most two arms, so the search runs over
    pure arms and the interior critical points of each pair.
    """
    if n_mc < 1:
        raise ValueError("n_mc must be positive")
    if belief.is_degenerate():
        return greedy_decision(belief, arm_set, spec)

    x = arm_set.features
    scale = arm_set.arrivals * arm_set.prices
    chol = belief.cholesky()
    theta = belief.m + rng.standard_normal((n_mc, belief.dim)) @ chol.T
    rewards = scale[None, :] * spec.g1(theta @ x.T)
    delta = np.maximum(rewards.max(axis=1, keepdims=True) - rewards, 0.0).mean(axis=0)

    base = x @ belief.m
    s_bar = arm_set.arrivals * spec.v(base)
    xsx = np.einsum("ki,ij,kj->k", x, belief.sigma, x)
    gain = 0.5 * np.log1p(s_bar * xsx)

    if np.all(delta <= 0.0) or np.all(gain <= 0.0):
        return greedy_decision(belief, arm_set, spec)

    return decision_from_probs(minimise_info_ratio(delta, gain), rng.random())


@dataclass
class IndependentArmStats:
    """Frequentist per-arm statistics for the UCB pair.

    Tracks the running mean and mean square of the per-customer revenue of
    each arm. Owned by a single replication; never shared.
    """

    pulls: np.ndarray
    mean_reward: np.ndarray
    mean_sq: np.ndarray

    @classmethod
    def zeros(cls, n_arms: int) -> "IndependentArmStats":
        return cls(
            pulls=np.zeros(n_arms, dtype=np.int64),
            mean_reward=np.zeros(n_arms),
            mean_sq=np.zeros(n_arms),
        )

    def update(self, arm: int, per_customer_reward: float) -> None:
        self.pulls[arm] += 1
        n = self.pulls[arm]
        z = per_customer_reward
        self.mean_reward[arm] += (z - self.mean_reward[arm]) / n
        self.mean_sq[arm] += (z * z - self.mean_sq[arm]) / n


def _unpulled(stats: IndependentArmStats) -> int | None:
    idle = np.flatnonzero(stats.pulls == 0)
    return int(idle[0]) if idle.size else None


def ucb1(stats: IndependentArmStats, arm_set: ArmSet, t: int) -> PolicyDecision:
    """Classical UCB on per-customer revenue, bonus scaled by the price range.

    The per-customer revenue of arm k lies in [0, c_k], so the Hoeffding
    bonus is c_k sqrt(2 log t / pulls_k). Unpulled arms are swept first in
    index order.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    idle = _unpulled(stats)
    if idle is not None:
        return one_hot_decision(idle, arm_set.n_arms)
    bonus = arm_set.prices * np.sqrt(2.0 * math.log(t) / stats.pulls)
    return one_hot_decision(int(np.argmax(stats.mean_reward + bonus)), arm_set.n_arms)


def ucb_tuned(stats: IndependentArmStats, arm_set: ArmSet, t: int) -> PolicyDecision:
    """UCB-tuned variant: the bonus uses min(1/4, empirical variance term).

    Statistics are normalised to [0, 1] by the price before the variance
    term V_k = var_k + sqrt(2 log t / pulls_k) enters the bonus
    c_k sqrt((log t / pulls_k) min(1/4, V_k)).
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    idle = _unpulled(stats)
    if idle is not None:
        return one_hot_decision(idle, arm_set.n_arms)
    log_t = math.log(t)
    var_norm = (stats.mean_sq - stats.mean_reward**2) / arm_set.prices**2
    v_bar = var_norm + np.sqrt(2.0 * log_t / stats.pulls)
    bonus = arm_set.prices * np.sqrt(log_t / stats.pulls * np.minimum(0.25, v_bar))
    return one_hot_decision(int(np.argmax(stats.mean_reward + bonus)), arm_set.n_arms)
