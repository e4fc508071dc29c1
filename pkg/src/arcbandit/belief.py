"""Approximate Gaussian posterior over the hidden parameter and its filter.

The posterior N(m, Sigma) is propagated by linearising the batch success
rate around the current mean: a day's (N, sum Q) is turned into a Gaussian
pseudo-observation Psi of the linear predictor with precision weight
S = N * V(Psi), then folded in by a rank-one Kalman step in Woodbury form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .glm import ArmSet, GLMSpec

# Floating point drift guard: covariances are re-symmetrised after every
# update and eigenvalues are floored here if an update pushes one below.
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianBelief:
    """Posterior mean and covariance of the hidden parameter."""

    m: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float).ravel()
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (m.size, m.size):
            raise ValueError("covariance shape does not match mean dimension")
        if np.max(np.abs(sigma - sigma.T), initial=0.0) > 1e-9:
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "sigma", 0.5 * (sigma + sigma.T))

    @property
    def dim(self) -> int:
        return self.m.size

    def is_degenerate(self) -> bool:
        """True when the covariance is exactly zero (no parameter uncertainty)."""
        return not np.any(self.sigma)

    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor; raises LinAlgError if not positive definite."""
        return np.linalg.cholesky(self.sigma)


@dataclass(frozen=True)
class BatchObservation:
    """One day's outcome for one arm: customer count and success count."""

    n: int
    successes: int
    arm: int

    def __post_init__(self):
        if self.n < 0 or self.successes < 0:
            raise ValueError("counts must be nonnegative")
        if self.successes > self.n:
            raise ValueError("successes cannot exceed the customer count")


def pseudo_observation(
    belief: GaussianBelief, obs: BatchObservation, arm_set: ArmSet, spec: GLMSpec
) -> tuple[float, float]:
    """Linearised Gaussian measurement (Psi, S) for one batch.

    Psi = m.x + (P - Phat) * psi'(Phat) with Phat = G'(phi(m.x)) and
    P = successes / n; S = n * V(Psi). The linearisation point Phat lies
    strictly inside the mean range, so P in {0, 1} needs no special case.

    Raises ValueError for an empty batch (n = 0): P is undefined and the
    update would be a no-op anyway, so callers skip those days.
    """
    if obs.n < 1:
        raise ValueError("cannot form a pseudo-observation from a zero-customer batch")
    x = arm_set.features[obs.arm]
    base = float(belief.m @ x)
    p_hat = float(spec.g1(spec.phi(base)))
    p = obs.successes / obs.n
    psi_val = base + (p - p_hat) * float(spec.psi1(p_hat))
    s_weight = obs.n * float(spec.v(psi_val))
    return psi_val, s_weight


def kalman_step(
    m: np.ndarray, sigma: np.ndarray, x: np.ndarray, psi_val: float, s_weight: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rank-one Woodbury update of (m, Sigma) for measurement Psi with weight S.

    R = S / (S * x.Sigma.x + 1);  m' = m + R (Psi - m.x) Sigma x;
    Sigma' = Sigma - R (Sigma x)(Sigma x)^T.
    """
    sx = sigma @ x
    gain = s_weight / (s_weight * float(x @ sx) + 1.0)
    m_new = m + gain * (psi_val - float(m @ x)) * sx
    sigma_new = sigma - gain * np.outer(sx, sx)
    sigma_new = 0.5 * (sigma_new + sigma_new.T)
    return m_new, _floor_eigenvalues(sigma_new)


def _floor_eigenvalues(sigma: np.ndarray) -> np.ndarray:
    if not np.any(sigma):
        return sigma
    try:
        np.linalg.cholesky(sigma)
        return sigma
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sigma)
        w = np.maximum(w, EIG_FLOOR)
        floored = (v * w) @ v.T
        return 0.5 * (floored + floored.T)


def update_woodbury(
    belief: GaussianBelief, obs: BatchObservation, arm_set: ArmSet, spec: GLMSpec
) -> GaussianBelief:
    """One filter step; returns a new belief, never mutates the input.

    A batch whose pseudo-observation carries no information (S = 0, or a
    non-finite Psi from a saturated linearisation point) leaves the belief
    unchanged.
    """
    psi_val, s_weight = pseudo_observation(belief, obs, arm_set, spec)
    if not math.isfinite(psi_val) or s_weight <= 0.0:
        return belief
    x = arm_set.features[obs.arm]
    m_new, sigma_new = kalman_step(belief.m, belief.sigma, x, psi_val, s_weight)
    return GaussianBelief(m=m_new, sigma=sigma_new)


def predictive_psi_variance(
    belief: GaussianBelief, arm_set: ArmSet, spec: GLMSpec, k: int
) -> float:
    """Approximate variance of the next pseudo-observation of arm k.

    Uses the small-covariance estimate S ~= n_k V(m.x) and returns
    (S * x.Sigma.x + 1) / S, combining parameter uncertainty with the
    batch sampling noise.
    """
    x = arm_set.features[k]
    base = float(belief.m @ x)
    s_bar = float(arm_set.arrivals[k]) * float(spec.v(base))
    xsx = float(x @ belief.sigma @ x)
    return (s_bar * xsx + 1.0) / s_bar
