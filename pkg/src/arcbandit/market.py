"""Simulated pricing market: prior calibration, hidden-parameter sampling,
daily arrival/purchase draws and pseudo-regret accounting.

The hierarchical calibration turns aggregate historical counts per price
into a Gaussian posterior for the demand parameter (MLE plus inverse
observed Fisher information, i.e. a Laplace approximation from a flat
prior). Each replication samples a hidden parameter from that posterior and
the policies are then run against it without access to it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .glm import ArmSet, GLMSpec


@dataclass(frozen=True)
class CalibrationData:
    """Aggregate per-price counts: trials r_k and success totals."""

    features: np.ndarray  # (K, l)
    trials: np.ndarray  # (K,)
    successes: np.ndarray  # (K,)

    def __post_init__(self):
        features = np.atleast_2d(np.asarray(self.features, dtype=float))
        trials = np.asarray(self.trials, dtype=float).ravel()
        successes = np.asarray(self.successes, dtype=float).ravel()
        if trials.shape != (features.shape[0],) or successes.shape != trials.shape:
            raise ValueError("features, trials and successes must have equal length")
        if np.any(trials < 1):
            raise ValueError("every price cell needs at least one trial")
        if np.any(successes < 0) or np.any(successes > trials):
            raise ValueError("successes must lie in [0, trials]")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "trials", trials)
        object.__setattr__(self, "successes", successes)

    @classmethod
    def from_price_counts(cls, prices, trials, successes) -> "CalibrationData":
        prices = np.asarray(prices, dtype=float).ravel()
        features = np.column_stack([np.ones_like(prices), prices])
        return cls(features=features, trials=trials, successes=successes)


@dataclass(frozen=True, eq=False)
class MarketPrior:
    """Gaussian posterior for the hidden demand parameter."""

    mean: np.ndarray
    cov: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, MarketPrior):
            return NotImplemented
        return np.array_equal(self.mean, other.mean) and np.array_equal(self.cov, other.cov)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("cov shape does not match mean dimension")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ValueError("cov must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist()}

    @classmethod
    def from_dict(cls, payload: dict) -> "MarketPrior":
        return cls(mean=payload["mean"], cov=payload["cov"])


@dataclass(frozen=True)
class DayOutcome:
    """One day's arrivals, purchases and revenue for the posted price."""

    arrivals: int
    purchases: int
    revenue: float

    def __post_init__(self):
        if not 0 <= self.purchases <= self.arrivals:
            raise ValueError("purchases must lie in [0, arrivals]")


def calibrate(data: CalibrationData, spec: GLMSpec, max_iter: int = 100) -> MarketPrior:
    """MLE and inverse observed Fisher information from aggregate counts.

    Newton-Raphson on the canonical-link log-likelihood; exits when the
    per-trial averaged gradient norm falls below 1e-10 (the raw gradient
    scales with the total count, so an absolute test would chase float
    noise on large datasets). The covariance is the inverse of
    sum_k r_k G''(theta.x_k) x_k x_k^T evaluated at the MLE.
    """
    x = data.features
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise ValueError("design matrix is rank deficient; cannot identify theta")
    scale = float(data.trials.sum())
    theta = np.zeros(x.shape[1])
    for _ in range(max_iter):
        z = x @ theta
        grad = x.T @ (data.successes - data.trials * spec.g1(z))
        fisher = (x.T * (data.trials * spec.g2(z))) @ x
        if float(np.linalg.norm(grad)) / scale < 1e-10:
            return MarketPrior(mean=theta, cov=np.linalg.inv(fisher))
        theta = theta + np.linalg.solve(fisher, grad)
    raise RuntimeError(
        f"calibration did not converge in {max_iter} Newton iterations"
    )


def default_market_prior() -> MarketPrior:
    """Posterior fitted to the ten-cell subscription experiment counts."""
    return MarketPrior(
        mean=np.array([-6.42e-1, -4.03e-3]),
        cov=np.array([[1.90e-3, -8.86e-6], [-8.86e-6, 6.82e-8]]),
    )


def sample_theta(prior: MarketPrior, rng: np.random.Generator) -> np.ndarray:
    """One hidden-parameter draw; degenerate (zero) covariance returns the mean."""
    if not np.any(prior.cov):
        return prior.mean.copy()
    chol = np.linalg.cholesky(prior.cov)
    return prior.mean + chol @ rng.standard_normal(prior.mean.size)


def simulate_day(
    theta: np.ndarray,
    k: int,
    arm_set: ArmSet,
    spec: GLMSpec,
    arrival_mean: float,
    rng: np.random.Generator,
    arrivals: int | None = None,
) -> DayOutcome:
    """Simulate one day at arm k under the hidden parameter.

    Arrivals are Poisson(arrival_mean) and shared across arms (the posted
    price does not change footfall); pass ``arrivals`` to reuse a count
    drawn from a dedicated stream. Purchases are one Binomial(N, p) draw.
    """
    if arrival_mean <= 0:
        raise ValueError("arrival_mean must be positive")
    n = int(rng.poisson(arrival_mean)) if arrivals is None else int(arrivals)
    p = float(spec.g1(spec.phi(float(theta @ arm_set.features[k]))))
    purchases = int(rng.binomial(n, p)) if n > 0 else 0
    return DayOutcome(
        arrivals=n, purchases=purchases, revenue=float(arm_set.prices[k]) * purchases
    )


def pseudo_regret(
    theta: np.ndarray,
    actions,
    arm_set: ArmSet,
    spec: GLMSpec,
    arrival_mean: float,
) -> np.ndarray:
    """Cumulative pseudo-regret of an action sequence under the true theta.

    The per-day gap compares expected revenues n c_k G'(theta.x_k) with the
    shared mean arrival count n = arrival_mean.
    """
    actions = np.asarray(actions, dtype=np.int64)
    values = arrival_mean * arm_set.prices * spec.g1(arm_set.features @ theta)
    gaps = values.max() - values[actions]
    return np.cumsum(gaps)


def load_calibration_file(path: str | Path) -> CalibrationData:
    """Read a 3-column delimited text file: price, trials, successes.

    Columns may be separated by commas or whitespace; lines starting with
    '#' are comments.
    """
    prices, trials, successes = [], [], []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p for p in line.replace(",", " ").split() if p]
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
        prices.append(float(parts[0]))
        trials.append(int(float(parts[1])))
        successes.append(int(float(parts[2])))
    if not prices:
        raise ValueError(f"{path}: no data rows")
    return CalibrationData.from_price_counts(prices, trials, successes)
