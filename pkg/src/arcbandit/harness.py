"""Experiment driver: policy x replication grids over the simulated market.

Every replication owns four RNG streams derived from (master_seed,
replication, tag): hidden-parameter draw, arrival sequence, purchase draws
and policy randomisation. The theta and arrival streams never see the
policy, so every algorithm inside one replication faces the same market;
regret differences reflect decisions only. Replications are independent, so
the grid parallelises across worker processes and results are sorted before
writing, making output files identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arc import ArcConfig, arc_select
from .belief import BatchObservation, GaussianBelief, update_woodbury
from .glm import ArmSet, GLMSpec, logistic_spec
from .market import MarketPrior, default_market_prior, pseudo_regret, sample_theta, simulate_day
from .policies import (
    IndependentArmStats,
    PolicyDecision,
    bayes_ucb,
    epsilon_greedy,
    explore_then_commit,
    greedy_decision,
    ids,
    knowledge_gradient,
    thompson,
    ucb1,
    ucb_tuned,
)

# The price grid of the original subscription experiment is not public;
# this ten-cell grid is illustrative only: it spans the same order of
# magnitude, denser at low prices the way pricing cells usually are, with
# the revenue optimum interior near the upper end.
DEFAULT_PRICES = (19.0, 39.0, 59.0, 79.0, 99.0, 159.0, 199.0, 249.0, 299.0, 399.0)

DEFAULT_ALGOS = (
    "eps_greedy",
    "etc",
    "ts",
    "bayes_ucb",
    "kg",
    "ids",
    "ucb",
    "ucb_tuned",
    "arc",
)

KNOWN_ALGOS = DEFAULT_ALGOS + ("greedy",)

# Frequentist policies that keep per-arm statistics instead of the belief.
STATS_ALGOS = ("ucb", "ucb_tuned")

_STREAM_THETA, _STREAM_ARRIVALS, _STREAM_PURCHASES, _STREAM_POLICY = range(4)


def _stream(master_seed: int, replication: int, tag: int, extra: int | None = None):
    entropy = [master_seed, replication, tag]
    if extra is not None:
        entropy.append(extra)
    return np.random.default_rng(np.random.SeedSequence(entropy))


def _algo_key(algo: str) -> int:
    return zlib.crc32(algo.encode("utf-8"))


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment grid.

    ``beta`` and ``kg_beta`` default to 1 - 1/days when left as None.
    ``prior_sigma0`` accepts a scalar s (meaning s * identity) or a full
    matrix; a zero matrix is allowed and makes every belief policy greedy.
    """

    algos: tuple[str, ...] = DEFAULT_ALGOS
    days: int = 365
    replications: int = 5000
    master_seed: int = 0
    prices: tuple[float, ...] = DEFAULT_PRICES
    arrival_mean: float = 270.0
    market: MarketPrior = field(default_factory=default_market_prior)
    prior_m0: tuple[float, ...] = (0.0, 0.0)
    prior_sigma0: float | tuple = 1.0
    rho: float = 1.0
    beta: float | None = None
    fp_tol: float = 1e-8
    fp_max: int = 500
    damping: float = 0.5
    eps_greedy_eps: float = 0.05
    etc_eps: float = 0.1
    bayes_ucb_c: float = 0.0
    kg_beta: float | None = None
    kg_n_mc: int = 64
    ids_n_mc: int = 512

    def __post_init__(self):
        if self.days < 1 or self.replications < 1:
            raise ValueError("days and replications must be >= 1")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        unknown = [a for a in self.algos if a not in KNOWN_ALGOS]
        if unknown:
            raise ValueError(
                f"unknown algorithms {unknown}; known: {sorted(KNOWN_ALGOS)}"
            )
        if len(set(self.algos)) != len(self.algos):
            raise ValueError("duplicate algorithm identifiers")
        sigma0 = self.sigma0_matrix()
        if np.any(np.linalg.eigvalsh(sigma0) < -1e-12):
            raise ValueError("prior_sigma0 must be positive semidefinite")

    def m0_vector(self) -> np.ndarray:
        return np.asarray(self.prior_m0, dtype=float).ravel()

    def sigma0_matrix(self) -> np.ndarray:
        dim = self.m0_vector().size
        sigma0 = np.asarray(self.prior_sigma0, dtype=float)
        if sigma0.ndim == 0:
            return float(sigma0) * np.eye(dim)
        sigma0 = np.atleast_2d(sigma0)
        if sigma0.shape != (dim, dim):
            raise ValueError("prior_sigma0 shape does not match prior_m0")
        return sigma0

    def arm_set(self) -> ArmSet:
        return ArmSet.for_pricing(self.prices, self.arrival_mean)

    def beta_resolved(self) -> float:
        if self.beta is not None:
            return self.beta
        return 1.0 - 1.0 / max(self.days, 2)

    def kg_beta_resolved(self) -> float:
        if self.kg_beta is not None:
            return self.kg_beta
        return 1.0 - 1.0 / max(self.days, 2)

    def arc_config(self) -> ArcConfig:
        return ArcConfig(
            rho=self.rho,
            beta=self.beta_resolved(),
            fp_tol=self.fp_tol,
            fp_max=self.fp_max,
            damping=self.damping,
        )

    def to_dict(self) -> dict:
        sigma0 = self.prior_sigma0
        if isinstance(sigma0, np.ndarray):
            sigma0 = sigma0.tolist()
        elif isinstance(sigma0, tuple):
            sigma0 = [list(row) if isinstance(row, (tuple, list)) else row for row in sigma0]
        return {
            "algos": list(self.algos),
            "days": self.days,
            "replications": self.replications,
            "master_seed": self.master_seed,
            "prices": list(self.prices),
            "arrival_mean": self.arrival_mean,
            "market": self.market.to_dict(),
            "prior_m0": list(self.prior_m0),
            "prior_sigma0": sigma0,
            "rho": self.rho,
            "beta": self.beta,
            "fp_tol": self.fp_tol,
            "fp_max": self.fp_max,
            "damping": self.damping,
            "eps_greedy_eps": self.eps_greedy_eps,
            "etc_eps": self.etc_eps,
            "bayes_ucb_c": self.bayes_ucb_c,
            "kg_beta": self.kg_beta,
            "kg_n_mc": self.kg_n_mc,
            "ids_n_mc": self.ids_n_mc,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        payload = dict(payload)
        known = set(cls.__dataclass_fields__)
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "algos" in payload:
            algos = payload["algos"]
            if isinstance(algos, str):
                algos = [a.strip() for a in algos.split(",") if a.strip()]
            payload["algos"] = tuple(algos)
        if "prices" in payload:
            payload["prices"] = tuple(float(p) for p in payload["prices"])
        if "prior_m0" in payload:
            payload["prior_m0"] = tuple(float(v) for v in payload["prior_m0"])
        if "prior_sigma0" in payload and isinstance(payload["prior_sigma0"], list):
            payload["prior_sigma0"] = tuple(
                tuple(row) if isinstance(row, list) else row
                for row in payload["prior_sigma0"]
            )
        market = payload.get("market")
        if isinstance(market, dict):
            payload["market"] = MarketPrior.from_dict(market)
        elif isinstance(market, str):
            from .market import calibrate, load_calibration_file

            payload["market"] = calibrate(load_calibration_file(market), logistic_spec())
        return cls(**payload)


@dataclass(frozen=True)
class RegretTrace:
    """Per-day record of one (algorithm, replication) run."""

    algo: str
    replication: int
    arms: np.ndarray  # (days,) chosen arm index per day
    revenue: np.ndarray  # (days,)
    cum_regret: np.ndarray  # (days,) nondecreasing

    @property
    def days(self) -> int:
        return self.arms.size

    @property
    def switches(self) -> int:
        return int(np.count_nonzero(self.arms[1:] != self.arms[:-1]))

    def rows(self):
        """(day, arm, revenue, cumulative regret) tuples, days numbered from 1."""
        for t in range(self.days):
            yield t + 1, int(self.arms[t]), float(self.revenue[t]), float(self.cum_regret[t])


def _decide(
    algo: str,
    cfg: ExperimentConfig,
    arc_cfg: ArcConfig,
    belief: GaussianBelief,
    stats: IndependentArmStats,
    arm_set: ArmSet,
    spec: GLMSpec,
    t: int,
    rng: np.random.Generator,
) -> PolicyDecision:
    if algo == "greedy":
        return greedy_decision(belief, arm_set, spec)
    if algo == "eps_greedy":
        return epsilon_greedy(belief, arm_set, spec, cfg.eps_greedy_eps, rng.random())
    if algo == "etc":
        return explore_then_commit(
            belief, arm_set, spec, t, cfg.days, cfg.etc_eps, rng.random()
        )
    if algo == "ts":
        return thompson(belief, arm_set, spec, rng)
    if algo == "bayes_ucb":
        return bayes_ucb(belief, arm_set, spec, t, cfg.days, cfg.bayes_ucb_c)
    if algo == "kg":
        return knowledge_gradient(
            belief, arm_set, spec, cfg.kg_beta_resolved(), rng, cfg.kg_n_mc
        )
    if algo == "ids":
        return ids(belief, arm_set, spec, rng, cfg.ids_n_mc)
    if algo == "ucb":
        return ucb1(stats, arm_set, t)
    if algo == "ucb_tuned":
        return ucb_tuned(stats, arm_set, t)
    if algo == "arc":
        return arc_select(belief, arm_set, spec, arc_cfg, rng.random())
    raise ValueError(f"unknown algorithm {algo!r}")


def run_replication(cfg: ExperimentConfig, algo: str, replication: int) -> RegretTrace:
    """Run one algorithm through one simulated year (or whatever horizon)."""
    spec = logistic_spec()
    arm_set = cfg.arm_set()
    theta = sample_theta(cfg.market, _stream(cfg.master_seed, replication, _STREAM_THETA))
    arrivals = _stream(cfg.master_seed, replication, _STREAM_ARRIVALS).poisson(
        cfg.arrival_mean, size=cfg.days
    )
    purchases_rng = _stream(cfg.master_seed, replication, _STREAM_PURCHASES)
    policy_rng = _stream(cfg.master_seed, replication, _STREAM_POLICY, _algo_key(algo))

    belief = GaussianBelief(m=cfg.m0_vector(), sigma=cfg.sigma0_matrix())
    stats = IndependentArmStats.zeros(arm_set.n_arms)
    arc_cfg = cfg.arc_config()

    arms = np.empty(cfg.days, dtype=np.int64)
    revenue = np.empty(cfg.days)
    try:
        for t in range(1, cfg.days + 1):
            decision = _decide(
                algo, cfg, arc_cfg, belief, stats, arm_set, spec, t, policy_rng
            )
            arm = decision.arm
            outcome = simulate_day(
                theta, arm, arm_set, spec, cfg.arrival_mean, purchases_rng,
                arrivals=int(arrivals[t - 1]),
            )
            if outcome.arrivals > 0:
                if algo in STATS_ALGOS:
                    stats.update(arm, outcome.revenue / outcome.arrivals)
                else:
                    obs = BatchObservation(
                        n=outcome.arrivals, successes=outcome.purchases, arm=arm
                    )
                    belief = update_woodbury(belief, obs, arm_set, spec)
            arms[t - 1] = arm
            revenue[t - 1] = outcome.revenue
    except Exception as exc:
        raise RuntimeError(
            f"replication {replication} of {algo!r} failed on day {t}"
        ) from exc

    cum = pseudo_regret(theta, arms, arm_set, spec, cfg.arrival_mean)
    return RegretTrace(
        algo=algo, replication=replication, arms=arms, revenue=revenue, cum_regret=cum
    )


def _run_task(cfg: ExperimentConfig, algo: str, replication: int) -> RegretTrace:
    return run_replication(cfg, algo, replication)


def run_grid(cfg: ExperimentConfig, threads: int = 1) -> list[RegretTrace]:
    """All (algo, replication) runs, sorted canonically by (algo, replication)."""
    tasks = [(algo, rep) for algo in cfg.algos for rep in range(cfg.replications)]
    if threads <= 1:
        traces = [run_replication(cfg, algo, rep) for algo, rep in tasks]
    else:
        chunk = max(1, len(tasks) // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            traces = list(
                pool.map(
                    _run_task,
                    [cfg] * len(tasks),
                    [a for a, _ in tasks],
                    [r for _, r in tasks],
                    chunksize=chunk,
                )
            )
    traces.sort(key=lambda tr: (tr.algo, tr.replication))
    return traces


_QUANTILE_STATS = (("mean", None), ("median", 0.5), ("q75", 0.75), ("q90", 0.90))


def _stat_block(matrix: np.ndarray) -> dict:
    """Mean plus lower-interpolation quantiles along axis 0."""
    block = {}
    for name, q in _QUANTILE_STATS:
        if q is None:
            values = matrix.mean(axis=0)
        else:
            values = np.quantile(matrix, q, axis=0, method="lower")
        block[name] = values.tolist() if values.ndim else float(values)
    return block


def aggregate(traces: list[RegretTrace]) -> dict:
    """Per-algorithm regret and switch-count statistics.

    Quantiles use the lower (no interpolation) convention on sorted values:
    exact elements of the sample, reproducible across platforms.
    """
    if not traces:
        raise ValueError("no traces to aggregate")
    horizons = {tr.days for tr in traces}
    if len(horizons) != 1:
        raise ValueError(f"mixed horizons in traces: {sorted(horizons)}")
    days = horizons.pop()
    ordered = sorted(traces, key=lambda tr: (tr.algo, tr.replication))
    summary = {"days": days, "algos": [], "regret": {}, "switches": {}}
    by_algo: dict[str, list[RegretTrace]] = {}
    for tr in ordered:
        by_algo.setdefault(tr.algo, []).append(tr)
    for algo in sorted(by_algo):
        group = by_algo[algo]
        regret = np.vstack([tr.cum_regret for tr in group])
        switches = np.array([float(tr.switches) for tr in group])
        summary["algos"].append(algo)
        summary["regret"][algo] = _stat_block(regret)
        summary["switches"][algo] = _stat_block(switches)
    return summary


def write_outputs(
    out_dir: str | Path,
    cfg: ExperimentConfig,
    traces: list[RegretTrace],
    write_traces: bool = True,
) -> dict:
    """Write trace.csv, switches.csv, summary.json and meta.json.

    Rows are sorted by (algo, replication, day) and floats use the shortest
    round-trip representation, so files are byte-identical for a fixed
    master seed regardless of worker count.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(traces, key=lambda tr: (tr.algo, tr.replication))
    if write_traces:
        with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algo", "replication", "day", "arm", "revenue", "cum_regret"])
            for tr in ordered:
                for day, arm, rev, cum in tr.rows():
                    writer.writerow([tr.algo, tr.replication, day, arm, repr(rev), repr(cum)])
        with open(out / "switches.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["algo", "replication", "switches"])
            for tr in ordered:
                writer.writerow([tr.algo, tr.replication, tr.switches])
    summary = aggregate(ordered)
    _write_json(out / "summary.json", summary)
    _write_json(out / "meta.json", {"config": cfg.to_dict()})
    return summary


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_traces(out_dir: str | Path) -> list[RegretTrace]:
    """Rebuild traces from trace.csv + switches.csv (for ``summarize``)."""
    out = Path(out_dir)
    groups: dict[tuple[str, int], list[tuple[int, int, float, float]]] = {}
    with open(out / "trace.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["algo"], int(row["replication"]))
            groups.setdefault(key, []).append(
                (int(row["day"]), int(row["arm"]), float(row["revenue"]), float(row["cum_regret"]))
            )
    traces = []
    for (algo, rep), rows in groups.items():
        rows.sort(key=lambda r: r[0])
        arms = np.array([r[1] for r in rows], dtype=np.int64)
        revenue = np.array([r[2] for r in rows])
        cum = np.array([r[3] for r in rows])
        traces.append(
            RegretTrace(algo=algo, replication=rep, arms=arms, revenue=revenue, cum_regret=cum)
        )
    traces.sort(key=lambda tr: (tr.algo, tr.replication))
    return traces
