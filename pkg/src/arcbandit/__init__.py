"""Correlated generalised-linear bandits for dynamic pricing.

A Kalman-filter-on-GLM belief over a shared demand parameter, the ARC
policy (entropy-regularised semi-index with a fixed-point solve) alongside
eight baseline policies, and a calibrated market simulation harness with a
deterministic CLI.
"""

from .arc import (
    ArcConfig,
    ArcSolution,
    arc_select,
    eta_matrix,
    f_tilde,
    learning_term,
    softmax_nu,
    solve_fixed_point,
)
from .belief import (
    BatchObservation,
    GaussianBelief,
    kalman_step,
    predictive_psi_variance,
    pseudo_observation,
    update_woodbury,
)
from .glm import (
    ArmSet,
    GLMSpec,
    expected_reward,
    expected_reward_curvature,
    expected_reward_slope,
    logistic_spec,
    reward_vector,
)
from .harness import (
    ExperimentConfig,
    RegretTrace,
    aggregate,
    run_grid,
    run_replication,
    write_outputs,
)
from .market import (
    CalibrationData,
    DayOutcome,
    MarketPrior,
    calibrate,
    default_market_prior,
    load_calibration_file,
    pseudo_regret,
    sample_theta,
    simulate_day,
)
from .policies import (
    IndependentArmStats,
    PolicyDecision,
    bayes_ucb,
    decision_from_probs,
    epsilon_greedy,
    explore_then_commit,
    greedy_decision,
    ids,
    knowledge_gradient,
    minimise_info_ratio,
    thompson,
    ucb1,
    ucb_tuned,
)

__version__ = "0.1.0"
