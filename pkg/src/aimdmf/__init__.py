"""Multi-class AIMD congestion dynamics: exact per-connection simulation,
interacting particle populations, the mean-field (McKean-Vlasov) limit, and
equilibrium fixed-point analysis, with a reproducible experiment harness.

The model: each connection's state grows linearly at its class rate and
collapses by a multiplicative factor at loss events whose intensity depends
on the state and on the utilization of the network nodes the class uses.
"""

from .calibration import NUMERIC_SEED
from .config import ConfigError, load_model, loads_model
from .engine import (
    ConnectionPath,
    ParticleStreams,
    UnsupportedModelError,
    next_jump_time,
    simulate_connection,
    simulate_discrete_aimd,
    step_frozen_field,
)
from .equilibrium import (
    FixedPointError,
    SeriesError,
    SolverError,
    StationaryDistribution,
    StationaryLaw,
    TopologyError,
    detect_topology,
    solve_auto,
    solve_fixed_point,
    solve_linear_network,
    solve_single_node,
    solve_torus,
    stationary_density,
    unit_stationary_mean,
)
from .experiments import (
    EXPERIMENTS,
    CriterionResult,
    ExperimentResult,
    run_chaos,
    run_dynkin,
    run_equilibrium,
    run_fixedpoint,
    run_mckean,
    run_scaling,
)
from .meanfield import (
    ConvergenceError,
    DynkinResult,
    MeanFieldSolution,
    dynkin_check,
    solve_mckean,
)
from .model import (
    ClassSpec,
    ConstantDrift,
    GeneralLoss,
    HypothesesReport,
    ModelError,
    MultiplicativeLoss,
    NetworkModel,
    ReciprocalDrift,
    ScalarRate,
    class_beta,
    drift_bound,
    eval_drift,
    eval_loss,
    limit_utilization,
    loss_u_part,
    utilization,
    validate_hypotheses,
)
from .numerics import (
    BracketError,
    QuadratureError,
    RngStream,
    bisect,
    exp_sample,
    exp_samples,
    ks_distance,
    quad,
)
from .population import (
    ChaosMetrics,
    MismatchedGridsError,
    SnapshotMissingError,
    TrajectoryRecord,
    chaos_metrics,
    default_step,
    export_empirical,
    simulate_population,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "NUMERIC_SEED",
    # model
    "ScalarRate",
    "ConstantDrift",
    "ReciprocalDrift",
    "MultiplicativeLoss",
    "GeneralLoss",
    "ClassSpec",
    "NetworkModel",
    "ModelError",
    "HypothesesReport",
    "validate_hypotheses",
    "utilization",
    "limit_utilization",
    "eval_drift",
    "eval_loss",
    "class_beta",
    "loss_u_part",
    "drift_bound",
    # config
    "ConfigError",
    "load_model",
    "loads_model",
    # numerics
    "RngStream",
    "bisect",
    "quad",
    "ks_distance",
    "exp_sample",
    "exp_samples",
    "BracketError",
    "QuadratureError",
    # engine
    "ConnectionPath",
    "ParticleStreams",
    "UnsupportedModelError",
    "next_jump_time",
    "simulate_connection",
    "simulate_discrete_aimd",
    "step_frozen_field",
    # population
    "TrajectoryRecord",
    "ChaosMetrics",
    "simulate_population",
    "default_step",
    "export_empirical",
    "chaos_metrics",
    "SnapshotMissingError",
    "MismatchedGridsError",
    # mean field
    "MeanFieldSolution",
    "ConvergenceError",
    "DynkinResult",
    "solve_mckean",
    "dynkin_check",
    # equilibrium
    "StationaryDistribution",
    "StationaryLaw",
    "unit_stationary_mean",
    "stationary_density",
    "solve_fixed_point",
    "solve_single_node",
    "solve_linear_network",
    "solve_torus",
    "solve_auto",
    "detect_topology",
    "SeriesError",
    "SolverError",
    "FixedPointError",
    "TopologyError",
    # experiments
    "CriterionResult",
    "ExperimentResult",
    "EXPERIMENTS",
    "run_fixedpoint",
    "run_equilibrium",
    "run_scaling",
    "run_mckean",
    "run_dynkin",
    "run_chaos",
]
