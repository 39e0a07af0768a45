"""Data-driven robust stabilization of discretized PDEs.

Core pieces: native heat/Burgers finite-difference simulators, a dual
ensemble Kalman filter that learns optimal-control gains from simulator
rollouts, a Lyapunov-redesign robustification term for matched disturbances,
DMDc reduced-order modeling, and Riccati reference solvers for validation.
"""

from .config import ExperimentConfig, burgers_config, default_config, heat_config
from .controller import (
    ControlLaw,
    RobustConfig,
    Weights,
    estimate_b,
    hamiltonian,
    minimize_hamiltonian,
    robust_control,
    robust_term,
)
from .dmdc import (
    ReducedModel,
    SnapshotData,
    collect_snapshots,
    fit_dmdc,
    lift_state,
    reduce_state,
    to_continuous,
)
from .enkf import (
    EnkfConfig,
    Ensemble,
    GainApprox,
    empirical_stats,
    init_ensemble,
    run_dual_enkf_linear,
    run_dual_enkf_nonlinear,
    step_linear,
    step_nonlinear,
)
from .harness import (
    Artifacts,
    BatchResult,
    DisturbanceSpec,
    TrialResult,
    build_artifacts,
    build_law,
    make_disturbance,
    run_grid,
    run_policy_comparison,
    run_trial_batch,
    simulate_closed_loop,
    train_gain,
)
from .pde import (
    BlowUpError,
    BurgersSimulator,
    GridSpec,
    HeatSimulator,
    LinearSimulator,
    Simulator,
    build_control_matrix,
    burgers_rhs,
    heat_rhs,
    integrate,
    l2_norm,
    sample_initial_condition,
)
from .riccati import LtiSystem, lqr_gain, solve_are, solve_dre, validate_system

__version__ = "0.1.0"
