"""Experiment engine: training, closed-loop trials, batches, grid sweeps.

Everything downstream of a config is deterministic: independent RNG streams
are derived from (seed, purpose tag, index), trials are paired across control
policies (same initial conditions and disturbances), and aggregation is an
ordered reduction, so rerunning a config reproduces results bit for bit.

Training is always disturbance-free; a single learned gain is reused across
every disturbance level of a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dmdc as dmdc_mod
from .config import ExperimentConfig
from .controller import ControlLaw, RobustConfig, Weights, estimate_b, robust_control
from .enkf import (
    DivergenceError,
    EnkfConfig,
    GainApprox,
    run_dual_enkf_linear,
    run_dual_enkf_nonlinear,
)
from .pde import (
    BurgersSimulator,
    GridSpec,
    HeatSimulator,
    LinearSimulator,
    Simulator,
    l2_norm,
    rk4_step,
    sample_initial_condition,
)

POLICIES = ("uncontrolled", "optimal", "robust")

# RNG purpose tags (first SeedSequence word after the master seed)
_TAG_ENKF = 0
_TAG_SNAPSHOTS = 1
_TAG_TRIALS = 2


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class DisturbanceSpec:
    """Control-channel disturbance: d(t) = d0 * shape(t) * weights."""

    kind: str  # "sin" | "const" | "none"
    d0: float
    channel: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.d0 < 0:
            raise ValueError("d0 must be nonnegative")
        if self.kind not in ("sin", "const", "none"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")


def make_disturbance(spec: DisturbanceSpec, m: int):
    """Time -> R^m disturbance applied identically on every control channel.

    A channel-weight vector overrides the uniform broadcast.
    """
    weights = np.ones(m) if spec.channel is None else np.asarray(spec.channel, dtype=float)
    if weights.shape != (m,):
        raise ValueError(f"channel weights must have length m={m}")
    if spec.kind == "none" or spec.d0 == 0.0:
        zero = np.zeros(m)
        return lambda t: zero
    if spec.kind == "const":
        const = spec.d0 * weights
        return lambda t: const
    return lambda t: spec.d0 * np.sin(t) * weights


@dataclass
class TrialResult:
    """L2-norm trace of one closed-loop trial."""

    t: np.ndarray
    l2: np.ndarray
    terminal_ratio: float
    failed: bool = False


@dataclass
class BatchResult:
    """Pointwise mean/variance of the L2 traces plus per-trial terminal ratios."""

    t: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    ratios: np.ndarray
    failures: int

    @property
    def mean_terminal_ratio(self) -> float:
        return float(np.mean(self.ratios))


@dataclass
class Artifacts:
    """Everything trained/built once per config and shared across trials."""

    sim: Simulator  # full PDE simulator (plant)
    design_sim: Simulator  # simulator the control law evaluates against
    gain: GainApprox
    reduction: dmdc_mod.ReducedModel | None


def grid_of(cfg: ExperimentConfig) -> GridSpec:
    return GridSpec(p=cfg.p, L=cfg.L)


def build_full_simulator(cfg: ExperimentConfig) -> Simulator:
    grid = grid_of(cfg)
    if cfg.pde == "heat":
        return HeatSimulator(grid, cfg.nu, cfg.m, bc=cfg.bc)
    return BurgersSimulator(grid, cfg.nu, cfg.m, bc=cfg.bc)


def _rng(cfg: ExperimentConfig, *words: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *words]))


def _diffusion_rate(cfg: ExperimentConfig) -> float:
    """Largest |eigenvalue| of the discrete diffusion operator."""
    grid = grid_of(cfg)
    return 4.0 * cfg.nu / grid.dy**2


def _enkf_step_linear(cfg: ExperimentConfig, A: np.ndarray) -> tuple[float, float]:
    """(T, dt) for a linear dual-EnKF run, respecting explicit overrides.

    The covariance recursion relaxes at up to twice the drift's spectral
    radius; the explicit step must resolve that rate.
    """
    a_max = float(np.linalg.norm(A, 2))
    dt_stable = 0.5 / (2.0 * a_max) if a_max > 0 else cfg.dt_sim
    T = cfg.enkf_T if cfg.enkf_T is not None else cfg.T_sim
    dt = cfg.enkf_dt if cfg.enkf_dt is not None else min(cfg.dt_sim, dt_stable)
    return T, min(dt, T)


def _enkf_step_burgers(cfg: ExperimentConfig) -> tuple[float, float]:
    """(T, dt) for the nonlinear run on the full Burgers state.

    On the reversed clock diffusion pumps the rough modes until the coupling
    balances them, at per-point amplitude about 2 p sqrt(nu) / (L sqrt(q)).
    The drift is advanced with RK4, so the step is set by its stability
    bounds: the centered-advection spectrum at that amplitude (imaginary
    axis, |eig| ~ amp * p / L) and the covariance relaxation rate (twice the
    diffusion rate).  The horizon only needs to cover the equilibration of
    the ensemble covariance, not the simulation horizon.
    """
    a_max = _diffusion_rate(cfg)
    amp = 2.0 * cfg.p * np.sqrt(cfg.nu) / (cfg.L * np.sqrt(cfg.q))
    dt_adv = 2.0 / (amp * cfg.p / cfg.L)
    dt_cov = 2.0 / (2.0 * a_max)
    T = cfg.enkf_T if cfg.enkf_T is not None else min(cfg.T_sim, 0.3)
    dt = cfg.enkf_dt if cfg.enkf_dt is not None else min(cfg.dt_sim, dt_adv, dt_cov)
    return T, min(dt, T)


def fit_reduction(cfg: ExperimentConfig, sim: Simulator) -> dmdc_mod.ReducedModel:
    """Collect excited snapshots from the full simulator and fit DMDc."""
    grid = grid_of(cfg)
    data = dmdc_mod.collect_snapshots(
        sim,
        lambda rng: sample_initial_condition(rng, grid),
        n_traj=cfg.dmdc_trajectories,
        steps=cfg.dmdc_steps,
        dt=cfg.dt_sim,
        amplitude=cfg.dmdc_amplitude,
        rng=_rng(cfg, _TAG_SNAPSHOTS),
    )
    model = dmdc_mod.fit_dmdc(data, cfg.dmdc_order)
    return dmdc_mod.to_continuous(model)


def train_gain(
    cfg: ExperimentConfig, reduction: dmdc_mod.ReducedModel | None = None
) -> Artifacts:
    """Run the dual EnKF for the configured path and return shared artifacts.

    Paths: a linear run on the full heat operator (the heat equation is LTI),
    a linear run on the fitted reduced model for ``model=dmdc``, and a
    nonlinear simulator-driven run on the full Burgers state otherwise.
    """
    sim = build_full_simulator(cfg)
    rng = _rng(cfg, _TAG_ENKF)
    R = cfg.r_input * np.eye(cfg.m)

    if cfg.model == "dmdc":
        if reduction is None:
            reduction = fit_reduction(cfg, sim)
        n = reduction.n
        design_sim = LinearSimulator(reduction.A, reduction.B)
        T, dt = _enkf_step_linear(cfg, reduction.A)
        enkf_cfg = EnkfConfig(
            N=cfg.enkf_particles, T=T, dt=dt,
            S_T=np.eye(n) / cfg.g, seed=cfg.seed, innovation=cfg.innovation,
        )
        C = np.sqrt(cfg.q) * np.eye(n)
        gain = run_dual_enkf_linear(reduction.A, reduction.B, C, R, enkf_cfg, rng)
        return Artifacts(sim=sim, design_sim=design_sim, gain=gain, reduction=reduction)

    if cfg.pde == "heat":
        T, dt = _enkf_step_linear(cfg, sim.A)
        enkf_cfg = EnkfConfig(
            N=cfg.enkf_particles, T=T, dt=dt,
            S_T=np.eye(cfg.p) / cfg.g, seed=cfg.seed, innovation=cfg.innovation,
        )
        C = np.sqrt(cfg.q) * np.eye(cfg.p)
        gain = run_dual_enkf_linear(sim.A, sim.control_matrix, C, R, enkf_cfg, rng)
        return Artifacts(sim=sim, design_sim=sim, gain=gain, reduction=None)

    # full nonlinear path; drift handled with RK4 (stiff advective simulator),
    # halving the step on divergence keeps the auto step estimate honest
    T, dt = _enkf_step_burgers(cfg)
    sqrt_q = np.sqrt(cfg.q)
    obs = lambda Y: sqrt_q * Y
    last_exc: Exception | None = None
    for attempt in range(5):
        enkf_cfg = EnkfConfig(
            N=cfg.enkf_particles, T=T, dt=dt / 2**attempt,
            S_T=np.eye(cfg.p) / cfg.g, seed=cfg.seed,
            innovation=cfg.innovation, drift="rk4",
        )
        try:
            gain = run_dual_enkf_nonlinear(sim, obs, R, enkf_cfg, _rng(cfg, _TAG_ENKF, attempt))
            return Artifacts(sim=sim, design_sim=sim, gain=gain, reduction=None)
        except DivergenceError as exc:
            last_exc = exc
    raise HarnessError(f"ensemble training diverged at the smallest step tried: {last_exc}")


def build_artifacts(
    cfg: ExperimentConfig,
    gain: GainApprox | None = None,
    reduction: dmdc_mod.ReducedModel | None = None,
) -> Artifacts:
    """Assemble artifacts, training whatever was not supplied."""
    if gain is None:
        return train_gain(cfg, reduction)
    sim = build_full_simulator(cfg)
    if cfg.model == "dmdc":
        if reduction is None:
            raise HarnessError("dmdc model path needs a reduced model with the gain")
        design_sim = LinearSimulator(reduction.A, reduction.B)
    else:
        design_sim = sim
        reduction = None
    expected_n = reduction.n if reduction is not None else cfg.p
    if gain.n != expected_n:
        raise HarnessError(f"gain dimension {gain.n} does not match design dimension {expected_n}")
    return Artifacts(sim=sim, design_sim=design_sim, gain=gain, reduction=reduction)


def _design_input_matrix(art: Artifacts) -> np.ndarray:
    sim = art.design_sim
    if sim.b_disclosed:
        return sim.control_matrix
    return estimate_b(sim, np.zeros(sim.n), sim.m)


def build_law(cfg: ExperimentConfig, art: Artifacts, lam: float) -> ControlLaw:
    """Control law for a given robust gain lambda.

    With ``lambda_units = amplitude`` (default), lambda is quoted in the same
    per-channel units as the disturbance amplitude d0 and converted to the
    state-space bound the redesign term needs: the disturbance d0*w enters
    the state equation as B (d0 w), so the bound scales by |B w|.
    """
    n = art.gain.n
    if cfg.model == "dmdc" or cfg.pde == "heat":
        weights = Weights(
            R=cfg.r_input * np.eye(cfg.m), Q=cfg.q * np.eye(n), G=cfg.g * np.eye(n)
        )
    else:
        q = cfg.q
        weights = Weights(
            R=cfg.r_input * np.eye(cfg.m),
            G=cfg.g * np.eye(n),
            state_cost=lambda x: q * float(x @ x),
        )
    lam_state = float(lam)
    if cfg.lambda_units == "amplitude" and lam > 0:
        w = np.ones(cfg.m) if cfg.channel is None else np.asarray(cfg.channel, dtype=float)
        lam_state = lam * float(np.linalg.norm(_design_input_matrix(art) @ w))
    b_access = cfg.b_access
    if b_access == "auto":
        b_access = "known" if art.design_sim.b_disclosed else "simulator"
    elif b_access == "known" and not art.design_sim.b_disclosed:
        raise HarnessError("b_access=known but the simulator does not disclose B")
    return ControlLaw(
        gain=art.gain,
        weights=weights,
        robust=RobustConfig(lam=lam_state, r=cfg.r_robust),
        b_access=b_access,
        reduction=art.reduction,
    )


def simulate_closed_loop(
    cfg: ExperimentConfig,
    law: ControlLaw | None,
    z0: np.ndarray,
    disturbance: DisturbanceSpec,
    art: Artifacts,
) -> TrialResult:
    """Integrate the full plant with U(t) = u(t) + d(t), zero-order hold.

    The control is recomputed every simulation step.  A blow-up is recorded
    as a failed trial with an infinite terminal ratio, not an exception.
    """
    grid = grid_of(cfg)
    d_fn = make_disturbance(disturbance, cfg.m)
    n_steps = max(1, int(round(cfg.T_sim / cfg.dt_sim)))
    t = np.arange(n_steps + 1) * cfg.dt_sim
    l2 = np.empty(n_steps + 1)
    z = np.asarray(z0, dtype=float).copy()
    l2[0] = l2_norm(z, grid)
    zero_u = np.zeros(cfg.m)
    failed = False
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            tk = t[k]
            u = zero_u if law is None else robust_control(law, tk, z, art.design_sim)
            z = rk4_step(art.sim, z, u + d_fn(tk), cfg.dt_sim)
            if not np.all(np.isfinite(z)):
                l2[k + 1 :] = np.inf
                failed = True
                break
            l2[k + 1] = l2_norm(z, grid)
    ratio = np.inf if failed or l2[0] == 0 else float(l2[-1] / l2[0])
    return TrialResult(t=t, l2=l2, terminal_ratio=ratio, failed=failed)


def trial_initial_condition(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    """Initial condition for a trial index; shared across policies by design."""
    return sample_initial_condition(_rng(cfg, _TAG_TRIALS, trial), grid_of(cfg))


def run_trial_batch(
    cfg: ExperimentConfig,
    law: ControlLaw | None,
    disturbance: DisturbanceSpec,
    art: Artifacts,
) -> BatchResult:
    """n_trials independent initial conditions under one control policy."""
    traces = []
    ratios = []
    failures = 0
    t = None
    for trial in range(cfg.n_trials):
        z0 = trial_initial_condition(cfg, trial)
        res = simulate_closed_loop(cfg, law, z0, disturbance, art)
        traces.append(res.l2)
        ratios.append(res.terminal_ratio)
        failures += int(res.failed)
        t = res.t
    traces = np.array(traces)
    return BatchResult(
        t=t,
        mean=traces.mean(axis=0),
        variance=traces.var(axis=0),
        ratios=np.array(ratios),
        failures=failures,
    )


def run_policy_comparison(
    cfg: ExperimentConfig, art: Artifacts
) -> dict[str, BatchResult]:
    """The three named policies on paired trials: uncontrolled, optimal, robust."""
    disturbance = DisturbanceSpec(kind=cfg.dist_kind, d0=cfg.d0, channel=cfg.channel)
    laws = {
        "uncontrolled": None,
        "optimal": build_law(cfg, art, 0.0),
        "robust": build_law(cfg, art, cfg.lam),
    }
    return {name: run_trial_batch(cfg, law, disturbance, art) for name, law in laws.items()}


@dataclass(frozen=True)
class GridCell:
    kind: str
    d0: float
    lam: float
    mean_terminal_ratio: float
    ratios: tuple[float, ...]
    failures: int


def run_grid(
    cfg: ExperimentConfig,
    art: Artifacts,
    d0_list=None,
    lambda_list=None,
    kinds=None,
) -> list[GridCell]:
    """Mean terminal ratio per (kind, d0, lambda) cell, one shared gain.

    Cells are independent; training happened once (disturbance-free), so the
    same artifacts serve every cell.
    """
    d0_list = cfg.grid_d0 if d0_list is None else tuple(d0_list)
    lambda_list = cfg.grid_lambda if lambda_list is None else tuple(lambda_list)
    kinds = cfg.grid_kinds if kinds is None else tuple(kinds)
    if not d0_list or not lambda_list or not kinds:
        raise HarnessError("grid lists must be nonempty")
    cells = []
    laws = {lam: build_law(cfg, art, lam) for lam in lambda_list}
    for kind in kinds:
        for d0 in d0_list:
            disturbance = DisturbanceSpec(kind=kind, d0=d0, channel=cfg.channel)
            for lam in lambda_list:
                batch = run_trial_batch(cfg, laws[lam], disturbance, art)
                cells.append(
                    GridCell(
                        kind=kind,
                        d0=d0,
                        lam=lam,
                        mean_terminal_ratio=batch.mean_terminal_ratio,
                        ratios=tuple(batch.ratios),
                        failures=batch.failures,
                    )
                )
    return cells
