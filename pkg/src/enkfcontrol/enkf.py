"""Dual ensemble Kalman filter for learning optimal-control gains.

An ensemble of N copies of the (disturbance-free) system is integrated
backward from the horizon T to time 0.  Each particle follows the system
drift plus control-channel noise with covariance R^-1, and is coupled to the
ensemble through an empirical-covariance gain acting on the averaged
innovation.  The empirical covariance at time 0 encodes the inverse of the
value function's Hessian: its inverse is the stationary Riccati solution in
the linear case and the value-gradient factor in the nonlinear case.

Time direction.  Particles are indexed by decreasing t.  The drift and the
coupling term are applied with step -dt on the reversed clock, and the noise
is drawn as fresh Gaussian increments with covariance R^-1 dt; this
convention is pinned by the scalar stationary-Riccati benchmark in the tests.

Cost observation.  The nonlinear coupling is driven by an observation map
``obs`` whose squared norm is the running state cost, c(x) = |obs(x)|^2.  For
a quadratic cost |C x|^2 the map is obs(x) = C x and the nonlinear update
reduces to the linear one (up to a 1/N vs 1/(N-1) normalization, kept as each
algorithm defines it).  The per-particle innovation averages the particle and
ensemble observations, (obs(Y_i) + mean obs)/2; ``innovation="literal"``
drops the 1/2 for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .riccati import invert_spd

INNOVATION_FORMS = ("averaged", "literal")
DRIFT_INTEGRATORS = ("euler", "rk4")

COVARIANCE_JITTER = 1e-10


class EnkfConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """Ensemble left the finite range; carries the time of failure."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"ensemble became non-finite at t={t:g}")


class RankError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnkfConfig:
    """Run parameters for a dual-EnKF pass.

    S_T is the covariance of the terminal ensemble draw; pairing the terminal
    cost weight G with S_T = G^-1 is the convention used by the harness.
    """

    N: int
    T: float
    dt: float
    S_T: np.ndarray
    seed: int = 0
    innovation: str = "averaged"
    drift: str = "euler"

    def __post_init__(self):
        if self.N < 2:
            raise EnkfConfigError(f"need at least 2 particles, got N={self.N}")
        if not self.T > 0:
            raise EnkfConfigError(f"horizon must be positive, got T={self.T}")
        if not 0 < self.dt <= self.T:
            raise EnkfConfigError(f"need 0 < dt <= T, got dt={self.dt}, T={self.T}")
        if self.innovation not in INNOVATION_FORMS:
            raise EnkfConfigError(f"unknown innovation form {self.innovation!r}")
        if self.drift not in DRIFT_INTEGRATORS:
            raise EnkfConfigError(f"unknown drift integrator {self.drift!r}")
        S_T = np.atleast_2d(np.asarray(self.S_T, dtype=float))
        if not np.allclose(S_T, S_T.T, atol=1e-10):
            raise EnkfConfigError("S_T must be symmetric")
        try:
            np.linalg.cholesky(S_T)
        except np.linalg.LinAlgError:
            raise EnkfConfigError("S_T must be positive definite") from None
        object.__setattr__(self, "S_T", S_T)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    @property
    def dt_effective(self) -> float:
        """Step actually used so that n_steps * dt lands exactly on T."""
        return self.T / self.n_steps


@dataclass
class Ensemble:
    """N particle states (rows of Y) at a common time t."""

    Y: np.ndarray
    t: float

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    @property
    def n(self) -> int:
        return self.Y.shape[1]


@dataclass(frozen=True)
class GainApprox:
    """Learned gain: empirical covariance at t=0 and its inverse.

    In linear mode P itself approximates the stationary Riccati solution; in
    nonlinear mode the value gradient at x is evaluated as P @ x.
    """

    S0: np.ndarray
    P: np.ndarray
    mode: str  # "linear" | "nonlinear"

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def value_gradient(self, x: np.ndarray) -> np.ndarray:
        return self.P @ x


def init_ensemble(cfg: EnkfConfig, n: int, rng: np.random.Generator) -> Ensemble:
    """Draw the terminal ensemble Y_i ~ N(0, S_T) and stamp it with t = T."""
    if cfg.S_T.shape != (n, n):
        raise EnkfConfigError(f"S_T shape {cfg.S_T.shape} != ({n}, {n})")
    chol = np.linalg.cholesky(cfg.S_T)
    Y = rng.standard_normal((cfg.N, n)) @ chol.T
    return Ensemble(Y=Y, t=cfg.T)


def empirical_stats(e: Ensemble) -> tuple[np.ndarray, np.ndarray]:
    """Ensemble mean and 1/N-normalized covariance."""
    mean = e.Y.mean(axis=0)
    Yc = e.Y - mean
    S = (Yc.T @ Yc) / e.N
    return mean, S


def _control_noise(R: np.ndarray, N: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian increments with covariance R^-1 dt, one row per particle."""
    chol = np.linalg.cholesky(invert_spd(np.atleast_2d(R)))
    return rng.standard_normal((N, chol.shape[0])) @ chol.T * np.sqrt(dt)


def step_linear(
    e: Ensemble,
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    R: np.ndarray,
    dt: float,
    rng: np.random.Generator,
    innovation: str = "averaged",
) -> Ensemble:
    """One backward Euler-Maruyama step of the linear particle system.

    Drift A Y_i plus the coupling gain S C' applied to the averaged
    innovation (C Y_i + C mean)/2 enter with step -dt; the noise B d_eta has
    covariance B R^-1 B' dt.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        mean, S = empirical_stats(e)
        L = S @ C.T
        obs = e.Y @ C.T
        obs_mean = C @ mean
        innov = obs + obs_mean
        if innovation == "averaged":
            innov = innov / 2.0
        drift = e.Y @ A.T + innov @ L.T
        noise = _control_noise(R, e.N, dt, rng) @ B.T
        Y_next = e.Y - dt * drift + noise
    t_next = e.t - dt
    if not np.all(np.isfinite(Y_next)):
        raise DivergenceError(t_next)
    return Ensemble(Y=Y_next, t=t_next)


def step_nonlinear(
    e: Ensemble,
    sim,
    obs,
    R: np.ndarray,
    dt: float,
    rng: np.random.Generator,
    innovation: str = "averaged",
    drift: str = "euler",
) -> Ensemble:
    """One backward step of the nonlinear particle system.

    The drift a(Y_i) = S(Y_i, 0) and the noise b(Y_i) d_eta =
    S(Y_i, d_eta) - S(Y_i, 0) are obtained purely through simulator calls.
    The coupling uses the empirical cross-covariance between particles and
    their observations, normalized by 1/(N-1), applied to the averaged
    innovation.

    The ensemble statistics (observation mean and cross-covariance) are
    frozen once per step; with ``drift="rk4"`` the deterministic part,
    including the coupling, is then advanced with a classical Runge-Kutta
    step before the noise is added.  Stiff advective simulators need this:
    one-stage Euler is unconditionally unstable for centered advection, and
    on the reversed clock there is no viscosity left to mask that.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        H = np.atleast_2d(np.asarray(obs(e.Y), dtype=float))
        if H.shape[0] != e.N:
            H = H.reshape(e.N, -1)
        h_mean = H.mean(axis=0)
        mean = e.Y.mean(axis=0)
        V = (e.Y - mean).T @ (H - h_mean) / (e.N - 1)
        half = 0.5 if innovation == "averaged" else 1.0
        U0 = np.zeros((e.N, sim.m))

        def minus_drift(Y):
            Hs = np.atleast_2d(np.asarray(obs(Y), dtype=float))
            if Hs.shape[0] != e.N:
                Hs = Hs.reshape(e.N, -1)
            coupling = (half * (Hs + h_mean)) @ V.T
            return -(sim.rhs_batch(Y, U0) + coupling)

        if drift == "rk4":
            k1 = minus_drift(e.Y)
            k2 = minus_drift(e.Y + 0.5 * dt * k1)
            k3 = minus_drift(e.Y + 0.5 * dt * k2)
            k4 = minus_drift(e.Y + dt * k3)
            Y_det = e.Y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            Y_det = e.Y + dt * minus_drift(e.Y)

        deta = _control_noise(R, e.N, dt, rng)
        noise = sim.rhs_batch(e.Y, deta) - sim.rhs_batch(e.Y, U0)
        Y_next = Y_det + noise
    t_next = e.t - dt
    if not np.all(np.isfinite(Y_next)):
        raise DivergenceError(t_next)
    return Ensemble(Y=Y_next, t=t_next)


def _gain_from_ensemble(e: Ensemble, mode: str) -> GainApprox:
    _, S0 = empirical_stats(e)
    S0 = 0.5 * (S0 + S0.T)
    eigs = np.linalg.eigvalsh(S0)
    if eigs[0] <= 1e-12 * max(eigs[-1], 0.0):
        raise RankError(
            "time-zero ensemble covariance is rank deficient; increase N or the jitter"
        )
    S0 = S0 + COVARIANCE_JITTER * np.eye(e.n)
    P = invert_spd(S0)
    P = 0.5 * (P + P.T)
    return GainApprox(S0=S0, P=P, mode=mode)


def run_dual_enkf_linear(
    A: np.ndarray,
    B: np.ndarray,
    C: np.ndarray,
    R: np.ndarray,
    cfg: EnkfConfig,
    rng: np.random.Generator | None = None,
) -> GainApprox:
    """Run the linear dual EnKF from t=T down to t=0 and invert S_0."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    e = init_ensemble(cfg, A.shape[0], rng)
    h = cfg.dt_effective
    for _ in range(cfg.n_steps):
        e = step_linear(e, A, B, C, R, h, rng, cfg.innovation)
    return _gain_from_ensemble(e, "linear")


def run_dual_enkf_nonlinear(
    sim,
    obs,
    R: np.ndarray,
    cfg: EnkfConfig,
    rng: np.random.Generator | None = None,
) -> GainApprox:
    """Run the nonlinear dual EnKF against a simulator and invert S_0.

    ``obs`` maps a batch of states (rows) to observations; the running state
    cost it encodes is |obs(x)|^2.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    e = init_ensemble(cfg, sim.n, rng)
    h = cfg.dt_effective
    for _ in range(cfg.n_steps):
        e = step_nonlinear(e, sim, obs, R, h, rng, cfg.innovation, cfg.drift)
    return _gain_from_ensemble(e, "nonlinear")
