"""Dynamic mode decomposition with control (DMDc) reduced-order models.

Fits a discrete-time linear model x_{k+1} = A_d x_k + B_d u_k on a reduced
basis from snapshot pairs of a (possibly nonlinear) simulator, then converts
it to continuous time.  The projection Phi has orthonormal rows; the full
state is reconstructed as z = Phi' x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, logm

from .pde import Simulator, rk4_step


class FitError(RuntimeError):
    pass


class ConversionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SnapshotData:
    """Aligned snapshot triples: columns of X, Xnext, U are (z_k, z_{k+1}, u_k)."""

    X: np.ndarray
    Xnext: np.ndarray
    U: np.ndarray
    dt: float

    def __post_init__(self):
        if self.X.shape != self.Xnext.shape:
            raise ValueError("X and Xnext shapes differ")
        if self.U.shape[1] != self.X.shape[1]:
            raise ValueError("U column count differs from X")
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    @property
    def K(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class ReducedModel:
    """Reduced model (A, B) with projection Phi (orthonormal rows).

    ``discrete`` marks whether (A, B) is the fitted discrete-time map at
    sampling step dt or its continuous-time equivalent.
    """

    A: np.ndarray
    B: np.ndarray
    Phi: np.ndarray
    dt: float
    discrete: bool

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.Phi.shape[1]


def collect_snapshots(
    sim: Simulator,
    ic_sampler,
    n_traj: int,
    steps: int,
    dt: float,
    amplitude: float,
    rng: np.random.Generator,
) -> SnapshotData:
    """Integrate short excited trajectories and record (z_k, z_{k+1}, u_k).

    Inputs are zero-mean uniform on [-amplitude, amplitude], redrawn every
    step (piecewise constant over one step).  Each trajectory consumes its
    own child RNG stream so the data is reproducible regardless of how the
    trajectories would be scheduled.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    streams = rng.spawn(n_traj)
    xs, xnexts, us = [], [], []
    for traj_rng in streams:
        z = np.asarray(ic_sampler(traj_rng), dtype=float)
        for _ in range(steps):
            u = traj_rng.uniform(-amplitude, amplitude, size=sim.m)
            z_next = rk4_step(sim, z, u, dt)
            xs.append(z)
            xnexts.append(z_next)
            us.append(u)
            z = z_next
    return SnapshotData(
        X=np.array(xs).T, Xnext=np.array(xnexts).T, U=np.array(us).T, dt=dt
    )


def _truncated_svd(M: np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = min(rank, int(np.sum(s > s[0] * 1e-12))) if s.size else 0
    return U[:, :keep], s[:keep], Vt[:keep]


def fit_dmdc(data: SnapshotData, n: int) -> ReducedModel:
    """Standard DMDc regression at reduced order n (discrete-time result).

    The stacked input matrix [X; U] is truncated at rank n + m for the
    regression; the successor snapshots provide the rank-n output basis.
    """
    p, K = data.X.shape
    m = data.U.shape[0]
    if n > p:
        raise FitError(f"reduced order n={n} exceeds state dimension p={p}")
    if K < n + m:
        raise FitError(f"need at least n+m={n + m} snapshot columns, got K={K}")

    omega = np.vstack([data.X, data.U])
    U_in, s_in, Vt_in = _truncated_svd(omega, n + m)
    U_out, s_out, _ = _truncated_svd(data.Xnext, n)
    if U_out.shape[1] < n:
        raise FitError(
            f"snapshot data supports rank {U_out.shape[1]} < requested n={n}"
        )

    # G = Xnext V S^-1 U' maps stacked [x; u] to x_next; split and project.
    proj = data.Xnext @ (Vt_in.T / s_in)
    U1 = U_in[:p]
    U2 = U_in[p:]
    A_d = U_out.T @ proj @ U1.T @ U_out
    B_d = U_out.T @ proj @ U2.T
    return ReducedModel(A=A_d, B=B_d, Phi=U_out.T.copy(), dt=data.dt, discrete=True)


def to_continuous(model: ReducedModel) -> ReducedModel:
    """Continuous-time equivalent: A = log(A_d)/dt, B solves the step integral.

    B_d = M B with M = int_0^dt exp(A s) ds; M is read off a block matrix
    exponential, which also covers singular A.
    """
    if not model.discrete:
        raise ConversionError("model is already continuous-time")
    eigs = np.linalg.eigvals(model.A)
    on_neg_axis = (eigs.real <= 0) & (np.abs(eigs.imag) <= 1e-12 * np.maximum(1.0, np.abs(eigs)))
    if np.any(on_neg_axis):
        raise ConversionError(
            "discrete matrix has eigenvalues on the closed negative real axis; "
            "no principal logarithm (try a smaller sampling step)"
        )
    A_log = logm(model.A)
    if np.linalg.norm(np.imag(A_log)) > 1e-8 * max(1.0, np.linalg.norm(np.real(A_log))):
        raise ConversionError("matrix logarithm is not real; try a smaller sampling step")
    A = np.real(A_log) / model.dt

    n = model.n
    block = np.zeros((2 * n, 2 * n))
    block[:n, :n] = A * model.dt
    block[:n, n:] = np.eye(n) * model.dt
    M = expm(block)[:n, n:]
    B = np.linalg.solve(M, model.B)
    return ReducedModel(A=A, B=B, Phi=model.Phi, dt=model.dt, discrete=False)


def reduce_state(model: ReducedModel, z: np.ndarray) -> np.ndarray:
    """x = Phi z."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != model.p:
        raise ValueError(f"state length {z.shape[-1]} != full dimension {model.p}")
    return z @ model.Phi.T


def lift_state(model: ReducedModel, x: np.ndarray) -> np.ndarray:
    """z = Phi' x."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.n:
        raise ValueError(f"state length {x.shape[-1]} != reduced dimension {model.n}")
    return x @ model.Phi
