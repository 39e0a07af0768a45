"""Robust control assembly: u = (Hamiltonian minimizer) + (robust term).

The stabilizing part minimizes the control Hamiltonian

    H(x, u) = g(x)' S(x, u) + (c(x) + u' R u) / 2,

where g(x) is the learned value gradient (P x).  For fixed x the Hamiltonian
is an exact quadratic in u, so its minimizer can be written either in closed
form -R^-1 b(x)' g(x) when the input matrix is known, or recovered exactly
from m+1 Hamiltonian evaluations when only the simulator is available.  The
finite-difference identity evaluates to +R^-1 b' g, i.e. the negative of the
minimizer; the sign is corrected here so both branches coincide.

The robust term opposes norm-bounded matched disturbances along the value
gradient:

    u_d = -lambda * B^+ g / max(|g|, r),

with B^+ the least-squares pseudo-inverse.  The regularization floor r trades
asymptotic for practical stability (the state settles into the ball |g| < r
instead of reaching the origin).  With unknown B the same least-squares
problem is solved against an input matrix probed from the simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dmdc import ReducedModel, reduce_state
from .enkf import GainApprox
from .pde import Simulator

B_ACCESS_MODES = ("known", "simulator")


class RankDeficientError(RuntimeError):
    pass


@dataclass(frozen=True)
class Weights:
    """Quadratic cost weights; the running state cost is x'Qx or state_cost(x)."""

    R: np.ndarray
    Q: np.ndarray | None = None
    G: np.ndarray | None = None
    state_cost: Callable[[np.ndarray], float] | None = None

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if not np.allclose(R, R.T, atol=1e-10):
            raise ValueError("R must be symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise ValueError("R must be positive definite") from None
        object.__setattr__(self, "R", R)
        if self.Q is not None:
            Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
            if not np.allclose(Q, Q.T, atol=1e-10):
                raise ValueError("Q must be symmetric")
            object.__setattr__(self, "Q", Q)
        if self.G is not None:
            G = np.atleast_2d(np.asarray(self.G, dtype=float))
            object.__setattr__(self, "G", G)
        if self.Q is None and self.state_cost is None:
            raise ValueError("either Q or state_cost is required")

    def running_state_cost(self, x: np.ndarray) -> float:
        if self.state_cost is not None:
            return float(self.state_cost(x))
        return float(x @ self.Q @ x)


@dataclass(frozen=True)
class RobustConfig:
    """Disturbance bound lambda (scalar or callable of (t, x)) and floor r > 0."""

    lam: float | Callable[[float, np.ndarray], float]
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"regularization r must be positive, got {self.r}")
        if not callable(self.lam) and self.lam < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lam}")

    def lam_at(self, t: float, x: np.ndarray) -> float:
        if callable(self.lam):
            return float(self.lam(t, x))
        return float(self.lam)


@dataclass(frozen=True)
class ControlLaw:
    """Immutable bundle of everything needed to evaluate the control."""

    gain: GainApprox
    weights: Weights
    robust: RobustConfig
    b_access: str = "known"
    reduction: ReducedModel | None = None

    def __post_init__(self):
        if self.b_access not in B_ACCESS_MODES:
            raise ValueError(f"unknown b_access {self.b_access!r}")
        if self.reduction is not None and self.reduction.n != self.gain.n:
            raise ValueError(
                f"gain dimension {self.gain.n} != reduced dimension {self.reduction.n}"
            )


def hamiltonian(law: ControlLaw, x: np.ndarray, u: np.ndarray, sim: Simulator) -> float:
    """Evaluate H(x, u) with exactly one simulator call."""
    g = law.gain.value_gradient(x)
    running = law.weights.running_state_cost(x) + float(u @ law.weights.R @ u)
    return float(g @ sim.rhs(x, u)) + 0.5 * running


def estimate_b(sim: Simulator, x: np.ndarray, m: int) -> np.ndarray:
    """Probe the input matrix b(x) columnwise: column j = S(x, e_j) - S(x, 0)."""
    x = np.asarray(x, dtype=float)
    if m == 0:
        return np.zeros((x.shape[0], 0))
    base = sim.rhs(x, np.zeros(m))
    cols = [sim.rhs(x, np.eye(m)[j]) - base for j in range(m)]
    return np.column_stack(cols)


def minimize_hamiltonian(law: ControlLaw, x: np.ndarray, sim: Simulator) -> np.ndarray:
    """Global minimizer of H(x, .).

    Known-B branch: -R^-1 b' g.  Simulator-only branch: per-coordinate
    Hamiltonian differences, negated (the raw identity yields +R^-1 b' g);
    exact for the quadratic Hamiltonian, m+1 simulator calls.
    """
    x = np.asarray(x, dtype=float)
    R = law.weights.R
    if law.b_access == "known":
        g = law.gain.value_gradient(x)
        return -np.linalg.solve(R, sim.control_matrix.T @ g)
    Rinv = np.linalg.inv(R)
    H0 = hamiltonian(law, x, np.zeros(sim.m), sim)
    u = np.empty(sim.m)
    for i in range(sim.m):
        u[i] = -(hamiltonian(law, x, Rinv[:, i], sim) - H0 - 0.5 * Rinv[i, i])
    return u


def _check_column_rank(B: np.ndarray) -> None:
    m = B.shape[1]
    if m == 0:
        return
    s = np.linalg.svd(B, compute_uv=False)
    tol = max(B.shape) * np.finfo(float).eps * s[0] if s[0] > 0 else 0.0
    rank = int(np.sum(s > tol)) if s[0] > 0 else 0
    if rank < m:
        _, _, Vt = np.linalg.svd(B)
        null_weight = np.abs(Vt[rank:]).sum(axis=0)
        bad = np.nonzero(null_weight > 1e-8)[0].tolist()
        raise RankDeficientError(
            f"input matrix has column rank {rank} < m={m}; "
            f"null space involves columns {bad}"
        )


def robust_term(
    law: ControlLaw, x: np.ndarray, sim: Simulator, t: float = 0.0
) -> np.ndarray:
    """Lyapunov-redesign term u_d = -lambda * B^+ g / max(|g|, r)."""
    x = np.asarray(x, dtype=float)
    lam = law.robust.lam_at(t, x)
    if lam == 0.0:
        return np.zeros(sim.m)
    g = law.gain.value_gradient(x)
    r1 = max(float(np.linalg.norm(g)), law.robust.r)
    if law.b_access == "known":
        B = sim.control_matrix
        _check_column_rank(B)
        v = np.linalg.solve(B.T @ B, B.T @ (g / r1))
    else:
        x_probe = x if law.gain.mode == "nonlinear" else np.zeros_like(x)
        B = estimate_b(sim, x_probe, sim.m)
        _check_column_rank(B)
        v, *_ = np.linalg.lstsq(B, g / r1, rcond=None)
    return -lam * v


def robust_control(law: ControlLaw, t: float, z: np.ndarray, sim: Simulator) -> np.ndarray:
    """Full control u = u_bar + u_d at state z (reduced first if applicable)."""
    x = reduce_state(law.reduction, z) if law.reduction is not None else np.asarray(z, dtype=float)
    return minimize_hamiltonian(law, x, sim) + robust_term(law, x, sim, t)
