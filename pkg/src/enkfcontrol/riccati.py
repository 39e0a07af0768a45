"""Reference solvers for continuous-time Riccati equations.

These are the trusted oracles the particle-based gain estimates are tested
against: a Runge-Kutta integrator for the differential Riccati equation and a
stationary solver that runs the integration to convergence and polishes the
result with Newton (Kleinman) steps.  Deliberately plain; dimensions here stay
well below the point where Schur-form solvers would be worth the machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_continuous_lyapunov


class AssumptionError(ValueError):
    """System fails the controllability/observability/definiteness checks."""


class FiniteEscapeError(RuntimeError):
    def __init__(self, t_escape: float):
        self.t_escape = t_escape
        super().__init__(f"Riccati flow blew up near t={t_escape:g}")


class ConvergenceError(RuntimeError):
    pass


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class LtiSystem:
    """LTI plant with quadratic cost weights.

    The running state cost is |C x|^2 (so Q = C' C), the input cost u' R u,
    and the terminal weight G.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    R: np.ndarray
    G: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        G = self.G if self.G is not None else np.eye(A.shape[0])
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if B.shape[0] != A.shape[0] or C.shape[1] != A.shape[0]:
            raise ValueError("A, B, C dimensions inconsistent")
        if R.shape != (B.shape[1], B.shape[1]):
            raise ValueError("R must be m-by-m")
        if G.shape != A.shape:
            raise ValueError("G must be n-by-n")
        for name, val in (("A", A), ("B", B), ("C", C), ("R", R), ("G", G)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def Q(self) -> np.ndarray:
        return self.C.T @ self.C


def _is_spd(M: np.ndarray) -> bool:
    if not np.allclose(M, M.T, atol=1e-10):
        return False
    try:
        np.linalg.cholesky(M)
        return True
    except np.linalg.LinAlgError:
        return False


def _staircase_rank(blocks: list[np.ndarray], tol_scale: float = 1e-9) -> int:
    K = np.hstack(blocks)
    s = np.linalg.svd(K, compute_uv=False)
    if s.size == 0:
        return 0
    return int(np.sum(s > tol_scale * s[0]))


def validate_system(sys: LtiSystem) -> None:
    """Check controllability of (A, B), observability of (A, C), R, G > 0."""
    n = sys.n
    ctrb = [sys.B]
    obsv = [sys.C]
    for _ in range(n - 1):
        ctrb.append(sys.A @ ctrb[-1])
        obsv.append(obsv[-1] @ sys.A)
    if _staircase_rank(ctrb) < n:
        raise AssumptionError("(A, B) is not controllable")
    if _staircase_rank([M.T for M in obsv]) < n:
        raise AssumptionError("(A, C) is not observable")
    if not _is_spd(sys.R):
        raise AssumptionError("R is not symmetric positive definite")
    if not _is_spd(sys.G):
        raise AssumptionError("G is not symmetric positive definite")


def riccati_residual(sys: LtiSystem, P: np.ndarray) -> float:
    """Frobenius norm of A'P + PA - P B R^-1 B' P + Q."""
    BRinvBt = sys.B @ np.linalg.solve(sys.R, sys.B.T)
    res = sys.A.T @ P + P @ sys.A - P @ BRinvBt @ P + sys.Q
    return float(np.linalg.norm(res, "fro"))


def _dre_rhs(P: np.ndarray, A: np.ndarray, BRinvBt: np.ndarray, Q: np.ndarray) -> np.ndarray:
    return A.T @ P + P @ A - P @ BRinvBt @ P + Q


def solve_dre(sys: LtiSystem, T: float, dt: float) -> np.ndarray:
    """Integrate -dP/dt = A'P + PA - P B R^-1 B' P + Q back from P(T) = G.

    Returns P(0).  RK4 on the reversed clock, symmetrizing every step.
    """
    if dt <= 0 or T <= 0:
        raise ValueError("T and dt must be positive")
    BRinvBt = sys.B @ np.linalg.solve(sys.R, sys.B.T)
    Q = sys.Q
    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps
    P = sys.G.copy()
    for k in range(n_steps):
        k1 = _dre_rhs(P, sys.A, BRinvBt, Q)
        k2 = _dre_rhs(P + 0.5 * h * k1, sys.A, BRinvBt, Q)
        k3 = _dre_rhs(P + 0.5 * h * k2, sys.A, BRinvBt, Q)
        k4 = _dre_rhs(P + h * k3, sys.A, BRinvBt, Q)
        P = P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        P = 0.5 * (P + P.T)
        if not np.all(np.isfinite(P)) or np.linalg.norm(P, "fro") > 1e12:
            raise FiniteEscapeError(T - (k + 1) * h)
    return P


def _newton_step(sys: LtiSystem, P: np.ndarray) -> np.ndarray:
    """One Kleinman iteration: solve the closed-loop Lyapunov equation."""
    K = np.linalg.solve(sys.R, sys.B.T @ P)
    Acl = sys.A - sys.B @ K
    rhs = -(sys.Q + K.T @ sys.R @ K)
    P_next = solve_continuous_lyapunov(Acl.T, rhs)
    return 0.5 * (P_next + P_next.T)


def solve_are(
    sys: LtiSystem,
    stationarity_tol: float = 1e-10,
    residual_tol: float = 1e-8,
    max_horizon: float = 2000.0,
) -> np.ndarray:
    """Stationary solution of the algebraic Riccati equation.

    Integrates the differential equation in unit-horizon chunks until the
    endpoint stops moving, then applies Newton refinement until the residual
    drops below ``residual_tol * max(1, ||Q||_F)``.
    """
    validate_system(sys)
    scale = max(1.0, np.linalg.norm(sys.A, 2))
    dt = min(1e-2, 0.05 / scale)
    chunk = 1.0
    P = sys.G.copy()
    t = 0.0
    while t < max_horizon:
        P_next = solve_dre(LtiSystem(sys.A, sys.B, sys.C, sys.R, P), chunk, dt)
        t += chunk
        if np.linalg.norm(P_next - P, "fro") < stationarity_tol:
            P = P_next
            break
        P = P_next
    else:
        raise ConvergenceError(
            f"Riccati flow not stationary after horizon {max_horizon:g}"
        )
    tol = residual_tol * max(1.0, np.linalg.norm(sys.Q, "fro"))
    for _ in range(10):
        if riccati_residual(sys, P) <= tol:
            break
        P = _newton_step(sys, P)
    if riccati_residual(sys, P) > tol:
        raise ConvergenceError("Newton refinement did not reach residual tolerance")
    return P


def lqr_gain(sys: LtiSystem, P: np.ndarray) -> np.ndarray:
    """Optimal feedback gain K = R^-1 B' P; checks A - B K is Hurwitz."""
    K = np.linalg.solve(sys.R, sys.B.T @ P)
    eigs = np.linalg.eigvals(sys.A - sys.B @ K)
    if np.max(eigs.real) >= 0:
        raise OracleError(
            f"closed loop is not Hurwitz (max Re eig = {np.max(eigs.real):.3e})"
        )
    return K


def invert_spd(M: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    c = cho_factor(M)
    return cho_solve(c, np.eye(M.shape[0]))
