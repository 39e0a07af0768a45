"""Finite-difference simulators for 1-D heat and Burgers equations.

The PDEs are discretized in space on a uniform grid of cell centers and
written in affine-in-control form

    dz/dt = a(z) + B u,

where the columns of B are discretized indicator functions of a uniform
partition of the domain.  Both periodic and homogeneous Dirichlet boundary
conditions are supported; periodic is the default (difference operators are
circulant, constants lie in their kernel).

A :class:`Simulator` is the black-box interface the learning algorithms see:
they may only evaluate ``rhs(x, u)`` (and its batched variant), never the
internals.  Whether the input matrix is disclosed to callers is an explicit
flag, so model-free code paths can be exercised honestly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BOUNDARY_CONDITIONS = ("periodic", "dirichlet")


class BlowUpError(RuntimeError):
    """Raised when integration produces a non-finite state.

    Carries ``t_last``, the last time at which the state was still finite.
    """

    def __init__(self, t_last: float, message: str | None = None):
        self.t_last = t_last
        super().__init__(message or f"state became non-finite after t={t_last:g}")


@dataclass(frozen=True)
class GridSpec:
    """Uniform spatial grid on [0, L] with p cell-centered points."""

    p: int
    L: float = 1.0

    def __post_init__(self):
        if self.p < 3:
            raise ValueError(f"grid needs at least 3 points, got p={self.p}")
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got L={self.L}")

    @property
    def dy(self) -> float:
        return self.L / self.p

    @property
    def points(self) -> np.ndarray:
        """Cell centers y_i = (i + 1/2) dy."""
        return (np.arange(self.p) + 0.5) * self.dy


class InvalidBasisError(ValueError):
    pass


def build_control_matrix(grid: GridSpec, m: int) -> np.ndarray:
    """Discretize m indicator basis functions into a p-by-m 0/1 matrix.

    Basis function j is the indicator of the half-open cell
    [j L/m, (j+1) L/m); entry (i, j) is 1 iff grid point y_i lies in that
    cell.  The columns therefore have disjoint supports that cover the grid.
    """
    if not 1 <= m <= grid.p:
        raise InvalidBasisError(f"control dimension m={m} outside [1, p={grid.p}]")
    cell = np.floor(grid.points * m / grid.L).astype(int)
    cell = np.clip(cell, 0, m - 1)
    B = np.zeros((grid.p, m))
    B[np.arange(grid.p), cell] = 1.0
    return B


def _check_bc(bc: str) -> None:
    if bc not in BOUNDARY_CONDITIONS:
        raise ValueError(f"unknown boundary condition {bc!r}")


def first_difference(z: np.ndarray, grid: GridSpec, bc: str = "periodic") -> np.ndarray:
    """Central first difference (z_{i+1} - z_{i-1}) / (2 dy) along the last axis."""
    _check_bc(bc)
    zp = np.roll(z, -1, axis=-1)
    zm = np.roll(z, 1, axis=-1)
    if bc == "dirichlet":
        # ghost cells mirror with sign flip so the wall value interpolates to 0
        zp = zp.copy()
        zm = zm.copy()
        zp[..., -1] = -z[..., -1]
        zm[..., 0] = -z[..., 0]
    return (zp - zm) / (2.0 * grid.dy)


def second_difference(z: np.ndarray, grid: GridSpec, bc: str = "periodic") -> np.ndarray:
    """Second difference (z_{i+1} - 2 z_i + z_{i-1}) / dy^2 along the last axis."""
    _check_bc(bc)
    zp = np.roll(z, -1, axis=-1)
    zm = np.roll(z, 1, axis=-1)
    if bc == "dirichlet":
        zp = zp.copy()
        zm = zm.copy()
        zp[..., -1] = -z[..., -1]
        zm[..., 0] = -z[..., 0]
    return (zp - 2.0 * z + zm) / grid.dy**2


def second_difference_matrix(grid: GridSpec, bc: str = "periodic") -> np.ndarray:
    """Dense matrix form of :func:`second_difference` (used by linear solvers)."""
    return np.asarray(second_difference(np.eye(grid.p), grid, bc)).T.copy()


def _apply_control(B: np.ndarray, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim <= 1:
        return B @ u
    return u @ B.T


def heat_rhs(
    z: np.ndarray,
    u: np.ndarray,
    nu: float,
    grid: GridSpec,
    B: np.ndarray,
    bc: str = "periodic",
) -> np.ndarray:
    """Right-hand side of the forced heat equation: nu * D2 z + B u."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != grid.p:
        raise ValueError(f"state length {z.shape[-1]} != grid p={grid.p}")
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    return nu * second_difference(z, grid, bc) + _apply_control(B, u)


def burgers_rhs(
    z: np.ndarray,
    u: np.ndarray,
    nu: float,
    grid: GridSpec,
    B: np.ndarray,
    bc: str = "periodic",
) -> np.ndarray:
    """Right-hand side of forced Burgers: -z * D1 z + nu * D2 z + B u.

    The advection term uses the non-conservative form with the central first
    difference; both difference operators annihilate constants under periodic
    boundary conditions.
    """
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != grid.p:
        raise ValueError(f"state length {z.shape[-1]} != grid p={grid.p}")
    if not nu > 0:
        raise ValueError(f"viscosity must be positive, got {nu}")
    adv = -z * first_difference(z, grid, bc)
    return adv + nu * second_difference(z, grid, bc) + _apply_control(B, u)


class Simulator:
    """Black-box evaluator of an affine-in-control system dx/dt = a(x) + b(x) u.

    Subclasses implement :meth:`rhs`; the input coupling must be linear in u
    for every fixed x.  ``b_disclosed`` states whether callers may read
    :attr:`control_matrix`; model-free algorithms must work with it False.
    """

    n: int
    m: int
    b_disclosed: bool = True

    def rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def rhs_batch(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Evaluate the rhs for a batch of states (rows of X) and inputs (rows of U)."""
        return self.rhs(X, U)

    @property
    def control_matrix(self) -> np.ndarray:
        if not self.b_disclosed:
            raise AttributeError("input matrix is not disclosed by this simulator")
        return self._B

    def undisclosed(self) -> "Simulator":
        """A view of this simulator with the input matrix hidden."""
        import copy

        twin = copy.copy(self)
        twin.b_disclosed = False
        return twin


class LinearSimulator(Simulator):
    """dx/dt = A x + B u."""

    def __init__(self, A: np.ndarray, B: np.ndarray, b_disclosed: bool = True):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if B.shape[0] != A.shape[0]:
            raise ValueError("A and B row counts differ")
        self.A = A
        self._B = B
        self.n, self.m = B.shape
        self.b_disclosed = b_disclosed

    def rhs(self, x, u):
        x = np.asarray(x, dtype=float)
        if x.ndim <= 1:
            return self.A @ x + self._B @ np.asarray(u, dtype=float)
        return x @ self.A.T + np.asarray(u, dtype=float) @ self._B.T


class HeatSimulator(LinearSimulator):
    """Discretized heat equation as a linear simulator."""

    def __init__(self, grid: GridSpec, nu: float, m: int, bc: str = "periodic", b_disclosed: bool = True):
        if not nu > 0:
            raise ValueError(f"viscosity must be positive, got {nu}")
        B = build_control_matrix(grid, m)
        super().__init__(nu * second_difference_matrix(grid, bc), B, b_disclosed)
        self.grid = grid
        self.nu = nu
        self.bc = bc


class BurgersSimulator(Simulator):
    """Discretized Burgers equation."""

    def __init__(self, grid: GridSpec, nu: float, m: int, bc: str = "periodic", b_disclosed: bool = True):
        if not nu > 0:
            raise ValueError(f"viscosity must be positive, got {nu}")
        self.grid = grid
        self.nu = nu
        self.bc = bc
        self._B = build_control_matrix(grid, m)
        self.n = grid.p
        self.m = m
        self.b_disclosed = b_disclosed

    def rhs(self, x, u):
        return burgers_rhs(x, u, self.nu, self.grid, self._B, self.bc)


def rk4_step(sim: Simulator, x: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step with the input held constant."""
    k1 = sim.rhs(x, u)
    k2 = sim.rhs(x + 0.5 * h * k1, u)
    k3 = sim.rhs(x + 0.5 * h * k2, u)
    k4 = sim.rhs(x + h * k3, u)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(
    sim: Simulator,
    x0: np.ndarray,
    u_fn,
    t0: float,
    t1: float,
    dt: float,
    direction: str = "forward",
):
    """RK4 time-stepping of dx/dt = S(x, u_fn(t)) from t0 to t1.

    ``direction`` selects the sign of the time increment: forward requires
    t1 > t0, backward requires t1 < t0.  The returned time array starts at t0
    and ends exactly at t1 (the final step is shortened if needed).

    Returns (ts, xs) with xs[k] the state at ts[k].  Raises
    :class:`BlowUpError` if the state becomes non-finite.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if direction == "forward":
        if not t1 > t0:
            raise ValueError("forward integration needs t1 > t0")
        h = dt
    elif direction == "backward":
        if not t1 < t0:
            raise ValueError("backward integration needs t1 < t0")
        h = -dt
    else:
        raise ValueError(f"unknown direction {direction!r}")

    span = t1 - t0
    n_steps = max(1, math.ceil(abs(span) / dt - 1e-12))
    x = np.array(x0, dtype=float)
    ts = [t0]
    xs = [x.copy()]
    t = t0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            t_next = t1 if k == n_steps - 1 else t0 + (k + 1) * h
            x = rk4_step(sim, x, u_fn(t), t_next - t)
            if not np.all(np.isfinite(x)):
                raise BlowUpError(t)
            t = t_next
            ts.append(t)
            xs.append(x.copy())
    return np.array(ts), np.array(xs)


def sample_initial_condition(rng: np.random.Generator, grid: GridSpec) -> np.ndarray:
    """Random bump initial condition alpha * sech((y - 1/(2L)) / beta).

    alpha ~ unif(0.9, 1.1) and beta ~ unif(0.04, 0.06); with the default
    L = 1 domain the bump is centered at y = 1/2.
    """
    alpha = rng.uniform(0.9, 1.1)
    beta = rng.uniform(0.04, 0.06)
    center = 1.0 / (2.0 * grid.L)
    return alpha / np.cosh((grid.points - center) / beta)


def l2_norm(z: np.ndarray, grid: GridSpec) -> float:
    """Rectangle-rule L2 norm sqrt(sum_i z_i^2 * dy)."""
    z = np.asarray(z, dtype=float)
    return float(np.sqrt(np.sum(z * z, axis=-1) * grid.dy))
