"""Staggered time stepping: mechanical step, then thermal step, per time level.

The inertial term is replaced by a time delay ``h``: the velocity of the step
``h/tau`` levels back enters each mechanical step.  The deformation history is
extended to negative times by the affine ramp ``y0 + k tau y0'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.ndimage as ndi
import scipy.sparse.linalg as spla

from .grid import Grid2D, laplacian_nodes, min_det
from .materials import MaterialParams
from .mechanics import MechStepInput, SolveReport, StepFailure, solve_mech_step
from .thermal import ThermalReport, build_thermal_input, internal_energy_qp, solve_thermal_step

GAUSS3_NODES = np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GAUSS3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


def _bump(X):
    return np.sin(np.pi * X[..., 0]) * np.sin(np.pi * X[..., 1])


@dataclass(frozen=True)
class InitialSpec:
    """Initial deformation, velocity and temperature.

    The deformation is ``id + y0_amplitude * bump * (1, 1)`` and the velocity
    ``y0prime_amplitude * bump * (y0prime_x1, y0prime_x2)``, with the bump
    ``sin(pi x1) sin(pi x2)`` vanishing on the boundary.
    """
    y0_amplitude: float = 0.0
    y0prime_amplitude: float = 0.0
    y0prime_x1: float = 1.0
    y0prime_x2: float = 0.0
    theta0: float = 1.0
    theta0_amplitude: float = 0.0
    mollify_width: float = 0.0

    def y0(self, grid: Grid2D) -> np.ndarray:
        X = grid.coords()
        return X + self.y0_amplitude * _bump(X)[..., None] * np.array([1.0, 1.0])

    def y0prime(self, grid: Grid2D) -> np.ndarray:
        X = grid.coords()
        return self.y0prime_amplitude * _bump(X)[..., None] * np.array([self.y0prime_x1, self.y0prime_x2])

    def theta0_field(self, grid: Grid2D) -> np.ndarray:
        X = grid.coords()
        return self.theta0 + self.theta0_amplitude * np.cos(np.pi * X[..., 0]) * np.cos(np.pi * X[..., 1])


@dataclass(frozen=True)
class ForcingSpec:
    """Dead body force and external temperature.

    ``kind`` is ``none``, ``uniform`` or ``gaussian``; the force points along
    ``(direction_x1, direction_x2)``.  ``time_profile`` ``constant`` or
    ``linear`` (scaled by t / T_ramp).  The external temperature is
    ``theta_b + theta_b_rate * t``.
    """
    kind: str = "none"
    amplitude: float = 0.0
    center_x1: float = 0.5
    center_x2: float = 0.5
    width: float = 0.15
    direction_x1: float = 0.0
    direction_x2: float = -1.0
    time_profile: str = "constant"
    ramp_time: float = 1.0
    theta_b: float = 1.0
    theta_b_rate: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "uniform", "gaussian"):
            raise ValueError(f"unknown force kind {self.kind!r}")
        if self.time_profile not in ("constant", "linear"):
            raise ValueError(f"unknown time profile {self.time_profile!r}")
        if self.width <= 0 or self.ramp_time <= 0:
            raise ValueError("force width and ramp time must be positive")

    def force(self, grid: Grid2D, t: float) -> np.ndarray:
        X = grid.coords()
        d = np.array([self.direction_x1, self.direction_x2])
        if self.kind == "none":
            shape = np.zeros(X.shape[:2])
        elif self.kind == "uniform":
            shape = np.ones(X.shape[:2])
        else:
            r2 = (X[..., 0] - self.center_x1) ** 2 + (X[..., 1] - self.center_x2) ** 2
            shape = np.exp(-r2 / (2.0 * self.width ** 2))
        scale = self.amplitude * (1.0 if self.time_profile == "constant" else t / self.ramp_time)
        return scale * shape[..., None] * d

    def theta_b_field(self, grid: Grid2D, t: float) -> np.ndarray:
        return np.full((grid.n, grid.n), self.theta_b + self.theta_b_rate * t)


@dataclass(frozen=True)
class SchemeConfig:
    T: float = 0.1
    tau: float = 1.0 / 320.0
    h: float = 1.0 / 40.0
    eps: float = 1e-3
    rho: float = 1.0
    kappa: float = 1.0
    n: int = 16
    material: MaterialParams = field(default_factory=MaterialParams)
    initial: InitialSpec = field(default_factory=InitialSpec)
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    snapshot_every: int = 0

    def __post_init__(self):
        if not self.tau > 0 or not self.tau < self.h:
            raise ValueError(f"time step tau={self.tau} must lie in (0, h={self.h})")
        if not _is_integer_ratio(self.h, self.tau):
            raise ValueError(f"h/tau = {self.h / self.tau} is not a natural number")
        if not _is_integer_ratio(self.T, self.h):
            raise ValueError(f"T/h = {self.T / self.h} is not a natural number")
        if self.eps < 0 or self.rho <= 0 or self.kappa < 0:
            raise ValueError("need eps >= 0, rho > 0, kappa >= 0")
        if int(self.n) != self.n or self.n < 3:
            raise ValueError("grid size n must be an integer >= 3")

    @property
    def delay_steps(self) -> int:
        return int(round(self.h / self.tau))

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    def with_(self, **kw) -> SchemeConfig:
        return replace(self, **kw)


def _is_integer_ratio(a: float, b: float) -> bool:
    r = a / b
    return round(r) >= 1 and abs(r - round(r)) <= 1e-9 * max(1.0, r)


def time_average(func: Callable[[float], np.ndarray], k: int, tau: float) -> np.ndarray:
    """Mean of ``func`` over ((k-1) tau, k tau) by three-point Gauss quadrature."""
    mid = (k - 0.5) * tau
    return sum(w * np.asarray(func(mid + 0.5 * tau * x), dtype=float)
               for x, w in zip(GAUSS3_NODES, GAUSS3_WEIGHTS)) / 2.0


def time_average_force(grid: Grid2D, forcing: ForcingSpec, k: int, tau: float) -> np.ndarray:
    return time_average(lambda t: forcing.force(grid, t), k, tau)


def regularize_initial_data(grid: Grid2D, y0, width: float, return_info: bool = False):
    """Smooth the Laplacian of ``y0`` and solve the Dirichlet problem with y = id.

    The nodal Laplacian is convolved with a Gaussian of standard deviation
    ``width`` and set to zero within ``width`` of the boundary.  Width 0 returns
    ``y0`` itself (up to the linear solve).
    """
    y0 = np.asarray(y0, dtype=float)
    if width < 0:
        raise ValueError("mollification width must be nonnegative")
    lap = laplacian_nodes(grid, y0)
    if width > 0:
        sigma = width / grid.dx
        lap = np.stack([ndi.gaussian_filter(lap[..., a], sigma, mode="nearest") for a in range(2)], axis=-1)
    X = grid.coords()[1:-1, 1:-1]
    dist = np.minimum.reduce([X[..., 0], 1 - X[..., 0], X[..., 1], 1 - X[..., 1]])
    near = dist <= width + 1e-14
    lap[near] = 0.0
    idofs = grid.interior_dofs()
    L = grid.laplacian_operator()
    ident = grid.identity().ravel()
    ybnd = ident.copy()
    ybnd[idofs] = 0.0
    rhs = lap.ravel() - L @ ybnd
    y = ident.copy()
    y[idofs] = spla.spsolve(L[:, idofs].tocsc(), rhs)
    y = y.reshape(grid.n, grid.n, 2)
    if return_info:
        lap_new = laplacian_nodes(grid, y)
        info = {"laplacian_zero_near_boundary": bool(np.all(np.abs(lap_new[near]) <= 1e-8 * (1 + np.abs(lap).max()))),
                "nodes_zeroed": int(np.sum(near))}
        return y, info
    return y


@dataclass
class Trajectory:
    """States for k = -m .. N (deformations) and k = 0 .. N (temperatures)."""
    config: SchemeConfig
    grid: Grid2D
    ys: np.ndarray  # (N + m + 1, n, n, 2); index k + m
    thetas: np.ndarray  # (N + 1, n, n)
    ws: np.ndarray  # (N + 1, n_cells, 4)
    f_avg: np.ndarray  # (N + 1, n, n, 2); entry 0 unused
    theta_b_avg: np.ndarray  # (N + 1, n, n); entry 0 unused
    mech_reports: list = field(default_factory=list)
    thermal_reports: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.config.delay_steps

    @property
    def N(self) -> int:
        return self.thetas.shape[0] - 1

    @property
    def tau(self) -> float:
        return self.config.tau

    def y(self, k: int) -> np.ndarray:
        return self.ys[k + self.m]

    def velocity(self, k: int) -> np.ndarray:
        """Discrete velocity (y^k - y^(k-1)) / tau, valid for k >= 1 - m."""
        return (self.ys[k + self.m] - self.ys[k + self.m - 1]) / self.tau

    def _level(self, t: float) -> int:
        k = int(np.ceil(t / self.tau - 1e-12))
        return min(max(k, 1 - self.m), self.N)

    def y_bar(self, t: float) -> np.ndarray:
        """Piecewise constant, right-continuous value y^k on ((k-1) tau, k tau]."""
        return self.y(self._level(t))

    def y_under(self, t: float) -> np.ndarray:
        """Piecewise constant value y^(k-1) on ((k-1) tau, k tau]."""
        return self.y(self._level(t) - 1)

    def y_hat(self, t: float) -> np.ndarray:
        """Piecewise affine interpolant through the grid values."""
        k = self._level(t)
        lam = (t - (k - 1) * self.tau) / self.tau
        return (1 - lam) * self.y(k - 1) + lam * self.y(k)

    def y_hat_dot(self, t: float) -> np.ndarray:
        return self.velocity(self._level(t))


def run(config: SchemeConfig, backend: str | None = None, audit: bool = True,
        progress: Callable[[int, SolveReport, ThermalReport], None] | None = None):
    """Run the staggered scheme; returns ``(trajectory, ledger)`` (ledger None if not audited)."""
    grid = Grid2D(config.n)
    mp = config.material
    m, N, tau = config.delay_steps, config.n_steps, config.tau
    y0 = config.initial.y0(grid)
    if config.initial.mollify_width > 0:
        y0 = regularize_initial_data(grid, y0, config.initial.mollify_width)
    v0 = config.initial.y0prime(grid)
    if min_det(grid, y0) <= 0:
        raise ValueError("initial deformation is not orientation preserving")
    ys = np.empty((N + m + 1, grid.n, grid.n, 2))
    for k in range(-m, 1):
        ys[k + m] = y0 + k * tau * v0
    thetas = np.empty((N + 1, grid.n, grid.n))
    thetas[0] = config.initial.theta0_field(grid)
    if np.any(thetas[0] < 0):
        raise ValueError("initial temperature must be nonnegative")
    ws = np.empty((N + 1, grid.n_cells, 4))
    ws[0] = internal_energy_qp(grid, mp, ys[m], thetas[0])
    f_avg = np.zeros((N + 1, grid.n, grid.n, 2))
    thb = np.zeros((N + 1, grid.n, grid.n))
    traj = Trajectory(config, grid, ys, thetas, ws, f_avg, thb)

    for k in range(1, N + 1):
        f_avg[k] = time_average_force(grid, config.forcing, k, tau)
        thb[k] = time_average(lambda t: config.forcing.theta_b_field(grid, t), k, tau)
        y_prev = ys[k - 1 + m]
        inp = MechStepInput(y_prev, thetas[k - 1], traj.velocity(k - m), f_avg[k], tau, config.h,
                            config.eps, config.rho)
        try:
            y_new, mrep = solve_mech_step(grid, mp, inp, backend=backend)
        except StepFailure as exc:
            exc.diagnostics["step"] = k
            exc.diagnostics["phase"] = "mechanical"
            raise
        ys[k + m] = y_new
        tinp = build_thermal_input(grid, mp, y_new, y_prev, thetas[k - 1], ws[k - 1], thb[k],
                                   tau, config.eps, config.kappa)
        try:
            th_new, trep = solve_thermal_step(grid, mp, tinp)
        except StepFailure as exc:
            exc.diagnostics["step"] = k
            exc.diagnostics["phase"] = "thermal"
            raise
        thetas[k] = th_new
        ws[k] = internal_energy_qp(grid, mp, y_new, th_new)
        traj.mech_reports.append(mrep)
        traj.thermal_reports.append(trep)
        if progress is not None:
            progress(k, mrep, trep)

    ledger = None
    if audit:
        from .audit import build_ledger
        ledger = build_ledger(traj)
    return traj, ledger
