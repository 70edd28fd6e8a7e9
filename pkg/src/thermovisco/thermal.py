"""Thermal half-step: minimize the convex temperature functional.

Given the new and old deformations, the old temperature and the old internal
energy ``w_prev`` (stored per cell corner), the functional is

    Phi(theta) = sum_q |q| / tau * [P(F_new, theta) - w_prev theta]
                 + 1/2 theta^T K theta - s . theta
                 + kappa/2 sum_boundary b (theta - theta_b)^2

where ``P`` is the primitive in theta of the internal energy, ``K`` the
conduction stiffness frozen at the old state and ``s`` collects the heat
sources (viscous dissipation, truncated third-gradient dissipation and the
adiabatic coupling term).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid2D, grad_cells
from .materials import (DomainError, MaterialParams, dWcpl_dF, eval_Win, eval_xi, pullback_K)
from .mechanics import StepFailure, cell_theta_qp


@dataclass(frozen=True)
class ThermalStepInput:
    y_new: np.ndarray
    y_prev: np.ndarray
    theta_prev: np.ndarray
    w_prev: np.ndarray  # (n_cells, 4) internal energy at cell corners
    theta_b_avg: np.ndarray  # (n, n); only boundary entries are used
    tau: float
    eps: float
    kappa: float
    dissipation_source: np.ndarray  # (n_cells, 4)
    coupling_source: np.ndarray  # (n_cells, 4)
    eps_source: np.ndarray  # (n_edges,)

    def __post_init__(self):
        if np.any(self.dissipation_source < -1e-14):
            raise ValueError("dissipation source must be nonnegative")
        if np.any(self.eps_source < 0) or np.any(self.eps_source > 1.0 / self.tau * (1 + 1e-14)):
            raise ValueError("third-gradient source must lie in [0, 1/tau]")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")


@dataclass
class ThermalReport:
    iterations: int = 0
    residual: float = np.inf
    min_theta: float = np.inf
    backtracks: int = 0
    clamped: int = 0
    clamp_size: float = 0.0
    energies: list = field(default_factory=list)
    converged: bool = False
    competitor_gap: float = np.nan  # Phi(result) - min(Phi(theta_prev), Phi(0))


def cell_F(grid: Grid2D, y) -> np.ndarray:
    return grad_cells(grid, y).reshape(-1, 2, 2)


def internal_energy_qp(grid: Grid2D, material: MaterialParams, y, theta) -> np.ndarray:
    """W_in(F_cell, theta_corner) per cell corner, shape (n_cells, 4)."""
    F = cell_F(grid, y)
    return eval_Win(F[:, None], cell_theta_qp(grid, theta), material)


def build_thermal_input(grid: Grid2D, material: MaterialParams, y_new, y_prev, theta_prev, w_prev,
                        theta_b_avg, tau: float, eps: float, kappa: float) -> ThermalStepInput:
    """Evaluate the heat sources from the old state and the new strain rate."""
    F0 = cell_F(grid, y_prev)
    dF = (cell_F(grid, y_new) - F0) / tau
    thq = cell_theta_qp(grid, theta_prev)
    F0q = np.broadcast_to(F0[:, None], thq.shape + (2, 2))
    dFq = np.broadcast_to(dF[:, None], thq.shape + (2, 2))
    xi = eval_xi(F0q, dFq, thq)
    cpl = np.einsum("cqij,cqij->cq", dWcpl_dF(F0q, thq, material), dFq)
    dg = (grid.grad_laplacian_operator() @ (np.asarray(y_new) - np.asarray(y_prev)).ravel()).reshape(-1, 2) / tau
    eps_src = np.minimum(eps * np.einsum("ei,ei->e", dg, dg), 1.0 / tau)
    return ThermalStepInput(np.asarray(y_new, float), np.asarray(y_prev, float),
                            np.asarray(theta_prev, float), np.asarray(w_prev, float),
                            np.asarray(theta_b_avg, float), tau, eps, kappa, xi, cpl, eps_src)


def conduction_matrix(grid: Grid2D, material: MaterialParams, y, theta) -> sp.csr_matrix:
    """Q1 stiffness of the pulled-back conductivity, cellwise averaged over corners."""
    F = cell_F(grid, y)
    thq = cell_theta_qp(grid, theta)
    Kq = pullback_K(np.broadcast_to(F[:, None], thq.shape + (2, 2)), thq, material)
    Kc = Kq.mean(axis=1)
    S = grid.scalar_stiffness_parts()
    Ke = np.einsum("cab,abij->cij", Kc, S)
    corners = grid.cell_corners()
    rows = np.repeat(corners, 4, axis=1).ravel()
    cols = np.tile(corners, (1, 4)).ravel()
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(grid.n_nodes, grid.n_nodes))


class ThermalProblem:
    def __init__(self, grid: Grid2D, material: MaterialParams, inp: ThermalStepInput):
        self.grid, self.mp, self.inp = grid, material, inp
        A = grid.dx ** 2
        self.qw = 0.25 * A
        self.corners = grid.cell_corners()
        Fk = cell_F(grid, inp.y_new)
        self.T = np.tanh(np.einsum("cij,cij->c", Fk, Fk) - 2.0)[:, None]
        self.K = conduction_matrix(grid, material, inp.y_prev, inp.theta_prev)
        ea, eb, _ = grid.edges()
        src = np.bincount(self.corners.ravel(), (self.qw * (inp.dissipation_source + inp.coupling_source)).ravel(),
                          minlength=grid.n_nodes)
        src += np.bincount(ea, 0.5 * A * inp.eps_source, minlength=grid.n_nodes)
        src += np.bincount(eb, 0.5 * A * inp.eps_source, minlength=grid.n_nodes)
        self.source = src
        self.bw = grid.boundary_weights().ravel()
        self.thb = np.asarray(inp.theta_b_avg, float).ravel()
        self.inv_tau = 1.0 / inp.tau

    # pointwise model pieces, valid on theta > -1 so Newton may overshoot slightly
    def _win(self, th):
        a = self.mp.alpha * self.T
        return self.mp.c_V * th + a * th ** 2 / (1.0 + th) ** 2

    def _dwin(self, th):
        return self.mp.c_V + 2.0 * self.mp.alpha * self.T * th / (1.0 + th) ** 3

    def _prim(self, th):
        return 0.5 * self.mp.c_V * th ** 2 + self.mp.alpha * self.T * (th - 2.0 * np.log1p(th) + th / (1.0 + th))

    def _scatter(self, vals):
        return np.bincount(self.corners.ravel(), vals.ravel(), minlength=self.grid.n_nodes)

    def value(self, theta) -> float:
        th = np.asarray(theta, float).ravel()
        if np.any(th <= -1.0):
            raise DomainError("temperature iterate outside the extension domain")
        thq = th[self.corners]
        vol = self.qw * self.inv_tau * float(np.sum(self._prim(thq) - self.inp.w_prev * thq))
        kap = 0.5 * self.inp.kappa * float(np.sum(self.bw * (th - self.thb) ** 2))
        return vol + 0.5 * float(th @ (self.K @ th)) - float(self.source @ th) + kap

    def gradient(self, theta) -> np.ndarray:
        th = np.asarray(theta, float).ravel()
        thq = th[self.corners]
        g = self.qw * self.inv_tau * self._scatter(self._win(thq) - self.inp.w_prev)
        return g + self.K @ th - self.source + self.inp.kappa * self.bw * (th - self.thb)

    def hessian(self, theta) -> sp.csr_matrix:
        th = np.asarray(theta, float).ravel()
        d = self.qw * self.inv_tau * self._scatter(self._dwin(th[self.corners])) + self.inp.kappa * self.bw
        return (self.K + sp.diags(d)).tocsr()

    def row_scale(self, theta) -> np.ndarray:
        """Sum of absolute term contributions in each gradient row."""
        th = np.asarray(theta, float).ravel()
        thq = th[self.corners]
        s = self.qw * self.inv_tau * self._scatter(np.abs(self._win(thq)) + np.abs(self.inp.w_prev))
        s = s + abs(self.K) @ np.abs(th) + np.abs(self.source)
        s = s + self.inp.kappa * self.bw * (np.abs(th) + np.abs(self.thb))
        return s


def assemble_thermal_functional(grid: Grid2D, material: MaterialParams, inp: ThermalStepInput, theta) -> float:
    th = np.asarray(theta, float)
    if np.any(th < 0):
        raise DomainError("temperature must be nonnegative")
    return ThermalProblem(grid, material, inp).value(th)


def residual_thermal_EL(grid: Grid2D, material: MaterialParams, inp: ThermalStepInput, theta):
    """Scaled maximum nodal residual, the nodal residual vector, and its phi = 1 component."""
    prob = ThermalProblem(grid, material, inp)
    g = prob.gradient(theta)
    scale = max(float(np.max(prob.row_scale(theta))), 1e-300)
    return float(np.max(np.abs(g))) / scale, g, float(np.sum(g))


def solve_thermal_step(grid: Grid2D, material: MaterialParams, inp: ThermalStepInput, theta_init=None,
                       tol: float = 1e-8, polish_tol: float = 1e-14, max_iter: int = 100):
    """Newton on the convex functional, with a projected fallback for theta >= 0."""
    prob = ThermalProblem(grid, material, inp)
    th = np.asarray(inp.theta_prev if theta_init is None else theta_init, float).ravel().copy()
    rep = ThermalReport()
    val = prob.value(th)
    rep.energies.append(val)

    def scaled(th, g):
        return float(np.max(np.abs(g))) / max(float(np.max(prob.row_scale(th))), 1e-300)

    polish = 0
    for it in range(max_iter):
        g = prob.gradient(th)
        res = scaled(th, g)
        rep.residual = res
        if res <= polish_tol:
            break
        if res <= tol:
            polish += 1
            if polish > 3:
                break
        d = spla.spsolve(prob.hessian(th).tocsc(), -g)
        slope = float(g @ d)
        t = 1.0
        for _ in range(60):
            trial = th + t * d
            if np.all(trial > -0.5):
                tv = prob.value(trial)
                if tv <= val + 1e-4 * t * slope or abs(slope) <= 1e-14 * (1 + abs(val)):
                    break
            t *= 0.5
            rep.backtracks += 1
        else:
            raise StepFailure("thermal line search failed", {"iteration": it, "residual": res})
        th, val = trial, tv
        rep.iterations = it + 1
        rep.energies.append(val)
    mn = float(th.min())
    if mn < -1e-10:
        th, rep = _projected_newton(prob, np.maximum(th, 0.0), rep, tol, max_iter)
        mn = float(th.min())
    if mn < -1e-6:
        raise StepFailure("temperature became negative", {"min_theta": mn})
    neg = th < 0
    rep.clamped = int(np.sum(neg))
    rep.clamp_size = float(-th[neg].min()) if rep.clamped else 0.0
    th = np.maximum(th, 0.0)
    g = prob.gradient(th)
    rep.residual = scaled(th, np.where((th <= 0) & (g > 0), 0.0, g))
    rep.converged = rep.residual <= tol
    if not rep.converged:
        raise StepFailure("thermal step did not converge", {"residual": rep.residual})
    rep.min_theta = float(th.min())
    rep.competitor_gap = prob.value(th) - min(prob.value(inp.theta_prev), prob.value(np.zeros_like(th)))
    return th.reshape(grid.n, grid.n), rep


def _projected_newton(prob: ThermalProblem, th, rep, tol, max_iter):
    val = prob.value(th)
    for it in range(max_iter):
        g = prob.gradient(th)
        active = (th <= 0) & (g > 0)
        gf = np.where(active, 0.0, g)
        if float(np.max(np.abs(gf))) / max(float(np.max(prob.row_scale(th))), 1e-300) <= 0.1 * tol:
            break
        free = np.flatnonzero(~active)
        H = prob.hessian(th)[free][:, free]
        d = np.zeros_like(th)
        d[free] = spla.spsolve(H.tocsc(), -g[free])
        t = 1.0
        for _ in range(60):
            trial = np.maximum(th + t * d, 0.0)
            tv = prob.value(trial)
            if tv <= val + 1e-4 * float(g @ (trial - th)) or tv <= val:
                break
            t *= 0.5
        th, val = trial, tv
        rep.iterations += 1
    return th, rep
