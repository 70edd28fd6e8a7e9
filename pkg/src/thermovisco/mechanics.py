"""Mechanical half-step: minimize the incremental deformation functional.

For the frozen data ``(y_prev, theta_prev, v_delay, f_avg)`` the functional is

    J(y) = M(y) + Wcpl(y, theta_prev) + R(y_prev, y - y_prev, theta_prev) / tau
           + eps / (2 tau) |grad lap (y - y_prev)|^2 - (f_avg, y)
           + rho tau / (2 h) |(y - y_prev) / tau - v_delay|^2

with M = sum of elastic and strain-gradient energy.  Temperature-dependent
terms use the four corner temperatures of each cell as quadrature points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import kernels
from .grid import Grid2D, min_det
from .materials import DomainError, MaterialParams, _xlogx, dissipation_coefficient


class StepFailure(RuntimeError):
    """A step solver could not produce an admissible converged iterate."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class MechStepInput:
    y_prev: np.ndarray
    theta_prev: np.ndarray
    delayed_velocity: np.ndarray
    f_avg: np.ndarray
    tau: float
    h: float
    eps: float
    rho: float

    def __post_init__(self):
        if not 0 < self.tau < self.h:
            raise ValueError("tau must lie in (0, h)")
        if self.eps < 0 or self.rho <= 0:
            raise ValueError("need eps >= 0 and rho > 0")
        if np.any(np.asarray(self.theta_prev) < 0):
            raise ValueError("theta_prev must be nonnegative")


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = np.inf
    min_det: float = np.inf
    backtracks: int = 0
    energies: list = field(default_factory=list)
    converged: bool = False
    competitor_gap: float = np.nan  # J(result) - J(y_prev); nonpositive for a minimizer


def cell_theta_qp(grid: Grid2D, theta) -> np.ndarray:
    """Corner temperatures of each cell, shape (n_cells, 4)."""
    return np.asarray(theta, dtype=float).ravel()[grid.cell_corners()]


class MechanicalProblem:
    """Assembled mechanical functional for one step with exact derivatives."""

    def __init__(self, grid: Grid2D, material: MaterialParams, inp: MechStepInput,
                 backend: str | None = None):
        self.grid, self.mp, self.inp, self.backend = grid, material, inp, backend
        n, dx = grid.n, grid.dx
        self.area = dx * dx
        self.B = grid.grad_operator()
        self.L = grid.laplacian_operator()
        self.G = grid.grad_laplacian_operator()
        self.idofs = grid.interior_dofs()
        self.B_int = self.B[:, self.idofs].tocsr()
        self.L_int = self.L[:, self.idofs].tocsr()
        self.G_int = self.G[:, self.idofs].tocsr()

        self.yp = np.asarray(inp.y_prev, dtype=float).ravel().copy()
        self.F0 = (self.B @ self.yp).reshape(-1, 4)
        thq = cell_theta_qp(grid, inp.theta_prev)
        self.beta = np.mean(thq / (1.0 + thq), axis=1)
        self.acoef = np.mean(dissipation_coefficient(thq), axis=1)
        self.const = -material.c_V * self.area * float(np.sum(np.mean(_xlogx(thq), axis=1)))
        wn = grid.node_weights().ravel()
        self.wdof = np.repeat(wn, 2)
        self.f = np.asarray(inp.f_avg, dtype=float).ravel()
        self.v = np.asarray(inp.delayed_velocity, dtype=float).ravel()
        self.inv_tau = 1.0 / inp.tau
        self.Lyp = self.L @ self.yp
        self.load_prev = float(np.sum(self.wdof * self.f * self.yp))
        # inertia penalty on boundary dofs, where the increment is zero
        bmask = np.ones(len(self.yp), dtype=bool)
        bmask[self.idofs] = False
        self.inertia_bnd = float(np.sum(self.wdof[bmask] * self.v[bmask] ** 2))
        self._quad_hess = None

    # -- energy ------------------------------------------------------------
    # The unknown is the interior increment x = y - y_prev; working with the
    # increment keeps roundoff in the 1/tau-scaled terms proportional to |x|.
    def full(self, x: np.ndarray) -> np.ndarray:
        y = self.yp.copy()
        y[self.idofs] += x
        return y

    def increment_of(self, y) -> np.ndarray:
        return np.asarray(y, dtype=float).ravel()[self.idofs] - self.yp[self.idofs]

    def _terms(self, x: np.ndarray):
        inp, mp, A = self.inp, self.mp, self.area
        F = self.F0 + (self.B_int @ x).reshape(-1, 4)
        out = kernels.cell_mech(F, self.F0, self.beta, self.acoef, self.inv_tau,
                                mp.mu, mp.gamma, mp.q_det, mp.alpha, backend=self.backend)
        if out is None:
            raise DomainError("non-positive determinant in a cell")
        ec, gc, Hc = out
        Lv = (self.Lyp + self.L_int @ x).reshape(-1, 2)
        eh, gh, Hh = kernels.node_strain_gradient(Lv, mp.p, mp.crossover, backend=self.backend)
        dG = self.G_int @ x
        dv = x * self.inv_tau - self.v[self.idofs]
        w_int = self.wdof[self.idofs]
        coef_eps = 0.5 * inp.eps * self.inv_tau * A
        coef_in = 0.5 * inp.rho * inp.tau / inp.h
        J = (A * float(np.sum(ec)) + self.const + A * float(np.sum(eh))
             + coef_eps * float(dG @ dG) - self.load_prev - float(np.sum((w_int * self.f[self.idofs]) @ x))
             + coef_in * (float(np.sum(w_int * dv * dv)) + self.inertia_bnd))
        return J, gc, Hc, gh, Hh, dG, dv

    def energy(self, x: np.ndarray) -> float:
        return self._terms(x)[0]

    def energy_grad(self, x: np.ndarray, need_hess: bool = False):
        inp, A = self.inp, self.area
        J, gc, Hc, gh, Hh, dG, dv = self._terms(x)
        g = (A * (self.B_int.T @ gc.ravel()) + A * (self.L_int.T @ gh.ravel())
             + inp.eps * self.inv_tau * A * (self.G_int.T @ dG)
             - (self.wdof * self.f)[self.idofs]
             + inp.rho / inp.h * self.wdof[self.idofs] * dv)
        if not need_hess:
            return J, g
        nc, nn = gc.shape[0], gh.shape[0]
        Hcell = sp.bsr_matrix((A * Hc, np.arange(nc), np.arange(nc + 1)), shape=(4 * nc, 4 * nc))
        Hnode = sp.bsr_matrix((A * Hh, np.arange(nn), np.arange(nn + 1)), shape=(2 * nn, 2 * nn))
        Hs = self.B_int.T @ (Hcell @ self.B_int) + self.L_int.T @ (Hnode @ self.L_int)
        return J, g, Hs.toarray() + self.quadratic_hessian()

    def quadratic_hessian(self) -> np.ndarray:
        """Constant Hessian of the third-gradient and inertia penalties."""
        if self._quad_hess is None:
            inp = self.inp
            Hq = inp.eps * self.inv_tau * self.area * (self.G_int.T @ self.G_int).toarray()
            Hq[np.diag_indices_from(Hq)] += inp.rho / (inp.h * inp.tau) * self.wdof[self.idofs]
            self._quad_hess = Hq
        return self._quad_hess

    def min_det_of(self, x: np.ndarray) -> float:
        F = self.F0 + (self.B_int @ x).reshape(-1, 4)
        return float(np.min(F[:, 0] * F[:, 3] - F[:, 1] * F[:, 2]))


# ---------------------------------------------------------------------------
# public wrappers on (n, n, 2) fields


def assemble_mech_energy(grid: Grid2D, material: MaterialParams, inp: MechStepInput, y,
                         backend: str | None = None) -> float:
    prob = MechanicalProblem(grid, material, inp, backend)
    return prob.energy(prob.increment_of(y))


def grad_mech_energy(grid: Grid2D, material: MaterialParams, inp: MechStepInput, y,
                     backend: str | None = None) -> np.ndarray:
    """Gradient with respect to interior nodal values, zero on the boundary."""
    prob = MechanicalProblem(grid, material, inp, backend)
    _, g = prob.energy_grad(prob.increment_of(y))
    out = np.zeros(2 * grid.n_nodes)
    out[prob.idofs] = g
    return out.reshape(grid.n, grid.n, 2)


def _newton_direction(H: np.ndarray, g: np.ndarray):
    """Solve (H + shift I) d = -g with the smallest working shift."""
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    shift = 0.0
    for _ in range(40):
        try:
            c = sla.cho_factor(H + shift * np.eye(len(g)), lower=False, check_finite=False)
            return -sla.cho_solve(c, g, check_finite=False), shift
        except sla.LinAlgError:
            shift = max(2.0 * shift, 1e-10 * scale)
    return -g, np.inf


def solve_mech_step(grid: Grid2D, material: MaterialParams, inp: MechStepInput, y_init=None,
                    tol: float = 1e-8, polish_tol: float = 1e-13, max_iter: int = 200,
                    max_backtracks: int = 60, backend: str | None = None, strict: bool = True):
    """Damped Newton with det-guarded Armijo line search.

    Returns ``(y, report)``.  Raises :class:`StepFailure` when no admissible
    descent step exists, or (with ``strict``) when the iteration budget runs
    out above ``tol``.
    """
    prob = MechanicalProblem(grid, material, inp, backend)
    y0 = inp.y_prev if y_init is None else y_init
    x = prob.increment_of(y0)
    rep = SolveReport(min_det=prob.min_det_of(x))
    try:
        J, g, H = prob.energy_grad(x, need_hess=True)
    except DomainError as exc:
        raise StepFailure("initial iterate is not admissible", {"reason": str(exc)}) from exc
    rep.energies.append(J)
    polish_steps = 0
    for it in range(max_iter):
        res = float(np.linalg.norm(g)) / (1.0 + abs(J))
        rep.residual = res
        if res <= polish_tol:
            break
        if res <= tol:
            # a few extra Newton steps push the residual to roundoff level
            polish_steps += 1
            if polish_steps > 4:
                break
        d, shift = _newton_direction(H, g)
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        t, accepted = 1.0, False
        tiny = abs(slope) <= 1e-13 * (1.0 + abs(J))
        for bt in range(max_backtracks):
            xt = x + t * d
            try:
                Jt, gt, Ht = prob.energy_grad(xt, need_hess=True)
                ok_det = True
            except DomainError:
                ok_det = False
            if ok_det:
                if Jt <= J + 1e-4 * t * slope:
                    accepted = True
                elif tiny and np.linalg.norm(gt) < np.linalg.norm(g):
                    # energy differences are below roundoff; judge by the gradient
                    accepted = True
            if accepted:
                break
            rep.backtracks += 1
            t *= 0.5
        if not accepted:
            if res <= tol:
                break
            raise StepFailure("line search failed", {"iteration": it, "residual": res,
                                                     "min_det": rep.min_det})
        x, J, g, H = xt, Jt, gt, Ht
        rep.iterations = it + 1
        rep.energies.append(J)
        rep.min_det = min(rep.min_det, prob.min_det_of(x))
    rep.residual = float(np.linalg.norm(g)) / (1.0 + abs(J))
    rep.converged = rep.residual <= tol
    if strict and not rep.converged:
        raise StepFailure("mechanical step did not converge", {"residual": rep.residual,
                                                               "iterations": rep.iterations})
    y = prob.full(x).reshape(grid.n, grid.n, 2)
    rep.min_det = min(rep.min_det, min_det(grid, y))
    rep.competitor_gap = J - prob.energy(np.zeros_like(x))
    return y, rep
