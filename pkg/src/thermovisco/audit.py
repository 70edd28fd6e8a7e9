"""Energy bookkeeping, discrete balance identities and a priori monitors.

Everything here is evaluated from the stored trajectory with the pointwise
constitutive functions, independently of the assembled solver gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import Grid2D, grad_cells, laplacian_nodes
from .materials import (eval_DH, eval_dR_dFdot, eval_H, eval_Wcpl, eval_Wel, eval_xi, dWcpl_dF,
                        grad_Wel)
from .mechanics import cell_theta_qp
from .thermal import build_thermal_input, conduction_matrix

LEDGER_COLUMNS = [
    "step", "t", "M", "Wcpl", "Win_total", "E_total", "kinetic_window", "diss_step", "diss_cum",
    "flux_cum", "work_cum", "res_internal", "res_mech_identity", "drift_total", "V_k", "G_k",
    "min_theta", "min_det", "monitor_weighted_H1", "monitor_eps_strainrate",
    # extra bookkeeping columns
    "delay_diss_cum", "drift_scheme", "res_internal_scale", "res_mech_scale", "coupling_work_cum",
    "mech_slack", "lambda_convexity", "h_convexity_min",
]


@dataclass
class EnergyLedger:
    columns: dict
    summary: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def rows(self):
        n = len(self.columns["step"])
        for i in range(n):
            yield [self.columns[c][i] for c in LEDGER_COLUMNS]


# ---------------------------------------------------------------------------
# pointwise discrete functionals


def _cellF(grid: Grid2D, y) -> np.ndarray:
    return grad_cells(grid, y).reshape(-1, 2, 2)


def _qp(F, thq):
    return np.broadcast_to(F[:, None], thq.shape + (2, 2))


def mechanical_energy(grid: Grid2D, mp, y) -> float:
    A = grid.dx ** 2
    lap = laplacian_nodes(grid, y).reshape(-1, 2)
    return A * float(np.sum(eval_Wel(_cellF(grid, y), mp))) + A * float(np.sum(eval_H(lap, mp)))


def elastic_sum(grid: Grid2D, mp, y) -> float:
    return grid.dx ** 2 * float(np.sum(eval_Wel(_cellF(grid, y), mp)))


def l2_nodal(grid: Grid2D, v) -> float:
    """Squared discrete L2 norm of a nodal vector field."""
    return float(np.sum(grid.node_weights()[..., None] * np.asarray(v) ** 2))


def edge_grad_lap(grid: Grid2D, y) -> np.ndarray:
    return (grid.grad_laplacian_operator() @ np.asarray(y).ravel()).reshape(-1, 2)


def mech_identity_terms(traj, k: int) -> dict:
    """Terms of the mechanical Euler-Lagrange equation tested with z = delta y^k."""
    grid, cfg, mp = traj.grid, traj.config, traj.config.material
    A, tau = grid.dx ** 2, traj.tau
    y_new, y_old = traj.y(k), traj.y(k - 1)
    thq = cell_theta_qp(grid, traj.thetas[k - 1])
    F1, F0 = _cellF(grid, y_new), _cellF(grid, y_old)
    dF = (F1 - F0) / tau
    dy = traj.velocity(k)
    lap1 = laplacian_nodes(grid, y_new).reshape(-1, 2)
    dlap = (lap1 - laplacian_nodes(grid, y_old).reshape(-1, 2)) / tau
    dg = (edge_grad_lap(grid, y_new) - edge_grad_lap(grid, y_old)) / tau
    wn = grid.node_weights()[..., None]
    return {
        "elastic": A * float(np.sum(grad_Wel(F1, mp) * dF)),
        "coupling": 0.25 * A * float(np.sum(dWcpl_dF(_qp(F1, thq), thq, mp) * _qp(dF, thq))),
        "viscous": 0.25 * A * float(np.sum(eval_dR_dFdot(_qp(F0, thq), _qp(dF, thq), thq) * _qp(dF, thq))),
        "strain_gradient": A * float(np.sum(eval_DH(lap1, mp) * dlap)),
        "regularization": cfg.eps * A * float(np.sum(dg * dg)),
        "load": -float(np.sum(wn * traj.f_avg[k] * dy)),
        "inertia": cfg.rho / cfg.h * float(np.sum(wn * (dy - traj.velocity(k - traj.m)) * dy)),
    }


def step_mechanical_identity(traj, k: int) -> tuple[float, float]:
    """(|sum of terms|, sum of |terms|) for step k."""
    terms = mech_identity_terms(traj, k)
    vals = np.array(list(terms.values()))
    return abs(float(np.sum(vals))), float(np.sum(np.abs(vals)))


def internal_balance_terms(traj, k: int) -> dict:
    grid, cfg, mp = traj.grid, traj.config, traj.config.material
    A, tau = grid.dx ** 2, traj.tau
    tinp = build_thermal_input(grid, mp, traj.y(k), traj.y(k - 1), traj.thetas[k - 1], traj.ws[k - 1],
                               traj.theta_b_avg[k], tau, cfg.eps, cfg.kappa)
    bw = grid.boundary_weights()
    return {
        "internal_change": 0.25 * A * float(np.sum(traj.ws[k] - traj.ws[k - 1])),
        "boundary_flux": tau * cfg.kappa * float(np.sum(bw * (traj.thetas[k] - traj.theta_b_avg[k]))),
        "dissipation": -tau * 0.25 * A * float(np.sum(tinp.dissipation_source)),
        "regularization": -tau * A * float(np.sum(tinp.eps_source)),
        "coupling": -tau * 0.25 * A * float(np.sum(tinp.coupling_source)),
    }


def step_internal_balance(traj, k: int) -> tuple[float, float]:
    terms = internal_balance_terms(traj, k)
    vals = np.array(list(terms.values()))
    return abs(float(np.sum(vals))), float(np.sum(np.abs(vals)))


def weighted_h1(grid: Grid2D, mp, y) -> float:
    """sum_edges |edge| (1 + |lap y|)^(p-2) |grad lap y|^2 with endpoint-averaged |lap y|."""
    lap = np.linalg.norm(laplacian_nodes(grid, y).reshape(-1, 2), axis=1)
    a, b, _ = grid.edges()
    rank = grid.interior_node_rank()
    wt = (1.0 + 0.5 * (lap[rank[a]] + lap[rank[b]])) ** (mp.p - 2)
    g = edge_grad_lap(grid, y)
    return grid.dx ** 2 * float(np.sum(wt * np.einsum("ei,ei->e", g, g)))


# ---------------------------------------------------------------------------
# ledger


def build_ledger(traj) -> EnergyLedger:
    grid, cfg, mp = traj.grid, traj.config, traj.config.material
    A, tau, N, m = grid.dx ** 2, traj.tau, traj.N, traj.m
    wn = grid.node_weights()[..., None]
    bw = grid.boundary_weights()
    cols = {c: np.zeros(N + 1) for c in LEDGER_COLUMNS}
    vel_sq = {}

    def kin_sq(l):
        if l not in vel_sq:
            vel_sq[l] = l2_nodal(grid, traj.velocity(l))
        return vel_sq[l]

    diss_cum = flux_cum = work_cum = delay_cum = cpl_cum = V = mon_w = mon_e = 0.0
    lam_max = 0.0
    hconv_min = np.inf
    for k in range(N + 1):
        y, th = traj.y(k), traj.thetas[k]
        F = _cellF(grid, y)
        thq = cell_theta_qp(grid, th)
        Mk = mechanical_energy(grid, mp, y)
        Win = 0.25 * A * float(np.sum(traj.ws[k]))
        kin = 0.5 * cfg.rho * tau / cfg.h * sum(kin_sq(l) for l in range(k - m + 1, k + 1))
        row = {"step": k, "t": k * tau, "M": Mk,
               "Wcpl": 0.25 * A * float(np.sum(eval_Wcpl(_qp(F, thq), thq, mp))),
               "Win_total": Win, "E_total": Mk + Win, "kinetic_window": kin,
               "min_theta": float(th.min()), "min_det": float(np.min(np.linalg.det(F)))}
        if k >= 1:
            y0_, thq0 = traj.y(k - 1), cell_theta_qp(grid, traj.thetas[k - 1])
            F0 = _cellF(grid, y0_)
            dF = (F - F0) / tau
            dy = traj.velocity(k)
            dg = (edge_grad_lap(grid, y) - edge_grad_lap(grid, y0_)) / tau
            eps_term = A * float(np.sum(dg * dg))
            xi = 0.25 * A * float(np.sum(eval_xi(_qp(F0, thq0), _qp(dF, thq0), thq0)))
            row["diss_step"] = tau * (xi + cfg.eps * eps_term)
            diss_cum += row["diss_step"]
            flux_cum += tau * cfg.kappa * float(np.sum(bw * (traj.theta_b_avg[k] - th)))
            work_cum += tau * float(np.sum(wn * traj.f_avg[k] * dy))
            delay_cum += tau * 0.5 * cfg.rho / cfg.h * l2_nodal(grid, dy - traj.velocity(k - m))
            cpl_cum += tau * 0.25 * A * float(np.sum(dWcpl_dF(_qp(F0, thq0), thq0, mp) * _qp(dF, thq0)))
            V += tau * A * float(np.sum(dF * dF))
            mon_e += tau * cfg.eps * eps_term
            mon_w += tau * weighted_h1(grid, mp, y)
            row["res_internal"], row["res_internal_scale"] = step_internal_balance(traj, k)
            row["res_mech_identity"], row["res_mech_scale"] = step_mechanical_identity(traj, k)
            # convexity checks between consecutive states
            dFF = A * float(np.sum((F - F0) ** 2))
            gap = elastic_sum(grid, mp, y) + A * float(np.sum(grad_Wel(F, mp) * (F0 - F))) - elastic_sum(grid, mp, y0_)
            if dFF > 0:
                lam_max = max(lam_max, gap / dFF)
            l1 = laplacian_nodes(grid, y).reshape(-1, 2)
            l0 = laplacian_nodes(grid, y0_).reshape(-1, 2)
            hgap = eval_H(l0, mp) - eval_H(l1, mp) - np.sum(eval_DH(l1, mp) * (l0 - l1), axis=1)
            hconv_min = min(hconv_min, float(hgap.min()))
        row.update({"diss_cum": diss_cum, "flux_cum": flux_cum, "work_cum": work_cum, "V_k": V,
                    "delay_diss_cum": delay_cum, "coupling_work_cum": cpl_cum,
                    "monitor_weighted_H1": mon_w, "monitor_eps_strainrate": mon_e,
                    "lambda_convexity": lam_max, "h_convexity_min": hconv_min if k else 0.0})
        f_now = cfg.forcing.force(grid, k * tau)
        row["G_k"] = row["E_total"] - float(np.sum(wn * f_now * y)) + kin
        for c, v in row.items():
            cols[c][k] = v

    cols["step"] = cols["step"].astype(np.int64)
    base = cols["E_total"][0] + cols["kinetic_window"][0]
    cols["drift_total"] = cols["E_total"] + cols["kinetic_window"] - base - cols["flux_cum"] - cols["work_cum"]
    cols["drift_scheme"] = cols["drift_total"] + cols["delay_diss_cum"]
    # mechanical energy inequality: left side minus data side; positive part is the slack
    lhs = cols["M"] + cols["kinetic_window"] + cols["diss_cum"] + cols["delay_diss_cum"]
    rhs = cols["M"][0] + cols["kinetic_window"][0] - cols["coupling_work_cum"] + cols["work_cum"]
    cols["mech_slack"] = lhs - rhs

    res = cols["res_internal"][1:]
    summary = {
        "max_G": float(np.max(cols["G_k"])),
        "V_final": float(cols["V_k"][-1]),
        "eps_monitor": float(cols["monitor_eps_strainrate"][-1]),
        "weighted_H1": float(cols["monitor_weighted_H1"][-1]),
        "sup_M": float(np.max(cols["M"])),
        "min_det": float(np.min(cols["min_det"])),
        "min_theta": float(np.min(cols["min_theta"])),
        "max_abs_drift": float(np.max(np.abs(cols["drift_total"]))),
        "max_abs_drift_scheme": float(np.max(np.abs(cols["drift_scheme"]))),
        "lambda_convexity": float(lam_max),
        "h_convexity_min": float(hconv_min) if N else 0.0,
        "max_mech_slack": float(np.max(cols["mech_slack"])),
        "slack_over_tauV": float(np.max(cols["mech_slack"][1:]) / (tau * V)) if N and V > 0 else 0.0,
        "internal_residual_signs": {"positive": int(np.sum(_signed_internal(traj) > 0)),
                                    "negative": int(np.sum(_signed_internal(traj) < 0))} if N else {},
        "eps_data_bound": float(cols["M"][0] + cols["kinetic_window"][0] + np.max(np.abs(cols["work_cum"]))
                                + np.max(np.abs(cols["coupling_work_cum"]))),
        "max_res_internal_ratio": float(np.max(res / np.maximum(cols["res_internal_scale"][1:], 1e-300)))
        if N else 0.0,
        "max_res_mech_ratio": float(np.max(cols["res_mech_identity"][1:]
                                           / np.maximum(cols["res_mech_scale"][1:], 1e-300))) if N else 0.0,
    }
    return EnergyLedger(cols, summary)


def _signed_internal(traj) -> np.ndarray:
    return np.array([sum(internal_balance_terms(traj, k).values()) for k in range(1, traj.N + 1)])


def total_balance_drift(ledger: EnergyLedger, include_delay: bool = False) -> np.ndarray:
    return ledger["drift_scheme" if include_delay else "drift_total"]


def apriori_monitors(ledger: EnergyLedger) -> dict:
    s = ledger.summary
    return {"max_G": s["max_G"], "V_final": s["V_final"], "eps_monitor": s["eps_monitor"],
            "sup_M": s["sup_M"], "min_det": s["min_det"], "weighted_H1": s["weighted_H1"]}


# ---------------------------------------------------------------------------
# weak heat residual


def psi_default(X):
    return 1.0 + np.cos(np.pi * X[..., 0]) * np.cos(np.pi * X[..., 1])


def eta_default(T: float) -> Callable[[float], float]:
    return lambda t: float(np.cos(0.5 * np.pi * t / T))


def eta_step(t_cut: float, tau: float) -> Callable[[float], float]:
    """Limit of the hat test function: 1 on the first t_cut/tau steps, 0 after."""
    return lambda t: 1.0 if t < t_cut - 0.5 * tau else 0.0


def _energy_density_pairing(traj, k: int, psi_n: np.ndarray, vel_sq_psi) -> float:
    """Pairing of the total energy density at level k with psi."""
    grid, cfg, mp = traj.grid, traj.config, traj.config.material
    A = grid.dx ** 2
    y = traj.y(k)
    corners = grid.cell_corners()
    psi_flat = psi_n.ravel()
    psi_c = psi_flat[corners].mean(axis=1)
    lap = laplacian_nodes(grid, y).reshape(-1, 2)
    psi_int = psi_n[1:-1, 1:-1].ravel()
    val = A * float(np.sum(eval_Wel(_cellF(grid, y), mp) * psi_c))
    val += A * float(np.sum(eval_H(lap, mp) * psi_int))
    val += 0.25 * A * float(np.sum(traj.ws[k] * psi_flat[corners]))
    val += 0.5 * cfg.rho * traj.tau / cfg.h * sum(vel_sq_psi(l) for l in range(k - traj.m + 1, k + 1))
    return val


def weak_heat_residual(traj, psi: Callable = psi_default, eta: Callable[[float], float] | None = None) -> float:
    """Discrete residual of the ε-free weak heat equation for phi = psi(x) eta(t).

    Time derivatives of the energy density are summed by parts with weights
    e_k = eta((k-1) tau); conduction uses the stiffness frozen at the old state.
    With psi = 1 and the step test function this reproduces the total drift.
    """
    grid, cfg, mp = traj.grid, traj.config, traj.config.material
    A, tau, N = grid.dx ** 2, traj.tau, traj.N
    if eta is None:
        eta = eta_default(cfg.T)
    X = grid.coords()
    psi_n = np.asarray(psi(X), dtype=float) * np.ones((grid.n, grid.n))
    wn = grid.node_weights()
    bw = grid.boundary_weights()
    cache = {}

    def vel_sq_psi(l):
        if l not in cache:
            cache[l] = float(np.sum(wn * psi_n * np.sum(traj.velocity(l) ** 2, axis=-1)))
        return cache[l]

    # discrete derivatives of psi
    gpsi = grad_cells(grid, np.stack([psi_n, np.zeros_like(psi_n)], axis=-1))[..., 0, :].reshape(-1, 2)
    lap_psi = laplacian_nodes(grid, np.stack([psi_n, np.zeros_like(psi_n)], axis=-1))[..., 0].ravel()
    corners = grid.cell_corners()
    n = grid.n
    # all grid edges (i, j) -> (i+1, j) and (i, j) -> (i, j+1)
    I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    ea = np.concatenate([(I[:-1] * n + J[:-1]).ravel(), (I[:, :-1] * n + J[:, :-1]).ravel()])
    eb = np.concatenate([(I[1:] * n + J[1:]).ravel(), (I[:, 1:] * n + J[:, 1:]).ravel()])
    psi_f = psi_n.ravel()
    dpsi_e = (psi_f[eb] - psi_f[ea]) / grid.dx

    total = 0.0
    E_prev = _energy_density_pairing(traj, 0, psi_n, vel_sq_psi)
    for k in range(1, N + 1):
        e_k = eta((k - 1) * tau)
        E_k = _energy_density_pairing(traj, k, psi_n, vel_sq_psi)
        if e_k == 0.0:
            E_prev = E_k
            continue
        y, y0_ = traj.y(k), traj.y(k - 1)
        th, th0 = traj.thetas[k], traj.thetas[k - 1]
        thq0 = cell_theta_qp(grid, th0)
        F, F0 = _cellF(grid, y), _cellF(grid, y0_)
        dF = (F - F0) / tau
        dy = traj.velocity(k)
        K = conduction_matrix(grid, mp, y0_, th0)
        cond = float(th.ravel() @ (K @ psi_f))
        robin = cfg.kappa * float(np.sum(bw * (th - traj.theta_b_avg[k]) * psi_n))
        load = -float(np.sum(wn * psi_n * np.sum(traj.f_avg[k] * dy, axis=-1)))
        stress = grad_Wel(F, mp) + (dWcpl_dF(_qp(F, thq0), thq0, mp)
                                    + eval_dR_dFdot(_qp(F0, thq0), _qp(dF, thq0), thq0)).mean(axis=1)
        dy_c = dy.reshape(-1, 2)[corners].mean(axis=1)
        transport = A * float(np.einsum("cab,ca,cb->", stress, dy_c, gpsi))
        DH = np.zeros((n * n, 2))
        DH[grid.interior_node_rank() >= 0] = eval_DH(laplacian_nodes(grid, y).reshape(-1, 2), mp)
        dy_int = dy[1:-1, 1:-1].reshape(-1, 2)
        dh_lap = -A * float(np.sum(DH[grid.interior_node_rank() >= 0] * dy_int * lap_psi[:, None]))
        dDH = (DH[eb] - DH[ea]) / grid.dx
        dy_e = 0.5 * (dy.reshape(-1, 2)[ea] + dy.reshape(-1, 2)[eb])
        dh_grad = -2.0 * A * float(np.sum(np.sum(dDH * dy_e, axis=1) * dpsi_e))
        total += e_k * (E_k - E_prev) + tau * e_k * (cond + robin + load + transport + dh_lap + dh_grad)
        E_prev = E_k
    return total
