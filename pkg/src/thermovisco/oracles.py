"""Independent checks of the constitutive formulas and of the step solvers.

Derivatives are compared with central differences of the energies only, so
no analytic derivative code is shared with the routine being checked.  The
brute-force minimizer evaluates the step functional from numpy slices of the
nodal array instead of the sparse operators used by the solver.

Analytic routines are looked up on the ``materials`` module at call time, so
a patched (deliberately broken) derivative is picked up by the checks.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import materials as mat
from .grid import Grid2D
from .mechanics import MechanicalProblem, MechStepInput, solve_mech_step
from .thermal import ThermalProblem, build_thermal_input, internal_energy_qp

FD_STEP = 1e-5
FD_TOL = 1e-6
SYMMETRY_TOL = 1e-12


@dataclass
class OracleReport:
    name: str
    samples: int
    max_error: float
    tolerance: float
    seed: int
    passed: bool = field(init=False)
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.max_error = float(self.max_error)
        self.passed = bool(self.max_error <= self.tolerance)

    def to_dict(self) -> dict:
        return asdict(self)


def reports_to_json(reports: list[OracleReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True, default=float)


def _rng(seed: int, tag: str) -> np.random.Generator:
    # per-check streams derived from the master seed
    return np.random.default_rng([int(seed), sum(ord(c) * 31 ** i for i, c in enumerate(tag)) % (2 ** 32)])


# ---------------------------------------------------------------------------
# random samples


def random_rotation(rng, size=None) -> np.ndarray:
    """Rotations from the QR factorization of Gaussian matrices, det fixed to +1."""
    shape = () if size is None else (size,)
    G = rng.standard_normal(shape + (2, 2))
    Q, R = np.linalg.qr(G)
    Q = Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[..., None, :]
    flip = np.linalg.det(Q) < 0
    Q[flip, :, 1] *= -1.0
    return Q


def random_deformation_gradients(rng, size: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    """F = R1 diag(s1, s2) R2 with singular values in [lo, hi]."""
    s = rng.uniform(lo, hi, (size, 2))
    D = np.zeros((size, 2, 2))
    D[:, 0, 0], D[:, 1, 1] = s[:, 0], s[:, 1]
    return random_rotation(rng, size) @ D @ random_rotation(rng, size)


def _strain_gradient_vectors(rng, size: int, mp: mat.MaterialParams, margin: float = 1e-3) -> np.ndarray:
    """Vectors with |v| in (0, 2], kept away from the branch switch of h."""
    r = rng.uniform(0.05, 2.0, size)
    near = np.abs(r - mp.crossover) < margin
    r[near] += 4 * margin
    ang = rng.uniform(0, 2 * np.pi, size)
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)


# ---------------------------------------------------------------------------
# central differences


def _fd_matrix(fun, X):
    """Central-difference derivative of a scalar map of 2x2 matrices."""
    out = np.zeros_like(X)
    for i in range(2):
        for j in range(2):
            E = np.zeros((2, 2))
            E[i, j] = FD_STEP
            out[..., i, j] = (fun(X + E) - fun(X - E)) / (2 * FD_STEP)
    return out


def _fd_vector(fun, v):
    out = np.zeros_like(v)
    for i in range(v.shape[-1]):
        e = np.zeros(v.shape[-1])
        e[i] = FD_STEP
        out[..., i] = (fun(v + e) - fun(v - e)) / (2 * FD_STEP)
    return out


def _fd_scalar(fun, t):
    return (fun(t + FD_STEP) - fun(t - FD_STEP)) / (2 * FD_STEP)


def _rel_error(analytic, reference) -> np.ndarray:
    """Per-sample max-norm error relative to the larger of the two magnitudes."""
    a = np.asarray(analytic, float)
    r = np.asarray(reference, float)
    ax = tuple(range(1, a.ndim))
    num = np.max(np.abs(a - r), axis=ax) if ax else np.abs(a - r)
    den = np.maximum(np.max(np.abs(a), axis=ax) if ax else np.abs(a),
                     np.max(np.abs(r), axis=ax) if ax else np.abs(r))
    return num / np.maximum(den, 1e-8)


def _report(name, errors, seed, tol, samples=None, dump=None) -> OracleReport:
    errors = np.atleast_1d(np.asarray(errors, float))
    worst = int(np.argmax(errors))
    details = {"worst_sample": worst}
    if dump is not None:
        details["worst_input"] = np.asarray(dump[worst]).tolist()
    return OracleReport(name, int(samples or errors.size), float(errors.max()), tol, int(seed), details)


# ---------------------------------------------------------------------------
# derivative suite


def fd_gradient_suite(seed: int = 0, material: mat.MaterialParams | None = None,
                      n_samples: int = 200, mech_samples: int = 200) -> list[OracleReport]:
    mp = material or mat.MaterialParams()
    rng = _rng(seed, "fd")
    F = random_deformation_gradients(rng, n_samples)
    th = rng.uniform(0.1, 3.0, n_samples)
    Fd = rng.standard_normal((n_samples, 2, 2))
    v = _strain_gradient_vectors(rng, n_samples, mp)
    out = []

    def add(name, analytic, reference, dump):
        out.append(_report(name, _rel_error(analytic, reference), seed, FD_TOL, dump=dump))

    add("grad_Wel", mat.grad_Wel(F, mp), _fd_matrix(lambda X: mat.eval_Wel(X, mp), F), F)
    add("DH", mat.eval_DH(v, mp), _fd_vector(lambda w: mat.eval_H(w, mp), v), v)
    d2h_fd = np.stack([_fd_vector(lambda w: mat.eval_DH(w, mp)[:, a], v) for a in range(2)], axis=1)
    add("D2H", mat.eval_D2H(v, mp), d2h_fd, v)
    add("dWcpl_dF", mat.dWcpl_dF(F, th, mp), _fd_matrix(lambda X: mat.eval_Wcpl(X, th, mp), F), F)
    add("dWcpl_dtheta", mat.dWcpl_dtheta(F, th, mp), _fd_scalar(lambda t: mat.eval_Wcpl(F, t, mp), th), th)
    add("d2Wcpl_dtheta2", mat.d2Wcpl_dtheta2(F, th, mp),
        _fd_scalar(lambda t: mat.dWcpl_dtheta(F, t, mp), th), th)
    add("d2Wcpl_dFdtheta", mat.d2Wcpl_dFdtheta(F, th, mp),
        _fd_scalar(lambda t: mat.dWcpl_dF(F, t, mp), th), th)
    hess_fd = np.stack([np.stack([_fd_matrix(lambda X: mat.dWcpl_dF(X, th, mp)[:, a, b], F)
                                  for b in range(2)], axis=1) for a in range(2)], axis=1)
    add("d2Wcpl_dF2", mat.d2Wcpl_dF2(F, th, mp), hess_fd, F)
    # heat capacity against its definition -theta d2W_cpl/dtheta2
    add("heat_capacity", mat.heat_capacity(F, th, mp),
        -th * _fd_scalar(lambda t: mat.dWcpl_dtheta(F, t, mp), th), th)
    add("dWin_dtheta", mat.dWin_dtheta(F, th, mp), _fd_scalar(lambda t: mat.eval_Win(F, t, mp), th), th)
    add("primitive_Win", mat.eval_Win(F, th, mp), _fd_scalar(lambda t: mat.primitive_Win(F, t, mp), th), th)
    add("dR_dFdot", mat.eval_dR_dFdot(F, Fd, th), _fd_matrix(lambda X: mat.eval_R(F, X, th), Fd), Fd)
    out.extend(mechanical_fd_checks(seed, mp, mech_samples))
    out.extend(thermal_fd_checks(seed, mp, mech_samples))
    return out


def random_step_input(rng, grid: Grid2D, perturb: float = 0.05, force: float = 1.0,
                      tau: float = 1 / 320, h: float = 1 / 40, eps: float = 1e-3, rho: float = 1.0):
    """A random admissible mechanical step input on ``grid``."""
    y = grid.identity().copy()
    y[1:-1, 1:-1] += perturb * grid.dx * rng.uniform(-1, 1, (grid.n - 2, grid.n - 2, 2))
    theta = rng.uniform(0.2, 2.0, (grid.n, grid.n))
    v = rng.uniform(-1, 1, (grid.n, grid.n, 2))
    v[0, :] = v[-1, :] = v[:, 0] = v[:, -1] = 0.0
    f = force * rng.uniform(-1, 1, (grid.n, grid.n, 2))
    return MechStepInput(y, theta, v, f, tau, h, eps, rho)


def mechanical_fd_checks(seed: int, mp: mat.MaterialParams, n_samples: int) -> list[OracleReport]:
    rng = _rng(seed, "mech")
    grid = Grid2D(4)
    gerr, herr = [], []
    for _ in range(n_samples):
        inp = random_step_input(rng, grid)
        prob = MechanicalProblem(grid, mp, inp)
        while True:
            x = prob.increment_of(inp.y_prev) + 0.02 * grid.dx * rng.uniform(-1, 1, len(prob.idofs))
            # the Hessian of H jumps where |lap y| crosses the branch radius
            lap = np.linalg.norm((prob.Lyp + prob.L_int @ x).reshape(-1, 2), axis=1)
            if np.min(np.abs(lap - mp.crossover)) > 1e-3:
                break
        _, g, H = prob.energy_grad(x, need_hess=True)
        fd_g = np.zeros_like(x)
        fd_H = np.zeros_like(H)
        for i in range(len(x)):
            e = np.zeros_like(x)
            e[i] = FD_STEP
            fd_g[i] = (prob.energy(x + e) - prob.energy(x - e)) / (2 * FD_STEP)
            fd_H[:, i] = (prob.energy_grad(x + e)[1] - prob.energy_grad(x - e)[1]) / (2 * FD_STEP)
        gerr.append(_rel_error(g[None], fd_g[None])[0])
        herr.append(_rel_error(H[None], fd_H[None])[0])
    return [_report("mech_functional_gradient", gerr, seed, FD_TOL),
            _report("mech_functional_hessian", herr, seed, FD_TOL)]


def thermal_fd_checks(seed: int, mp: mat.MaterialParams, n_samples: int) -> list[OracleReport]:
    rng = _rng(seed, "thermal")
    grid = Grid2D(4)
    gerr, herr = [], []
    for _ in range(n_samples):
        inp = random_step_input(rng, grid)
        y_new = inp.y_prev.copy()
        y_new[1:-1, 1:-1] += 0.01 * grid.dx * rng.uniform(-1, 1, (2, 2, 2))
        w_prev = internal_energy_qp(grid, mp, inp.y_prev, inp.theta_prev)
        tinp = build_thermal_input(grid, mp, y_new, inp.y_prev, inp.theta_prev, w_prev,
                                   np.full((4, 4), 1.0), inp.tau, inp.eps, 1.0)
        prob = ThermalProblem(grid, mp, tinp)
        th = rng.uniform(0.2, 2.0, grid.n_nodes)
        g, H = prob.gradient(th), prob.hessian(th).toarray()
        fd_g = np.zeros_like(th)
        fd_H = np.zeros_like(H)
        for i in range(len(th)):
            e = np.zeros_like(th)
            e[i] = FD_STEP
            fd_g[i] = (prob.value(th + e) - prob.value(th - e)) / (2 * FD_STEP)
            fd_H[:, i] = (prob.gradient(th + e) - prob.gradient(th - e)) / (2 * FD_STEP)
        gerr.append(_rel_error(g[None], fd_g[None])[0])
        herr.append(_rel_error(H[None], fd_H[None])[0])
    return [_report("thermal_functional_gradient", gerr, seed, FD_TOL),
            _report("thermal_functional_hessian", herr, seed, FD_TOL)]


# ---------------------------------------------------------------------------
# frame indifference and pointwise identities


QUARTER_TURN = np.array([[0.0, -1.0], [1.0, 0.0]])


def _invariance_errors(mp, F, Fd, th, v, Q):
    def rel(a, b):
        return np.abs(a - b) / (1.0 + np.abs(b))

    QF, QFd = Q @ F, Q @ Fd
    Qv = np.einsum("...ij,...j->...i", Q, v)
    return {
        "Wel": rel(mat.eval_Wel(QF, mp), mat.eval_Wel(F, mp)),
        "Wcpl": rel(mat.eval_Wcpl(QF, th, mp), mat.eval_Wcpl(F, th, mp)),
        "H": rel(mat.eval_H(Qv, mp), mat.eval_H(v, mp)),
        "R": rel(mat.eval_R(QF, QFd, th), mat.eval_R(F, Fd, th)),
    }


def symmetry_suite(seed: int = 0, material: mat.MaterialParams | None = None,
                   n_samples: int = 1000) -> list[OracleReport]:
    mp = material or mat.MaterialParams()
    rng = _rng(seed, "symmetry")
    F = random_deformation_gradients(rng, n_samples)
    Fd = rng.standard_normal((n_samples, 2, 2))
    th = rng.uniform(0.0, 3.0, n_samples)
    v = rng.standard_normal((n_samples, 2))
    out = []
    cases = [("random_rotation", random_rotation(rng, n_samples), SYMMETRY_TOL),
             ("quarter_turn", QUARTER_TURN, 1e-14),
             ("identity", np.eye(2), 0.0)]
    for label, Q, tol in cases:
        for name, err in _invariance_errors(mp, F, Fd, th, v, Q).items():
            out.append(_report(f"frame_{name}_{label}", err, seed, tol))
    return out


def constitutive_identity_suite(seed: int = 0, n_samples: int = 1000) -> list[OracleReport]:
    """Dissipation rate equals twice the potential; viscous stress is linear in the rate."""
    rng = _rng(seed, "identity")
    F = random_deformation_gradients(rng, n_samples)
    F1 = rng.standard_normal((n_samples, 2, 2))
    F2 = rng.standard_normal((n_samples, 2, 2))
    th = rng.uniform(0.0, 3.0, n_samples)
    a, b = rng.uniform(-2, 2, (2, n_samples))
    R = mat.eval_R(F, F1, th)
    xi_err = np.abs(mat.eval_xi(F, F1, th) - 2 * R) / (1.0 + np.abs(R))
    S1, S2 = mat.eval_dR_dFdot(F, F1, th), mat.eval_dR_dFdot(F, F2, th)
    comb = mat.eval_dR_dFdot(F, a[:, None, None] * F1 + b[:, None, None] * F2, th)
    lin = a[:, None, None] * S1 + b[:, None, None] * S2
    scale = 1.0 + np.abs(a) * np.abs(S1).max(axis=(1, 2)) + np.abs(b) * np.abs(S2).max(axis=(1, 2))
    lin_err = np.abs(comb - lin).max(axis=(1, 2)) / scale
    return [_report("xi_equals_2R", xi_err, seed, SYMMETRY_TOL),
            _report("viscous_stress_linearity", lin_err, seed, SYMMETRY_TOL)]


def bound_audit(seed: int = 0, material: mat.MaterialParams | None = None,
                n_samples: int = 5000) -> list[OracleReport]:
    """Tightest constants observed for the growth and coercivity bounds.

    Each report's ``max_error`` is the smallest constant that makes the bound
    hold on the samples; it passes when that constant is at most ``C0``.
    """
    mp = material or mat.MaterialParams()
    C0 = mp.C0
    rng = _rng(seed, "bounds")
    F = random_deformation_gradients(rng, n_samples, 0.05, 5.0)
    G = random_deformation_gradients(rng, n_samples, 0.05, 5.0)
    th = np.exp(rng.uniform(np.log(1e-3), np.log(1e3), n_samples))
    v = rng.standard_normal((n_samples, 2)) * np.exp(rng.uniform(-5, 2, n_samples))[:, None]
    Cd = rng.standard_normal((n_samples, 2, 2))
    Cd = Cd + Cd.swapaxes(1, 2)
    out = []
    frob = np.sqrt(mat.frob2(F))
    W = mat.eval_Wel(F, mp)
    X = mat.frob2(F) + mat.det2(F) ** (-mp.q_det)
    # smallest C with W >= X / C - C, in a cancellation-free form
    out.append(_report("bound_Wel_lower", 2 * X / (W + np.sqrt(W * W + 4 * X)), seed, C0))
    out.append(OracleReport("Wel_nonnegative", n_samples, max(0.0, -float(W.min())), 1e-14, seed))
    s = np.linalg.norm(v, axis=1)
    H = mat.eval_H(v, mp)
    out.append(OracleReport("bound_H_lower", n_samples, float(np.max(s ** mp.p / H)), 1.0 + 1e-12, seed))
    out.append(_report("bound_H_upper", H / (1.0 + s ** mp.p), seed, C0))
    out.append(_report("bound_DH_upper", np.linalg.norm(mat.eval_DH(v, mp), axis=1) / (1.0 + s ** (mp.p - 1)),
                       seed, C0))
    dW = np.abs(mat.eval_Wcpl(F, th, mp) - mat.eval_Wcpl(G, th, mp))
    dist = np.sqrt(mat.frob2(F - G))
    out.append(_report("bound_Wcpl_lipschitz", dW / ((1 + frob + np.sqrt(mat.frob2(G))) * dist), seed, C0))
    hess = np.sqrt(np.sum(mat.d2Wcpl_dF2(F, th, mp) ** 2, axis=(1, 2, 3, 4)))
    out.append(_report("bound_Wcpl_FF", hess, seed, C0))
    mixed = np.sqrt(mat.frob2(mat.d2Wcpl_dFdtheta(F, th, mp)))
    out.append(_report("bound_Wcpl_Ftheta", mixed * np.maximum(th, 1.0) / (1 + frob), seed, C0))
    cap = -th * mat.d2Wcpl_dtheta2(F, th, mp)
    out.append(_report("bound_heat_capacity", np.maximum(cap, 1.0 / cap), seed, C0))
    Cdot_D = 2.0 * mat.eval_R(np.broadcast_to(np.eye(2), Cd.shape), 0.5 * Cd, th)
    ratio = Cdot_D / mat.frob2(Cd)
    out.append(_report("bound_dissipation", np.maximum(ratio, 1.0 / ratio), seed, C0))
    eig = np.linalg.eigvalsh(mat.conductivity(th, mp))
    out.append(_report("bound_conductivity", np.maximum(eig.max(axis=1), 1.0 / eig.min(axis=1)), seed, C0))
    win = mat.eval_Win(F, th, mp)
    out.append(_report("bound_internal_energy", np.maximum(win / th, th / win), seed, C0))
    return out


# ---------------------------------------------------------------------------
# brute-force minimization of the mechanical step functional


def _cell_gradients(Y, dx):
    """(S, n, n, 2) nodal fields -> (S, n-1, n-1, 2, 2) cell-centred gradients."""
    d1 = 0.5 * (Y[:, 1:, :-1] - Y[:, :-1, :-1] + Y[:, 1:, 1:] - Y[:, :-1, 1:]) / dx
    d2 = 0.5 * (Y[:, :-1, 1:] - Y[:, :-1, :-1] + Y[:, 1:, 1:] - Y[:, 1:, :-1]) / dx
    return np.stack([d1, d2], axis=-1)


def _laplacians(Y, dx):
    return (Y[:, 2:, 1:-1] + Y[:, :-2, 1:-1] + Y[:, 1:-1, 2:] + Y[:, 1:-1, :-2]
            - 4 * Y[:, 1:-1, 1:-1]) / dx ** 2


def step_energy_batch(grid: Grid2D, mp: mat.MaterialParams, inp: MechStepInput, Y) -> np.ndarray:
    """Mechanical step functional for a batch of fields; +inf where det <= 0."""
    Y = np.asarray(Y, float)
    S, dx = Y.shape[0], grid.dx
    A = dx * dx
    yp = np.asarray(inp.y_prev, float)[None]
    F = _cell_gradients(Y, dx)
    F0 = _cell_gradients(yp, dx)[0]
    ok = np.all(mat.det2(F) > 0, axis=(1, 2))
    F = np.where(ok[:, None, None, None, None], F, np.eye(2))
    th = np.asarray(inp.theta_prev, float)
    corners = [th[:-1, :-1], th[1:, :-1], th[:-1, 1:], th[1:, 1:]]
    energy = A * np.sum(mat.eval_Wel(F, mp), axis=(1, 2))
    for tc in corners:
        energy += 0.25 * A * np.sum(mat.eval_Wcpl(F, tc, mp), axis=(1, 2))
    # R is linear in its modulus, so the corner average acts on the modulus
    modulus = np.mean([mat.dissipation_coefficient(tc) for tc in corners], axis=0)
    energy += A / inp.tau * np.sum(mat.rate_potential(F0, F - F0, modulus), axis=(1, 2))
    lap = _laplacians(Y, dx)
    energy += A * np.sum(mat.eval_H(lap, mp), axis=(1, 2))
    dlap = lap - _laplacians(yp, dx)
    g1 = (dlap[:, 1:, :] - dlap[:, :-1, :]) / dx
    g2 = (dlap[:, :, 1:] - dlap[:, :, :-1]) / dx
    energy += 0.5 * inp.eps / inp.tau * A * (np.sum(g1 ** 2, axis=(1, 2, 3)) + np.sum(g2 ** 2, axis=(1, 2, 3)))
    wn = grid.node_weights()[None, :, :, None]
    energy -= np.sum(wn * np.asarray(inp.f_avg)[None] * Y, axis=(1, 2, 3))
    rate = (Y - yp) / inp.tau - np.asarray(inp.delayed_velocity)[None]
    energy += 0.5 * inp.rho * inp.tau / inp.h * np.sum(wn * rate ** 2, axis=(1, 2, 3))
    return np.where(ok, energy, np.inf)


def multistart_min_oracle(grid: Grid2D, mp: mat.MaterialParams, inp: MechStepInput, n_starts: int = 10_000,
                          seed: int = 0, max_iter: int = 100, gtol: float = 1e-6, refine: int = 20):
    """Best local minimum over random starts, each polished by gradient descent.

    Starts are ``id + U(-0.3 dx, 0.3 dx)`` on interior nodes, redrawn until all
    cell determinants are positive.  Descent uses Barzilai-Borwein steps with
    an Armijo safeguard and central-difference gradients.  Returns
    ``(best_energy, argmin_field)``.
    """
    if grid.n > 4:
        raise ValueError("the brute-force oracle is meant for grids with n <= 4")
    rng = _rng(seed, "multistart")
    base = grid.identity()
    m = grid.n - 2
    dof = 2 * m * m

    def fields(Z):
        Y = np.broadcast_to(base, (len(Z),) + base.shape).copy()
        Y[:, 1:-1, 1:-1] = Z.reshape(len(Z), m, m, 2)
        return Y

    def energy(Z):
        return step_energy_batch(grid, mp, inp, fields(Z))

    base_int = base[1:-1, 1:-1].reshape(-1)
    Z = np.empty((0, dof))
    while len(Z) < n_starts:
        cand = base_int + 0.3 * grid.dx * rng.uniform(-1, 1, (n_starts, dof))
        Z = np.concatenate([Z, cand[np.isfinite(energy(cand))]])
    Z = Z[:n_starts]
    Z, E = _descend(energy, Z, max_iter, gtol)
    # a longer polish of the most promising candidates
    order = np.argsort(E)[:refine]
    Zr, Er = _descend(energy, Z[order], 20 * max_iter, 1e-8)
    best = int(np.argmin(Er))
    return float(Er[best]), fields(Zr[best:best + 1])[0]


def _fd_grad_batch(energy, Z, step):
    g = np.zeros_like(Z)
    for i in range(Z.shape[1]):
        e = np.zeros(Z.shape[1])
        e[i] = step
        g[:, i] = (energy(Z + e) - energy(Z - e)) / (2 * step)
    return g


def _descend(energy, Z, max_iter, gtol, step=1e-7):
    Z = Z.copy()
    E = energy(Z)
    g = _fd_grad_batch(energy, Z, step)
    g = np.where(np.isfinite(g), g, 0.0)
    alpha = np.full(len(Z), 1e-4)
    active = np.ones(len(Z), dtype=bool)
    for _ in range(max_iter):
        gn = np.max(np.abs(g), axis=1)
        active &= gn > gtol
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        z, e, gi, a = Z[idx], E[idx], g[idx], alpha[idx]
        accepted = np.zeros(idx.size, dtype=bool)
        znew, enew = z.copy(), e.copy()
        for _ in range(50):
            todo = ~accepted
            if not todo.any():
                break
            trial = z[todo] - a[todo, None] * gi[todo]
            et = energy(trial)
            ok = et <= e[todo] - 1e-4 * a[todo] * np.sum(gi[todo] ** 2, axis=1)
            sub = np.flatnonzero(todo)
            znew[sub[ok]], enew[sub[ok]] = trial[ok], et[ok]
            accepted[sub[ok]] = True
            a[sub[~ok]] *= 0.5
        # samples whose line search stalls, or whose decrease is at roundoff, are done
        active[idx[~accepted]] = False
        active[idx[(e - enew) <= 1e-15 * (1.0 + np.abs(e))]] = False
        gnew = _fd_grad_batch(energy, znew, step)
        s, yv = znew - z, gnew - gi
        sy = np.sum(s * yv, axis=1)
        bb = np.where(sy > 0, np.sum(s * s, axis=1) / np.where(sy > 0, sy, 1.0), 2 * a)
        Z[idx], E[idx], g[idx] = znew, enew, gnew
        alpha[idx] = np.clip(bb, 1e-12, 1e2)
    return Z, E


def multistart_agreement(seed: int = 0, n_inputs: int = 20, n_starts: int = 10_000,
                         material: mat.MaterialParams | None = None) -> OracleReport:
    """Solver energy minus brute-force best on random n = 3 step inputs."""
    mp = material or mat.MaterialParams()
    rng = _rng(seed, "agreement")
    grid = Grid2D(3)
    gaps, dumps = [], []
    for i in range(n_inputs):
        inp = random_step_input(rng, grid, perturb=0.1, force=5.0)
        y, _ = solve_mech_step(grid, mp, inp)
        e_solver = float(step_energy_batch(grid, mp, inp, y[None])[0])
        e_oracle, _ = multistart_min_oracle(grid, mp, inp, n_starts, seed=seed * 1000 + i)
        gaps.append(e_solver - e_oracle)
        dumps.append({"solver": e_solver, "oracle": e_oracle})
    rep = _report("multistart_agreement", np.maximum(gaps, 0.0), seed, 1e-8, samples=n_inputs)
    rep.details["energies"] = dumps
    return rep


def run_verification(seed: int = 0, n_inputs: int = 5, n_starts: int = 2000) -> list[OracleReport]:
    """All oracle suites and bound audits, in a fixed order."""
    return (fd_gradient_suite(seed) + symmetry_suite(seed) + constitutive_identity_suite(seed)
            + bound_audit(seed) + [multistart_agreement(seed, n_inputs, n_starts)])
