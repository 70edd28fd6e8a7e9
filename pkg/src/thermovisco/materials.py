"""Constitutive potentials for a nonsimple thermoviscoelastic solid in 2-D.

All point functions are vectorized: ``F`` has shape ``(..., 2, 2)``, rates the
same, temperatures ``(...)``.  The concrete model is

    W_el(F)        = mu/2 (|F|^2 - 2) + gamma det(F)^-q - (mu - q gamma) log det F
    W_cpl(F, th)   = -c_V th log th + alpha tanh(|F|^2 - 2) th / (1 + th)
    H(v)           = h(|v|),   h(s) = int_0^s max(2 r, p r^(p-1)) dr
    R(F, Fd, th)   = 1/2 (1 + 1/(1 + th)) |Fd^T F + F^T Fd|^2
    K(th)          = kappa0 (1 + th / (1 + th)) Id

with closed-form derivatives everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

DIM = 2


class DomainError(ValueError):
    """Raised when a constitutive function is evaluated outside its domain."""


@dataclass(frozen=True)
class MaterialParams:
    p: float = 4.0
    mu: float = 1.0
    gamma: float = 0.1
    q_det: float = 4.0
    c_V: float = 1.0
    alpha: float = 0.5
    kappa0: float = 1.0
    C0: float = 10.0

    def __post_init__(self):
        d = DIM
        if not self.p > d:
            raise ValueError(f"growth exponent p={self.p} must exceed d={d}")
        qmin = self.p * d / (self.p - d)
        if self.q_det < qmin - 1e-12:
            raise ValueError(f"q_det={self.q_det} must be >= p d/(p - d) = {qmin}")
        for name in ("mu", "gamma", "c_V", "kappa0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.alpha < 3 * self.c_V:
            raise ValueError("alpha must lie in [0, 3 c_V)")
        if self.mu - self.q_det * self.gamma < 0:
            # keeps the log-term coefficient nonnegative, hence W_el >= 0
            raise ValueError("mu - q_det*gamma must be nonnegative")
        if self.C0 < 1:
            raise ValueError("C0 must be >= 1")

    @classmethod
    def from_mapping(cls, data: dict) -> MaterialParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise KeyError(f"unknown material keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def crossover(self) -> float:
        """Radius where the two branches of the strain-gradient density meet."""
        return (2.0 / self.p) ** (1.0 / (self.p - 2.0))


# ---------------------------------------------------------------------------
# small-matrix helpers


def det2(F):
    F = np.asarray(F, dtype=float)
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def cof2(F):
    """Cofactor matrix, i.e. the derivative of det F."""
    F = np.asarray(F, dtype=float)
    out = np.empty_like(F)
    out[..., 0, 0] = F[..., 1, 1]
    out[..., 0, 1] = -F[..., 1, 0]
    out[..., 1, 0] = -F[..., 0, 1]
    out[..., 1, 1] = F[..., 0, 0]
    return out


def frob2(A):
    A = np.asarray(A, dtype=float)
    return A[..., 0, 0] ** 2 + A[..., 0, 1] ** 2 + A[..., 1, 0] ** 2 + A[..., 1, 1] ** 2


def _mul(A, B):
    """A B for stacks of 2x2 matrices, written out (faster than batched matmul)."""
    A, B = np.broadcast_arrays(A, B)
    out = np.empty(A.shape)
    for i in range(2):
        for j in range(2):
            out[..., i, j] = A[..., i, 0] * B[..., 0, j] + A[..., i, 1] * B[..., 1, j]
    return out


def _tmul(A, B):
    """A^T B for stacks of 2x2 matrices."""
    return _mul(np.swapaxes(A, -1, -2), B)


def right_cauchy_green(F):
    F = np.asarray(F, dtype=float)
    return _tmul(F, F)


def cauchy_green_rate(F, Fdot):
    """Cdot = Fdot^T F + F^T Fdot."""
    A = _tmul(np.asarray(Fdot, dtype=float), np.asarray(F, dtype=float))
    return A + np.swapaxes(A, -1, -2)


def _check_det(J):
    if np.any(~(J > 0)):
        raise DomainError("deformation gradient with non-positive determinant")


def _check_theta(theta):
    if np.any(np.asarray(theta) < 0):
        raise DomainError("negative temperature")


# ---------------------------------------------------------------------------
# elastic energy


def eval_Wel(F, mp: MaterialParams = MaterialParams()):
    F = np.asarray(F, dtype=float)
    J = det2(F)
    _check_det(J)
    return (0.5 * mp.mu * (frob2(F) - DIM) + mp.gamma * J ** (-mp.q_det)
            - (mp.mu - mp.q_det * mp.gamma) * np.log(J))


def grad_Wel(F, mp: MaterialParams = MaterialParams()):
    """First Piola stress dW_el/dF."""
    F = np.asarray(F, dtype=float)
    J = det2(F)
    _check_det(J)
    g1 = -mp.q_det * mp.gamma * J ** (-mp.q_det - 1) - (mp.mu - mp.q_det * mp.gamma) / J
    return mp.mu * F + g1[..., None, None] * cof2(F)


# ---------------------------------------------------------------------------
# strain-gradient potential


def eval_h_scalar(s, mp: MaterialParams = MaterialParams()):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise DomainError("h is defined on [0, inf)")
    sc = mp.crossover
    return np.where(s <= sc, s * s, sc * sc - sc ** mp.p + s ** mp.p)


def eval_H(v, mp: MaterialParams = MaterialParams()):
    v = np.asarray(v, dtype=float)
    return eval_h_scalar(np.sqrt(np.einsum("...i,...i->...", v, v)), mp)


def eval_DH(v, mp: MaterialParams = MaterialParams()):
    v = np.asarray(v, dtype=float)
    s = np.sqrt(np.einsum("...i,...i->...", v, v))
    return np.maximum(2.0, mp.p * s ** (mp.p - 2))[..., None] * v


def eval_D2H(v, mp: MaterialParams = MaterialParams()):
    """Hessian of H (piecewise; the branch switch makes H only C^{1,1})."""
    v = np.asarray(v, dtype=float)
    s2 = np.einsum("...i,...i->...", v, v)
    s = np.sqrt(s2)
    eye = np.eye(DIM)
    quad = s <= mp.crossover
    coef = np.where(quad, 2.0, mp.p * s ** (mp.p - 2))
    outer_c = np.where(quad, 0.0, mp.p * (mp.p - 2) * np.where(s > 0, s, 1.0) ** (mp.p - 4))
    return coef[..., None, None] * eye + outer_c[..., None, None] * np.einsum("...i,...j->...ij", v, v)


# ---------------------------------------------------------------------------
# thermal coupling


def _xlogx(theta):
    theta = np.asarray(theta, dtype=float)
    safe = np.where(theta > 0, theta, 1.0)
    return np.where(theta > 0, theta * np.log(safe), 0.0)


def _stretch_tanh(F):
    return np.tanh(frob2(F) - DIM)


def eval_Wcpl(F, theta, mp: MaterialParams = MaterialParams()):
    F = np.asarray(F, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta)
    _check_det(det2(F))
    return -mp.c_V * _xlogx(theta) + mp.alpha * _stretch_tanh(F) * theta / (1.0 + theta)


def dWcpl_dF(F, theta, mp: MaterialParams = MaterialParams()):
    F = np.asarray(F, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta)
    T = _stretch_tanh(F)
    c = mp.alpha * (1.0 - T * T) * 2.0 * theta / (1.0 + theta)
    return c[..., None, None] * F


def dWcpl_dtheta(F, theta, mp: MaterialParams = MaterialParams()):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("d/dtheta of the coupling energy needs theta > 0")
    return -mp.c_V * (np.log(theta) + 1.0) + mp.alpha * _stretch_tanh(F) / (1.0 + theta) ** 2


def d2Wcpl_dtheta2(F, theta, mp: MaterialParams = MaterialParams()):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0):
        raise DomainError("second theta-derivative needs theta > 0")
    return -mp.c_V / theta - 2.0 * mp.alpha * _stretch_tanh(F) / (1.0 + theta) ** 3


def d2Wcpl_dFdtheta(F, theta, mp: MaterialParams = MaterialParams()):
    F = np.asarray(F, dtype=float)
    theta = np.asarray(theta, dtype=float)
    T = _stretch_tanh(F)
    c = mp.alpha * (1.0 - T * T) * 2.0 / (1.0 + theta) ** 2
    return c[..., None, None] * F


def d2Wcpl_dF2(F, theta, mp: MaterialParams = MaterialParams()):
    """Hessian in F as a (..., 2, 2, 2, 2) array."""
    F = np.asarray(F, dtype=float)
    theta = np.asarray(theta, dtype=float)
    T = _stretch_tanh(F)
    sech2 = 1.0 - T * T
    b = mp.alpha * theta / (1.0 + theta)
    eye4 = np.einsum("ik,jl->ijkl", np.eye(DIM), np.eye(DIM))
    FF = np.einsum("...ij,...kl->...ijkl", F, F)
    return (b * 2.0 * sech2)[..., None, None, None, None] * eye4 \
        - (b * 8.0 * T * sech2)[..., None, None, None, None] * FF


def heat_capacity(F, theta, mp: MaterialParams = MaterialParams()):
    """-theta d2W_cpl/dtheta2 = dW_in/dtheta; finite at theta = 0."""
    theta = np.asarray(theta, dtype=float)
    return mp.c_V + 2.0 * mp.alpha * _stretch_tanh(F) * theta / (1.0 + theta) ** 3


# ---------------------------------------------------------------------------
# internal energy


def eval_Win(F, theta, mp: MaterialParams = MaterialParams()):
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta)
    return mp.c_V * theta + mp.alpha * _stretch_tanh(F) * theta ** 2 / (1.0 + theta) ** 2


def dWin_dtheta(F, theta, mp: MaterialParams = MaterialParams()):
    return heat_capacity(F, theta, mp)


def primitive_Win(F, theta, mp: MaterialParams = MaterialParams()):
    """int_0^theta W_in(F, s) ds in closed form."""
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta)
    return 0.5 * mp.c_V * theta ** 2 + mp.alpha * _stretch_tanh(F) * (
        theta - 2.0 * np.log1p(theta) + theta / (1.0 + theta))


def primitive_Win_quadrature(F, theta, mp: MaterialParams = MaterialParams(), order: int = 40):
    """Gauss-Legendre fallback for the primitive, usable with any W_in."""
    theta = np.asarray(theta, dtype=float)
    _check_theta(theta)
    x, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * theta[..., None] * (x + 1.0)
    vals = eval_Win(np.asarray(F)[..., None, :, :], s, mp)
    return 0.5 * theta * np.sum(w * vals, axis=-1)


def invert_Win(F, w, mp: MaterialParams = MaterialParams(), tol: float = 1e-14, maxiter: int = 100):
    """Temperature theta with W_in(F, theta) = w (safeguarded Newton).

    W_in is strictly increasing in theta, so the root is bracketed by
    [0, C0 w]; Newton iterates leaving the bracket fall back to bisection.
    """
    F = np.asarray(F, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise DomainError("internal energy must be nonnegative")
    shape = np.broadcast_shapes(F.shape[:-2], w.shape)
    F = np.broadcast_to(F, shape + (2, 2))
    w = np.broadcast_to(w, shape).astype(float)
    lo = np.zeros(shape)
    # W_in(F, th) >= (c_V - alpha/4) th, which gives a guaranteed upper bracket
    hi = w / (mp.c_V - 0.25 * mp.alpha) + 1e-300
    theta = w / mp.c_V
    for _ in range(maxiter):
        r = eval_Win(F, theta, mp) - w
        lo = np.where(r < 0, theta, lo)
        hi = np.where(r > 0, theta, hi)
        step = r / dWin_dtheta(F, theta, mp)
        cand = theta - step
        bad = (cand <= lo) | (cand >= hi)
        cand = np.where(bad, 0.5 * (lo + hi), cand)
        if np.all(np.abs(cand - theta) <= tol * (1.0 + np.abs(theta))):
            theta = cand
            break
        theta = cand
    return theta


# ---------------------------------------------------------------------------
# dissipation


def dissipation_coefficient(theta):
    """Scalar modulus of D(C, theta) = (1 + 1/(1 + theta)) I."""
    theta = np.asarray(theta, dtype=float)
    return 1.0 + 1.0 / (1.0 + theta)


def rate_potential(F, Fdot, coeff):
    """1/2 coeff |Cdot|^2 for an isotropic D with the given modulus."""
    Cd = cauchy_green_rate(np.asarray(F, float), np.asarray(Fdot, float))
    return 0.5 * np.asarray(coeff) * frob2(Cd)


def eval_R(F, Fdot, theta):
    return rate_potential(F, Fdot, dissipation_coefficient(theta))


def eval_dR_dFdot(F, Fdot, theta):
    """Viscous stress 2 F (D Cdot)."""
    F = np.asarray(F, dtype=float)
    Cd = cauchy_green_rate(F, np.asarray(Fdot, float))
    a = dissipation_coefficient(theta)
    return 2.0 * a[..., None, None] * _mul(F, Cd)


def eval_xi(F, Fdot, theta):
    """Dissipation rate dR/dFdot : Fdot."""
    S = eval_dR_dFdot(F, Fdot, theta)
    Fdot = np.asarray(Fdot, float)
    return (S[..., 0, 0] * Fdot[..., 0, 0] + S[..., 0, 1] * Fdot[..., 0, 1]
            + S[..., 1, 0] * Fdot[..., 1, 0] + S[..., 1, 1] * Fdot[..., 1, 1])


# ---------------------------------------------------------------------------
# heat conduction


def conductivity(theta, mp: MaterialParams = MaterialParams()):
    theta = np.asarray(theta, dtype=float)
    k = mp.kappa0 * (1.0 + theta / (1.0 + theta))
    return k[..., None, None] * np.eye(DIM)


def pullback_K(F, theta, mp: MaterialParams = MaterialParams()):
    """Reference-configuration conductivity det F F^-1 K(theta) F^-T."""
    F = np.asarray(F, dtype=float)
    J = det2(F)
    _check_det(J)
    Finv = cof2(F).swapaxes(-1, -2) / J[..., None, None]
    K = conductivity(theta, mp)
    out = J[..., None, None] * Finv @ K @ Finv.swapaxes(-1, -2)
    return 0.5 * (out + out.swapaxes(-1, -2))
