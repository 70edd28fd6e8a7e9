"""Vectorized numpy versions of the per-cell and per-node constitutive kernels.

Flat 2x2 layout: ``F[k]`` with ``k = 2*a + b`` for the matrix entry ``F[a, b]``.
"""

from __future__ import annotations

import numpy as np

# Hessian of det F in the flat layout
_DET_HESS = np.array([[0.0, 0.0, 0.0, 1.0],
                      [0.0, 0.0, -1.0, 0.0],
                      [0.0, -1.0, 0.0, 0.0],
                      [1.0, 0.0, 0.0, 0.0]])


def rate_map(F0: np.ndarray) -> np.ndarray:
    """Linear map Fdot -> Cdot = Fdot^T F0 + F0^T Fdot, shape (nc, 4, 4)."""
    nc = F0.shape[0]
    G = F0.reshape(nc, 2, 2)
    M = np.zeros((nc, 2, 2, 2, 2))
    eye = np.eye(2)
    # M[i, j, a, b] = delta_bi F0[a, j] + F0[a, i] delta_bj
    M += np.einsum("bi,caj->cijab", eye, G)
    M += np.einsum("bj,cai->cijab", eye, G)
    return M.reshape(nc, 4, 4)


def cell_mech(F, F0, beta, acoef, inv_tau, mu, gamma, q, alpha):
    """Energy density, gradient and Hessian per cell of

        W_el(F) + alpha beta tanh(|F|^2 - 2) + inv_tau/2 acoef |Cdot(F0, F - F0)|^2.

    Returns ``(e, g, H)`` with shapes (nc,), (nc, 4), (nc, 4, 4), or ``None``
    when some cell has det F <= 0.
    """
    F = np.asarray(F, dtype=float)
    F0 = np.asarray(F0, dtype=float)
    J = F[:, 0] * F[:, 3] - F[:, 1] * F[:, 2]
    if np.any(~(J > 0)):
        return None
    cof = np.stack([F[:, 3], -F[:, 2], -F[:, 1], F[:, 0]], axis=1)
    sq = np.einsum("ck,ck->c", F, F)
    lam = mu - q * gamma
    Jq = J ** (-q)
    e = 0.5 * mu * (sq - 2.0) + gamma * Jq - lam * np.log(J)
    g1 = -q * gamma * Jq / J - lam / J
    g2 = q * (q + 1.0) * gamma * Jq / J ** 2 + lam / J ** 2
    g = mu * F + g1[:, None] * cof
    H = mu * np.eye(4)[None] + g2[:, None, None] * np.einsum("ci,cj->cij", cof, cof) \
        + g1[:, None, None] * _DET_HESS[None]

    T = np.tanh(sq - 2.0)
    sech2 = 1.0 - T * T
    ab = alpha * np.asarray(beta, dtype=float)
    e = e + ab * T
    g = g + (2.0 * ab * sech2)[:, None] * F
    H = H + (2.0 * ab * sech2)[:, None, None] * np.eye(4)[None] \
        - (8.0 * ab * T * sech2)[:, None, None] * np.einsum("ci,cj->cij", F, F)

    M = rate_map(F0)
    MtM = np.einsum("cki,ckj->cij", M, M)
    D = F - F0
    MtMD = np.einsum("cij,cj->ci", MtM, D)
    ca = inv_tau * np.asarray(acoef, dtype=float)
    e = e + 0.5 * ca * np.einsum("ci,ci->c", D, MtMD)
    g = g + ca[:, None] * MtMD
    H = H + ca[:, None, None] * MtM
    return e, g, H


def node_strain_gradient(L, p, crossover):
    """Energy, gradient and Hessian of H at each 2-vector row of ``L``."""
    L = np.asarray(L, dtype=float)
    s2 = np.einsum("ni,ni->n", L, L)
    s = np.sqrt(s2)
    quad = s <= crossover
    sp_ = np.where(quad, 1.0, s)  # avoid 0 ** negative on the inactive branch
    e = np.where(quad, s2, crossover ** 2 - crossover ** p + s ** p)
    coef = np.where(quad, 2.0, p * sp_ ** (p - 2))
    g = coef[:, None] * L
    outer = np.where(quad, 0.0, p * (p - 2) * sp_ ** (p - 4))
    H = coef[:, None, None] * np.eye(2)[None] + outer[:, None, None] * np.einsum("ni,nj->nij", L, L)
    return e, g, H
