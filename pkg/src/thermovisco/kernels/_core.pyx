# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-cell and per-node constitutive kernels (same contract as _fallback)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, pow, tanh, sqrt

cnp.import_array()


def cell_mech(double[:, ::1] F, double[:, ::1] F0, double[::1] beta, double[::1] acoef,
              double inv_tau, double mu, double gamma, double q, double alpha):
    cdef Py_ssize_t nc = F.shape[0]
    cdef Py_ssize_t c, i, j, a, b, k
    cdef double J, Jq, lam, g1, g2, sq, T, sech2, ab, ca, en, tmp
    cdef double f[4]
    cdef double f0[4]
    cdef double d[4]
    cdef double cof[4]
    cdef double M[4][4]
    cdef double MtM[4][4]
    cdef double MtMD[4]
    cdef double[::1] e = np.empty(nc)
    cdef double[:, ::1] g = np.empty((nc, 4))
    cdef double[:, :, ::1] H = np.empty((nc, 4, 4))
    lam = mu - q * gamma
    for c in range(nc):
        for k in range(4):
            f[k] = F[c, k]
            f0[k] = F0[c, k]
            d[k] = f[k] - f0[k]
        J = f[0] * f[3] - f[1] * f[2]
        if not (J > 0):
            return None
        cof[0] = f[3]; cof[1] = -f[2]; cof[2] = -f[1]; cof[3] = f[0]
        sq = f[0] * f[0] + f[1] * f[1] + f[2] * f[2] + f[3] * f[3]
        Jq = pow(J, -q)
        g1 = -q * gamma * Jq / J - lam / J
        g2 = q * (q + 1.0) * gamma * Jq / (J * J) + lam / (J * J)
        T = tanh(sq - 2.0)
        sech2 = 1.0 - T * T
        ab = alpha * beta[c]
        ca = inv_tau * acoef[c]
        en = 0.5 * mu * (sq - 2.0) + gamma * Jq - lam * log(J) + ab * T

        # rate map M[(i,j),(a,b)] = delta_bi F0[a,j] + F0[a,i] delta_bj
        for i in range(2):
            for j in range(2):
                for a in range(2):
                    for b in range(2):
                        tmp = 0.0
                        if b == i:
                            tmp += f0[2 * a + j]
                        if b == j:
                            tmp += f0[2 * a + i]
                        M[2 * i + j][2 * a + b] = tmp
        for i in range(4):
            for j in range(4):
                tmp = 0.0
                for k in range(4):
                    tmp += M[k][i] * M[k][j]
                MtM[i][j] = tmp
        for i in range(4):
            tmp = 0.0
            for j in range(4):
                tmp += MtM[i][j] * d[j]
            MtMD[i] = tmp
        tmp = 0.0
        for i in range(4):
            tmp += d[i] * MtMD[i]
        e[c] = en + 0.5 * ca * tmp

        for i in range(4):
            g[c, i] = mu * f[i] + g1 * cof[i] + 2.0 * ab * sech2 * f[i] + ca * MtMD[i]
            for j in range(4):
                tmp = g2 * cof[i] * cof[j] - 8.0 * ab * T * sech2 * f[i] * f[j] + ca * MtM[i][j]
                if i == j:
                    tmp += mu + 2.0 * ab * sech2
                H[c, i, j] = tmp
        # Hessian of det F
        H[c, 0, 3] += g1
        H[c, 3, 0] += g1
        H[c, 1, 2] -= g1
        H[c, 2, 1] -= g1
    return np.asarray(e), np.asarray(g), np.asarray(H)


def node_strain_gradient(double[:, ::1] L, double p, double crossover):
    cdef Py_ssize_t nn = L.shape[0]
    cdef Py_ssize_t r
    cdef double v0, v1, s2, s, coef, outer
    cdef double[::1] e = np.empty(nn)
    cdef double[:, ::1] g = np.empty((nn, 2))
    cdef double[:, :, ::1] H = np.empty((nn, 2, 2))
    cdef double c2 = crossover * crossover - pow(crossover, p)
    for r in range(nn):
        v0 = L[r, 0]
        v1 = L[r, 1]
        s2 = v0 * v0 + v1 * v1
        s = sqrt(s2)
        if s <= crossover:
            e[r] = s2
            coef = 2.0
            outer = 0.0
        else:
            e[r] = c2 + pow(s, p)
            coef = p * pow(s, p - 2.0)
            outer = p * (p - 2.0) * pow(s, p - 4.0)
        g[r, 0] = coef * v0
        g[r, 1] = coef * v1
        H[r, 0, 0] = coef + outer * v0 * v0
        H[r, 0, 1] = outer * v0 * v1
        H[r, 1, 0] = outer * v0 * v1
        H[r, 1, 1] = coef + outer * v1 * v1
    return np.asarray(e), np.asarray(g), np.asarray(H)
