"""Uniform grid on the unit square with the linear operators the scheme needs.

Conventions
-----------
* node ``(i, j)`` sits at ``(i*dx, j*dx)``; ``i`` runs along x1.
* a vector field is an array ``u[i, j, a]``; flattened, dof ``2*(i*n + j) + a``.
* cell ``(i, j)`` has lower-left node ``(i, j)``; flat cell index ``i*(n-1) + j``.
* cell gradients are stored flat as ``F[c, 2*a + b] = d u_a / d x_b``.
* Laplacians live at interior nodes, gradients of Laplacians on interior edges
  joining two interior nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid2D:
    n: int
    dx: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs n >= 3 nodes per side, got {self.n}")
        object.__setattr__(self, "dx", 1.0 / (self.n - 1))
        object.__setattr__(self, "_cache", {})

    # -- index sets -------------------------------------------------------
    @property
    def n_nodes(self) -> int:
        return self.n * self.n

    @property
    def n_cells(self) -> int:
        return (self.n - 1) ** 2

    def coords(self) -> np.ndarray:
        x = np.linspace(0.0, 1.0, self.n)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return np.stack([X1, X2], axis=-1)

    def identity(self) -> np.ndarray:
        return self.coords().copy()

    @property
    def boundary_mask(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    @property
    def interior_mask(self) -> np.ndarray:
        return ~self.boundary_mask

    @property
    def n_interior(self) -> int:
        return (self.n - 2) ** 2

    def interior_dofs(self) -> np.ndarray:
        """Flat vector-field dofs of interior nodes, in node order."""
        c = self._cache
        if "idofs" not in c:
            nodes = np.flatnonzero(self.interior_mask.ravel())
            c["idofs"] = np.stack([2 * nodes, 2 * nodes + 1], axis=1).ravel()
        return c["idofs"]

    def cell_corners(self) -> np.ndarray:
        """Node indices of each cell's corners, order (0,0), (1,0), (0,1), (1,1)."""
        c = self._cache
        if "corners" not in c:
            n = self.n
            I, J = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
            I, J = I.ravel(), J.ravel()
            c["corners"] = np.stack(
                [I * n + J, (I + 1) * n + J, I * n + J + 1, (I + 1) * n + J + 1], axis=1)
        return c["corners"]

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Interior edges as (node_a, node_b, direction) with node_b = node_a + e_dir."""
        c = self._cache
        if "edges" not in c:
            n = self.n
            a, b, d = [], [], []
            for i in range(1, n - 2):
                for j in range(1, n - 1):
                    a.append(i * n + j)
                    b.append((i + 1) * n + j)
                    d.append(0)
            for i in range(1, n - 1):
                for j in range(1, n - 2):
                    a.append(i * n + j)
                    b.append(i * n + j + 1)
                    d.append(1)
            c["edges"] = (np.array(a, dtype=np.int64), np.array(b, dtype=np.int64),
                          np.array(d, dtype=np.int64))
        return c["edges"]

    @property
    def n_edges(self) -> int:
        return len(self.edges()[0])

    # -- quadrature weights ----------------------------------------------
    def node_weights(self) -> np.ndarray:
        """Tensor trapezoid weights, shape (n, n)."""
        w1 = np.full(self.n, self.dx)
        w1[0] = w1[-1] = 0.5 * self.dx
        return np.outer(w1, w1)

    def boundary_weights(self) -> np.ndarray:
        """Per-side trapezoid weights on boundary nodes (zero inside), shape (n, n)."""
        dx = self.dx
        w = np.zeros((self.n, self.n))
        for sl in [(0, slice(None)), (-1, slice(None)), (slice(None), 0), (slice(None), -1)]:
            side = np.full(self.n, dx)
            side[0] = side[-1] = 0.5 * dx
            w[sl] += side
        return w

    # -- sparse operators -------------------------------------------------
    def grad_operator(self) -> sp.csr_matrix:
        """Maps flat u (2 n^2) to flat cell gradients (4 n_cells)."""
        c = self._cache
        if "B" not in c:
            n, h2 = self.n, 0.5 / self.dx
            corners = self.cell_corners()
            # derivative weights of corners (00, 10, 01, 11) for d/dx1 and d/dx2
            wts = np.array([[-1.0, 1.0, -1.0, 1.0], [-1.0, -1.0, 1.0, 1.0]]) * h2
            rows, cols, vals = [], [], []
            cells = np.arange(self.n_cells)
            for a in range(2):
                for b in range(2):
                    for k in range(4):
                        rows.append(4 * cells + 2 * a + b)
                        cols.append(2 * corners[:, k] + a)
                        vals.append(np.full(self.n_cells, wts[b, k]))
            c["B"] = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                   shape=(4 * self.n_cells, 2 * n * n))
        return c["B"]

    def laplacian_operator(self) -> sp.csr_matrix:
        """Maps flat u to flat interior-node Laplacians (2 n_interior)."""
        c = self._cache
        if "L" not in c:
            n, inv = self.n, 1.0 / self.dx ** 2
            rows, cols, vals = [], [], []
            r = 0
            for i in range(1, n - 1):
                for j in range(1, n - 1):
                    node = i * n + j
                    nbrs = [node - n, node + n, node - 1, node + 1]
                    for a in range(2):
                        rows.append(2 * r + a); cols.append(2 * node + a); vals.append(-4 * inv)
                        for m in nbrs:
                            rows.append(2 * r + a); cols.append(2 * m + a); vals.append(inv)
                    r += 1
            c["L"] = sp.csr_matrix((vals, (rows, cols)), shape=(2 * self.n_interior, 2 * n * n))
        return c["L"]

    def interior_node_rank(self) -> np.ndarray:
        """Map node index -> position among interior nodes (-1 on the boundary)."""
        c = self._cache
        if "rank" not in c:
            rank = -np.ones(self.n_nodes, dtype=np.int64)
            nodes = np.flatnonzero(self.interior_mask.ravel())
            rank[nodes] = np.arange(len(nodes))
            c["rank"] = rank
        return c["rank"]

    def edge_diff_operator(self) -> sp.csr_matrix:
        """Forward differences of interior-node 2-vectors along interior edges."""
        c = self._cache
        if "D" not in c:
            a, b, _ = self.edges()
            rank = self.interior_node_rank()
            inv = 1.0 / self.dx
            rows, cols, vals = [], [], []
            for e in range(len(a)):
                for comp in range(2):
                    rows += [2 * e + comp, 2 * e + comp]
                    cols += [2 * rank[b[e]] + comp, 2 * rank[a[e]] + comp]
                    vals += [inv, -inv]
            c["D"] = sp.csr_matrix((vals, (rows, cols)), shape=(2 * len(a), 2 * self.n_interior))
        return c["D"]

    def grad_laplacian_operator(self) -> sp.csr_matrix:
        c = self._cache
        if "G" not in c:
            c["G"] = (self.edge_diff_operator() @ self.laplacian_operator()).tocsr()
        return c["G"]

    def scalar_stiffness_parts(self) -> np.ndarray:
        """Exact Q1 element matrices S[a, b] = int d_a phi_i d_b phi_j over one cell.

        Shape (2, 2, 4, 4), corner order as in :meth:`cell_corners`.  The
        entries do not depend on dx in two dimensions.
        """
        g = 1.0 / np.sqrt(3.0)
        pts = [0.5 * (1 - g), 0.5 * (1 + g)]
        S = np.zeros((2, 2, 4, 4))
        for s in pts:
            for t in pts:
                # bilinear shape gradients on the unit reference cell
                dphi = np.array([
                    [-(1 - t), (1 - t), -t, t],
                    [-(1 - s), -s, (1 - s), s],
                ])
                S += 0.25 * np.einsum("ai,bj->abij", dphi, dphi)
        return S


# ---------------------------------------------------------------------------
# field-level helpers (accept (n, n, 2) arrays)


def _check_vector_field(grid: Grid2D, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n, grid.n, 2):
        raise ValueError(f"vector field shape {u.shape} does not match grid ({grid.n}, {grid.n}, 2)")
    return u


def grad_cells(grid: Grid2D, u) -> np.ndarray:
    """Cell-center gradients of the bilinear interpolant, shape (n-1, n-1, 2, 2)."""
    u = _check_vector_field(grid, u)
    dx = grid.dx
    d1 = (u[1:, :-1] + u[1:, 1:] - u[:-1, :-1] - u[:-1, 1:]) / (2 * dx)
    d2 = (u[:-1, 1:] + u[1:, 1:] - u[:-1, :-1] - u[1:, :-1]) / (2 * dx)
    return np.stack([d1, d2], axis=-1)


def laplacian_nodes(grid: Grid2D, u) -> np.ndarray:
    """Five-point Laplacian at interior nodes, shape (n-2, n-2, 2)."""
    u = _check_vector_field(grid, u)
    return (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4 * u[1:-1, 1:-1]) / grid.dx ** 2


def grad_laplacian_edges(grid: Grid2D, u) -> np.ndarray:
    """Edge values of the gradient of the Laplacian, shape (n_edges, 2)."""
    u = _check_vector_field(grid, u)
    return (grid.grad_laplacian_operator() @ u.ravel()).reshape(-1, 2)


def integrate_volume(grid: Grid2D, values) -> float:
    """Midpoint rule for cell data (n-1, n-1), trapezoid rule for node data (n, n)."""
    v = np.asarray(values, dtype=float)
    if v.shape[:2] == (grid.n - 1, grid.n - 1):
        return float(np.sum(v) * grid.dx ** 2)
    if v.shape[:2] == (grid.n, grid.n):
        w = grid.node_weights()
        return float(np.sum(w.reshape(w.shape + (1,) * (v.ndim - 2)) * v))
    raise ValueError(f"cannot integrate array of shape {v.shape} on grid n={grid.n}")


def integrate_boundary(grid: Grid2D, values) -> float:
    """Trapezoid rule over the four sides; ``values`` is a full (n, n) nodal array."""
    v = np.asarray(values, dtype=float)
    if v.shape != (grid.n, grid.n):
        raise ValueError("boundary integrand must be a nodal (n, n) array")
    return float(np.sum(grid.boundary_weights() * v))


def min_det(grid: Grid2D, u) -> float:
    F = grad_cells(grid, u)
    return float(np.min(F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]))
