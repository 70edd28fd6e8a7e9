import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermovisco.grid import (Grid2D, grad_cells, grad_laplacian_edges, integrate_boundary, integrate_volume,
                              laplacian_nodes, min_det)


def field(grid, f1, f2=None):
    X = grid.coords()
    zero = np.zeros(X.shape[:2])
    return np.stack([f1(X[..., 0], X[..., 1]), zero if f2 is None else f2(X[..., 0], X[..., 1])], axis=-1)


def test_index_conventions():
    g = Grid2D(4)
    assert g.dx == pytest.approx(1 / 3)
    assert g.n_nodes == 16 and g.n_cells == 9 and g.n_interior == 4
    np.testing.assert_allclose(g.coords()[2, 1], [2 / 3, 1 / 3])
    # node (i, j) -> 2 (i n + j) + a
    assert list(g.interior_dofs()[:2]) == [2 * 5, 2 * 5 + 1]
    assert list(g.cell_corners()[0]) == [0, 4, 1, 5]


def test_small_grids_rejected():
    with pytest.raises(ValueError):
        Grid2D(2)


def test_gradient_of_affine_fields():
    g = Grid2D(6)
    F = grad_cells(g, g.identity())
    np.testing.assert_allclose(F, np.broadcast_to(np.eye(2), F.shape), atol=1e-14)
    F = grad_cells(g, field(g, lambda x, y: 2 * x, lambda x, y: y))
    np.testing.assert_allclose(F, np.broadcast_to(np.diag([2.0, 1.0]), F.shape), atol=1e-14)


def test_gradient_of_quadratic_at_cell_centers():
    g = Grid2D(5)
    F = grad_cells(g, field(g, lambda x, y: x ** 2))
    centers = (np.arange(4) + 0.5) * g.dx
    np.testing.assert_allclose(F[..., 0, 0], np.broadcast_to(2 * centers[:, None], (4, 4)), atol=1e-14)
    assert np.all(F[..., 0, 1] == 0) and np.all(F[..., 1] == 0)


def test_gradient_operator_matches_field_helper():
    g = Grid2D(5)
    u = np.random.default_rng(0).standard_normal((5, 5, 2))
    np.testing.assert_allclose((g.grad_operator() @ u.ravel()).reshape(4, 4, 2, 2), grad_cells(g, u), atol=1e-12)


def test_laplacian_examples():
    g = Grid2D(7)
    assert np.all(laplacian_nodes(g, np.full((7, 7, 2), 3.0)) == 0)
    assert np.max(np.abs(laplacian_nodes(g, g.identity()))) < 1e-10
    L = laplacian_nodes(g, field(g, lambda x, y: x ** 2))
    np.testing.assert_allclose(L[..., 0], 2.0, atol=1e-10)
    np.testing.assert_allclose(L[..., 1], 0.0, atol=1e-10)


def test_laplacian_operator_matches_field_helper():
    g = Grid2D(6)
    u = np.random.default_rng(1).standard_normal((6, 6, 2))
    np.testing.assert_allclose((g.laplacian_operator() @ u.ravel()).reshape(4, 4, 2), laplacian_nodes(g, u),
                               atol=1e-10)


def test_edge_count_and_n3_has_no_edges():
    assert Grid2D(3).n_edges == 0
    # n = 5: 3x3 interior nodes, 2 * 3 * 2 interior edges
    assert Grid2D(5).n_edges == 12


def test_grad_laplacian_of_quadratic_and_constant():
    g = Grid2D(6)
    assert np.max(np.abs(grad_laplacian_edges(g, field(g, lambda x, y: x ** 2 - 3 * x * y, lambda x, y: y ** 2)))) < 1e-8
    assert np.max(np.abs(grad_laplacian_edges(g, np.ones((6, 6, 2))))) < 1e-10


def test_grad_laplacian_of_cubic_against_hand_stencil():
    g = Grid2D(6)
    u = field(g, lambda x, y: x ** 3)
    G = grad_laplacian_edges(g, u)
    a, b, d = g.edges()
    # hand stencil: five-point Laplacian at both ends, then the forward difference
    dx, n = g.dx, g.n
    flat = u[..., 0].ravel()

    def lap(k):
        return (flat[k + n] + flat[k - n] + flat[k + 1] + flat[k - 1] - 4 * flat[k]) / dx ** 2

    hand = np.array([(lap(bb) - lap(aa)) / dx for aa, bb in zip(a, b)])
    np.testing.assert_allclose(G[:, 0], hand, atol=1e-8)
    # the five-point Laplacian of x^3 is exactly 6 x, so the x1-differences are 6
    np.testing.assert_allclose(G[d == 0, 0], 6.0, atol=1e-7)
    np.testing.assert_allclose(G[d == 1, 0], 0.0, atol=1e-7)
    assert np.all(G[:, 1] == 0)


def test_integrate_constants():
    for n in (3, 5, 9):
        g = Grid2D(n)
        assert integrate_volume(g, np.ones((n, n))) == pytest.approx(1.0, abs=1e-14)
        assert integrate_volume(g, np.ones((n - 1, n - 1))) == pytest.approx(1.0, abs=1e-14)
        assert integrate_boundary(g, np.ones((n, n))) == pytest.approx(4.0, abs=1e-14)


def test_boundary_integral_of_x1_by_hand():
    g = Grid2D(3)
    # sides: x1 = 0 gives 0, x1 = 1 gives 1, and the other two give 1/2 each
    assert integrate_boundary(g, g.coords()[..., 0]) == pytest.approx(2.0, abs=1e-15)


def test_integrate_rejects_bad_shapes():
    g = Grid2D(4)
    with pytest.raises(ValueError):
        integrate_volume(g, np.ones((5, 5)))
    with pytest.raises(ValueError):
        integrate_boundary(g, np.ones(12))


def test_min_det_examples():
    g = Grid2D(5)
    assert min_det(g, g.identity()) == pytest.approx(1.0)
    assert min_det(g, field(g, lambda x, y: 2 * x, lambda x, y: y)) == pytest.approx(2.0)


@given(st.floats(-0.15, 0.15), st.integers(3, 9))
@settings(max_examples=30, deadline=None)
def test_min_det_matches_cell_scan(amp, n):
    g = Grid2D(n)
    X = g.coords()
    bump = np.sin(np.pi * X[..., 0]) * np.sin(2 * np.pi * X[..., 1])
    y = X + amp * np.stack([bump, 0.5 * bump], axis=-1)
    dx = g.dx
    best = np.inf
    for i in range(n - 1):
        for j in range(n - 1):
            c = y[i:i + 2, j:j + 2]
            d1 = (c[1, 0] + c[1, 1] - c[0, 0] - c[0, 1]) / (2 * dx)
            d2 = (c[0, 1] + c[1, 1] - c[0, 0] - c[1, 0]) / (2 * dx)
            best = min(best, d1[0] * d2[1] - d2[0] * d1[1])
    assert best > 0
    assert min_det(g, y) == pytest.approx(best, rel=1e-13)


def test_node_weights_sum_to_area():
    for n in (3, 6):
        assert Grid2D(n).node_weights().sum() == pytest.approx(1.0, abs=1e-15)


def test_stiffness_parts_annihilate_constants():
    S = Grid2D(4).scalar_stiffness_parts()
    K = S[0, 0] + S[1, 1]
    np.testing.assert_allclose(K @ np.ones(4), 0.0, atol=1e-15)
    np.testing.assert_allclose(K, K.T, atol=1e-15)
    assert K[0, 0] == pytest.approx(2 / 3)
