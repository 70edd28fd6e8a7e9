import numpy as np
import pytest

from thermovisco import materials as mat
from thermovisco.audit import mechanical_energy
from thermovisco.grid import Grid2D, grad_cells
from thermovisco.materials import MaterialParams
from thermovisco.mechanics import (MechanicalProblem, MechStepInput, StepFailure, assemble_mech_energy,
                                   grad_mech_energy, solve_mech_step)
from thermovisco.oracles import multistart_min_oracle, random_step_input, step_energy_batch

MP = MaterialParams()


def rest_input(grid, theta=1.0, v=None, f=None, tau=1 / 320, h=1 / 40, eps=1e-3):
    zero = np.zeros((grid.n, grid.n, 2))
    return MechStepInput(grid.identity(), np.full((grid.n, grid.n), theta), zero if v is None else v,
                         zero if f is None else f, tau, h, eps, 1.0)


def coupling_energy(grid, y, theta):
    """Corner quadrature of W_cpl with the cell gradient, computed independently."""
    F = grad_cells(grid, y).reshape(-1, 2, 2)
    th = theta.ravel()[grid.cell_corners()]
    return grid.dx ** 2 * float(np.sum(mat.eval_Wcpl(F[:, None], th, MP)) / 4)


def test_input_validation():
    g = Grid2D(4)
    with pytest.raises(ValueError):
        rest_input(g, tau=0.1, h=0.05)
    with pytest.raises(ValueError):
        rest_input(g, theta=-1.0)


def test_zero_increment_energy():
    g = Grid2D(5)
    inp = random_step_input(np.random.default_rng(0), g, force=0.0)
    inp = MechStepInput(inp.y_prev, inp.theta_prev, np.zeros_like(inp.delayed_velocity), inp.f_avg, inp.tau,
                        inp.h, inp.eps, inp.rho)
    expected = mechanical_energy(g, MP, inp.y_prev) + coupling_energy(g, inp.y_prev, inp.theta_prev)
    assert assemble_mech_energy(g, MP, inp, inp.y_prev) == pytest.approx(expected, rel=1e-13)


def test_inertia_penalty_value_at_previous_state():
    g = Grid2D(5)
    rng = np.random.default_rng(1)
    v = rng.standard_normal((5, 5, 2))
    base = assemble_mech_energy(g, MP, rest_input(g), g.identity())
    inp = rest_input(g, v=v)
    # rho tau / (2 h) times the trapezoid norm, summed by hand
    w = g.node_weights()
    penalty = inp.rho * inp.tau / (2 * inp.h) * float(np.sum(w[..., None] * v ** 2))
    assert assemble_mech_energy(g, MP, inp, g.identity()) == pytest.approx(base + penalty, rel=1e-13)


def test_inertia_penalty_gradient_at_previous_state():
    g = Grid2D(5)
    v = np.random.default_rng(2).standard_normal((5, 5, 2))
    v[0] = v[-1] = v[:, 0] = v[:, -1] = 0
    grad = grad_mech_energy(g, MP, rest_input(g, v=v), g.identity())
    expected = -(1.0 / (1 / 40)) * g.node_weights()[..., None] * v
    expected[0] = expected[-1] = expected[:, 0] = expected[:, -1] = 0
    np.testing.assert_allclose(grad, expected, atol=1e-12)


def test_gradient_matches_central_differences():
    g = Grid2D(4)
    rng = np.random.default_rng(3)
    for _ in range(5):
        inp = random_step_input(rng, g)
        prob = MechanicalProblem(g, MP, inp)
        x = 0.01 * g.dx * rng.uniform(-1, 1, len(prob.idofs))
        _, grad = prob.energy_grad(x)
        fd = np.array([(prob.energy(x + 1e-6 * e) - prob.energy(x - 1e-6 * e)) / 2e-6 for e in np.eye(len(x))])
        assert np.max(np.abs(grad - fd)) <= 1e-6 * max(1.0, np.max(np.abs(grad)))


def test_equilibrium_step_returns_identity():
    g = Grid2D(8)
    y, rep = solve_mech_step(g, MP, rest_input(g))
    assert np.max(np.abs(y - g.identity())) <= 1e-13
    assert rep.converged and rep.residual <= 1e-13


@pytest.mark.parametrize("seed", range(4))
def test_step_is_converged_minimizer_and_beats_competitor(seed):
    g = Grid2D(6)
    inp = random_step_input(np.random.default_rng(seed), g, force=20.0)
    y, rep = solve_mech_step(g, MP, inp)
    assert rep.converged and rep.residual <= 1e-8
    assert rep.competitor_gap <= 1e-12
    assert assemble_mech_energy(g, MP, inp, y) <= assemble_mech_energy(g, MP, inp, inp.y_prev) + 1e-12
    assert np.all(np.diff(rep.energies) <= 1e-12 * (1 + np.abs(rep.energies[:-1])))
    assert rep.min_det > 0


def test_backends_agree_on_a_step():
    g = Grid2D(6)
    inp = random_step_input(np.random.default_rng(7), g, force=20.0)
    y_c, _ = solve_mech_step(g, MP, inp, backend="compiled")
    y_p, _ = solve_mech_step(g, MP, inp, backend="python")
    np.testing.assert_allclose(y_c, y_p, atol=1e-12)


def test_inverted_initial_iterate_fails_cleanly():
    g = Grid2D(4)
    inp = rest_input(g)
    bad = g.identity()
    bad[1, 1] = [0.9, 0.9]
    with pytest.raises(StepFailure):
        solve_mech_step(g, MP, inp, y_init=bad)


@pytest.mark.parametrize("n", [3, 4])
def test_batch_energy_matches_assembled_energy(n):
    g = Grid2D(n)
    rng = np.random.default_rng(n)
    for _ in range(5):
        inp = random_step_input(rng, g)
        Y = np.stack([inp.y_prev, random_step_input(rng, g).y_prev])
        batch = step_energy_batch(g, MP, inp, Y)
        direct = [assemble_mech_energy(g, MP, inp, y) for y in Y]
        np.testing.assert_allclose(batch, direct, rtol=1e-12)


def test_batch_energy_is_infinite_for_inverted_fields():
    g = Grid2D(3)
    inp = rest_input(g)
    Y = g.identity()[None].copy()
    Y[0, 1, 1] = [2.0, 2.0]
    assert np.isinf(step_energy_batch(g, MP, inp, Y)[0])


def test_oracle_argmin_at_equilibrium_is_identity():
    g = Grid2D(3)
    inp = rest_input(g)
    best, y = multistart_min_oracle(g, MP, inp, n_starts=500, seed=0)
    assert np.max(np.abs(y - g.identity())) <= 1e-6
    y_s, _ = solve_mech_step(g, MP, inp)
    assert step_energy_batch(g, MP, inp, y_s[None])[0] <= best + 1e-8


def test_oracle_agreement_with_constant_force():
    g = Grid2D(3)
    f = np.zeros((3, 3, 2))
    f[..., 1] = -5.0
    inp = rest_input(g, f=f)
    best, _ = multistart_min_oracle(g, MP, inp, n_starts=10_000, seed=1)
    y, _ = solve_mech_step(g, MP, inp)
    assert step_energy_batch(g, MP, inp, y[None])[0] <= best + 1e-8


def test_oracle_agreement_for_static_energy_plus_load_on_n4():
    # huge h with tau = h/2 and eps = 0 leaves only the stored energy and the load;
    # theta_prev = 0 removes the coupling term
    g = Grid2D(4)
    f = 3.0 * np.random.default_rng(4).uniform(-1, 1, (4, 4, 2))
    zero = np.zeros((4, 4, 2))
    inp = MechStepInput(g.identity(), np.zeros((4, 4)), zero, f, 5e7, 1e8, 0.0, 1.0)
    best, _ = multistart_min_oracle(g, MP, inp, n_starts=1000, seed=2)
    y, _ = solve_mech_step(g, MP, inp)
    e_solver = step_energy_batch(g, MP, inp, y[None])[0]
    assert abs(e_solver - best) <= 1e-6
