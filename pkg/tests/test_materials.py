import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from thermovisco import materials as mat
from thermovisco.materials import DomainError, MaterialParams
from thermovisco.oracles import random_deformation_gradients, random_rotation

MP = MaterialParams()
ID = np.eye(2)
SKEW = np.array([[0.0, 1.0], [-1.0, 0.0]])

finite = dict(allow_nan=False, allow_infinity=False)
entry = st.floats(-1.5, 1.5, **finite)
temperature = st.floats(0.0, 20.0, **finite)


@st.composite
def deformation(draw):
    """2x2 matrix with det bounded away from zero."""
    F = np.array([[draw(entry), draw(entry)], [draw(entry), draw(entry)]]) + ID
    if np.linalg.det(F) < 0.2:
        F = ID + 0.1 * F
    if np.linalg.det(F) < 0.2:
        F = ID
    return F


@st.composite
def rotation(draw):
    a = draw(st.floats(0.0, 2 * np.pi, **finite))
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


# -- parameters ----------------------------------------------------------------


def test_default_parameters_are_admissible():
    assert MP.p == 4 and MP.q_det == 4 and MP.mu == 1 and MP.gamma == 0.1
    assert MP.crossover == pytest.approx(1 / np.sqrt(2), rel=1e-15)


@pytest.mark.parametrize("kw", [dict(p=2.0), dict(q_det=3.0), dict(alpha=3.0), dict(mu=0.3), dict(C0=0.5),
                                dict(kappa0=0.0)])
def test_inadmissible_parameters_rejected(kw):
    with pytest.raises(ValueError):
        MaterialParams(**kw)


def test_from_mapping_rejects_unknown_keys():
    with pytest.raises(KeyError):
        MaterialParams.from_mapping({"mu": 1.0, "lambda": 2.0})
    assert MaterialParams.from_mapping({"alpha": "0.25"}).alpha == 0.25


# -- elastic energy --------------------------------------------------------------


def test_Wel_at_identity_equals_gamma():
    assert mat.eval_Wel(ID) == pytest.approx(MP.gamma, abs=1e-15)


def test_Wel_closed_form_by_hand():
    F = np.array([[1.2, 0.3], [-0.1, 0.9]])
    J = 1.2 * 0.9 + 0.03
    expected = 0.5 * (1.44 + 0.09 + 0.01 + 0.81 - 2) + 0.1 * J ** -4 - 0.6 * np.log(J)
    assert mat.eval_Wel(F) == pytest.approx(expected, rel=1e-14)


def test_grad_Wel_vanishes_at_identity():
    assert np.max(np.abs(mat.grad_Wel(ID))) <= 1e-15


def test_grad_Wel_matches_central_differences():
    F = random_deformation_gradients(np.random.default_rng(3), 200)
    G = mat.grad_Wel(F)
    step = 1e-5
    fd = np.zeros_like(G)
    for a in range(2):
        for b in range(2):
            E = np.zeros((2, 2))
            E[a, b] = step
            fd[:, a, b] = (mat.eval_Wel(F + E) - mat.eval_Wel(F - E)) / (2 * step)
    rel = np.max(np.abs(G - fd), axis=(1, 2)) / np.maximum(np.max(np.abs(G), axis=(1, 2)), 1e-8)
    assert rel.max() < 1e-6


def test_Wel_rejects_inverted_cells():
    with pytest.raises(DomainError):
        mat.eval_Wel(np.diag([1.0, -1.0]))


@given(deformation(), rotation())
def test_Wel_frame_indifferent(F, Q):
    assert mat.eval_Wel(Q @ F) == pytest.approx(mat.eval_Wel(F), rel=1e-12, abs=1e-12)


@given(deformation())
def test_Wel_nonnegative(F):
    assert mat.eval_Wel(F) >= 0


# -- strain-gradient density -----------------------------------------------------------


def test_h_at_one_matches_quadrature():
    oracle, _ = integrate.quad(lambda s: max(2 * s, 4 * s ** 3), 0.0, 1.0, points=[1 / np.sqrt(2)],
                               epsabs=1e-13, epsrel=1e-13)
    assert oracle == pytest.approx(1.25, abs=1e-13)
    assert mat.eval_h_scalar(1.0) == pytest.approx(oracle, abs=1e-14)


@given(st.floats(0.0, 5.0, **finite))
@settings(max_examples=60)
def test_h_matches_quadrature_everywhere(s):
    oracle, _ = integrate.quad(lambda r: max(2 * r, 4 * r ** 3), 0.0, s, points=[min(s, MP.crossover)],
                               epsabs=1e-13, epsrel=1e-13)
    assert float(mat.eval_h_scalar(s)) == pytest.approx(oracle, rel=1e-11, abs=1e-13)


def test_H_zero_and_DH_zero_at_origin():
    assert mat.eval_H(np.zeros(2)) == 0.0
    assert np.all(mat.eval_DH(np.zeros(2)) == 0.0)


def test_DH_quadratic_branch():
    np.testing.assert_allclose(mat.eval_DH(np.array([0.1, 0.0])), [0.2, 0.0], rtol=0, atol=1e-15)


def test_DH_power_branch():
    v = np.array([0.6, 0.8])
    np.testing.assert_allclose(mat.eval_DH(v), 4.0 * v, rtol=1e-14)


@given(rotation(), st.floats(-3, 3, **finite), st.floats(-3, 3, **finite))
def test_H_rotation_invariant(Q, a, b):
    v = np.array([a, b])
    assert mat.eval_H(Q @ v) == pytest.approx(mat.eval_H(v), rel=1e-12, abs=1e-14)


@given(st.floats(-3, 3, **finite), st.floats(-3, 3, **finite), st.floats(-3, 3, **finite),
       st.floats(-3, 3, **finite))
def test_H_convex_along_segments(a, b, c, d):
    u, v = np.array([a, b]), np.array([c, d])
    mid = mat.eval_H(0.5 * (u + v))
    assert mid <= 0.5 * (mat.eval_H(u) + mat.eval_H(v)) + 1e-12


# -- coupling energy and internal energy ---------------------------------------------


@given(deformation())
def test_Wcpl_vanishes_at_zero_temperature(F):
    assert mat.eval_Wcpl(F, 0.0) == 0.0


def test_Wcpl_at_identity_and_unit_temperature():
    assert mat.eval_Wcpl(ID, 1.0) == pytest.approx(0.0, abs=1e-16)


@given(temperature.filter(lambda t: t > 1e-3))
def test_heat_capacity_at_identity_is_cV(theta):
    assert mat.heat_capacity(ID, theta) == pytest.approx(MP.c_V, rel=1e-13)


@given(deformation(), temperature.filter(lambda t: t > 1e-3))
def test_heat_capacity_matches_second_difference(F, theta):
    step = 1e-4 * max(theta, 1e-2)
    fd = (mat.eval_Wcpl(F, theta + step) - 2 * mat.eval_Wcpl(F, theta) + mat.eval_Wcpl(F, theta - step)) / step ** 2
    assert mat.heat_capacity(F, theta) == pytest.approx(-theta * fd, rel=1e-4)


def test_Win_vanishes_at_zero_and_is_linear_at_identity():
    assert mat.eval_Win(ID, 0.0) == 0.0
    for theta in (0.1, 1.0, 7.5):
        assert mat.eval_Win(ID, theta) == pytest.approx(MP.c_V * theta, rel=1e-15)


@given(deformation(), temperature)
def test_Win_is_Wcpl_minus_theta_times_entropy(F, theta):
    if theta < 1e-6:
        return
    expected = mat.eval_Wcpl(F, theta) - theta * mat.dWcpl_dtheta(F, theta)
    assert mat.eval_Win(F, theta) == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_invert_Win_at_identity():
    assert mat.invert_Win(ID, MP.c_V * 2.5) == pytest.approx(2.5, rel=1e-14)


@given(deformation(), temperature)
def test_invert_Win_round_trip(F, theta):
    w = mat.eval_Win(F, theta)
    assert mat.invert_Win(F, w) == pytest.approx(theta, rel=1e-12, abs=1e-13)


def test_invert_Win_rejects_negative_energy():
    with pytest.raises(DomainError):
        mat.invert_Win(ID, -1.0)


@given(deformation(), temperature)
@settings(max_examples=50)
def test_primitive_matches_quadrature(F, theta):
    closed = mat.primitive_Win(F, theta)
    oracle, _ = integrate.quad(lambda s: float(mat.eval_Win(F, s)), 0.0, theta, epsabs=1e-13, epsrel=1e-13)
    assert closed == pytest.approx(oracle, abs=1e-10 * (1 + abs(oracle)))
    assert mat.primitive_Win_quadrature(F, theta) == pytest.approx(oracle, abs=1e-10 * (1 + abs(oracle)))


@given(deformation(), st.floats(0.0, 10.0, **finite), st.floats(0.0, 10.0, **finite))
def test_Win_increasing_in_temperature(F, a, b):
    lo, hi = sorted((a, b))
    assert mat.eval_Win(F, lo) <= mat.eval_Win(F, hi) + 1e-14


# -- dissipation --------------------------------------------------------------------


def test_R_of_skew_rate_at_identity_is_zero():
    assert mat.eval_R(ID, SKEW, 1.0) == 0.0


def test_R_identity_rate_brute_force():
    # C dot = Fdot^T F + F^T Fdot assembled entrywise; D is the identity 4-tensor
    Fdot = ID
    Cd = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            for k in range(2):
                Cd[i, j] += Fdot[k, i] * ID[k, j] + ID[k, i] * Fdot[k, j]
    oracle = 0.5 * sum(Cd[i, j] ** 2 for i in range(2) for j in range(2))
    assert oracle == 4.0
    assert mat.rate_potential(ID, Fdot, 1.0) == pytest.approx(oracle, rel=1e-15)


def test_dissipation_modulus():
    assert mat.dissipation_coefficient(0.0) == 2.0
    assert mat.dissipation_coefficient(1.0) == 1.5


@given(deformation(), deformation(), temperature)
def test_xi_equals_twice_R(F, G, theta):
    Fdot = G - ID
    R = mat.eval_R(F, Fdot, theta)
    assert abs(mat.eval_xi(F, Fdot, theta) - 2 * R) <= 1e-13 * (1 + abs(R))


@given(deformation(), rotation(), deformation(), temperature)
def test_R_frame_indifferent(F, Q, G, theta):
    Fdot = G - ID
    assert mat.eval_R(Q @ F, Q @ Fdot, theta) == pytest.approx(mat.eval_R(F, Fdot, theta), rel=1e-12, abs=1e-13)


def test_dR_dFdot_matches_central_differences():
    rng = np.random.default_rng(11)
    F = random_deformation_gradients(rng, 200)
    Fdot = rng.standard_normal((200, 2, 2))
    theta = rng.uniform(0, 5, 200)
    S = mat.eval_dR_dFdot(F, Fdot, theta)
    step = 1e-5
    fd = np.zeros_like(S)
    for a in range(2):
        for b in range(2):
            E = np.zeros((2, 2))
            E[a, b] = step
            fd[:, a, b] = (mat.eval_R(F, Fdot + E, theta) - mat.eval_R(F, Fdot - E, theta)) / (2 * step)
    rel = np.max(np.abs(S - fd), axis=(1, 2)) / np.maximum(np.max(np.abs(S), axis=(1, 2)), 1e-8)
    assert rel.max() < 1e-6


# -- conductivity -------------------------------------------------------------------


def test_pullback_at_identity_is_conductivity():
    np.testing.assert_allclose(mat.pullback_K(ID, 1.0), mat.conductivity(1.0), rtol=1e-15)
    np.testing.assert_allclose(mat.conductivity(1.0), 1.5 * ID, rtol=1e-15)


def test_pullback_of_stretch():
    # theta = 0 gives K = kappa0 I = I
    np.testing.assert_allclose(mat.pullback_K(np.diag([2.0, 1.0]), 0.0), np.diag([0.5, 2.0]), rtol=1e-15)


def test_pullback_symmetric_positive():
    rng = np.random.default_rng(5)
    F = random_deformation_gradients(rng, 500)
    K = mat.pullback_K(F, rng.uniform(0, 5, 500))
    assert np.max(np.abs(K - K.swapaxes(-1, -2))) <= 1e-14 * np.max(np.abs(K))
    assert np.all(np.linalg.eigvalsh(K) > 0)


def test_random_rotation_is_proper():
    Q = random_rotation(np.random.default_rng(0), 100)
    np.testing.assert_allclose(Q @ Q.swapaxes(-1, -2), np.broadcast_to(ID, Q.shape), atol=1e-14)
    np.testing.assert_allclose(np.linalg.det(Q), 1.0, atol=1e-14)
