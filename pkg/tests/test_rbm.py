import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_rbm
from qaoarbm import exact, rbm
from qaoarbm.errors import ContractError, NumericalOverflowError
from qaoarbm.sampler import all_bitstrings


def dense(state):
    """Unnormalised amplitudes with no rescaling, for checking constants."""
    return np.exp(rbm.log_amplitude(state, all_bitstrings(state.n_visible)))


def apply_1q(vec, U, j, n):
    t = np.moveaxis(vec.reshape([2] * n), j, 0)
    t = np.tensordot(U, t, axes=(1, 0))
    return np.moveaxis(t, 0, j).reshape(-1)


def test_plus_state_is_uniform():
    psi = rbm.init_plus(5)
    la = rbm.log_amplitude(psi, all_bitstrings(5))
    assert np.all(la == 0)
    assert psi.n_hidden == 0 and psi.n_params == 5


def test_log_amplitude_matches_direct_product(rng):
    psi = random_rbm(rng, 5, 3)
    B = all_bitstrings(5)
    direct = np.exp(B @ psi.visible_bias) * np.prod(1 + np.exp(psi.hidden_bias + B @ psi.weights), axis=1)
    np.testing.assert_allclose(dense(psi), direct, rtol=1e-13)


def test_single_bitstring_returns_scalar(rng):
    psi = random_rbm(rng, 4, 2)
    B = np.array([1, 0, 1, 1])
    assert np.isscalar(rbm.log_amplitude(psi, B))
    assert rbm.log_derivatives(psi, B).shape == (psi.n_params,)


def test_softplus_is_stable_for_huge_arguments():
    z = np.array([800 + 1j, -800 + 2j, 1e-3, 0.0])
    out = rbm.softplus(z)
    assert np.all(np.isfinite(out))
    assert abs(out[0] - z[0]) < 1e-12
    assert abs(out[1]) < 1e-300
    np.testing.assert_allclose(out[2:], np.log1p(np.exp(z[2:])), rtol=1e-14)


def test_large_parameters_give_finite_log_amplitudes():
    psi = rbm.RbmState(np.full(3, 300.0), np.full(2, -500.0), np.full((3, 2), 400.0 + 3j))
    assert np.all(np.isfinite(rbm.log_amplitude(psi, all_bitstrings(3))))


def test_logistic_matches_definition():
    z = np.array([-3 + 1j, 0.5 - 2j, 40 + 0.1j])
    np.testing.assert_allclose(rbm.logistic(z), np.exp(z) / (1 + np.exp(z)), rtol=1e-13)


def test_log_derivatives_match_finite_differences(rng):
    psi = random_rbm(rng, 4, 3)
    B = all_bitstrings(4)
    O = rbm.log_derivatives(psi, B)
    theta = psi.parameters()
    h = 1e-6
    for k in rng.choice(theta.size, 6, replace=False):
        e = np.zeros(theta.size)
        e[k] = h
        fd = (rbm.log_amplitude(psi.with_parameters(theta + e), B)
              - rbm.log_amplitude(psi.with_parameters(theta - e), B)) / (2 * h)
        np.testing.assert_allclose(O[:, k], fd, rtol=1e-6, atol=1e-8)


def test_parameter_ordering_is_row_major(rng):
    psi = random_rbm(rng, 3, 2)
    theta = psi.parameters()
    N, M = 3, 2
    assert theta[N + M + 1 * M + 0] == psi.weights[1, 0]
    assert psi.with_parameters(theta).parameters().tolist() == theta.tolist()


def test_state_is_immutable(rng):
    psi = random_rbm(rng, 3, 2)
    with pytest.raises(ValueError):
        psi.weights[0, 0] = 1.0


def test_bad_shapes_and_values_rejected():
    with pytest.raises(ContractError):
        rbm.RbmState(np.zeros(3), np.zeros(2), np.zeros((2, 3)))
    with pytest.raises(NumericalOverflowError):
        rbm.RbmState(np.array([np.inf]), np.zeros(0), np.zeros((1, 0)))
    with pytest.raises(ContractError):
        rbm.log_amplitude(rbm.init_plus(3), np.zeros(4, dtype=int))
    with pytest.raises(ContractError):
        rbm.apply_rzz(rbm.init_plus(3), 1, 1, 0.3)
    with pytest.raises(ContractError):
        rbm.apply_pauli(rbm.init_plus(3), "W", 0)
    with pytest.raises(ContractError):
        rbm.apply_rz(rbm.init_plus(3), 3, 0.1)


X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])


@pytest.mark.parametrize("axis,U", [("X", X), ("Y", Y), ("Z", Z)])
def test_pauli_gates_exact_with_constant(rng, axis, U):
    for _ in range(5):
        n = int(rng.integers(2, 7))
        psi = random_rbm(rng, n, int(rng.integers(0, 4)))
        j = int(rng.integers(n))
        new, rep = rbm.apply_pauli(psi, axis, j)
        expected = np.exp(rep.constant_log) * apply_1q(dense(psi), U, j, n)
        np.testing.assert_allclose(dense(new), expected, rtol=1e-11)
        assert rep.exact and rep.kind == axis


def test_rz_gate(rng):
    psi = random_rbm(rng, 4, 2)
    new, rep = rbm.apply_rz(psi, 2, 0.7)
    expected = np.exp(rep.constant_log) * apply_1q(dense(psi), np.diag([1, np.exp(0.7j)]), 2, 4)
    np.testing.assert_allclose(dense(new), expected, rtol=1e-12)


@given(phi=st.floats(-2 * np.pi, 2 * np.pi), i=st.integers(0, 4), j=st.integers(0, 4))
def test_rzz_gate_exact_for_any_angle(phi, i, j):
    if i == j:
        return
    psi = random_rbm(np.random.default_rng(abs(hash((phi, i, j))) % 2**32), 5, 2)
    new, rep = rbm.apply_rzz(psi, i, j, phi)
    B = all_bitstrings(5)
    G = np.where(B[:, i] == B[:, j], 1.0, np.exp(1j * phi))
    np.testing.assert_allclose(dense(new), np.exp(rep.constant_log) * G * dense(psi), rtol=1e-10)
    assert new.n_hidden == psi.n_hidden + 1


def test_rzz_adds_unit_coupled_to_two_qubits_only():
    new, _ = rbm.apply_rzz(rbm.init_plus(4), 0, 3, 0.4)
    col = new.weights[:, -1]
    assert np.count_nonzero(col) == 2 and col[0] == -col[3]


def test_complex_arccosh_principal_branch():
    for z in [np.exp(0.3j), -1 + 0j, 2.0, np.exp(-2.9j)]:
        A = rbm.complex_arccosh(z)
        assert abs(np.cosh(A) - z) < 1e-12
        assert A.real >= -1e-15


def test_checkpoint_round_trip_is_bit_exact(rng, tmp_path):
    psi = random_rbm(rng, 5, 4)
    path = tmp_path / "s.json"
    rbm.save_state(psi, path)
    back = rbm.load_state(path)
    assert back.parameters().tobytes() == psi.parameters().tobytes()
    assert (back.n_visible, back.n_hidden) == (5, 4)


def test_checkpoint_rejects_foreign_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ContractError):
        rbm.load_state(path)


def test_dense_fidelity_plus_vs_uniform():
    uniform = np.full(16, 0.25, dtype=complex)
    assert abs(exact.dense_fidelity(rbm.init_plus(4), uniform) - 1) < 1e-12
