import json

import numpy as np
import pytest

from conftest import random_rbm
from qaoarbm import exact, graph as G, rbm, sampler, sr
from qaoarbm.errors import ContractError, GradientBlowupError
from qaoarbm.qaoa import apply_uc


def exact_batches(psi, phi):
    return sampler.exact_batch(lambda s: rbm.log_amplitude(psi, s), psi.n_visible), phi.exact_batch()


def infidelity(theta, psi, phi_dense):
    return 1 - exact.dense_fidelity(psi.with_parameters(theta), phi_dense)


def test_config_validation():
    for bad in (dict(eta=0), dict(epsilon=-1), dict(tol=0), dict(tol=1), dict(max_iters=0), dict(patience=0)):
        with pytest.raises(ContractError):
            sr.SrConfig(**bad)


def test_fidelity_of_state_with_itself_is_one(rng):
    psi = random_rbm(rng, 5, 3)
    tgt = sr.RbmTarget(psi)
    b = sampler.sample_rbm(psi, sampler.McmcConfig(200, 2, stride=5, seed=0))
    F, raw = sr.estimate_fidelity(psi, tgt, b, b)
    assert F == 1.0 and abs(raw - 1) < 1e-14


def test_fidelity_orthogonal_states():
    plus = rbm.init_plus(4)
    zplus, _ = rbm.apply_pauli(plus, "Z", 0)
    F, _ = sr.estimate_fidelity(plus, sr.RbmTarget(zplus), *exact_batches(plus, sr.RbmTarget(zplus)))
    assert F < 1e-15


@pytest.mark.parametrize("n", [4, 7, 10])
def test_exact_fidelity_equals_dense(rng, n):
    psi, phi = random_rbm(rng, n, 3), random_rbm(rng, n, 2)
    F, _ = sr.estimate_fidelity(psi, sr.RbmTarget(phi), *exact_batches(psi, sr.RbmTarget(phi)))
    assert abs(F - exact.dense_fidelity(psi, phi)) < 1e-12


def test_sampled_fidelity_is_unbiased_within_noise(rng):
    psi, phi = random_rbm(rng, 8, 3, 0.4), random_rbm(rng, 8, 3, 0.4)
    tgt = sr.RbmTarget(phi)
    ref = exact.dense_fidelity(psi, phi)
    est = []
    for k in range(50):
        cfg = sampler.McmcConfig(400, 4, stride=8, burn_in=80, seed=k)
        est.append(sr.estimate_fidelity(psi, tgt, sampler.sample_rbm(psi, cfg),
                                        sampler.sample_rbm(phi, cfg.with_seed(1000 + k)))[1].real)
    est = np.array(est)
    assert abs(est.mean() - ref) < 3 * est.std(ddof=1) / np.sqrt(est.size) + 2e-3


def test_gradient_vanishes_at_target(rng):
    psi = random_rbm(rng, 5, 2)
    g = sr.estimate_gradient(psi, sr.RbmTarget(psi), *exact_batches(psi, sr.RbmTarget(psi)))
    assert np.max(np.abs(g)) < 1e-14


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    psi, phi = random_rbm(rng, 5, 3), random_rbm(rng, 5, 2)
    tgt = sr.RbmTarget(phi)
    g = sr.estimate_gradient(psi, tgt, *exact_batches(psi, tgt))
    phi_d = exact.rbm_to_dense(phi)
    theta = psi.parameters()
    h = 1e-5
    fd = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros(theta.size)
        e[k] = h
        dr = infidelity(theta + e, psi, phi_d) - infidelity(theta - e, psi, phi_d)
        di = infidelity(theta + 1j * e, psi, phi_d) - infidelity(theta - 1j * e, psi, phi_d)
        fd[k] = 0.5 * (dr + 1j * di) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-4


def test_rx_target_amplitudes(rng):
    psi = random_rbm(rng, 5, 3)
    B = sampler.all_bitstrings(5)
    base = rbm.log_amplitude(psi, B)
    np.testing.assert_allclose(sr.rx_target_amplitude(psi, 1, 0.0).log_amplitude(B), base, atol=1e-13)
    flipped = B.copy()
    flipped[:, 1] ^= 1
    half_pi = np.exp(sr.rx_target_amplitude(psi, 1, np.pi / 2).log_amplitude(B))
    np.testing.assert_allclose(half_pi, -1j * np.exp(rbm.log_amplitude(psi, flipped)), rtol=1e-12)
    beta = 0.37
    phi = np.exp(sr.rx_target_amplitude(psi, 3, beta).log_amplitude(B))
    ref = exact.apply_rx_dense(np.exp(base), 3, beta)
    np.testing.assert_allclose(phi, ref, rtol=1e-12)


def test_rx_closed_form_agrees_with_estimator(rng):
    psi = random_rbm(rng, 6, 4)
    tgt = sr.rx_target_amplitude(psi, 2, 0.05)
    g = sr.estimate_gradient(psi, tgt, *exact_batches(psi, tgt))
    c = sr.rx_gradient_closed_form(psi, 2, 0.05)
    assert np.linalg.norm(g - c) / np.linalg.norm(c) < 1e-10
    assert np.all(sr.rx_gradient_closed_form(psi, 2, 0.0) == 0)


def test_s_matrix_plus_state_visible_block():
    plus = rbm.init_plus(4)
    batch = sampler.exact_batch(lambda s: rbm.log_amplitude(plus, s), 4)
    S = sr.estimate_s_matrix(batch, psi=plus)
    np.testing.assert_allclose(S, 0.25 * np.eye(4), atol=1e-15)


def test_s_matrix_hermitian_psd_and_single_sample(rng):
    psi = random_rbm(rng, 6, 4)
    batch = sampler.sample_rbm(psi, sampler.McmcConfig(200, 2, stride=6, seed=1))
    S = sr.estimate_s_matrix(batch, psi=psi)
    assert np.array_equal(S, S.conj().T)
    assert np.linalg.eigvalsh(S).min() > -1e-10
    one = sampler.SampleBatch(batch.samples[:1], batch.log_amps[:1], np.zeros(1, dtype=np.int64))
    assert np.all(sr.estimate_s_matrix(one, psi=psi) == 0)


def test_estimators_invariant_under_constant_shifts(rng):
    psi, phi = random_rbm(rng, 5, 3), random_rbm(rng, 5, 2)
    b_psi, b_phi = exact_batches(psi, sr.RbmTarget(phi))
    c = 1.3 - 0.7j
    sh = sampler.SampleBatch(b_phi.samples, b_phi.log_amps + c, b_phi.chain_id, b_phi.weights)

    class Shifted(sr.RbmTarget):
        def log_amplitude(self, bits):
            return super().log_amplitude(bits) + c

    F0, raw0 = sr.estimate_fidelity(psi, sr.RbmTarget(phi), b_psi, b_phi)
    F1, raw1 = sr.estimate_fidelity(psi, Shifted(phi), b_psi, sh)
    assert abs(raw0 - raw1) < 1e-13
    g0 = sr.estimate_gradient(psi, sr.RbmTarget(phi), b_psi, b_phi)
    g1 = sr.estimate_gradient(psi, Shifted(phi), b_psi, sh)
    np.testing.assert_allclose(g1, g0, rtol=1e-11, atol=1e-14)


def test_sr_update_cases(rng):
    cfg = sr.SrConfig(eta=0.5, epsilon=1e-3)
    theta = rng.normal(size=6) + 0j
    assert np.array_equal(sr.sr_update(theta, np.zeros(6, complex), np.eye(6), cfg), theta)
    g = rng.normal(size=6) + 1j * rng.normal(size=6)
    np.testing.assert_allclose(sr.sr_update(theta, g, np.zeros((6, 6)), cfg), theta - 0.5 * g / 1e-3)
    A = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
    S = A.conj().T @ A
    new = sr.sr_update(theta, g, S, cfg)
    delta = (theta - new) / cfg.eta
    assert np.linalg.norm((S + 1e-3 * np.eye(6)) @ delta - g) <= 1e-10 * np.linalg.norm(g)


@pytest.mark.parametrize("n,p", [(30, 8), (5, 40)])
def test_factored_solve_matches_dense(rng, n, p):
    X = rng.normal(size=(n, p)) + 1j * rng.normal(size=(n, p))
    g = rng.normal(size=p) + 1j * rng.normal(size=p)
    d = sr._solve_factored(X, g, 1e-3)
    S = X.conj().T @ X
    np.testing.assert_allclose((S + 1e-3 * np.eye(p)) @ d, g, rtol=1e-8, atol=1e-8 * np.linalg.norm(g))


def test_small_step_decreases_infidelity(rng):
    for _ in range(5):
        psi, phi = random_rbm(rng, 5, 3), random_rbm(rng, 5, 3)
        tgt = sr.RbmTarget(phi)
        bp, bq = exact_batches(psi, tgt)
        g = sr.estimate_gradient(psi, tgt, bp, bq)
        S = sr.estimate_s_matrix(bp, psi=psi)
        new = sr.sr_update(psi.parameters(), g, S, sr.SrConfig(eta=1e-3))
        assert exact.dense_fidelity(psi.with_parameters(new), phi) > exact.dense_fidelity(psi, phi)


def test_optimize_exits_immediately_on_target(rng):
    psi = random_rbm(rng, 4, 2)
    out, tr = sr.optimize_to_target(psi, sr.RbmTarget(psi), sr.SrConfig(exact=True))
    assert tr.converged and len(tr.records) == 1 and tr.records[0].fidelity == 1.0
    assert out is psi


def test_optimize_rx_gate_converges_against_dense():
    g = G.generate_random_regular(8, 3, seed=0)
    psi, _ = apply_uc(rbm.init_plus(8), g, 0.3)
    tgt = sr.rx_target_amplitude(psi, 0, 0.15)
    out, tr = sr.optimize_to_target(psi, tgt, sr.SrConfig(eta=1.0), seed=3)
    ref = exact.apply_rx_dense(exact.rbm_to_dense(psi).amplitudes, 0, 0.15)
    assert tr.converged and tr.n_updates <= 30
    assert exact.dense_fidelity(out, ref) >= 0.998


def test_optimize_orthogonal_target_flags_nonconvergence():
    plus = rbm.init_plus(6)
    zplus, _ = rbm.apply_pauli(plus, "Z", 2)
    _, tr = sr.optimize_to_target(plus, sr.RbmTarget(zplus), sr.SrConfig(exact=True, max_iters=5))
    assert not tr.converged and tr.stop_reason == "gradient_blowup"


def test_trace_monotone_best_and_jsonl(rng):
    psi, phi = random_rbm(rng, 5, 3), random_rbm(rng, 5, 4)
    _, tr = sr.optimize_to_target(psi, sr.RbmTarget(phi), sr.SrConfig(eta=0.5, max_iters=8, tol=1e-9,
                                                                       mcmc=sampler.McmcConfig(300, 2, stride=5)))
    best = tr.best_so_far()
    assert np.all(np.diff(best) >= 0)
    lines = tr.to_jsonl().strip().splitlines()
    assert len(lines) == len(tr.records)
    rec = json.loads(lines[0])
    assert set(rec) >= {"iteration", "fidelity", "fidelity_raw", "grad_norm", "residual", "wall_time"}
    assert all(0 <= r.fidelity <= 1 for r in tr.records)


def test_ground_state_triangle():
    tri = G.complete_graph(3)
    init = rbm.RbmState(0.01 * np.arange(3), 0.01 * np.ones(3), 0.02 * np.eye(3) + 0.01j)
    _, (e, err), hist = sr.optimize_ground_state(tri, init, sr.SrConfig(eta=0.2, max_iters=150, exact=True))
    assert e >= -1 - 1e-12
    assert e < -0.95


def test_gradient_blowup_error_direct():
    plus = rbm.init_plus(3)
    zplus, _ = rbm.apply_pauli(plus, "Z", 0)
    with pytest.raises(GradientBlowupError):
        sr.estimate_gradient(plus, sr.RbmTarget(zplus), *exact_batches(plus, sr.RbmTarget(zplus)))


def test_patience_counts_only_real_progress(rng):
    psi, phi = random_rbm(rng, 4, 1, 0.3), random_rbm(rng, 4, 6, 1.0)
    cfg = sr.SrConfig(eta=1e-6, exact=True, tol=1e-6, max_iters=50, patience=3, min_delta=0.5)
    _, tr = sr.optimize_to_target(psi, sr.RbmTarget(phi), cfg)
    assert tr.stop_reason == "stalled" and len(tr.records) == 4
    with pytest.raises(ContractError):
        sr.SrConfig(min_delta=-1)
