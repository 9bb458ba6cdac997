import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_rbm
from qaoarbm import kernels, rbm, sampler
from qaoarbm._jit import USE_NUMBA
from qaoarbm.errors import ContractError, NumericalOverflowError


def enumerated_probs(state):
    B = sampler.all_bitstrings(state.n_visible)
    lp = 2 * rbm.log_amplitude(state, B).real
    p = np.exp(lp - lp.max())
    return p / p.sum()


def empirical(batch, n):
    idx = batch.samples.astype(np.int64) @ (1 << np.arange(n - 1, -1, -1))
    return np.bincount(idx, minlength=1 << n) / len(batch)


def test_default_protocol():
    small, large = sampler.default_config(12), sampler.default_config(20)
    assert small.n_samples_per_chain == 8000 and small.total_samples == 32000
    assert large.n_samples_per_chain == 2000
    assert small.stride == 12 and small.burn_in == 10 * 12 * 12
    assert small.n_chains == 4


def test_config_validation():
    with pytest.raises(ContractError):
        sampler.McmcConfig(0)
    with pytest.raises(ContractError):
        sampler.McmcConfig(10, stride=0)


def test_derive_seed_distinct_and_stable():
    a = sampler.derive_seed(1, 2, 3)
    assert a == sampler.derive_seed(1, 2, 3)
    assert len({sampler.derive_seed(1, i, j) for i in range(10) for j in range(10)}) == 100


def test_sampler_matches_distribution(rng):
    psi = random_rbm(rng, 5, 3, scale=0.6)
    batch = sampler.sample_rbm(psi, sampler.McmcConfig(20000, 4, stride=5, burn_in=200, seed=3))
    tv = 0.5 * np.abs(empirical(batch, 5) - enumerated_probs(psi)).sum()
    assert tv < 0.03
    assert 0 < batch.acceptance <= 1


def test_sampler_is_deterministic(rng):
    psi = random_rbm(rng, 6, 4)
    cfg = sampler.McmcConfig(500, 3, stride=6, burn_in=60, seed=11)
    a, b = sampler.sample_rbm(psi, cfg), sampler.sample_rbm(psi, cfg)
    np.testing.assert_array_equal(a.samples, b.samples)
    c = sampler.sample_rbm(psi, cfg.with_seed(12))
    assert not np.array_equal(a.samples, c.samples)


def test_cached_log_amps_match(rng):
    psi = random_rbm(rng, 6, 4)
    batch = sampler.sample_rbm(psi, sampler.McmcConfig(300, 2, stride=6, seed=1))
    np.testing.assert_allclose(batch.log_amps, rbm.log_amplitude(psi, batch.samples), rtol=1e-13)


def test_generic_sampler_agrees_with_compiled_chains(rng):
    psi = random_rbm(rng, 5, 3)
    cfg = sampler.McmcConfig(400, 2, stride=5, burn_in=20, seed=4)
    fast = sampler.sample_rbm(psi, cfg)
    slow = sampler.sample(lambda s: rbm.log_amplitude(psi, s), 5, cfg)
    # same random numbers; only floating-point ties could split them
    assert np.mean(fast.samples == slow.samples) > 0.99


def test_rx_rotated_chain_targets_rotated_state(rng):
    psi = random_rbm(rng, 5, 3, scale=0.5)
    j, beta = 2, 0.4
    from qaoarbm.sr import RxTarget

    tgt = RxTarget(psi, j, beta)
    batch = sampler.sample_rx_rotated(psi, j, beta, tgt.log_amplitude,
                                      sampler.McmcConfig(20000, 4, stride=5, burn_in=100, seed=8))
    lp = 2 * tgt.log_amplitude(sampler.all_bitstrings(5)).real
    p = np.exp(lp - lp.max())
    p /= p.sum()
    assert 0.5 * np.abs(empirical(batch, 5) - p).sum() < 0.03


@pytest.mark.skipif(not USE_NUMBA, reason="compares compiled and numpy kernels")
@pytest.mark.parametrize("rx_j", [-1, 1])
def test_numba_and_numpy_kernels_identical(rng, rx_j):
    psi = random_rbm(rng, 7, 9, scale=0.8)
    cfg = sampler.McmcConfig(300, 3, stride=7, burn_in=50, seed=2)
    bits0, flips, logu = sampler._draw(7, cfg)
    args = (psi.visible_bias, psi.hidden_bias, psi.weights, bits0, flips, logu, cfg.burn_in, 7, 35, 300,
            rx_j, complex(np.cos(0.3)), complex(-1j * np.sin(0.3)))
    a = kernels._run_chains_numba(*args)
    b = kernels._run_chains_numpy(*args)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_numpy_fallback_selected_by_env_flag():
    code = (
        "import numpy as np\n"
        "from qaoarbm import _jit, sampler, rbm\n"
        "psi = rbm.RbmState(np.array([0.1, -0.2, 0.3]), np.array([0.2j]), np.array([[0.5], [0.1j], [-0.3]]))\n"
        "b = sampler.sample_rbm(psi, sampler.McmcConfig(50, 2, stride=3, seed=5))\n"
        "print(int(_jit.USE_NUMBA), ''.join(map(str, b.samples.ravel())))\n"
    )
    outs = {}
    for flag in ("0", "1"):
        env = dict(os.environ, QAOARBM_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        outs[flag] = res.stdout.split()
    assert outs["1"][0] == "0"
    assert outs["0"][1] == outs["1"][1]


def test_exact_batch_weights(rng):
    psi = random_rbm(rng, 4, 2)
    batch = sampler.exact_batch(lambda s: rbm.log_amplitude(psi, s), 4)
    np.testing.assert_allclose(batch.weights, enumerated_probs(psi), rtol=1e-12)
    assert abs(batch.weights.sum() - 1) < 1e-14


def test_exact_batch_drops_zero_rows():
    batch = sampler.exact_batch(lambda s: np.where(s[:, 0] == 1, -np.inf, 0.0).astype(complex), 3)
    assert len(batch) == 4 and np.all(batch.samples[:, 0] == 0)


def test_compact_preserves_weighted_means(rng):
    psi = random_rbm(rng, 4, 2)
    batch = sampler.sample_rbm(psi, sampler.McmcConfig(1000, 2, stride=1, seed=0))
    rows = batch.compact()
    assert len(rows.samples) == len(np.unique(batch.samples, axis=0))
    v = batch.samples @ np.arange(1, 5)
    vr = rows.samples @ np.arange(1, 5)
    assert abs(batch.mean(v) - rows.weights @ vr) < 1e-12


def test_all_bitstrings_big_endian():
    B = sampler.all_bitstrings(3)
    assert B[1].tolist() == [0, 0, 1] and B[4].tolist() == [1, 0, 0]


def test_nonfinite_oracle_raises():
    with pytest.raises(NumericalOverflowError):
        sampler.sample(lambda s: np.full(len(s), np.nan + 0j), 3, sampler.McmcConfig(5, 2))


def test_samples_csv(tmp_path, rng):
    psi = random_rbm(rng, 3, 1)
    cfg = sampler.McmcConfig(4, 2, stride=3, burn_in=6, seed=0)
    batch = sampler.sample_rbm(psi, cfg)
    path = tmp_path / "s.csv"
    sampler.write_samples_csv(batch, path, cfg.stride, cfg.burn_in)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["chain", "step", "bitstring", "log_abs_psi"]
    assert len(rows) == 9
    assert rows[1][1] == "9" and rows[2][1] == "12"
