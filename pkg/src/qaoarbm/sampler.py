"""Markov-chain sampling of bitstrings from |psi|^2.

Chains use single-bit-flip Metropolis proposals. All randomness for a chain
(start bitstring, proposed sites, acceptance uniforms) is drawn up front from
a per-chain child of ``SeedSequence(seed)``, so results do not depend on how
chains are scheduled.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple

import numpy as np

from . import kernels
from .errors import ContractError, NumericalOverflowError
from .rbm import RbmState, log_amplitude

log = logging.getLogger(__name__)

# systems with fewer qubits than this get the larger sample budget
LARGE_SYSTEM_QUBITS = 20


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed for a component identified by an integer counter path.

    ``derive_seed(s, 3, 1)`` is ``SeedSequence(s, spawn_key=(3, 1))`` folded
    to one 63-bit integer. Distinct key paths never collide in practice.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True)
class McmcConfig:
    n_samples_per_chain: int
    n_chains: int = 4
    stride: int = 1
    burn_in: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples_per_chain < 1 or self.n_chains < 1:
            raise ContractError("sample and chain counts must be >= 1")
        if self.stride < 1:
            raise ContractError("stride must be >= 1")
        if self.burn_in < 0:
            raise ContractError("burn_in must be >= 0")

    @property
    def n_steps(self) -> int:
        return self.burn_in + self.n_samples_per_chain * self.stride

    @property
    def total_samples(self) -> int:
        return self.n_samples_per_chain * self.n_chains

    def with_seed(self, seed: int) -> "McmcConfig":
        return replace(self, seed=int(seed))


def default_config(n_qubits: int, seed: int = 0) -> McmcConfig:
    """Sampling protocol: 4 chains, N single flips between records.

    Below 20 qubits each chain records 8000 samples, otherwise 2000. Burn-in
    is 10 * N * stride flips.
    """
    n = int(n_qubits)
    per_chain = 8000 if n < LARGE_SYSTEM_QUBITS else 2000
    return McmcConfig(per_chain, 4, stride=n, burn_in=10 * n * n, seed=seed)


class WeightedRows(NamedTuple):
    """Distinct bitstrings of a batch with their summed weights."""

    samples: np.ndarray
    weights: np.ndarray
    log_amps: np.ndarray


def _row_keys(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[1]
    if n <= 62:
        return samples.astype(np.int64) @ (np.int64(1) << np.arange(n - 1, -1, -1, dtype=np.int64))
    packed = np.ascontiguousarray(np.packbits(samples, axis=1))
    return packed.view(np.dtype((np.void, packed.shape[1]))).ravel()


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Pooled samples with cached log-amplitudes.

    ``weights`` is ``None`` for Monte Carlo batches (every row counts equally)
    and holds normalised probabilities for exhaustive batches, which turns
    every sample mean into an exact expectation.
    """

    samples: np.ndarray
    log_amps: np.ndarray
    chain_id: np.ndarray
    weights: np.ndarray | None = None
    acceptance: float | None = None

    def __post_init__(self):
        n = self.samples.shape[0]
        if self.log_amps.shape != (n,) or self.chain_id.shape != (n,):
            raise ContractError("samples, log_amps and chain_id lengths differ")
        if not np.all(np.isfinite(self.log_amps)):
            raise NumericalOverflowError("non-finite cached log-amplitude in batch")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_chains(self) -> int:
        return int(self.chain_id.max()) + 1 if len(self) else 0

    def probabilities(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return np.full(len(self), 1.0 / len(self))

    def mean(self, values, axis: int = 0):
        """Weighted sample mean along the leading axis."""
        p = self.probabilities()
        values = np.asarray(values)
        return np.tensordot(p, values, axes=(0, axis))

    def compact(self) -> WeightedRows:
        """Merge repeated bitstrings; weighted means over the result are unchanged."""
        _, first, inverse = np.unique(_row_keys(self.samples), return_index=True, return_inverse=True)
        w = np.bincount(inverse.ravel(), weights=self.probabilities(), minlength=first.size)
        return WeightedRows(self.samples[first], w, self.log_amps[first])

    def chain_means(self, values) -> np.ndarray:
        values = np.asarray(values)
        return np.array([values[self.chain_id == c].mean(axis=0) for c in range(self.n_chains)])


def _draw(n_qubits: int, cfg: McmcConfig):
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_chains)
    bits0 = np.empty((cfg.n_chains, n_qubits), dtype=np.uint8)
    flips = np.empty((cfg.n_chains, cfg.n_steps), dtype=np.int64)
    logu = np.empty((cfg.n_chains, cfg.n_steps), dtype=np.float64)
    for c, child in enumerate(children):
        rng = np.random.default_rng(child)
        bits0[c] = rng.integers(0, 2, n_qubits)
        flips[c] = rng.integers(0, n_qubits, cfg.n_steps)
        # 1 - U keeps the argument of log in (0, 1]
        logu[c] = np.log1p(-rng.random(cfg.n_steps))
    return bits0, flips, logu


def _pool(chains: np.ndarray, log_amp_fn, accepted=None, n_steps=None) -> SampleBatch:
    n_chains, n_samples, N = chains.shape
    samples = chains.reshape(n_chains * n_samples, N)
    chain_id = np.repeat(np.arange(n_chains), n_samples)
    # chains revisit the same bitstrings often; evaluate each one once
    _, first, inverse = np.unique(_row_keys(samples), return_index=True, return_inverse=True)
    log_amps = np.asarray(log_amp_fn(samples[first]), dtype=np.complex128)[inverse.ravel()]
    rate = None
    if accepted is not None and n_steps:
        rate = float(np.sum(accepted)) / (n_chains * n_steps)
    return SampleBatch(samples, log_amps, chain_id, acceptance=rate)


def sample(log_amp_fn: Callable, n_qubits: int, cfg: McmcConfig) -> SampleBatch:
    """Metropolis sampling of |psi|^2 for any batched log-amplitude oracle.

    ``log_amp_fn`` maps a (n, N) array of 0/1 rows to n complex log-amplitudes.
    This path calls the oracle once per step for all chains together; RBM
    states should go through :func:`sample_rbm`, which runs compiled chains.
    """
    bits0, flips, logu = _draw(n_qubits, cfg)
    rows = np.arange(cfg.n_chains)
    B = bits0.copy()
    cur = np.asarray(log_amp_fn(B), dtype=np.complex128)
    if not np.all(np.isfinite(cur)):
        raise NumericalOverflowError(f"log-amplitude oracle returned {cur} for start bitstrings")
    out = np.empty((cfg.n_chains, cfg.n_samples_per_chain, n_qubits), dtype=np.uint8)
    accepted = np.zeros(cfg.n_chains, dtype=np.int64)
    for t in range(cfg.n_steps):
        prop = B.copy()
        prop[rows, flips[:, t]] ^= 1
        new = np.asarray(log_amp_fn(prop), dtype=np.complex128)
        if not np.all(np.isfinite(new)):
            bad = int(np.argmin(np.isfinite(new)))
            raise NumericalOverflowError(
                f"log-amplitude oracle returned {new[bad]} at step {t} for bitstring {prop[bad].tolist()}"
            )
        ok = logu[:, t] < 2.0 * (new.real - cur.real)
        B[ok] = prop[ok]
        cur[ok] = new[ok]
        accepted += ok
        done = t + 1
        if done > cfg.burn_in and (done - cfg.burn_in) % cfg.stride == 0:
            out[:, (done - cfg.burn_in) // cfg.stride - 1] = B
    return _pool(out, log_amp_fn, accepted, cfg.n_steps)


def sample_rbm(state: RbmState, cfg: McmcConfig) -> SampleBatch:
    """Sample |psi|^2 for an RBM through the compiled chain kernel."""
    bits0, flips, logu = _draw(state.n_visible, cfg)
    chains, acc = kernels.run_chains(
        state.visible_bias, state.hidden_bias, state.weights,
        bits0, flips, logu, cfg.burn_in, cfg.stride, cfg.n_samples_per_chain,
    )
    return _pool(chains, lambda s: log_amplitude(state, s), acc, cfg.n_steps)


def sample_rx_rotated(state: RbmState, j: int, beta: float, log_amp_fn, cfg: McmcConfig) -> SampleBatch:
    """Sample |exp(-i beta X_j) psi|^2 through the compiled chain kernel."""
    bits0, flips, logu = _draw(state.n_visible, cfg)
    chains, acc = kernels.run_chains(
        state.visible_bias, state.hidden_bias, state.weights,
        bits0, flips, logu, cfg.burn_in, cfg.stride, cfg.n_samples_per_chain,
        rx_j=j, rx_beta=beta,
    )
    return _pool(chains, log_amp_fn, acc, cfg.n_steps)


def all_bitstrings(n: int) -> np.ndarray:
    """Every bitstring of length n as rows; row index is the big-endian integer."""
    if n > 26:
        raise ContractError(f"refusing to enumerate 2^{n} bitstrings")
    idx = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8)


def exact_batch(log_amp_fn: Callable, n_qubits: int) -> SampleBatch:
    """All 2^N bitstrings weighted by |psi|^2 / Z: sample means become exact."""
    samples = all_bitstrings(n_qubits)
    la = np.asarray(log_amp_fn(samples), dtype=np.complex128)
    with np.errstate(divide="ignore"):
        logp = 2.0 * la.real
    logp -= logp.max()
    p = np.exp(logp)
    p /= p.sum()
    keep = p > 0
    return SampleBatch(samples[keep], la[keep], np.zeros(int(keep.sum()), dtype=np.int64), weights=p[keep])


def write_samples_csv(batch: SampleBatch, path, stride: int = 1, burn_in: int = 0) -> None:
    """Dump a batch as CSV: chain, step, bitstring, log|psi|."""
    steps = np.zeros(len(batch), dtype=np.int64)
    for c in range(batch.n_chains):
        sel = np.flatnonzero(batch.chain_id == c)
        steps[sel] = burn_in + stride * (np.arange(sel.size) + 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "step", "bitstring", "log_abs_psi"])
        for row, c, st, la in zip(batch.samples, batch.chain_id, steps, batch.log_amps):
            w.writerow([int(c), int(st), "".join(map(str, row.tolist())), repr(float(la.real))])
