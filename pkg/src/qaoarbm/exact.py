"""Dense reference engines for small systems.

Amplitude vectors are indexed big-endian: entry ``i`` belongs to the bitstring
``B_0 B_1 ... B_{N-1}`` read as a binary number, so reshaping to ``[2] * N``
puts qubit ``j`` on axis ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError
from .graph import Graph, cut_value, edge_combinatorics
from .rbm import RbmState, log_amplitude
from .sampler import all_bitstrings

DENSE_MAX_QUBITS = 24
BRUTE_FORCE_MAX_QUBITS = 30


@dataclass(frozen=True, eq=False)
class DenseState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        n = amp.size.bit_length() - 1
        if amp.ndim != 1 or amp.size != 1 << n or n < 1:
            raise ContractError("amplitude vector length must be a power of two >= 2")
        if n > DENSE_MAX_QUBITS:
            raise ContractError(f"{n} qubits exceeds the dense cap of {DENSE_MAX_QUBITS}")
        if not np.linalg.norm(amp) > 0:
            raise ContractError("zero amplitude vector")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def normalized(self) -> "DenseState":
        return DenseState(self.amplitudes / np.linalg.norm(self.amplitudes))


def _check_cap(n: int, cap: int = DENSE_MAX_QUBITS):
    if n > cap:
        raise ContractError(f"{n} qubits exceeds the cap of {cap}")


def cost_diagonal(graph: Graph) -> np.ndarray:
    """Cut cost of every basis state in big-endian order."""
    _check_cap(graph.n_vertices)
    n = graph.n_vertices
    idx = np.arange(1 << n, dtype=np.int64)
    out = np.zeros(1 << n)
    for u, v, w in graph.edges:
        parity = ((idx >> (n - 1 - u)) ^ (idx >> (n - 1 - v))) & 1
        out += w * (1 - 2 * parity)
    return out


def apply_rx_dense(amp: np.ndarray, j: int, beta: float) -> np.ndarray:
    """``exp(-i beta X_j)`` on a big-endian vector."""
    n = amp.size.bit_length() - 1
    t = amp.reshape(2 ** j, 2, 2 ** (n - j - 1))
    c, s = math.cos(beta), -1j * math.sin(beta)
    out = np.empty_like(t)
    out[:, 0] = c * t[:, 0] + s * t[:, 1]
    out[:, 1] = s * t[:, 0] + c * t[:, 1]
    return out.reshape(-1)


def statevector_qaoa(graph: Graph, angles) -> DenseState:
    """Exact QAOA state: uniform superposition, then U_C(gamma_k) U_B(beta_k) for each layer."""
    n = graph.n_vertices
    _check_cap(n)
    diag = cost_diagonal(graph)
    amp = np.full(1 << n, 1.0 / math.sqrt(1 << n), dtype=np.complex128)
    for g, b in zip(angles.gammas, angles.betas):
        amp = amp * np.exp(-1j * g * diag)
        for j in range(n):
            amp = apply_rx_dense(amp, j, b)
    return DenseState(amp)


def statevector_cost(state: DenseState, graph: Graph) -> float:
    if state.n_qubits != graph.n_vertices:
        raise ContractError("state and graph sizes differ")
    p = np.abs(state.amplitudes) ** 2
    return float(p @ cost_diagonal(graph) / p.sum())


def rbm_to_dense(psi: RbmState, normalize: bool = True) -> DenseState:
    """All 2^N amplitudes of an RBM, rescaled by its largest modulus."""
    _check_cap(psi.n_visible)
    la = log_amplitude(psi, all_bitstrings(psi.n_visible))
    amp = np.exp(la - la.real.max())
    if normalize:
        amp /= np.linalg.norm(amp)
    return DenseState(amp)


def _as_dense(x) -> np.ndarray:
    if isinstance(x, RbmState):
        return rbm_to_dense(x).amplitudes
    if isinstance(x, DenseState):
        return x.amplitudes
    return DenseState(x).amplitudes


def dense_fidelity(x, y) -> float:
    """``|<x|y>|^2 / (<x|x> <y|y>)`` for any mix of RBM and dense states."""
    a, b = _as_dense(x), _as_dense(y)
    if a.size != b.size:
        raise ContractError("states have different qubit counts")
    ov = np.vdot(a, b)
    return float(abs(ov) ** 2 / (np.vdot(a, a).real * np.vdot(b, b).real))


def exact_p1_cost(graph: Graph, gamma: float, beta: float) -> float:
    """Closed-form depth-one expectation of the cut cost for unit-weight graphs."""
    if not graph.unit_weights:
        raise ContractError("the closed-form depth-one cost is only valid for unit edge weights")
    s4b, s2g = math.sin(4 * beta), math.sin(2 * gamma)
    c2g, c4g = math.cos(2 * gamma), math.cos(4 * gamma)
    s2b2 = math.sin(2 * beta) ** 2
    total = 0.0
    for e in edge_combinatorics(graph):
        total += s4b * s2g * (c2g ** e.q_u + c2g ** e.q_v)
        total += s2b2 * c2g ** (e.q_u + e.q_v - 2 * e.delta) * (1 - c4g ** e.delta)
    return 0.5 * total


def brute_force_optimum(graph: Graph) -> tuple[float, np.ndarray]:
    """Exhaustive minimum cut cost and its argmin (smallest big-endian integer on ties)."""
    n = graph.n_vertices
    _check_cap(n, BRUTE_FORCE_MAX_QUBITS)
    us, vs, ws = graph.edge_array
    _, best_int = kernels.min_cut_cost(n, us, vs, ws)
    bits = np.array([(best_int >> (n - 1 - j)) & 1 for j in range(n)], dtype=np.uint8)
    # re-evaluate directly so the reported value carries no accumulated rounding
    return cut_value(graph, bits), bits
