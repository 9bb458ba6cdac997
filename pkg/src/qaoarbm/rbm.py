"""Complex-parameter RBM wavefunction and its exact gate maps.

The amplitude of a bitstring ``B`` (entries 0/1) is

    psi(B) = exp(sum_j a_j B_j) * prod_k [1 + exp(b_k + sum_j W_jk B_j)]

and is never normalised. Everything is handled in log space.

The flat parameter vector used by the optimiser is ordered as all visible
biases, then all hidden biases, then ``W`` in row-major order (``W[j, k]``
sits at ``N + N_h + j * N_h + k``). Other modules rely on that ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ContractError, NumericalOverflowError

_CHECKPOINT_FORMAT = "qaoarbm.rbm-state"
_CHECKPOINT_VERSION = 1


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=np.complex128, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RbmState:
    """Immutable RBM parameters ``a`` (N,), ``b`` (N_h,), ``W`` (N, N_h)."""

    visible_bias: np.ndarray
    hidden_bias: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        a = _frozen(self.visible_bias)
        b = _frozen(self.hidden_bias)
        W = _frozen(self.weights)
        if a.ndim != 1 or a.size < 1:
            raise ContractError("visible_bias must be a non-empty vector")
        if b.ndim != 1:
            raise ContractError("hidden_bias must be a vector")
        if W.shape != (a.size, b.size):
            raise ContractError(f"weights shape {W.shape} != ({a.size}, {b.size})")
        for name, arr in (("visible_bias", a), ("hidden_bias", b), ("weights", W)):
            if not np.all(np.isfinite(arr)):
                raise NumericalOverflowError(f"non-finite entries in {name}")
        object.__setattr__(self, "visible_bias", a)
        object.__setattr__(self, "hidden_bias", b)
        object.__setattr__(self, "weights", W)

    @property
    def n_visible(self) -> int:
        return self.visible_bias.size

    @property
    def n_hidden(self) -> int:
        return self.hidden_bias.size

    @property
    def n_params(self) -> int:
        N, M = self.n_visible, self.n_hidden
        return N + M + N * M

    def parameters(self) -> np.ndarray:
        """Flat copy of all parameters in the frozen (a, b, W row-major) order."""
        return np.concatenate([self.visible_bias, self.hidden_bias, self.weights.ravel()])

    def with_parameters(self, theta) -> "RbmState":
        theta = np.asarray(theta, dtype=np.complex128)
        N, M = self.n_visible, self.n_hidden
        if theta.shape != (self.n_params,):
            raise ContractError(f"expected {self.n_params} parameters, got {theta.shape}")
        return RbmState(theta[:N], theta[N : N + M], theta[N + M :].reshape(N, M))

    def __repr__(self) -> str:
        return f"RbmState(n_visible={self.n_visible}, n_hidden={self.n_hidden})"


@dataclass(frozen=True)
class GateReport:
    """Bookkeeping for one applied gate.

    For exact gates ``constant_log`` is ``log C`` with
    ``psi_new = C * G @ psi_old`` (``G`` taken without its global phase).
    Approximate gates leave it ``None`` and record ``fidelity`` instead.
    """

    kind: str
    qubits: tuple[int, ...]
    exact: bool
    constant_log: complex | None = None
    fidelity: float | None = None
    converged: bool | None = None


def softplus(z):
    """``log(1 + exp(z))`` for complex ``z`` without overflow.

    For ``Re z > 0`` this is evaluated as ``z + log(1 + exp(-z))``.
    """
    z = np.asarray(z, dtype=np.complex128)
    pos = z.real > 0
    return np.log1p(np.exp(np.where(pos, -z, z))) + np.where(pos, z, 0)


def logistic(z):
    """Complex logistic ``e^z / (1 + e^z)``, evaluated on the stable side."""
    z = np.asarray(z, dtype=np.complex128)
    pos = z.real > 0
    e = np.exp(np.where(pos, -z, z))
    return np.where(pos, 1.0, e) / (1.0 + e)


def _as_bits(state: RbmState, bits) -> tuple[np.ndarray, bool]:
    B = np.asarray(bits)
    single = B.ndim == 1
    B = np.atleast_2d(B)
    if B.ndim != 2 or B.shape[1] != state.n_visible:
        raise ContractError(f"bitstring length {B.shape[-1]} != n_visible {state.n_visible}")
    return B.astype(np.float64), single


def hidden_activations(state: RbmState, bits) -> np.ndarray:
    """``b_k + sum_j W_jk B_j`` for each row of ``bits``."""
    B, _ = _as_bits(state, bits)
    return state.hidden_bias + B @ state.weights


def log_amplitude(state: RbmState, bits):
    """``log psi(B)``; ``bits`` may be one bitstring or a (n, N) batch."""
    B, single = _as_bits(state, bits)
    theta = state.hidden_bias + B @ state.weights
    out = B @ state.visible_bias + kernels.softplus_row_sums(theta)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite log-amplitude")
    return out[0] if single else out


def log_derivatives(state: RbmState, bits) -> np.ndarray:
    """d log psi / d theta_k for every parameter, in the frozen ordering.

    Returns shape (P,) for a single bitstring or (n, P) for a batch.
    """
    B, single = _as_bits(state, bits)
    sig = logistic(state.hidden_bias + B @ state.weights)
    n, N = B.shape
    M = state.n_hidden
    out = np.empty((n, N + M + N * M), dtype=np.complex128)
    out[:, :N] = B
    out[:, N : N + M] = sig
    dW = out[:, N + M :].view()
    dW.shape = (n, N, M)  # raises rather than silently copying
    np.multiply(B[:, :, None], sig[:, None, :], out=dW)
    if not np.all(np.isfinite(out)):
        raise NumericalOverflowError("non-finite log-derivative")
    return out[0] if single else out


def init_plus(n: int) -> RbmState:
    """The uniform superposition: N visible units, no hidden units, zero bias."""
    if n < 1:
        raise ContractError("need at least one qubit")
    return RbmState(np.zeros(n), np.zeros(0), np.zeros((n, 0)))


def _check_qubit(state: RbmState, i: int) -> int:
    i = int(i)
    if not 0 <= i < state.n_visible:
        raise ContractError(f"qubit index {i} out of range [0, {state.n_visible})")
    return i


def apply_pauli(state: RbmState, axis: str, i: int) -> tuple[RbmState, GateReport]:
    i = _check_qubit(state, i)
    axis = axis.upper()
    a = state.visible_bias.copy()
    b = state.hidden_bias.copy()
    W = state.weights.copy()
    if axis == "Z":
        a[i] += 1j * np.pi
        log_c = 0j
    elif axis in ("X", "Y"):
        log_c = -a[i]
        b += W[i]
        W[i] = -W[i]
        a[i] = -a[i]
        if axis == "Y":
            a[i] += 1j * np.pi
            log_c += 0.5j * np.pi
    else:
        raise ContractError(f"unknown Pauli axis {axis!r}")
    return RbmState(a, b, W), GateReport(axis, (i,), True, complex(log_c))


def apply_rz(state: RbmState, i: int, phi: float) -> tuple[RbmState, GateReport]:
    """RZ(phi) ~ diag(1, e^{i phi}) on qubit ``i``."""
    i = _check_qubit(state, i)
    a = state.visible_bias.copy()
    a[i] += 1j * phi
    new = RbmState(a, state.hidden_bias, state.weights)
    return new, GateReport("RZ", (i,), True, 0j)


def complex_arccosh(z) -> complex:
    """Principal-branch arccosh, ``log(z + sqrt(z - 1) sqrt(z + 1))``."""
    z = complex(z)
    if not np.isfinite(z.real) or not np.isfinite(z.imag):
        raise ContractError("arccosh of a non-finite number")
    return complex(np.log(z + np.sqrt(z - 1) * np.sqrt(z + 1)))


def apply_rzz(state: RbmState, i: int, j: int, phi: float) -> tuple[RbmState, GateReport]:
    """RZZ(phi) = exp(-i phi/2 Z_i Z_j) ~ diag(1, e^{i phi}, e^{i phi}, 1).

    Adds one hidden unit coupled only to ``i`` and ``j``.
    """
    i = _check_qubit(state, i)
    j = _check_qubit(state, j)
    if i == j:
        raise ContractError("RZZ needs two distinct qubits")
    A = complex_arccosh(np.exp(1j * phi))
    a = state.visible_bias.copy()
    a[i] += A
    a[j] -= A
    col = np.zeros((state.n_visible, 1), dtype=np.complex128)
    col[i, 0] = -2 * A
    col[j, 0] = 2 * A
    new = RbmState(a, np.append(state.hidden_bias, 0.0), np.hstack([state.weights, col]))
    return new, GateReport("RZZ", (i, j), True, complex(np.log(2.0)))


def save_state(state: RbmState, path) -> None:
    """Write a JSON checkpoint; floats are stored via repr so they round-trip exactly."""

    def pairs(arr):
        return [[float(v.real), float(v.imag)] for v in np.asarray(arr).ravel()]

    doc = {
        "format": _CHECKPOINT_FORMAT,
        "version": _CHECKPOINT_VERSION,
        "n_visible": state.n_visible,
        "n_hidden": state.n_hidden,
        "ordering": "visible_bias, hidden_bias, weights row-major; entries are [real, imag]",
        "visible_bias": pairs(state.visible_bias),
        "hidden_bias": pairs(state.hidden_bias),
        "weights": pairs(state.weights),
    }
    Path(path).write_text(json.dumps(doc))


def load_state(path) -> RbmState:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != _CHECKPOINT_FORMAT:
        raise ContractError(f"{path}: not an RBM checkpoint")
    N, M = int(doc["n_visible"]), int(doc["n_hidden"])

    def unpack(rows, shape):
        arr = np.array(rows, dtype=np.float64).reshape(-1, 2)
        out = np.empty(arr.shape[0], dtype=np.complex128)
        out.real, out.imag = arr[:, 0], arr[:, 1]
        return out.reshape(shape)

    return RbmState(
        unpack(doc["visible_bias"], (N,)),
        unpack(doc["hidden_bias"], (M,)),
        unpack(doc["weights"], (N, M)),
    )
