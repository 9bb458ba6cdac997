"""Stochastic reconfiguration: fit an RBM to a target state, or to the cost ground state.

The objective for target fitting is the infidelity ``D = 1 - F`` with

    F = <phi/psi>_psi * <psi/phi>_phi

where ``<.>_psi`` averages over bitstrings drawn from ``|psi|^2``. Gradients
are taken with respect to the conjugate parameters and the update solves
``(S + eps I) delta = grad`` in the full complex parameter space.

Every estimator works on a :class:`~qaoarbm.sampler.SampleBatch`. Monte Carlo
batches and exhaustive (exactly weighted) batches go through the same code,
so the exhaustive route doubles as the noise-free reference in tests.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.linalg
from scipy.linalg.blas import zherk

from . import sampler
from .errors import ContractError, GradientBlowupError, NumericalOverflowError, SolverError
from .graph import Graph, cut_value
from .rbm import RbmState, log_amplitude, log_derivatives
from .sampler import McmcConfig, SampleBatch, WeightedRows

log = logging.getLogger(__name__)

# enumeration cap for exact-expectation mode
EXACT_MAX_QUBITS = 16


@dataclass(frozen=True)
class SrConfig:
    """Settings for one SR fit.

    ``mcmc=None`` uses the default sampling protocol for the system size.
    ``patience`` stops a fit early once that many iterations pass without the
    best fidelity rising by more than ``min_delta`` (``None`` disables it).
    ``exact=True`` replaces sampling by full enumeration (small N only).
    """

    eta: float = 1.0
    epsilon: float = 1e-3
    tol: float = 1e-3
    max_iters: int = 200
    patience: int | None = 20
    min_delta: float = 1e-4
    mcmc: McmcConfig | None = None
    exact: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ContractError(f"eta must be > 0, got {self.eta}")
        if not self.epsilon >= 0:
            raise ContractError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 < self.tol < 1:
            raise ContractError(f"tol must lie in (0, 1), got {self.tol}")
        if self.max_iters < 1:
            raise ContractError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.patience is not None and self.patience < 1:
            raise ContractError(f"patience must be >= 1 or None, got {self.patience}")
        if not self.min_delta >= 0:
            raise ContractError(f"min_delta must be >= 0, got {self.min_delta}")

    def mcmc_for(self, n_qubits: int, seed: int) -> McmcConfig:
        base = self.mcmc if self.mcmc is not None else sampler.default_config(n_qubits)
        return base.with_seed(seed)

    def replace(self, **kw) -> "SrConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------
# targets


class TargetState:
    """A state ``phi`` known through its log-amplitude and a way to sample ``|phi|^2``."""

    n_qubits: int

    def log_amplitude(self, bits) -> np.ndarray:
        raise NotImplementedError

    def sample(self, cfg: McmcConfig) -> SampleBatch:
        return sampler.sample(self.log_amplitude, self.n_qubits, cfg)

    def exact_batch(self) -> SampleBatch:
        return sampler.exact_batch(self.log_amplitude, self.n_qubits)


class RbmTarget(TargetState):
    def __init__(self, state: RbmState):
        self.state = state
        self.n_qubits = state.n_visible

    def log_amplitude(self, bits):
        return log_amplitude(self.state, bits)

    def sample(self, cfg):
        return sampler.sample_rbm(self.state, cfg)


class FunctionTarget(TargetState):
    """Wraps any batched log-amplitude function; sampled with the generic sampler."""

    def __init__(self, n_qubits: int, log_amp_fn):
        self.n_qubits = int(n_qubits)
        self._fn = log_amp_fn

    def log_amplitude(self, bits):
        return np.asarray(self._fn(np.atleast_2d(bits)), dtype=np.complex128)


def _log_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``log(e^x + e^y)`` for complex arrays; ``-inf`` real parts are allowed."""
    m = np.maximum(x.real, y.real)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.exp(x - m) + np.exp(y - m))


class RxTarget(TargetState):
    """``phi = exp(-i beta X_j) psi``, i.e. ``phi(B) = cos(beta) psi(B) - i sin(beta) psi(B ^ e_j)``."""

    def __init__(self, psi: RbmState, j: int, beta: float):
        if not 0 <= int(j) < psi.n_visible:
            raise ContractError(f"qubit {j} out of range for {psi.n_visible} qubits")
        self.psi = psi
        self.j = int(j)
        self.beta = float(beta)
        self.n_qubits = psi.n_visible
        c, s = math.cos(self.beta), math.sin(self.beta)
        with np.errstate(divide="ignore"):
            self._log_c = np.log(complex(c)) if c != 0 else complex(-np.inf)
            self._log_s = np.log(complex(-1j * s)) if s != 0 else complex(-np.inf)

    def log_amplitude(self, bits):
        B = np.atleast_2d(np.asarray(bits))
        flipped = B.copy()
        flipped[:, self.j] ^= 1
        out = _log_add(self._log_c + log_amplitude(self.psi, B), self._log_s + log_amplitude(self.psi, flipped))
        return out[0] if np.asarray(bits).ndim == 1 else out

    def sample(self, cfg):
        return sampler.sample_rx_rotated(self.psi, self.j, self.beta, self.log_amplitude, cfg)


def rx_target_amplitude(psi: RbmState, j: int, beta: float) -> RxTarget:
    return RxTarget(psi, j, beta)


# --------------------------------------------------------------------------
# estimators


def _rows(batch) -> WeightedRows:
    return batch if isinstance(batch, WeightedRows) else batch.compact()


def _log_mean_exp(log_vals: np.ndarray, w: np.ndarray) -> complex:
    """log of sum_i w_i exp(log_vals_i) with a max shift; -inf if every term vanishes."""
    re = log_vals.real
    finite = np.isfinite(re)
    if not finite.any():
        return complex(-np.inf)
    m = re[finite].max()
    s = np.sum(w[finite] * np.exp(log_vals[finite] - m))
    if s == 0:
        return complex(-np.inf)
    return m + np.log(s)


@dataclass(frozen=True)
class _Overlaps:
    log_r_psi: np.ndarray  # log(phi/psi) on psi rows
    log_mean_psi: complex  # log <phi/psi>_psi
    log_mean_phi: complex  # log <psi/phi>_phi
    abs_mean_psi: float  # log <|phi/psi|>_psi

    @property
    def raw_fidelity(self) -> complex:
        return complex(np.exp(self.log_mean_psi + self.log_mean_phi))


def _overlaps(psi: RbmState, phi: TargetState, rows_psi: WeightedRows, rows_phi: WeightedRows) -> _Overlaps:
    lphi_on_psi = phi.log_amplitude(rows_psi.samples)
    log_r = lphi_on_psi - rows_psi.log_amps
    lpsi_on_phi = log_amplitude(psi, rows_phi.samples)
    log_q = lpsi_on_phi - rows_phi.log_amps
    return _Overlaps(
        log_r,
        _log_mean_exp(log_r, rows_psi.weights),
        _log_mean_exp(log_q, rows_phi.weights),
        _log_mean_exp(log_r.real.astype(np.complex128), rows_psi.weights).real,
    )


def estimate_fidelity(psi: RbmState, phi: TargetState, batch_psi, batch_phi) -> tuple[float, complex]:
    """Sampled fidelity: ``(clamped real part, raw complex value)``."""
    ov = _overlaps(psi, phi, _rows(batch_psi), _rows(batch_phi))
    raw = ov.raw_fidelity
    if raw == 0:
        log.warning("all amplitude ratios vanish; fidelity estimate is 0")
    return float(min(max(raw.real, 0.0), 1.0)), raw


def _gradient(psi: RbmState, rows_psi: WeightedRows, ov: _Overlaps) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(grad, O)`` where O holds log-derivatives on the psi rows."""
    if not np.isfinite(ov.log_mean_psi.real) or ov.log_mean_psi.real - ov.abs_mean_psi < math.log(1e-12):
        raise GradientBlowupError(
            "mean amplitude ratio <phi/psi> is indistinguishable from zero; "
            "the state is (numerically) orthogonal to the target, re-initialise"
        )
    w = rows_psi.weights
    O = log_derivatives(psi, rows_psi.samples)
    # ratios relative to their mean: scale-free and bounded by the max shift
    r = np.exp(ov.log_r_psi - ov.log_mean_psi)
    # <O*> - <r O*>, conjugating the short vector instead of O
    bracket = ((w - w * r.conj()) @ O).conj()
    return ov.raw_fidelity * bracket, O


def estimate_gradient(psi: RbmState, phi: TargetState, batch_psi, batch_phi) -> np.ndarray:
    """d(1 - F)/d theta* from samples, in the flat parameter ordering."""
    rows_psi, rows_phi = _rows(batch_psi), _rows(batch_phi)
    grad, _ = _gradient(psi, rows_psi, _overlaps(psi, phi, rows_psi, rows_phi))
    return grad


def _centered_factor(O: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``X`` with ``S = X^H X``: rows ``sqrt(w_i) (O_i - <O>)``."""
    return np.sqrt(w)[:, None] * (O - w @ O)


def _gram(X: np.ndarray, side: str) -> np.ndarray:
    """``X^H X`` (side "cols") or ``X X^H`` (side "rows") from one Hermitian rank-k update.

    Works on the transpose of a C-ordered ``X``, which BLAS sees as Fortran
    order without a copy; that yields the complex conjugate of the product.
    """
    Xt = X.T if X.flags.c_contiguous else np.ascontiguousarray(X).T
    U = zherk(1.0, Xt, trans=0 if side == "cols" else 2).conj()
    return np.triu(U) + np.triu(U, 1).conj().T


def estimate_s_matrix(batch_psi, log_derivs: np.ndarray | None = None, psi: RbmState | None = None) -> np.ndarray:
    """Covariance of log-derivatives over the batch (quantum geometric tensor).

    Pass the derivatives row-aligned with ``batch_psi.samples`` or pass ``psi``
    to have them computed.
    """
    if log_derivs is None:
        if psi is None:
            raise ContractError("need either log_derivs or psi")
        rows = _rows(batch_psi)
        O, w = log_derivatives(psi, rows.samples), rows.weights
    else:
        O = np.atleast_2d(np.asarray(log_derivs, dtype=np.complex128))
        w = batch_psi.weights if isinstance(batch_psi, WeightedRows) else batch_psi.probabilities()
    return _gram(_centered_factor(O, w), "cols")


def _solve_shifted(S: np.ndarray, grad: np.ndarray, eps: float) -> np.ndarray:
    A = S + eps * np.eye(S.shape[0])
    try:
        return scipy.linalg.solve(A, grad, assume_a="her")
    except (np.linalg.LinAlgError, ValueError) as exc:
        log.warning("Hermitian solve failed (%s); falling back to least squares", exc)
    sol, *_ = np.linalg.lstsq(A, grad, rcond=None)
    if not np.all(np.isfinite(sol)):
        raise SolverError("SR linear system could not be solved")
    return sol


def _solve_factored(X: np.ndarray, grad: np.ndarray, eps: float) -> np.ndarray:
    """Solve ``(X^H X + eps I) d = grad`` choosing the cheaper side of the factor."""
    n, P = X.shape
    if n >= P or eps == 0:
        return _solve_shifted(_gram(X, "cols"), grad, eps)
    # Woodbury: (X^H X + eps)^-1 = (I - X^H (X X^H + eps)^-1 X) / eps
    y = _solve_shifted(_gram(X, "rows"), X @ grad, eps)
    return (grad - (y.conj() @ X).conj()) / eps


def sr_update(theta: np.ndarray, grad: np.ndarray, S: np.ndarray, cfg: SrConfig) -> np.ndarray:
    """``theta - eta * (S + eps I)^-1 grad``."""
    theta = np.asarray(theta, dtype=np.complex128)
    grad = np.asarray(grad, dtype=np.complex128)
    if theta.shape != grad.shape or S.shape != (grad.size, grad.size):
        raise ContractError(f"shape mismatch: theta {theta.shape}, grad {grad.shape}, S {S.shape}")
    if not np.any(grad):
        return theta.copy()
    delta = _solve_shifted(S, grad, cfg.epsilon)
    return theta - cfg.eta * delta


def _residual(X: np.ndarray, delta: np.ndarray, grad: np.ndarray, eps: float) -> float:
    r = ((X @ delta).conj() @ X).conj() + eps * delta - grad
    return float(np.linalg.norm(r) / max(np.linalg.norm(grad), 1e-300))


# --------------------------------------------------------------------------
# optimisation loops


@dataclass
class IterationRecord:
    iteration: int
    fidelity: float
    fidelity_raw: complex
    grad_norm: float | None
    residual: float | None
    wall_time: float


@dataclass
class OptimizationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    best_fidelity: float = 0.0
    best_iteration: int = -1
    stop_reason: str = ""

    @property
    def n_updates(self) -> int:
        return sum(r.grad_norm is not None for r in self.records)

    def best_so_far(self) -> np.ndarray:
        return np.maximum.accumulate([r.fidelity for r in self.records]) if self.records else np.zeros(0)

    def to_jsonl(self) -> str:
        lines = []
        for r in self.records:
            d = asdict(r)
            d["fidelity_raw"] = [r.fidelity_raw.real, r.fidelity_raw.imag]
            lines.append(json.dumps(d))
        return "\n".join(lines) + ("\n" if lines else "")


def _batches(psi: RbmState, phi: TargetState, cfg: SrConfig, seed: int, it: int):
    if cfg.exact:
        if psi.n_visible > EXACT_MAX_QUBITS:
            raise ContractError(f"exact expectations limited to {EXACT_MAX_QUBITS} qubits")
        return (
            sampler.exact_batch(lambda s: log_amplitude(psi, s), psi.n_visible),
            phi.exact_batch(),
        )
    n = psi.n_visible
    b_psi = sampler.sample_rbm(psi, cfg.mcmc_for(n, sampler.derive_seed(seed, it, 0)))
    b_phi = phi.sample(cfg.mcmc_for(n, sampler.derive_seed(seed, it, 1)))
    return b_psi, b_phi


def optimize_to_target(
    initial: RbmState, phi: TargetState, cfg: SrConfig, seed: int = 0
) -> tuple[RbmState, OptimizationTrace]:
    """Fit ``initial`` to ``phi`` by SR on the infidelity.

    Each iteration draws fresh samples of both states, records the fidelity,
    stops once it reaches ``1 - tol`` and otherwise takes one SR step. The
    highest-fidelity parameters seen are returned.
    """
    if initial.n_visible != phi.n_qubits:
        raise ContractError(f"state has {initial.n_visible} qubits, target has {phi.n_qubits}")
    trace = OptimizationTrace()
    state = best = initial
    t0 = time.perf_counter()
    progress_f, progress_it = -1.0, 0
    for it in range(cfg.max_iters + 1):
        rows_psi, rows_phi = (b.compact() for b in _batches(state, phi, cfg, seed, it))
        ov = _overlaps(state, phi, rows_psi, rows_phi)
        raw = ov.raw_fidelity
        F = float(min(max(raw.real, 0.0), 1.0))
        rec = IterationRecord(it, F, raw, None, None, 0.0)
        trace.records.append(rec)
        if F > trace.best_fidelity or trace.best_iteration < 0:
            trace.best_fidelity, trace.best_iteration, best = F, it, state
        if F > progress_f + cfg.min_delta:
            progress_f, progress_it = F, it
        if F >= 1.0 - cfg.tol:
            trace.converged, trace.stop_reason = True, "tolerance"
            rec.wall_time = time.perf_counter() - t0
            break
        if it == cfg.max_iters:
            trace.stop_reason = "max_iters"
            rec.wall_time = time.perf_counter() - t0
            break
        if cfg.patience is not None and it - progress_it >= cfg.patience:
            trace.stop_reason = "stalled"
            rec.wall_time = time.perf_counter() - t0
            break
        try:
            grad, O = _gradient(state, rows_psi, ov)
        except GradientBlowupError as exc:
            log.warning("iteration %d: %s", it, exc)
            trace.stop_reason = "gradient_blowup"
            rec.wall_time = time.perf_counter() - t0
            break
        X = _centered_factor(O, rows_psi.weights)
        delta = _solve_factored(X, grad, cfg.epsilon)
        rec.grad_norm = float(np.linalg.norm(grad))
        rec.residual = _residual(X, delta, grad, cfg.epsilon)
        rec.wall_time = time.perf_counter() - t0
        try:
            state = state.with_parameters(state.parameters() - cfg.eta * delta)
        except NumericalOverflowError as exc:
            log.warning("iteration %d: update produced %s", it, exc)
            trace.stop_reason = "overflow"
            break
    return best, trace


def rx_gradient_closed_form(psi: RbmState, j: int, dbeta: float) -> np.ndarray:
    """Infidelity gradient for the target ``exp(-i dbeta X_j) psi`` in closed form.

    Uses exact expectations over all bitstrings; test oracle only.
    """
    n = psi.n_visible
    if n > EXACT_MAX_QUBITS:
        raise ContractError(f"closed form needs enumeration; {n} qubits is too many")
    batch = sampler.exact_batch(lambda s: log_amplitude(psi, s), n)
    B = batch.samples
    flipped = B.copy()
    flipped[:, j] ^= 1
    rho = np.exp(log_amplitude(psi, flipped) - batch.log_amps)  # psi^{X_j} / psi
    w = batch.weights
    Oc = log_derivatives(psi, B).conj()
    mean_rho = w @ rho
    pref = 0.5j * math.sin(2 * dbeta) - math.sin(dbeta) ** 2 * np.conj(mean_rho)
    return pref * ((w * rho) @ Oc - (w @ Oc) * mean_rho)


def optimize_ground_state(
    graph: Graph, initial: RbmState, cfg: SrConfig, seed: int = 0
) -> tuple[RbmState, tuple[float, float], list[float]]:
    """SR minimisation of the mean cut cost.

    Returns the state, the final ``(energy, stderr)`` from a fresh batch, and
    the per-iteration energy history. The energy is an average of cut values
    of actual bitstrings, so it can never fall below the true optimum.
    """
    if graph.n_vertices != initial.n_visible:
        raise ContractError(f"graph has {graph.n_vertices} vertices, state has {initial.n_visible}")
    n = initial.n_visible
    state = initial
    history = []

    def draw(st, it):
        if cfg.exact:
            return sampler.exact_batch(lambda s: log_amplitude(st, s), n)
        return sampler.sample_rbm(st, cfg.mcmc_for(n, sampler.derive_seed(seed, it, 0)))

    for it in range(cfg.max_iters):
        rows = draw(state, it).compact()
        E = cut_value(graph, rows.samples)
        w = rows.weights
        e_mean = float(w @ E)
        history.append(e_mean)
        O = log_derivatives(state, rows.samples)
        X = _centered_factor(O, w)
        grad = ((np.sqrt(w) * (E - e_mean)) @ X).conj()  # X^H v for real v
        if not np.any(np.abs(grad) > 0):
            break
        delta = _solve_factored(X, grad, cfg.epsilon)
        state = state.with_parameters(state.parameters() - cfg.eta * delta)
    final = draw(state, cfg.max_iters)
    E = cut_value(graph, final.samples)
    mean = float(final.mean(E))
    if final.weights is not None:
        err = 0.0
    else:
        cm = final.chain_means(E)
        err = float(cm.std(ddof=1) / math.sqrt(cm.size)) if cm.size > 1 else float("nan")
    return state, (mean, err), history
