"""QAOA circuits on RBM states.

A depth-p circuit is applied as:

    U_C(gamma_1) exactly, then RX(beta_1) on each qubit by SR fitting;
    for k = 2..p: U_C(gamma_k) exactly, compress back to |E| hidden units,
    then RX(beta_k) on each qubit.

Angles are also optimised here (Adam on finite differences) and 1D cuts of
the cost landscape are produced for plotting.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import exact, sampler
from .errors import ContractError
from .graph import Graph, cut_value
from .rbm import GateReport, RbmState, apply_rzz, init_plus
from .sampler import McmcConfig
from .sr import RbmTarget, RxTarget, SrConfig, optimize_to_target, estimate_fidelity

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QaoaAngles:
    gammas: np.ndarray
    betas: np.ndarray

    def __post_init__(self):
        g = np.array(self.gammas, dtype=np.float64).ravel()
        b = np.array(self.betas, dtype=np.float64).ravel()
        if g.size != b.size or g.size < 1:
            raise ContractError(f"need equal, non-zero numbers of gammas and betas, got {g.size} and {b.size}")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(b))):
            raise ContractError("angles must be finite")
        g.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "betas", b)

    @property
    def p(self) -> int:
        return self.gammas.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.gammas, self.betas])

    @classmethod
    def from_vector(cls, x) -> "QaoaAngles":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[: x.size // 2], x[x.size // 2 :])

    def truncated(self, p: int) -> "QaoaAngles":
        return QaoaAngles(self.gammas[:p], self.betas[:p])

    def substituted(self, axis: str, value: float) -> "QaoaAngles":
        """Copy with one angle replaced; ``axis`` is ``gamma<k>`` or ``beta<k>``, k from 1."""
        name, k = parse_axis(axis, self.p)
        g, b = self.gammas.copy(), self.betas.copy()
        (g if name == "gamma" else b)[k - 1] = value
        return QaoaAngles(g, b)

    def canonical(self, integer_weights: bool = True, degree_parity: str | None = None) -> "QaoaAngles":
        """Equivalent angles of smallest magnitude.

        Every beta has period pi/2: the mixer commutes with the global bit
        flip, which fixes |+> and the cost. With integer weights every gamma
        has period pi, and ``exp(-i pi/2 C)`` equals a product of Z over the
        odd-degree vertices up to phase. For ``degree_parity="even"`` that is
        the identity, so gammas get period pi/2. For ``"odd"`` it is Z on
        every qubit, and shifting gamma_k by pi/2 while negating the betas
        of layers k..p leaves the measured cost unchanged. Finally all signs
        flip together when the first gamma is negative, since complex
        conjugation keeps the cost.
        """
        g = self.gammas.copy()
        b = self.betas.copy()
        if integer_weights:
            g = (g + np.pi / 2) % np.pi - np.pi / 2
            if degree_parity in ("even", "odd"):
                for k in range(g.size):
                    shift = np.round(g[k] / (np.pi / 2))
                    if shift:
                        g[k] -= shift * np.pi / 2
                        if degree_parity == "odd" and int(shift) % 2:
                            b[k:] = -b[k:]
        b = (b + np.pi / 4) % (np.pi / 2) - np.pi / 4
        if g[0] < 0 or (g[0] == 0 and b[0] < 0):
            g, b = -g, -b
        return QaoaAngles(g, b)

    def __repr__(self) -> str:
        return f"QaoaAngles(gammas={self.gammas.tolist()}, betas={self.betas.tolist()})"


def parse_axis(axis: str, p: int) -> tuple[str, int]:
    m = re.fullmatch(r"(gamma|beta)(\d+)", axis.strip().lower())
    if not m or not 1 <= int(m.group(2)) <= p:
        raise ContractError(f"axis must be gamma<k> or beta<k> with 1 <= k <= {p}, got {axis!r}")
    return m.group(1), int(m.group(2))


@dataclass
class RxRecord:
    layer: int
    qubit: int
    fidelity: float
    converged: bool
    iterations: int


@dataclass
class CompressionRecord:
    layer: int
    fidelity: float
    converged: bool
    accepted: bool
    hidden_before: int
    hidden_after: int
    init_gamma: float


@dataclass
class CircuitTrace:
    gates: list[GateReport] = field(default_factory=list)
    rx: list[RxRecord] = field(default_factory=list)
    compressions: list[CompressionRecord] = field(default_factory=list)
    hidden_units: list[int] = field(default_factory=list)  # after each layer

    @property
    def rzz_count(self) -> int:
        return sum(g.kind == "RZZ" for g in self.gates)

    @property
    def rx_count(self) -> int:
        return sum(g.kind == "RX" for g in self.gates)

    @property
    def rx_fidelities(self) -> np.ndarray:
        return np.array([r.fidelity for r in self.rx])

    @property
    def min_rx_fidelity(self) -> float:
        return float(self.rx_fidelities.min()) if self.rx else 1.0

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.rx) and all(c.converged for c in self.compressions)

    def to_jsonl(self) -> str:
        lines = []
        for g in self.gates:
            d = asdict(g)
            if g.constant_log is not None:
                d["constant_log"] = [g.constant_log.real, g.constant_log.imag]
            lines.append(json.dumps({"event": "gate", **d}))
        lines += [json.dumps({"event": "rx", **asdict(r)}) for r in self.rx]
        lines += [json.dumps({"event": "compression", **asdict(c)}) for c in self.compressions]
        lines.append(json.dumps({
            "event": "summary",
            "rzz_count": self.rzz_count,
            "rx_count": self.rx_count,
            "hidden_units": self.hidden_units,
            "min_rx_fidelity": self.min_rx_fidelity,
        }))
        return "\n".join(lines) + "\n"


def apply_uc(state: RbmState, graph: Graph, gamma: float) -> tuple[RbmState, list[GateReport]]:
    """``exp(-i gamma C)`` as one RZZ(2 gamma w) per edge; adds |E| hidden units."""
    if state.n_visible != graph.n_vertices:
        raise ContractError(f"state has {state.n_visible} qubits, graph has {graph.n_vertices} vertices")
    reports = []
    for u, v, w in graph.edges:
        state, rep = apply_rzz(state, u, v, 2.0 * gamma * w)
        reports.append(rep)
    return state, reports


def apply_ub(
    state: RbmState, beta: float, cfg: SrConfig, seed: int = 0, order: Sequence[int] | None = None
) -> tuple[RbmState, list[RxRecord], list[GateReport]]:
    """RX(beta) on every qubit, one SR fit per qubit, in ascending order unless ``order`` is given."""
    order = range(state.n_visible) if order is None else order
    records, reports = [], []
    for j in order:
        if beta == 0:
            rec = RxRecord(0, j, 1.0, True, 0)
        else:
            state, tr = optimize_to_target(state, RxTarget(state, j, beta), cfg, sampler.derive_seed(seed, j))
            rec = RxRecord(0, j, tr.best_fidelity, tr.converged, tr.n_updates)
            if not tr.converged:
                log.info("RX on qubit %d stopped at F=%.4f (%s)", j, tr.best_fidelity, tr.stop_reason)
        records.append(rec)
        reports.append(GateReport("RX", (j,), False, fidelity=rec.fidelity, converged=rec.converged))
    return state, records, reports


@dataclass(frozen=True)
class CompressionConfig:
    """``init`` is ``"mean"`` (U_C of the mean consumed gamma applied to |+>) or ``"scan"``
    (the best such gamma on a grid, judged by sampled fidelity to the big state)."""

    floor: float = 0.98
    fail_safe: bool = True
    init: str = "mean"
    scan_points: int = 9


def compress(
    state: RbmState,
    k: int,
    gammas: Sequence[float],
    graph: Graph,
    cfg: SrConfig,
    ccfg: CompressionConfig = CompressionConfig(),
    seed: int = 0,
) -> tuple[RbmState, CompressionRecord]:
    """Refit a 2|E|-hidden-unit state with a fresh |E|-hidden-unit RBM."""
    gammas = np.asarray(gammas[:k], dtype=np.float64)
    target = RbmTarget(state)
    plus = init_plus(graph.n_vertices)
    g0 = float(gammas.mean())
    if ccfg.init == "scan":
        g0 = _scan_init(plus, graph, target, gammas, cfg, ccfg, seed)
    elif ccfg.init != "mean":
        raise ContractError(f"unknown compression init {ccfg.init!r}")
    init, _ = apply_uc(plus, graph, g0)
    small, tr = optimize_to_target(init, target, cfg, seed)
    ok = tr.best_fidelity >= ccfg.floor
    accepted = ok or not ccfg.fail_safe
    if not ok:
        log.warning("compression at layer %d reached F=%.4f < %.2f%s", k, tr.best_fidelity, ccfg.floor,
                    "; keeping the uncompressed state" if ccfg.fail_safe else "")
    out = small if accepted else state
    rec = CompressionRecord(k, tr.best_fidelity, tr.converged, accepted, state.n_hidden, out.n_hidden, g0)
    return out, rec


def _scan_init(plus, graph, target, gammas, cfg, ccfg, seed) -> float:
    lo, hi = float(gammas.min()), float(gammas.max())
    grid = np.linspace(lo, hi, ccfg.scan_points) if hi > lo else np.array([lo])
    best, best_g = -1.0, float(gammas.mean())
    n = graph.n_vertices
    for i, g in enumerate(grid):
        cand, _ = apply_uc(plus, graph, g)
        if cfg.exact:
            b_psi = sampler.exact_batch(lambda s, c=cand: RbmTarget(c).log_amplitude(s), n)
            b_phi = target.exact_batch()
        else:
            b_psi = sampler.sample_rbm(cand, cfg.mcmc_for(n, sampler.derive_seed(seed, 1000 + i, 0)))
            b_phi = target.sample(cfg.mcmc_for(n, sampler.derive_seed(seed, 1000 + i, 1)))
        F, _ = estimate_fidelity(cand, target, b_psi, b_phi)
        if F > best:
            best, best_g = F, float(g)
    return best_g


def run_qaoa(
    graph: Graph,
    angles: QaoaAngles,
    cfg: SrConfig,
    seed: int = 0,
    ccfg: CompressionConfig = CompressionConfig(),
    order: Sequence[int] | None = None,
    progress: Callable[[str], None] | None = None,
    on_layer: Callable[[int, RbmState], None] | None = None,
) -> tuple[RbmState, CircuitTrace]:
    """Apply the full depth-p circuit to |+>^N and return the final RBM with its trace.

    ``on_layer(k, state)`` sees the state after each completed layer; since
    seeds depend only on the layer index, that state is exactly what a run
    with the angles truncated to depth k returns.
    """
    trace = CircuitTrace()
    state = init_plus(graph.n_vertices)
    for k in range(1, angles.p + 1):
        state, reps = apply_uc(state, graph, angles.gammas[k - 1])
        trace.gates += reps
        if k >= 2:
            state, crec = compress(state, k, angles.gammas, graph, cfg, ccfg, sampler.derive_seed(seed, k, 0))
            trace.compressions.append(crec)
            if progress:
                progress(f"layer {k}: compression F={crec.fidelity:.4f}")
        state, rx, reps = apply_ub(state, angles.betas[k - 1], cfg, sampler.derive_seed(seed, k, 1), order)
        for r in rx:
            r.layer = k
        trace.rx += rx
        trace.gates += reps
        trace.hidden_units.append(state.n_hidden)
        if progress:
            progress(f"layer {k}: min RX F={min(r.fidelity for r in rx):.4f}")
        if on_layer:
            on_layer(k, state)
    return state, trace


def estimate_cost(state: RbmState, graph: Graph, cfg: McmcConfig) -> tuple[float, float]:
    """Sampled mean cut cost and its standard error from the spread of per-chain means."""
    if state.n_visible != graph.n_vertices:
        raise ContractError("state and graph sizes differ")
    batch = sampler.sample_rbm(state, cfg)
    c = cut_value(graph, batch.samples)
    means = batch.chain_means(c)
    if means.size < 2:
        return float(c.mean()), float("nan")
    return float(c.mean()), float(means.std(ddof=1) / math.sqrt(means.size))


# --------------------------------------------------------------------------
# outer loop


@dataclass(frozen=True)
class AngleOptConfig:
    step: float = 0.05
    iters: int = 200
    restarts: int = 3
    fd_step: float = 1e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999


def exact_objective(graph: Graph, p: int) -> Callable[[np.ndarray], float]:
    """Noise-free cost as a function of the flat angle vector (gammas then betas)."""
    if p == 1 and graph.unit_weights:
        return lambda x: exact.exact_p1_cost(graph, x[0], x[1])
    diag = exact.cost_diagonal(graph)
    n = graph.n_vertices

    def f(x):
        ang = QaoaAngles.from_vector(x)
        amp = np.full(1 << n, 1.0 / math.sqrt(1 << n), dtype=np.complex128)
        for g, b in zip(ang.gammas, ang.betas):
            amp = amp * np.exp(-1j * g * diag)
            for j in range(n):
                amp = exact.apply_rx_dense(amp, j, b)
        return float(np.abs(amp) ** 2 @ diag)

    return f


def adam_minimize(f, x0, cfg: AngleOptConfig) -> tuple[np.ndarray, float, list[float]]:
    """Adam on central finite differences; returns the best point visited."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    best_x, best_f = x.copy(), f(x)
    history = [best_f]
    eye = np.eye(x.size) * cfg.fd_step
    for t in range(1, cfg.iters + 1):
        g = np.array([(f(x + e) - f(x - e)) / (2 * cfg.fd_step) for e in eye])
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        mhat = m / (1 - cfg.beta1 ** t)
        vhat = v / (1 - cfg.beta2 ** t)
        x = x - cfg.step * mhat / (np.sqrt(vhat) + 1e-8)
        fx = f(x)
        history.append(fx)
        if fx < best_f:
            best_x, best_f = x.copy(), fx
    return best_x, best_f, history


def _starts(p: int, cfg: AngleOptConfig, warm: QaoaAngles | None) -> list[np.ndarray]:
    # linear ramp (annealing-like schedule) plus seeded random points
    t = (np.arange(p) + 0.5) / p
    starts = [np.concatenate([0.4 * t, 0.4 * (1 - t)])]
    if warm is not None:
        g = np.append(warm.gammas, warm.gammas[-1])[:p]
        b = np.append(warm.betas, warm.betas[-1])[:p]
        starts.append(np.concatenate([g, b]))
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.restarts):
        starts.append(np.concatenate([rng.uniform(0, 0.8, p), rng.uniform(0, 0.6, p)]))
    return starts


def _symmetry_class(graph: Graph) -> tuple[bool, str | None]:
    integral = all(float(w).is_integer() for _, _, w in graph.edges)
    parity = {int(d) % 2 for d in graph.degrees}
    return integral, ("odd" if parity == {1} else "even" if parity == {0} else None)


def optimize_angles(
    graph: Graph,
    p: int,
    cfg: AngleOptConfig = AngleOptConfig(),
    objective: Callable[[np.ndarray], float] | None = None,
    warm_start: QaoaAngles | None = None,
) -> tuple[QaoaAngles, float, list[float]]:
    """Multi-start Adam minimisation of the QAOA cost over 2p angles.

    Without an explicit ``objective`` the closed form is used at p = 1 for
    unit weights and the dense simulator otherwise.
    """
    if p < 1:
        raise ContractError("depth must be >= 1")
    f = objective or exact_objective(graph, p)
    best = (None, math.inf, [])
    for x0 in _starts(p, cfg, warm_start):
        x, fx, hist = adam_minimize(f, x0, cfg)
        if fx < best[1]:
            best = (x, fx, hist)
    angles = QaoaAngles.from_vector(best[0])
    return angles.canonical(*_symmetry_class(graph)), best[1], best[2]


def optimize_angles_sequential(graph: Graph, p: int, cfg: AngleOptConfig = AngleOptConfig()) -> list[QaoaAngles]:
    """Optimised angles for depths 1..p, each depth warm-started from the previous one."""
    out, warm = [], None
    for d in range(1, p + 1):
        warm, _, _ = optimize_angles(graph, d, cfg, warm_start=warm)
        out.append(warm)
    return out


# --------------------------------------------------------------------------
# landscapes

SWEEP_COLUMNS = ["axis", "value", "cost_mean", "cost_stderr", "min_rx_fidelity", "rzz_count", "rx_count"]


@dataclass
class SweepRow:
    axis: str
    value: float
    cost_mean: float
    cost_stderr: float
    min_rx_fidelity: float
    rzz_count: int
    rx_count: int
    error: str = ""


def landscape_sweep(
    graph: Graph,
    base: QaoaAngles,
    axis: str,
    grid: Sequence[float],
    cfg: SrConfig,
    cost_cfg: McmcConfig | None = None,
    seed: int = 0,
    ccfg: CompressionConfig = CompressionConfig(),
) -> list[SweepRow]:
    """Run the RBM circuit at each grid value of one angle and estimate the cost."""
    parse_axis(axis, base.p)
    rows = []
    for i, val in enumerate(grid):
        ang = base.substituted(axis, float(val))
        try:
            state, tr = run_qaoa(graph, ang, cfg, sampler.derive_seed(seed, i, 0), ccfg)
            mc = cost_cfg or sampler.default_config(graph.n_vertices)
            mean, err = estimate_cost(state, graph, mc.with_seed(sampler.derive_seed(seed, i, 1)))
            rows.append(SweepRow(axis, float(val), mean, err, tr.min_rx_fidelity, tr.rzz_count, tr.rx_count))
        except (ArithmeticError, ValueError, RuntimeError) as exc:
            log.warning("sweep point %s=%g failed: %s", axis, val, exc)
            rows.append(SweepRow(axis, float(val), math.nan, math.nan, math.nan, 0, 0, repr(exc)))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], fh, header_comments: Sequence[str] = ()) -> None:
    for line in header_comments:
        fh.write(f"# {line}\n")
    w = csv.writer(fh)
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r.axis, repr(r.value), repr(r.cost_mean), repr(r.cost_stderr),
                    repr(r.min_rx_fidelity), r.rzz_count, r.rx_count])
