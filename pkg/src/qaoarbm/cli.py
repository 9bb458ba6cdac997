"""Command-line front end.

Every subcommand reads an optional flat ``key = value`` config file, applies
command-line overrides, validates everything up front, echoes the effective
configuration into the output directory and writes its results there.

Exit codes: 0 success, 1 invalid configuration, 2 runtime failure,
3 finished but some fit did not reach its tolerance (outputs are kept).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, exact, qaoa, sampler
from .errors import EdgeListError
from .graph import Graph, generate_random_regular, parse_edge_list, write_edge_list
from .rbm import RbmState, save_state
from .sampler import McmcConfig
from .sr import SrConfig, optimize_ground_state

log = logging.getLogger("qaoarbm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NOT_CONVERGED = 0, 1, 2, 3

# key -> (type, default, help)
KEYS: dict[str, tuple[type, object, str]] = {
    "graph": (str, None, "edge-list file"),
    "graph_n": (int, None, "generate a random regular graph with this many vertices"),
    "graph_d": (int, 3, "degree of the generated graph"),
    "graph_seed": (int, 0, "seed of the generated graph"),
    "p": (int, 1, "circuit depth"),
    "angles": (str, "optimize", "'explicit', 'optimize' or 'transfer'"),
    "gammas": (str, None, "comma-separated gammas for explicit angles"),
    "betas": (str, None, "comma-separated betas for explicit angles"),
    "transfer_n": (int, None, "vertices of the smaller instance angles are optimised on"),
    "transfer_seed": (int, 0, "seed of the smaller instance"),
    "eta": (float, 1.0, "SR learning rate"),
    "epsilon": (float, 1e-3, "diagonal shift of the S matrix"),
    "tol": (float, 1e-3, "per-fit infidelity tolerance"),
    "max_iters": (int, 200, "SR iteration cap per fit"),
    "patience": (int, 20, "stop a fit after this many iterations without improvement (0 = never)"),
    "min_delta": (float, 1e-4, "smallest fidelity gain that counts as improvement"),
    "samples_per_chain": (int, None, "MCMC samples per chain (default: size-dependent)"),
    "chains": (int, 4, "number of Markov chains"),
    "stride": (int, None, "flips between recorded samples (default: N)"),
    "burn_in": (int, None, "flips discarded per chain (default: 10 * N * stride)"),
    "exact": (bool, False, "use exact enumeration instead of sampling (small N)"),
    "compression_floor": (float, 0.98, "minimum accepted compression fidelity"),
    "compression_init": (str, "mean", "'mean' or 'scan'"),
    "fail_safe": (bool, True, "keep the uncompressed state when compression misses the floor"),
    "axis": (str, "gamma1", "landscape axis, gamma<k> or beta<k>"),
    "grid": (str, None, "landscape grid: 'start:stop:count' or comma list"),
    "bench_sizes": (str, None, "benchmark vertex counts, comma list (empty: configured graph)"),
    "bench_depths": (str, "1", "benchmark depths, comma list"),
    "bench_instances": (int, 1, "random instances per benchmark size"),
    "restarts": (int, 3, "ground-state restarts"),
    "hidden_ratio": (float, 1.0, "hidden units per visible unit for the ground-state ansatz"),
    "gs_iters": (int, 300, "SR iterations per ground-state restart"),
    "gs_eta": (float, 0.1, "SR learning rate for the ground-state search"),
    "out": (str, "out", "output directory"),
    "seed": (int, 0, "global seed"),
}


class ConfigError(Exception):
    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _convert(key: str, raw, errors: list[str]):
    typ = KEYS[key][0]
    if raw is None or not isinstance(raw, str):
        return raw
    if raw.strip().lower() in ("", "none"):
        return None
    try:
        if typ is bool:
            return _parse_bool(raw)
        return typ(raw.strip())
    except ValueError:
        errors.append(f"{key}: cannot parse {raw!r} as {typ.__name__}")
        return None


def read_config_file(path: str, errors: list[str]) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        errors.append(f"config file {path}: {exc.strerror}")
        return out
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"{path}:{lineno}: expected 'key = value'")
            continue
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in KEYS:
            errors.append(f"{path}:{lineno}: unknown key {k!r}")
            continue
        out[k] = v
    return out


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags; raises ConfigError listing every problem."""
    errors: list[str] = []
    cfg = {k: spec[1] for k, spec in KEYS.items()}
    if args.config:
        for k, v in read_config_file(args.config, errors).items():
            cfg[k] = _convert(k, v, errors)
    for k in KEYS:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = _convert(k, v, errors)
    _validate(cfg, args.command, errors)
    if errors:
        raise ConfigError(errors)
    return cfg


def _floats(text: str | None) -> list[float]:
    if not text:
        return []
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _ints(text: str | None) -> list[int]:
    return [int(x) for x in text.replace(" ", "").split(",") if x] if text else []


def parse_grid(text: str) -> list[float]:
    text = (text or "").strip()
    if not text:
        return []
    if ":" in text:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n)).tolist()
    return _floats(text)


def _validate(cfg: dict, command: str, errors: list[str]):
    needs_graph = command in ("simulate", "landscape", "bound") or (
        command == "benchmark" and not cfg["bench_sizes"]
    )
    if needs_graph:
        has_file, has_gen = cfg["graph"] is not None, cfg["graph_n"] is not None
        if has_file == has_gen:
            errors.append("give exactly one graph source: 'graph' (file) or 'graph_n' (generator)")
        elif has_file and not Path(cfg["graph"]).is_file():
            errors.append(f"graph file {cfg['graph']} does not exist")
    if cfg["p"] is None or cfg["p"] < 1:
        errors.append("p must be >= 1")
    if command in ("simulate", "landscape", "benchmark"):
        mode = cfg["angles"]
        if mode not in ("explicit", "optimize", "transfer"):
            errors.append(f"angles must be explicit, optimize or transfer, got {mode!r}")
        if mode == "explicit":
            try:
                g, b = _floats(cfg["gammas"]), _floats(cfg["betas"])
                if len(g) != cfg["p"] or len(b) != cfg["p"]:
                    errors.append(f"explicit angles need {cfg['p']} gammas and {cfg['p']} betas")
            except ValueError:
                errors.append("gammas/betas must be comma-separated numbers")
        elif cfg["gammas"] or cfg["betas"]:
            errors.append("gammas/betas are only allowed with angles = explicit")
        if mode == "transfer" and not cfg["transfer_n"]:
            errors.append("angles = transfer needs transfer_n")
    if cfg["min_delta"] is None or cfg["min_delta"] < 0:
        errors.append("min_delta must be >= 0")
    if cfg["patience"] is None or cfg["patience"] < 0:
        errors.append("patience must be >= 0")
    for key, lo in (("eta", 0.0), ("epsilon", -1e-300)):
        if cfg[key] is None or not cfg[key] > lo:
            errors.append(f"{key} out of range")
    if cfg["tol"] is None or not 0 < cfg["tol"] < 1:
        errors.append("tol must lie in (0, 1)")
    for key in ("max_iters", "chains"):
        if cfg[key] is None or cfg[key] < 1:
            errors.append(f"{key} must be >= 1")
    if cfg["compression_init"] not in ("mean", "scan"):
        errors.append("compression_init must be mean or scan")
    if command == "landscape":
        try:
            parse_grid(cfg["grid"])
        except ValueError:
            errors.append(f"cannot parse grid {cfg['grid']!r}")
        try:
            qaoa.parse_axis(cfg["axis"], cfg["p"] or 1)
        except ValueError as exc:
            errors.append(str(exc))
    if command == "benchmark":
        try:
            sizes, _ = _ints(cfg["bench_sizes"]), _ints(cfg["bench_depths"])
            too_big = [n for n in sizes if n > exact.DENSE_MAX_QUBITS]
            if too_big:
                errors.append(f"benchmark sizes {too_big} exceed the dense cap of {exact.DENSE_MAX_QUBITS}")
        except ValueError:
            errors.append("bench_sizes / bench_depths must be comma-separated integers")


def config_text(cfg: dict) -> str:
    lines = [f"{k} = {'' if cfg[k] is None else cfg[k]}" for k in KEYS]
    return "\n".join(lines) + "\n"


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "out"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


def _header(cfg: dict) -> list[str]:
    return [f"qaoarbm {__version__}", f"config_hash {config_hash(cfg)}"]


# --------------------------------------------------------------------------
# builders


def build_graph(cfg: dict) -> Graph:
    if cfg["graph"] is not None:
        return parse_edge_list(cfg["graph"])
    return generate_random_regular(cfg["graph_n"], cfg["graph_d"], seed=cfg["graph_seed"])


def build_sr(cfg: dict, n: int) -> SrConfig:
    mc = None
    if any(cfg[k] is not None for k in ("samples_per_chain", "stride", "burn_in")) or cfg["chains"] != 4:
        base = sampler.default_config(n)
        stride = cfg["stride"] or base.stride
        mc = McmcConfig(
            cfg["samples_per_chain"] or base.n_samples_per_chain,
            cfg["chains"],
            stride=stride,
            burn_in=cfg["burn_in"] if cfg["burn_in"] is not None else 10 * n * stride,
        )
    return SrConfig(
        eta=cfg["eta"], epsilon=cfg["epsilon"], tol=cfg["tol"], max_iters=cfg["max_iters"],
        patience=cfg["patience"] or None, min_delta=cfg["min_delta"], mcmc=mc, exact=cfg["exact"],
    )


def build_compression(cfg: dict) -> qaoa.CompressionConfig:
    return qaoa.CompressionConfig(floor=cfg["compression_floor"], fail_safe=cfg["fail_safe"],
                                  init=cfg["compression_init"])


def cost_mcmc(cfg: dict, n: int, seed: int) -> McmcConfig:
    sr_cfg = build_sr(cfg, n)
    return sr_cfg.mcmc_for(n, seed)


def build_angles(cfg: dict, graph: Graph) -> qaoa.QaoaAngles:
    p = cfg["p"]
    if cfg["angles"] == "explicit":
        return qaoa.QaoaAngles(_floats(cfg["gammas"]), _floats(cfg["betas"]))
    if cfg["angles"] == "transfer":
        small = generate_random_regular(cfg["transfer_n"], cfg["graph_d"], seed=cfg["transfer_seed"])
        return qaoa.optimize_angles_sequential(small, p, qaoa.AngleOptConfig(seed=cfg["seed"]))[-1]
    if graph.n_vertices > exact.DENSE_MAX_QUBITS and not (p == 1 and graph.unit_weights):
        raise ConfigError([f"angles = optimize needs N <= {exact.DENSE_MAX_QUBITS} for p > 1; use transfer"])
    return qaoa.optimize_angles_sequential(graph, p, qaoa.AngleOptConfig(seed=cfg["seed"]))[-1]


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: dict, out: Path) -> int:
    graph = build_graph(cfg)
    angles = build_angles(cfg, graph)
    n = graph.n_vertices
    state, trace = qaoa.run_qaoa(graph, angles, build_sr(cfg, n), sampler.derive_seed(cfg["seed"], 0),
                                 build_compression(cfg), progress=log.info)
    mean, err = qaoa.estimate_cost(state, graph, cost_mcmc(cfg, n, sampler.derive_seed(cfg["seed"], 1)))
    save_state(state, out / "state.json")
    (out / "trace.jsonl").write_text(trace.to_jsonl())
    with open(out / "cost.csv", "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["n", "p", "gammas", "betas", "cost_mean", "cost_stderr", "min_rx_fidelity",
                    "rzz_count", "rx_count"])
        w.writerow([n, angles.p, " ".join(map(repr, angles.gammas.tolist())),
                    " ".join(map(repr, angles.betas.tolist())), repr(mean), repr(err),
                    repr(trace.min_rx_fidelity), trace.rzz_count, trace.rx_count])
    print(f"cost {mean:.6f} +- {err:.6f}; RZZ {trace.rzz_count}, RX {trace.rx_count}, "
          f"min RX fidelity {trace.min_rx_fidelity:.4f}")
    return EXIT_OK if trace.all_converged else EXIT_NOT_CONVERGED


def cmd_landscape(cfg: dict, out: Path) -> int:
    graph = build_graph(cfg)
    grid = parse_grid(cfg["grid"])
    angles = build_angles(cfg, graph)
    n = graph.n_vertices
    rows = qaoa.landscape_sweep(graph, angles, cfg["axis"], grid, build_sr(cfg, n),
                                cost_mcmc(cfg, n, 0), cfg["seed"], build_compression(cfg))
    with open(out / "landscape.csv", "w", newline="") as fh:
        qaoa.write_sweep_csv(rows, fh, _header(cfg))
    failed = [r for r in rows if r.error]
    for r in rows:
        print(f"{r.axis}={r.value:.4f}  cost {r.cost_mean:.4f} +- {r.cost_stderr:.4f}  "
              f"min RX F {r.min_rx_fidelity:.4f}")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_benchmark(cfg: dict, out: Path) -> int:
    sizes = _ints(cfg["bench_sizes"])
    depths = _ints(cfg["bench_depths"]) or [cfg["p"]]
    jobs = []
    if sizes:
        for n in sizes:
            for i in range(cfg["bench_instances"]):
                jobs.append((n, i, generate_random_regular(n, cfg["graph_d"], seed=cfg["graph_seed"] + i)))
    else:
        g = build_graph(cfg)
        if g.n_vertices > exact.DENSE_MAX_QUBITS:
            raise ConfigError([f"benchmark needs N <= {exact.DENSE_MAX_QUBITS}, graph has {g.n_vertices}"])
        jobs.append((g.n_vertices, 0, g))
    status = EXIT_OK
    with open(out / "benchmark.csv", "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["n", "instance", "p", "fidelity", "min_rx_fidelity", "min_compression_fidelity"])
        for n, inst, g in jobs:
            local = dict(cfg, p=max(depths))
            full = build_angles(local, g) if cfg["angles"] != "explicit" else build_angles(cfg, g)
            for p in depths:
                ang = full.truncated(p)
                state, tr = qaoa.run_qaoa(g, ang, build_sr(cfg, n), sampler.derive_seed(cfg["seed"], n, inst, p),
                                          build_compression(cfg))
                fid = exact.dense_fidelity(state, exact.statevector_qaoa(g, ang))
                cmin = min((c.fidelity for c in tr.compressions), default=1.0)
                w.writerow([n, inst, p, repr(fid), repr(tr.min_rx_fidelity), repr(cmin)])
                fh.flush()
                print(f"N={n} instance={inst} p={p}: fidelity {fid:.4f}, min RX {tr.min_rx_fidelity:.4f}")
                if not tr.all_converged:
                    status = EXIT_NOT_CONVERGED
    return status


def random_rbm(n: int, m: int, seed: int, scale: float = 0.01) -> RbmState:
    rng = np.random.default_rng(seed)

    def c(*shape):
        return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))

    return RbmState(c(n), c(m), c(n, m))


def ground_state_bound(graph: Graph, cfg: dict) -> tuple[float, float, list[tuple[float, float]]]:
    """Best (lowest) final sampled energy over restarts with its error bar."""
    n = graph.n_vertices
    m = max(1, int(round(cfg["hidden_ratio"] * n)))
    sr_cfg = build_sr(cfg, n).replace(eta=cfg["gs_eta"], max_iters=cfg["gs_iters"])
    runs = []
    for r in range(cfg["restarts"]):
        init = random_rbm(n, m, sampler.derive_seed(cfg["seed"], 7, r))
        _, (e, err), _ = optimize_ground_state(graph, init, sr_cfg, sampler.derive_seed(cfg["seed"], 8, r))
        runs.append((e, err))
    best = min(runs)
    return best[0], best[1], runs


def cmd_bound(cfg: dict, out: Path) -> int:
    graph = build_graph(cfg)
    bound, err, runs = ground_state_bound(graph, cfg)
    n = graph.n_vertices
    exact_val = None
    if n <= exact.BRUTE_FORCE_MAX_QUBITS:
        exact_val, _ = exact.brute_force_optimum(graph)
    with open(out / "bound.csv", "w", newline="") as fh:
        for line in _header(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["n", "restart", "energy", "stderr"])
        for i, (e, s) in enumerate(runs):
            w.writerow([n, i, repr(e), repr(s)])
        w.writerow([n, "best", repr(bound), repr(err)])
        w.writerow([n, "exact", "" if exact_val is None else repr(exact_val), ""])
    print(f"variational bound {bound:.4f} +- {err:.4f}")
    if exact_val is None:
        print("exact optimum: unavailable (too many vertices)")
    else:
        print(f"exact optimum {exact_val:.4f}; gap {bound - exact_val:.4f}")
    return EXIT_OK


def cmd_gen_graph(args) -> int:
    try:
        g = generate_random_regular(args.n, args.d, seed=args.graph_seed)
    except ValueError as exc:
        _error(EXIT_CONFIG, [str(exc)])
        return EXIT_CONFIG
    if args.output:
        write_edge_list(g, args.output)
    else:
        sys.stdout.write(write_edge_list(g))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "landscape": cmd_landscape,
    "benchmark": cmd_benchmark,
    "bound": cmd_bound,
}


# --------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat 'key = value' config file; flags override it")
    for key, (typ, default, text) in KEYS.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, default=None, metavar=typ.__name__.upper(),
                       help=f"{text} (default: {default})")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaoarbm", description="Classical RBM simulation of QAOA Max-Cut circuits.")
    parser.add_argument("--version", action="version", version=f"qaoarbm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "run one RBM circuit and estimate its cost",
        "landscape": "sweep one angle and record cost and fidelity",
        "benchmark": "compare RBM circuits with exact state vectors",
        "bound": "variational upper bound on the minimum cut cost",
    }
    for name, text in helps.items():
        _add_config_flags(sub.add_parser(name, help=text, description=text))
    gg = sub.add_parser("gen-graph", help="write a random regular graph as an edge list")
    gg.add_argument("--n", type=int, required=True)
    gg.add_argument("--d", type=int, default=3)
    gg.add_argument("--graph-seed", type=int, default=0)
    gg.add_argument("--output", "-o")
    return parser


def _error(code: int, messages: list[str]):
    print(json.dumps({"status": "error", "exit_code": code, "errors": messages}), file=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "gen-graph":
        return cmd_gen_graph(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = effective_config(args)
    except ConfigError as exc:
        _error(EXIT_CONFIG, exc.errors)
        return EXIT_CONFIG
    out = Path(cfg["out"])
    try:
        # parse inputs before creating anything on disk
        if cfg["graph"] is not None:
            parse_edge_list(cfg["graph"])
    except (EdgeListError, OSError) as exc:
        _error(EXIT_CONFIG, [str(exc)])
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config_text(cfg))
    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        _error(EXIT_CONFIG, exc.errors)
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        _error(EXIT_RUNTIME, [f"{type(exc).__name__}: {exc}"])
        return EXIT_RUNTIME
    log.info("%s finished in %.1f s", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
