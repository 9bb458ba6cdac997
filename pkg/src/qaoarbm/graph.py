"""Weighted Max-Cut instances.

The cost of a bitstring is ``sum_{(i,j) in E} w_ij (-1)^(B_i xor B_j)``;
lower is better. Vertices are 0..N-1 and double as qubit indices.
"""

from __future__ import annotations

import io
import math
from functools import cached_property
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import ContractError, EdgeListError


class EdgeCombinatorics(NamedTuple):
    u: int
    v: int
    q_u: int  # degree(u) - 1
    q_v: int
    delta: int  # common neighbours of u and v


class Graph:
    """Immutable vertex count plus ordered edge list ``(u, v, w)`` with ``u < v``."""

    def __init__(self, n_vertices: int, edges: Iterable):
        n_vertices = int(n_vertices)
        if n_vertices < 1:
            raise ContractError("graph needs at least one vertex")
        norm = []
        seen = set()
        for e in edges:
            if len(e) == 2:
                u, v, w = e[0], e[1], 1.0
            else:
                u, v, w = e
            u, v, w = int(u), int(v), float(w)
            if u == v:
                raise ContractError(f"self-loop on vertex {u}")
            if u > v:
                u, v = v, u
            if u < 0 or v >= n_vertices:
                raise ContractError(f"edge ({u}, {v}) out of range for {n_vertices} vertices")
            if not math.isfinite(w):
                raise ContractError(f"non-finite weight on edge ({u}, {v})")
            if (u, v) in seen:
                raise ContractError(f"duplicate edge ({u}, {v})")
            seen.add((u, v))
            norm.append((u, v, w))
        self.n_vertices = n_vertices
        self.edges: tuple[tuple[int, int, float], ...] = tuple(norm)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_array(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Endpoints and weights as arrays ``(us, vs, ws)``."""
        if not self.edges:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
        us, vs, ws = zip(*self.edges)
        return np.array(us, np.int64), np.array(vs, np.int64), np.array(ws, np.float64)

    @cached_property
    def neighbors(self) -> tuple[frozenset, ...]:
        adj = [set() for _ in range(self.n_vertices)]
        for u, v, _ in self.edges:
            adj[u].add(v)
            adj[v].add(u)
        return tuple(frozenset(s) for s in adj)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([len(s) for s in self.neighbors])

    @property
    def unit_weights(self) -> bool:
        return all(w == 1.0 for _, _, w in self.edges)

    def relabeled(self, perm) -> "Graph":
        """Copy with vertex ``i`` renamed to ``perm[i]``."""
        perm = list(perm)
        return Graph(self.n_vertices, [(perm[u], perm[v], w) for u, v, w in self.edges])

    def __repr__(self) -> str:
        return f"Graph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


def generate_random_regular(n: int, d: int, seed=None, max_tries: int = 100_000) -> Graph:
    """Random simple d-regular graph from the pairing (configuration) model.

    Stubs are shuffled and paired; any self-loop or repeated pair throws the
    whole attempt away. The result is a deterministic function of ``seed``.
    """
    if n < 1 or d < 0 or d >= n:
        raise ContractError(f"need 0 <= d < n, got n={n}, d={d}")
    if (n * d) % 2:
        raise ContractError(f"n*d must be even, got n={n}, d={d}")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        pairs = rng.permutation(stubs).reshape(-1, 2)
        pairs.sort(axis=1)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        keys = pairs[:, 0] * n + pairs[:, 1]
        if np.unique(keys).size != keys.size:
            continue
        order = np.argsort(keys)
        return Graph(n, [(int(u), int(v), 1.0) for u, v in pairs[order]])
    raise RuntimeError(f"pairing model failed {max_tries} times for n={n}, d={d}")


def complete_graph(n: int) -> Graph:
    return Graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)])


def ring_graph(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def cut_value(graph: Graph, bits):
    """Diagonal cost <B|C|B> for one bitstring or each row of a batch."""
    B = np.asarray(bits)
    single = B.ndim == 1
    B = np.atleast_2d(B)
    if B.shape[1] != graph.n_vertices:
        raise ContractError(f"bitstring length {B.shape[1]} != {graph.n_vertices} vertices")
    us, vs, ws = graph.edge_array
    spins = 1 - 2 * (B[:, us].astype(np.int8) ^ B[:, vs].astype(np.int8))
    out = spins @ ws
    return float(out[0]) if single else out


def edge_combinatorics(graph: Graph) -> list[EdgeCombinatorics]:
    nb = graph.neighbors
    return [
        EdgeCombinatorics(u, v, len(nb[u]) - 1, len(nb[v]) - 1, len(nb[u] & nb[v]))
        for u, v, _ in graph.edges
    ]


def parse_edge_list(source) -> Graph:
    """Read ``n <N>`` followed by ``u v [w]`` lines.

    ``source`` is a path or an open text stream. Blank lines and ``#``
    comments are ignored.
    """
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            return parse_edge_list(fh)
    n = None
    edges = []
    seen = set()
    for lineno, raw in enumerate(source, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if parts[0] != "n" or len(parts) != 2:
                raise EdgeListError(f"expected header 'n <N>', got {line!r}", lineno)
            try:
                n = int(parts[1])
            except ValueError:
                raise EdgeListError(f"bad vertex count {parts[1]!r}", lineno) from None
            if n < 1:
                raise EdgeListError("vertex count must be positive", lineno)
            continue
        if len(parts) not in (2, 3):
            raise EdgeListError(f"expected 'u v [w]', got {line!r}", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise EdgeListError(f"cannot parse {line!r}", lineno) from None
        if not (0 <= u < n and 0 <= v < n):
            raise EdgeListError(f"vertex out of range [0, {n}) in {line!r}", lineno)
        if u == v:
            raise EdgeListError(f"self-loop in {line!r}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise EdgeListError(f"duplicate edge {key}", lineno)
        seen.add(key)
        edges.append((u, v, w))
    if n is None:
        raise EdgeListError("empty edge list, missing 'n <N>' header")
    return Graph(n, edges)


def write_edge_list(graph: Graph, dest=None) -> str:
    """Serialise ``graph``; writes to ``dest`` (path or stream) if given and returns the text."""
    buf = io.StringIO()
    buf.write(f"n {graph.n_vertices}\n")
    for u, v, w in graph.edges:
        buf.write(f"{u} {v} {w!r}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    elif dest is not None:
        dest.write(text)
    return text
