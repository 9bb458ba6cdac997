import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qaoarbm import graph as G
from qaoarbm.errors import ContractError, EdgeListError
from qaoarbm.sampler import all_bitstrings


@pytest.mark.parametrize("n,d", [(8, 3), (12, 3), (10, 4), (54, 3)])
def test_random_regular_is_simple_and_regular(n, d):
    g = G.generate_random_regular(n, d, seed=3)
    assert g.n_edges == n * d // 2
    assert np.all(g.degrees == d)
    assert len({(u, v) for u, v, _ in g.edges}) == g.n_edges
    assert all(u < v for u, v, _ in g.edges)


def test_random_regular_deterministic_per_seed():
    a = G.generate_random_regular(12, 3, seed=7)
    b = G.generate_random_regular(12, 3, seed=7)
    c = G.generate_random_regular(12, 3, seed=8)
    assert a.edges == b.edges
    assert a.edges != c.edges


def test_random_regular_rejects_odd_stub_count():
    with pytest.raises(ContractError):
        G.generate_random_regular(7, 3, seed=0)
    with pytest.raises(ContractError):
        G.generate_random_regular(3, 3, seed=0)


def test_graph_validation():
    with pytest.raises(ContractError):
        G.Graph(3, [(0, 0)])
    with pytest.raises(ContractError):
        G.Graph(3, [(0, 1), (1, 0)])
    with pytest.raises(ContractError):
        G.Graph(3, [(0, 3)])
    with pytest.raises(ContractError):
        G.Graph(3, [(0, 1, float("nan"))])
    g = G.Graph(3, [(2, 0, 0.5)])
    assert g.edges == ((0, 2, 0.5),)


def test_cut_value_small_cases():
    tri = G.complete_graph(3)
    assert G.cut_value(tri, [0, 0, 0]) == 3
    assert G.cut_value(tri, [0, 1, 0]) == -1
    ring = G.ring_graph(4)
    assert G.cut_value(ring, [0, 1, 0, 1]) == -4
    w = G.Graph(2, [(0, 1, 2.5)])
    assert G.cut_value(w, [1, 0]) == -2.5


@given(st.integers(0, 2**10 - 1))
def test_cut_value_invariant_under_global_flip(idx):
    g = G.generate_random_regular(10, 3, seed=1)
    B = all_bitstrings(10)[idx]
    assert G.cut_value(g, B) == G.cut_value(g, 1 - B)


@given(st.permutations(list(range(8))))
def test_cut_value_invariant_under_relabelling(perm):
    g = G.generate_random_regular(8, 3, seed=2)
    h = g.relabeled(perm)
    B = all_bitstrings(8)
    Bp = np.empty_like(B)
    Bp[:, perm] = B
    np.testing.assert_array_equal(G.cut_value(g, B), G.cut_value(h, Bp))


def test_edge_combinatorics_triangle_and_ring():
    for e in G.edge_combinatorics(G.complete_graph(3)):
        assert (e.q_u, e.q_v, e.delta) == (1, 1, 1)
    for e in G.edge_combinatorics(G.ring_graph(5)):
        assert (e.q_u, e.q_v, e.delta) == (1, 1, 0)


def test_edge_list_round_trip(tmp_path):
    g = G.Graph(5, [(0, 1, 1.0), (1, 4, 0.1 + 0.2), (2, 3, -3.0)])
    path = tmp_path / "g.txt"
    G.write_edge_list(g, path)
    h = G.parse_edge_list(path)
    assert h.n_vertices == 5 and h.edges == g.edges


def test_edge_list_comments_and_default_weight():
    text = "# header\nn 3\n0 1   # unit\n\n1 2 2.0\n"
    g = G.parse_edge_list(io.StringIO(text))
    assert g.edges == ((0, 1, 1.0), (1, 2, 2.0))


@pytest.mark.parametrize(
    "text,line",
    [
        ("3\n", 1),
        ("n 3\n0 1 2 3\n", 2),
        ("n 3\n0 5\n", 2),
        ("n 3\n1 1\n", 2),
        ("n 3\n0 1\n1 0\n", 3),
        ("n 3\n0 x\n", 2),
    ],
)
def test_edge_list_errors_carry_line_numbers(text, line):
    with pytest.raises(EdgeListError) as exc:
        G.parse_edge_list(io.StringIO(text))
    assert exc.value.line == line


def test_empty_edge_list_rejected():
    with pytest.raises(EdgeListError):
        G.parse_edge_list(io.StringIO("# nothing\n"))
