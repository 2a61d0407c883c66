"""Sanity checks of the brute-force oracle itself, against hand counts."""

from conftest import brute_force_ged, path3, triangle

from gedkit.graph import Graph


def test_path_vs_triangle_is_one_insertion():
    assert brute_force_ged(path3(), triangle()) == 1


def test_single_relabel():
    assert brute_force_ged(Graph.from_edges("a", ["A"], []), Graph.from_edges("b", ["B"], [])) == 1


def test_size_difference_counts_insertions_and_their_edges():
    # one node A versus an edge A-B: insert node B and the edge
    a = Graph.from_edges("a", ["A"], [])
    b = Graph.from_edges("b", ["A", "B"], [(0, 1)])
    assert brute_force_ged(a, b) == 2


def test_edge_relabel_counts_once():
    a = Graph.from_edges("a", ["A", "A"], [(0, 1, "x")])
    b = Graph.from_edges("b", ["A", "A"], [(0, 1, "y")])
    assert brute_force_ged(a, b) == 1


def test_empty_vs_complete():
    a = Graph.from_edges("a", ["A"] * 4, [])
    b = Graph.from_edges("b", ["A"] * 4, [(u, v) for u in range(4) for v in range(u + 1, 4)])
    assert brute_force_ged(a, b) == 6
