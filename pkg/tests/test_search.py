import numpy as np
import pytest
from conftest import brute_force_ged, path3, random_graph, random_pair, triangle

from gedkit.graph import Graph, make_pair
from gedkit.search import (
    UNSET,
    NodeMatching,
    SearchTimeout,
    astar_ged,
    beam_ged,
    edit_operations,
    exact_ged,
    lower_bound,
    mapping_edit_cost,
    normalized_similarity,
    prefix_cost,
    search_path,
)


def single(label, gid):
    return Graph.from_edges(gid, [label], [])


class TestMappingEditCost:
    def test_identity_on_identical_graphs(self, rng):
        g = random_graph(rng, 6, 0.5)
        assert mapping_edit_cost(make_pair(g, g), list(range(6))) == 0

    def test_path_vs_triangle(self):
        assert mapping_edit_cost(make_pair(path3(), triangle()), [0, 1, 2]) == 1

    def test_one_node_insertion(self):
        b = Graph.from_edges("b", ["A", "B"], [])
        assert mapping_edit_cost(make_pair(single("A", "a"), b), [0]) == 1

    def test_edit_path_lists_each_operation(self):
        a = Graph.from_edges("a", ["A", "B"], [(0, 1, "x")])
        b = Graph.from_edges("b", ["A", "C", "D"], [(0, 1, "y"), (1, 2)])
        ops = edit_operations(make_pair(a, b), [0, 1])
        kinds = sorted(op[0] for op in ops)
        assert kinds == ["insert_edge", "insert_node", "relabel_edge", "relabel_node"]

    @pytest.mark.parametrize("bad", [[0], [0, 0], [0, 5], [0, UNSET]])
    def test_rejects_partial_or_invalid(self, bad):
        with pytest.raises(ValueError):
            mapping_edit_cost(make_pair(path3(), triangle()), bad)

    def test_node_matching_invariants(self):
        m = NodeMatching([2, 0, UNSET], 1)
        assert m.level == 2 and not m.is_complete()
        m.check()
        with pytest.raises(AssertionError):
            NodeMatching([1, 1, UNSET]).check()


class TestLowerBound:
    def test_complete_matching_gives_exact_cost(self, rng):
        for _ in range(30):
            pair = random_pair(rng, 6)
            m = list(rng.permutation(pair.n2)[: pair.n1])
            assert lower_bound(pair, m) == mapping_edit_cost(pair, m)

    def test_empty_matching_path_vs_triangle(self):
        assert lower_bound(make_pair(path3(), triangle()), []) == 1

    def test_empty_matching_single_relabel(self):
        assert lower_bound(make_pair(single("A", "a"), single("B", "b")), []) == 1

    def test_admissible_on_every_prefix(self, rng):
        """lb of every prefix is at most the best completion (oracle: enumerate completions)."""
        import itertools

        for _ in range(40):
            pair = random_pair(rng, 5)
            for level in range(pair.n1 + 1):
                for prefix in itertools.permutations(range(pair.n2), level):
                    best = min(
                        mapping_edit_cost(pair, list(prefix) + list(rest))
                        for rest in itertools.permutations([t for t in range(pair.n2) if t not in prefix], pair.n1 - level)
                    )
                    assert lower_bound(pair, list(prefix)) <= best

    def test_lower_bound_is_at_least_prefix_cost(self, rng):
        for _ in range(30):
            pair = random_pair(rng, 6)
            prefix = list(rng.permutation(pair.n2)[: rng.integers(0, pair.n1 + 1)])
            assert lower_bound(pair, prefix) >= prefix_cost(pair, prefix)


class TestAstar:
    def test_identical_graphs(self, rng):
        g = random_graph(rng, 4, 0.5)
        assert exact_ged(make_pair(g, g)).distance == 0

    def test_path_vs_triangle(self):
        res = exact_ged(make_pair(path3(), triangle()))
        assert res.distance == 1
        assert res.normalized_similarity == pytest.approx(np.exp(-2 / 6))

    def test_matches_brute_force(self, rng):
        for _ in range(120):
            pair = random_pair(rng, 6, edge_labels="xy" if rng.random() < 0.3 else "")
            res = astar_ged(pair, debug=True)
            assert res.distance == brute_force_ged(pair.g1, pair.g2)
            assert mapping_edit_cost(pair, res.matching) == res.distance

    def test_ancestors_bounds_never_exceed_result(self, rng):
        for _ in range(40):
            pair = random_pair(rng, 6)
            res = exact_ged(pair)
            for st in search_path(pair, res.matching.assigned):
                assert st.lb <= res.distance
                assert st.g_cost <= st.lb

    def test_beam_widths_are_nested(self, rng):
        for _ in range(60):
            pair = random_pair(rng, 7, min_nodes=3)
            exact = exact_ged(pair).distance
            dists = [beam_ged(pair, w).distance for w in (1, 2, 3, 5, 8)]
            assert all(d1 >= d2 for d1, d2 in zip(dists, dists[1:]))
            assert dists[-1] >= exact

    def test_timeout_without_solution_raises(self):
        rng = np.random.default_rng(0)
        a = random_graph(rng, 14, 0.5, gid="a")
        b = random_graph(rng, 14, 0.5, gid="b")
        with pytest.raises(SearchTimeout):
            astar_ged(make_pair(a, b), timeout=1e-9)

    def test_timeout_returns_best_complete_if_any(self):
        # with a vanishing budget the deadline check fires at the 64th
        # expansion; by then this search has generated complete children
        rng = np.random.default_rng(2)
        a = random_graph(rng, 5, 0.5, gid="a")
        b = random_graph(rng, 9, 0.5, gid="b")
        pair = make_pair(a, b)
        res = astar_ged(pair, timeout=1e-9)
        assert res.timed_out
        assert res.distance >= exact_ged(pair).distance
        assert mapping_edit_cost(pair, res.matching) == res.distance

    def test_similarity_formula(self):
        assert normalized_similarity(0, 3, 5) == 1.0
        assert normalized_similarity(1, 1, 1) == pytest.approx(np.exp(-1))
        assert normalized_similarity(2, 3, 3) < normalized_similarity(1, 3, 3)
