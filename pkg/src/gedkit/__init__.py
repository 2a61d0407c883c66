"""Graph edit distance toolkit: exact and beam A*, bipartite baselines,
learned node-matching candidates and candidate-restricted refinement."""

from .graph import Graph, GraphPair, PerturbMode, make_pair, perturb_edges
from .search import GedResult, NodeMatching, SearchTimeout, astar_ged, beam_ged, exact_ged, lower_bound, mapping_edit_cost
from .bipartite import bipartite_ged, build_cost_matrix, solve_assignment
from .matching import CandidateSet, greedy_candidates, sinkhorn_topk
from .refine import k_sweep, mata_star

__all__ = [
    "Graph", "GraphPair", "PerturbMode", "make_pair", "perturb_edges",
    "GedResult", "NodeMatching", "SearchTimeout", "astar_ged", "beam_ged", "exact_ged", "lower_bound", "mapping_edit_cost",
    "bipartite_ged", "build_cost_matrix", "solve_assignment",
    "CandidateSet", "greedy_candidates", "sinkhorn_topk",
    "k_sweep", "mata_star",
]
