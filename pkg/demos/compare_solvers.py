"""Compare the exact, beam and bipartite solvers on a handful of random pairs.

Run with ``python3 demos/compare_solvers.py``.
"""

from gedkit import bipartite_ged, beam_ged, exact_ged, make_pair
from gedkit.dataio import generate_random_graphs

graphs = generate_random_graphs(8, (4, 7), 0.5, 3, seed=3)

print(f"{'pair':<10} {'exact':>5} {'beam5':>5} {'hung':>5} {'vj':>5}")
for a, b in zip(graphs[::2], graphs[1::2]):
    pair = make_pair(a, b)
    exact = exact_ged(pair)
    row = [exact.distance, beam_ged(pair, 5).distance]
    row += [bipartite_ged(pair, m).distance for m in ("hungarian", "vj")]
    print(f"{a.id}-{b.id:<6} " + " ".join(f"{d:>5}" for d in row))
    # every approximate distance is an upper bound on the exact one
    assert min(row) == exact.distance

pair = make_pair(graphs[0], graphs[1])
res = exact_ged(pair)
print("\noptimal matching:", res.matching.assigned)
print("edit path:")
for op in res.edit_path(pair):
    print("  ", op)
