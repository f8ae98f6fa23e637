"""Ollivier-Ricci curvature on graphs small enough to check by hand.

A triangle is positively curved: the two endpoints of an edge share most of
their neighbourhood, so little mass has to move. The middle edge of a path
is flat, and the edges of a star around a hub are negative. Sinkhorn with the
usual regularisation lands close to the exact transport answer.
"""

import numpy as np

from gegcn.curvature import curvature_all_edges
from gegcn.graph import DistanceOracle, WeightedGraph


def show(name, g, alpha):
    o = DistanceOracle(g)
    exact = curvature_all_edges(g, o, alpha, "exact").kappa
    approx = curvature_all_edges(g, o, alpha, "sinkhorn", eps=0.1).kappa
    print(f"\n{name} (alpha={alpha})")
    for (u, v), ke, ks in zip(g.edges, exact, approx):
        print(f"  edge {u}-{v}: exact {ke:+.4f}   sinkhorn {ks:+.4f}")


show("triangle", WeightedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 0.0)
show("path a-b-c-d", WeightedGraph.from_edges(4, [(0, 1), (1, 2), (2, 3)]), 0.0)
show("star with four leaves", WeightedGraph.from_edges(5, [(0, i) for i in range(1, 5)]), 0.5)

# Curvature does not care about the unit of length.
rng = np.random.default_rng(0)
g = WeightedGraph.from_edges(6, [(0, 1), (1, 2), (2, 0), (2, 3), (3, 4), (4, 5), (5, 3)],
                             rng.uniform(0.5, 2.0, 7))
k1 = curvature_all_edges(g, DistanceOracle(g), 0.5, "exact").kappa
h = g.with_weights(g.weights * 10)
k2 = curvature_all_edges(h, DistanceOracle(h), 0.5, "exact").kappa
print(f"\nscaling all weights by 10 changes curvature by at most {np.abs(k1 - k2).max():.1e}")
