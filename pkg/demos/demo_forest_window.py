"""
Directed spanning forest on a window
====================================

Build the forest on a 30 x 30 window of a unit-intensity Poisson process in
the plane, count its trees and export vertices and edges as CSV.
"""

import math
import sys

import numpy as np

from dsflab.forest import build_forest, count_trees
from dsflab.lpgeom import NormContext
from dsflab.ppp import PointStore

out = sys.argv[1] if len(sys.argv) > 1 else "."

############################################################
# One window, three norms.  Edges whose target may lie outside the window
# are flagged as uncertain and left out of the graph.

for p in (1.0, 2.0, math.inf):
    ctx = NormContext(2, p)
    store = PointStore(2, seed=2024, ctx=ctx)
    g = build_forest(store, (np.zeros(2), np.array([30.0, 30.0])), ctx)
    n_trees, sizes = count_trees(g)
    print(f"p={p:g}: {g.n_vertices} vertices, {len(g.edges)} edges, "
          f"{int(g.uncertain.sum())} uncertain, {n_trees} components, largest {sizes[:3]}")

############################################################
# The last forest is written out for external plotting.

g.to_csv(f"{out}/forest_vertices.csv", f"{out}/forest_edges.csv")
print("wrote forest_vertices.csv and forest_edges.csv")
