"""Filk reduction and the Moyal limit of planar graphs.

Contracting a spanning tree turns a graph into a single rosette vertex
with an explicit oscillating phase. For planar graphs with one broken face,
the u -> 0 limit of that phase is exactly a Moyal vertex in the external
positions.
Run: python demos/02_rosette_moyality.py
"""

from pathlib import Path

from ncphi4 import graphio
from ncphi4.ribbon import enumerate_spanning_trees
from ncphi4.rosette import filk_reduce, moyal_vertex_form, moyality_limit, oracle_check, planar_vertex_contribution

GRAPHS = Path(__file__).parent / "graphs"
g = graphio.load(GRAPHS / "bubble_chain_2pt.graph")
trees = enumerate_spanning_trees(g.N, [g.line_vertices(l) for l in range(g.L)])
print("spanning trees:", trees)

# %% The reduced phase is the same for every tree up to relabelling,
# and each one agrees with direct elimination of the vertex deltas.
for t in trees:
    print("tree", t, "agrees with elimination:", oracle_check(g, filk_reduce(g, t)))

# %% Planar contribution and its Moyal limit
p = planar_vertex_contribution(g, trees[0])
print("\nplanar contribution:\n" + p.table())
lim = moyality_limit(p)
ext = [n for n in p.names if n[:2] not in ("u[", "v[", "w[")]
ref = moyal_vertex_form(ext)
print("\nu -> 0 limit:\n" + lim.table())
print("\nequals the Moyal vertex on", ext, ":", lim.nonzero() == ref.nonzero() and lim.delta_dict() == ref.delta_dict())
