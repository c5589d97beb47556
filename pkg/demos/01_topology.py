"""Ribbon graph topology and power counting.

Loads a few small graphs, traces their faces and prints the genus, the
number of broken faces and the superficial degree of divergence.
Run: python demos/01_topology.py
"""

from pathlib import Path

from ncphi4 import graphio
from ncphi4.ribbon import classify, dual_graph, spanning_structures, topology

GRAPHS = Path(__file__).parent / "graphs"

# %% Topological invariants
# The planar tadpole closes a line between adjacent corners; the crossed one
# skips a corner, so its two external legs end up on different faces.
for name in ("planar_tadpole", "crossed_tadpole", "double_tadpole", "bubble", "sunshine", "bubble_chain_2pt"):
    g = graphio.load(GRAPHS / f"{name}.graph")
    r = topology(g)
    print(f"{name:18s} N={r.N} L={r.L} Ne={r.Ne} F={r.F} B={r.B} g={r.g} omega={r.omega!s:>3} -> {classify(r)}")

# %% Euler relation and duality
g = graphio.load(GRAPHS / "double_tadpole.graph")
r = topology(g)
print("\ndouble tadpole: N - L + F =", r.N - r.L + r.F, "= 2 - 2g with g =", r.g)
d = dual_graph(g)
print("dual: vertices =", d.n_vertices, "(faces of the original), faces =", d.n_faces(), "(vertices of the original)")

# %% Spanning trees and their duals
s = spanning_structures(graphio.load(GRAPHS / "bubble_chain_2pt.graph"))
print("\nbubble chain spanning structures:", s)
