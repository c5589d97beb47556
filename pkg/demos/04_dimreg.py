"""Hepp sectors, poles in D, factorisation and subtraction.

Run: python demos/04_dimreg.py   (about 10 s)
"""

from pathlib import Path

from ncphi4 import graphio
from ncphi4.dimreg import b_prime_topological, factorization_check, locate_poles, slice_table, taylor_subtract

GRAPHS = Path(__file__).parent / "graphs"

# %% Poles of the two-point bubble chain. Each pole lists its minimal slices:
# the tadpole line 4 gives D = 2, the bubble (0, 1) appears at D = 4.
g = graphio.load(GRAPHS / "bubble_chain_2pt.graph")
for p in locate_poles(g):
    print(f"D* = {p.D!s:5s} from slices {p.slices}")

# %% b' against the topological bound for a few slices
table = slice_table(g)
for S in [(0, 1), (4,), (0, 1, 4), (0, 1, 2, 3, 4)]:
    bound = b_prime_topological(g, S)
    print(f"slice {S}: b' = {table[S][0]}, bound {bound.kind} {bound.value} {bound.cases}")

# %% Factorisation: shrinking the bubble by rho, the amplitude approaches the
# product of the bubble's leading part and the quotient graph, with error ~ rho^2.
rep = factorization_check(g, (0, 1), D=3.0)
print("\n" + rep.table())

# %% Subtraction of the single pole of the four-point bubble at D = 4.
# c_0 from a Laurent fit of A(D) matches the subtracted integral plus the
# finite part of the counterterm.
rep = taylor_subtract(graphio.load(GRAPHS / "bubble.graph"))
print("\n" + rep.table())
print("agree:", rep.ok)
