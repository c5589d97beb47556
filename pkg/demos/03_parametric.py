"""Parametric representation: the HU polynomial and the amplitude.

Extracts HU exactly, compares its leading monomials with the admissible
pair prediction, then integrates the amplitude of a convergent graph.
Run: python demos/03_parametric.py
"""

from fractions import Fraction
from pathlib import Path

import numpy as np

from ncphi4 import graphio
from ncphi4.parametric import (amplitude_quadrature, convergence_limit, hu_extract, leading_term_check,
                               oracle_ratios)

GRAPHS = Path(__file__).parent / "graphs"

# %% HU of the bubble, one monomial per line: coefficient, power of s, powers of t
g = graphio.load(GRAPHS / "bubble.graph")
hu = hu_extract(g)
print("bubble HU:\n" + hu.dump())

# %% Exact check against the full Gaussian integral at a few rational points.
# The ratio is the same constant at every point.
pts = [[Fraction(1, 3), Fraction(2, 7)], [Fraction(5, 11), Fraction(1, 2)], [Fraction(3, 4), Fraction(1, 9)]]
print("oracle ratios:", oracle_ratios(g, hu, pts, Fraction(2)))

# %% Leading monomials carry s^(2g) 4^g. Non-leading pairs of the genus-1 double tadpole
# would need an odd power of s, which HU does not have.
for name in ("bubble", "double_tadpole"):
    gg = graphio.load(GRAPHS / f"{name}.graph")
    rep = leading_term_check(gg, hu_extract(gg))
    print(f"{name}: leading pairs ok={rep.leading_ok}, all pairs ok={rep.ok}")

# %% Amplitude of the crossed tadpole at D = 4 (convergent: it has no pole in D)
g = graphio.load(GRAPHS / "crossed_tadpole.graph")
lim = convergence_limit(g)
print("\ncrossed tadpole:", "no pole in D" if lim is None else f"converges for D < {lim}")
x = np.random.default_rng(0).normal(size=(g.Ne, 4))
for rtol in (1e-7, 1e-9):
    val, err = amplitude_quadrature(g, hu_extract(g), x, np.zeros(4), 4.0, rtol=rtol)
    print(f"rtol={rtol:g}: A = {val:.10f}  (error estimate {err:.1e})")
