"""Parametric representation of graph amplitudes.

The amplitude with propagators in ``t = tanh(alpha/2)`` parametrisation is a
Gaussian integral over short/long line variables and the Lagrange variables
of the vertex deltas. Its determinant is ``HU(t)^(D/2)`` and the
external-data dependence is ``exp(-HV/HU)``.

Per symplectic plane of theta the form splits into two complex blocks with
equal determinants. After rescaling the delta variables by ``i`` one block is
the real matrix assembled in :func:`gaussian_form`:

* ``1/t`` on short variables, ``t`` on long variables;
* antisymmetric entries ``-/+ s c a b / 2`` from every vertex phase
  ``c x_i x_j`` with corners ``x = (v + a u)/sqrt2``;
* symmetric entries ``(-1)^i a / 2`` between a delta variable and corners;
* every short-variable row multiplied by its ``t``.

``HU`` is its determinant up to a constant fixed by the leading admissible
monomials.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
import sympy as sp
from scipy import integrate
from sympy import QQ, ZZ
from sympy.polys.matrices import DomainMatrix

from .ribbon import RibbonGraph, spanning_structures, topology


class NormalizationError(RuntimeError):
    pass


class DomainError(ValueError):
    pass


# -- incidence -------------------------------------------------------------------------

@dataclass(frozen=True)
class IncidencePair:
    """``eps[l, V, i] = (-1)^(i+1)`` (corners numbered from 1) where line l
    hooks vertex V at corner i; ``eta = |eps|``."""

    eps: np.ndarray
    eta: np.ndarray


def incidence(g: RibbonGraph) -> IncidencePair:
    eps = np.zeros((g.L, g.N, 4), dtype=int)
    for l, pair in enumerate(g.lines):
        for h in pair:
            k, i = g.corner[h]
            eps[l, k, i] = (-1) ** i  # corner index i here counts from 0
    return IncidencePair(eps, np.abs(eps))


# -- quadratic form ----------------------------------------------------------------------

S = sp.Symbol("s")


def t_symbols(L):
    return sp.symbols(f"t1:{L + 1}") if L else ()


def _corner_coefficients(g: RibbonGraph):
    """corner -> {variable index: coefficient} in units of 1/sqrt2."""
    L = g.L
    pos = {}
    for l, (a, b) in enumerate(g.lines):
        ea = (-1) ** g.corner[a][1]
        pos[a] = {l: ea, L + l: 1}
        pos[b] = {l: -ea, L + l: 1}  # same-parity lines: sign at b forced opposite
    return pos


@dataclass(frozen=True)
class GaussianForm:
    """Real block of the Gaussian form of one symplectic plane.

    ``matrix`` is a sympy matrix over Q[s, t]; ``names`` labels rows:
    ``u[l]``, ``v[l]``, ``q[V]`` (delta variables) and, for the smeared
    variant, ``x[h]`` (external positions with unit Gaussian weight).
    """

    names: tuple[str, ...]
    matrix: sp.Matrix
    n_delta: int
    smeared: bool

    @property
    def symmetric_part(self) -> sp.Matrix:
        return (self.matrix + self.matrix.T) / 2

    @property
    def antisymmetric_part(self) -> sp.Matrix:
        return (self.matrix - self.matrix.T) / 2


def _assemble(g: RibbonGraph, smeared: bool, s, t, zero, half):
    """Block matrix with short-variable rows already multiplied by their t.

    Generic in the scalar type so that the same code serves the symbolic
    form and exact evaluation at rational points.
    """
    L = g.L
    pos = _corner_coefficients(g)
    names = [f"u[{l}]" for l in range(L)] + [f"v[{l}]" for l in range(L)]
    deltas = [k for k in range(g.N) if smeared or k != g.root_index]
    names += [f"q[{g.vertex_ids[k]}]" for k in deltas]
    base = len(names)
    if smeared:
        for j, h in enumerate(g.externals):
            pos[h] = {base + j: 1}
        names += [f"x[{h}]" for h in g.externals]
    n = len(names)
    R = [[zero] * n for _ in range(n)]
    for k, (_, cs) in enumerate(g.vertices):
        for i, j in itertools.combinations(range(4), 2):
            c = (-1) ** (i + j + 1)
            for a, al in pos.get(cs[i], {}).items():
                for b, be in pos.get(cs[j], {}).items():
                    val = half * c * al * be * s
                    R[a][b] -= val
                    R[b][a] += val
        if k in deltas:
            qi = 2 * L + deltas.index(k)
            for i in range(4):
                for a, al in pos.get(cs[i], {}).items():
                    R[qi][a] += half * (-1) ** i * al
                    R[a][qi] += half * (-1) ** i * al
    for l in range(L):
        R[l] = [x * t[l] for x in R[l]]
        R[l][l] = zero + 1  # t * (1/t)
        R[L + l][L + l] += t[l]
    if smeared:
        for j in range(g.Ne):
            R[base + j][base + j] += 1
    return names, R, len(deltas)


def gaussian_form(g: RibbonGraph, smeared: bool = False) -> GaussianForm:
    """Assemble the block matrix over Q[s, t].

    ``smeared=False``: the root delta is replaced by the fixed hypermomentum
    source, every other delta is integrated. ``smeared=True``: every delta is
    integrated and the external positions are integrated against a unit
    Gaussian.
    """
    names, R, nd = _assemble(g, smeared, S, t_symbols(g.L), sp.Integer(0), sp.Rational(1, 2))
    return GaussianForm(tuple(names), sp.Matrix(R) if R else sp.zeros(0, 0), nd, smeared)


def _integer_pencil(g: RibbonGraph, smeared: bool, s):
    """The block matrix at fixed rational s as ``(C + sum_l t_l E_l) / m``.

    The scaled block is affine in t, so one assembly per line suffices.
    Returns integer matrices (C, [E_l]), the common denominator m and the
    number of delta variables.
    """
    one, zero, half = Fraction(1), Fraction(0), Fraction(1, 2)

    def build(t):
        return _assemble(g, smeared, Fraction(s), t, zero, half)[1:]

    L = g.L
    C, nd = build([zero] * L)
    Es = []
    for l in range(L):
        R, _ = build([one if k == l else zero for k in range(L)])
        Es.append([[R[i][j] - C[i][j] for j in range(len(C))] for i in range(len(C))])
    m = math.lcm(1, *(x.denominator for M in [C] + Es for row in M for x in row))
    C = [[int(x * m) for x in row] for row in C]
    Es = [[[int(x * m) for x in row] for row in E] for E in Es]
    return C, Es, m, nd


def hu_at_s(g: RibbonGraph, s, smeared: bool = False) -> HUPolynomial:
    """Polynomial in t at a fixed s, by exact interpolation.

    Every t_l has degree at most two, so values on the grid {0, 1, 2}^L
    determine the polynomial.
    """
    L = g.L
    C, Es, m, nd = _integer_pencil(g, smeared, s)
    n = len(C)
    if n == 0:
        return HUPolynomial(L, {(0, (0,) * L): Fraction(1)}, f"s={s}")
    C = np.array(C, dtype=object)
    Es = [np.array(E, dtype=object) for E in Es]
    scale = Fraction((-1) ** nd, m ** n)
    vals = {}
    for p in itertools.product(range(3), repeat=L):
        M = C + sum((k * E for k, E in zip(p, Es) if k), np.zeros_like(C))
        dm = DomainMatrix([[ZZ(int(x)) for x in row] for row in M], (n, n), ZZ)
        vals[p] = scale * int(dm.det())
    vinv = [[Fraction(1), Fraction(0), Fraction(0)],
            [Fraction(-3, 2), Fraction(2), Fraction(-1, 2)],
            [Fraction(1, 2), Fraction(-1), Fraction(1, 2)]]  # inverse Vandermonde on 0, 1, 2
    for axis in range(L):
        nxt = {}
        for p in vals:
            key0 = p[:axis]
            rest = p[axis + 1:]
            for e in range(3):
                key = key0 + (e,) + rest
                if key not in nxt:
                    nxt[key] = sum(vinv[e][k] * vals[key0 + (k,) + rest] for k in range(3))
        vals = nxt
    return HUPolynomial(L, {(0, e): c for e, c in vals.items() if c != 0}, f"s={s}")


def _determinant(form: GaussianForm, L: int) -> sp.Poly:
    gens = (S,) + t_symbols(L)
    dom = QQ[gens]
    if form.matrix.shape[0] == 0:
        return sp.Poly(1, *gens)
    dm = DomainMatrix.from_Matrix(form.matrix).convert_to(dom)
    det = dom.to_sympy(dm.det()) * (-1) ** form.n_delta
    return sp.Poly(det, *gens)


# -- HU polynomial ------------------------------------------------------------------------

@dataclass(frozen=True)
class HUPolynomial:
    """Exact polynomial in s and t_1..t_L.

    ``terms`` maps ``(s_power, (e_1, .., e_L))`` to a rational coefficient.
    """

    L: int
    terms: dict
    normalization: str

    def monomials(self) -> list:
        return sorted(self.terms, key=lambda k: (k[1], k[0]))

    def t_support(self) -> list[tuple[int, ...]]:
        return sorted({e for _, e in self.terms})

    def coefficient(self, exps, s_power) -> Fraction:
        return self.terms.get((s_power, tuple(exps)), Fraction(0))

    def at_s(self, s) -> dict:
        """Collapse the s-dependence: t-exponents -> coefficient at given s."""
        out: dict = {}
        for (a, e), c in self.terms.items():
            out[e] = out.get(e, 0) + c * s ** a
        return out

    @cached_property
    def _arrays(self):
        keys = list(self.terms)
        return (np.array([float(self.terms[k]) for k in keys]), np.array([k[0] for k in keys], float),
                np.array([k[1] for k in keys], float).reshape(len(keys), self.L))

    def evaluate(self, t, s) -> float:
        c, a, e = self._arrays
        t = np.asarray(t, dtype=float)
        return float(np.sum(c * s ** a * np.prod(t ** e, axis=1)))

    def evaluate_exact(self, t, s) -> Fraction:
        total = Fraction(0)
        for (a, e), c in self.terms.items():
            m = c * Fraction(s) ** a
            for ti, ei in zip(t, e):
                m *= Fraction(ti) ** ei
            total += m
        return total

    def dump(self) -> str:
        lines = []
        for a, e in self.monomials():
            c = self.terms[(a, e)]
            parts = [str(c), f"s^{a}"] + [f"t{i + 1}^{k}" for i, k in enumerate(e)]
            lines.append(" ".join(parts))
        return "\n".join(lines) + "\n"

    @classmethod
    def parse_dump(cls, text: str, normalization="parsed") -> "HUPolynomial":
        terms, L = {}, 0
        for line in text.strip().splitlines():
            parts = line.split()
            c = Fraction(parts[0])
            a = int(parts[1].split("^")[1])
            e = tuple(int(p.split("^")[1]) for p in parts[2:])
            L = len(e)
            terms[(a, e)] = c
        return cls(L, terms, normalization)

    def scaled(self, factor: Fraction, tag: str) -> "HUPolynomial":
        return HUPolynomial(self.L, {k: v * factor for k, v in self.terms.items()}, tag)


def _poly_terms(P: sp.Poly) -> dict:
    out = {}
    for monom, coeff in P.terms():
        out[(monom[0], tuple(monom[1:]))] = Fraction(int(coeff.p), int(coeff.q))
    return out


@lru_cache(maxsize=4096)
def hu_raw(g: RibbonGraph, smeared: bool = False) -> HUPolynomial:
    """Block determinant without normalisation."""
    P = _determinant(gaussian_form(g, smeared), g.L)
    return HUPolynomial(g.L, _poly_terms(P), "smeared-raw" if smeared else "raw")


def hu_extract(g: RibbonGraph) -> HUPolynomial:
    """HU normalised so that the lexicographically least leading admissible
    monomial carries ``s^(2g-k) 2^(2g)``."""
    raw = hu_raw(g)
    top = topology(g)
    leading = [p for p in admissible_pairs(g) if p.leading]
    if not leading:
        raise NormalizationError("no leading admissible pair")
    anchor = min(leading, key=lambda p: p.exponents)
    c = raw.coefficient(anchor.exponents, anchor.s_power)
    if c == 0:
        raise NormalizationError(f"anchor monomial {anchor.exponents} absent from the determinant")
    hu = raw.scaled(Fraction(anchor.coefficient) / c, f"anchor J={list(anchor.J)}")
    for e in hu.t_support():
        assert max(e, default=0) <= 2, f"t-exponent above 2 in {e}"
    assert all(v > 0 for v in hu.terms.values()), "negative HU coefficient"
    assert top.g >= 0
    return hu


@lru_cache(maxsize=4096)
def power_counting_polynomial(g: RibbonGraph) -> HUPolynomial:
    """Support of the determinant of the amplitude smeared against Gaussian
    external data, evaluated at s = 1.

    Coefficients are sums of positive multiples of powers of s, so the
    support at s = 1 is the symbolic support; positivity is asserted. Every
    vertex delta stays exact, so for vacuum graphs the global translation
    mode makes the smeared determinant vanish; those fall back to the
    root-fixed HU.
    """
    P = hu_at_s(g, 1, smeared=g.Ne > 0)
    if not P.terms:
        raise NormalizationError("power-counting determinant vanished")
    sign = 1 if next(iter(P.terms.values())) > 0 else -1
    P = P.scaled(Fraction(sign), "smeared, s=1" if g.Ne else "root-fixed, s=1")
    if any(c < 0 for c in P.terms.values()):
        raise NormalizationError("mixed signs in the power-counting determinant")
    return P


# -- admissible pairs --------------------------------------------------------------------

@dataclass(frozen=True)
class AdmissiblePair:
    I: tuple[int, ...]
    J: tuple[int, ...]
    k: int
    s_power: int
    coefficient: int
    leading: bool
    L: int

    @property
    def exponents(self) -> tuple[int, ...]:
        """t-exponents of prod_{l not in I} t_l prod_{l in J} t_l."""
        e = [0] * self.L
        for l in range(self.L):
            if l not in self.I:
                e[l] += 1
        for l in self.J:
            e[l] += 1
        return tuple(e)


def k_value(I, J, L, F) -> int:
    return len(I) + len(J) - L - F + 1


def admissible_pairs(g: RibbonGraph) -> list[AdmissiblePair]:
    """I = all lines; J contains a dual tree and its complement a direct tree."""
    top = topology(g)
    st = spanning_structures(g)
    dual = [frozenset(t) for t in st.dual]
    direct = [frozenset(t) for t in st.direct]
    I = tuple(range(g.L))
    out = []
    for r in range(g.L + 1):
        for J in itertools.combinations(range(g.L), r):
            Js = frozenset(J)
            comp = frozenset(range(g.L)) - Js
            if any(t <= Js for t in dual) and any(t <= comp for t in direct):
                k = k_value(I, J, g.L, top.F)
                out.append(AdmissiblePair(I, J, k, 2 * top.g - k, 4 ** top.g, len(J) == top.F - 1, g.L))
    return out


@dataclass(frozen=True)
class LeadingTermReport:
    checked: int
    mismatches: tuple
    leading_checked: int
    leading_mismatches: tuple

    @property
    def ok(self) -> bool:
        return not self.mismatches

    @property
    def leading_ok(self) -> bool:
        return not self.leading_mismatches


def leading_term_check(g: RibbonGraph, hu: HUPolynomial, pairs=None) -> LeadingTermReport:
    """Compare the (t^J, s^(2g-k)) coefficient of every admissible pair with 2^(2g).

    Mismatches are split into leading pairs (J exactly a dual tree) and the
    rest.
    """
    pairs = admissible_pairs(g) if pairs is None else pairs
    bad, bad_lead, n_lead = [], [], 0
    for p in pairs:
        c = hu.coefficient(p.exponents, p.s_power)
        if p.leading:
            n_lead += 1
        if c != p.coefficient:
            entry = (p.J, p.exponents, p.s_power, c, p.coefficient)
            bad.append(entry)
            if p.leading:
                bad_lead.append(entry)
    return LeadingTermReport(len(pairs), tuple(bad), n_lead, tuple(bad_lead))


# -- independent oracle -------------------------------------------------------------------

def _corner_form(g: RibbonGraph, t, theta, omega_t, exact=False, mehler=True):
    """Full 4-D Gaussian form in corner variables.

    Integration variables: the four coordinates of every internal corner and
    of the delta variable p_V of every non-root vertex. Returns ``(M, ext,
    src)`` with the exponent ``-Y^T M Y + Y^T (ext . x_e + src . p_root) +
    const(x_e, p_root)``; ``ext`` and ``src`` are coefficient blocks and
    ``const`` is returned as a callable.
    """
    if exact:
        one, I = sp.Integer(1), sp.I
        Th = sp.Matrix([[0, theta, 0, 0], [-theta, 0, 0, 0], [0, 0, 0, theta], [0, 0, -theta, 0]])
        A = Th.inv()
        zeros = lambda r, c: sp.zeros(r, c)
    else:
        one, I = 1.0, 1j
        Th = np.array([[0, theta, 0, 0], [-theta, 0, 0, 0], [0, 0, 0, theta], [0, 0, -theta, 0]], float)
        A = np.linalg.inv(Th)
        zeros = lambda r, c: np.zeros((r, c), dtype=complex)
    inner = [h for pair in g.lines for h in pair]
    ci = {h: k for k, h in enumerate(inner)}
    others = [k for k in range(g.N) if k != g.root_index]
    pi = {k: len(inner) + j for j, k in enumerate(others)}
    ext = {h: j for j, h in enumerate(g.externals)}
    n = 4 * (len(inner) + len(others))
    M = zeros(n, n)          # quadratic in Y
    Bx = zeros(n, 4 * g.Ne)  # linear in Y, per external coordinate
    Bp = zeros(n, 4)         # linear in Y, per root-source coordinate
    Cxx = zeros(4 * g.Ne, 4 * g.Ne)
    Cxp = zeros(4 * g.Ne, 4)

    def blk(k):
        return slice(4 * k, 4 * k + 4)

    for l, (a, b) in enumerate(g.lines):
        if not mehler:
            break
        w = omega_t / 4
        ia, ib = ci[a], ci[b]
        for (p, q, sg) in ((ia, ia, 1), (ib, ib, 1), (ia, ib, -1), (ib, ia, -1)):
            for mu in range(4):
                M[4 * p + mu, 4 * q + mu] += w * (sg * one / t[l] + t[l])
    for k, (_, cs) in enumerate(g.vertices):
        for i, j in itertools.combinations(range(4), 2):
            c = 2 * (-1) ** (i + j + 1)
            hi, hj = cs[i], cs[j]
            # phase i c x_i A x_j enters the exponent as +i c x_i A x_j
            for mu in range(4):
                for nu in range(4):
                    val = I * c * A[mu, nu]
                    if val == 0:
                        continue
                    if hi in ci and hj in ci:
                        M[4 * ci[hi] + mu, 4 * ci[hj] + nu] -= val / 2
                        M[4 * ci[hj] + nu, 4 * ci[hi] + mu] -= val / 2
                    elif hi in ci:
                        Bx[4 * ci[hi] + mu, 4 * ext[hj] + nu] += val
                    elif hj in ci:
                        Bx[4 * ci[hj] + nu, 4 * ext[hi] + mu] += val
                    else:
                        Cxx[4 * ext[hi] + mu, 4 * ext[hj] + nu] += val
        for i, h in enumerate(cs):
            sgn = (-1) ** i
            for mu in range(4):
                if k in pi:
                    if h in ci:
                        M[4 * pi[k] + mu, 4 * ci[h] + mu] -= I * sgn / 2
                        M[4 * ci[h] + mu, 4 * pi[k] + mu] -= I * sgn / 2
                    else:
                        Bx[4 * pi[k] + mu, 4 * ext[h] + mu] += I * sgn
                else:
                    if h in ci:
                        Bp[4 * ci[h] + mu, mu] += I * sgn
                    else:
                        Cxp[4 * ext[h] + mu, mu] += I * sgn
    return M, Bx, Bp, Cxx, Cxp


def oracle_determinant(g: RibbonGraph, t, s) -> sp.Expr:
    """Exact det of the full corner form times prod t^4 (theta = 1, OmegaTilde = 2/s)."""
    s = sp.Rational(s)
    t = [sp.Rational(x) for x in t]
    M, *_ = _corner_form(g, t, sp.Integer(1), 2 / s, exact=True)
    if M.shape[0] == 0:
        return sp.Integer(1)
    from sympy.polys.domains import QQ_I
    det = DomainMatrix.from_Matrix(M).convert_to(QQ_I).det()
    return QQ_I.to_sympy(det) * sp.prod([x ** 4 for x in t])


def oracle_ratios(g: RibbonGraph, hu: HUPolynomial, points, s) -> list:
    """det(full form) * prod t^4 / HU^4 at each point (constant if HU is right)."""
    out = []
    for t in points:
        h = hu.evaluate_exact(t, Fraction(s))
        out.append(sp.expand(oracle_determinant(g, t, s) / sp.Rational(h.numerator, h.denominator) ** 4))
    return out


# -- amplitudes ------------------------------------------------------------------------------

@dataclass(frozen=True)
class AmplitudeEvaluation:
    x_e: np.ndarray
    p_root: np.ndarray
    D: float
    t: np.ndarray
    hv_over_hu: complex
    hu: float
    integrand: complex


def parametric_omega_tilde(theta: float, Omega: float) -> float:
    """OmegaTilde making s = 2/(theta OmegaTilde) equal to 1/Omega."""
    return 2 * Omega / theta


@lru_cache(maxsize=256)
def _short_long_blocks(g: RibbonGraph, theta: float, omega_t: float):
    """t-independent part of the corner form, rotated to short/long variables.

    In corner variables the Mehler block ``w (1/t + t)``, ``w (t - 1/t)``
    loses its long part to cancellation once t is below about 1e-8. Each
    line's corner pair is rotated to ``u = (a - b)/sqrt2``, ``v = (a + b)/sqrt2``
    where the block is ``diag(2w/t, 2w t)``. Returns the rotated phase and
    delta block, the rotated source blocks, the constant blocks and the
    indices of the short and long coordinates.
    """
    M, Bx, Bp, Cxx, Cxp = _corner_form(g, np.zeros(g.L), theta, omega_t, mehler=False)
    n = M.shape[0]
    T = np.eye(n)
    r = 1 / math.sqrt(2)
    short, long_ = [], []
    for l in range(g.L):
        for mu in range(4):
            a, c = 4 * (2 * l) + mu, 4 * (2 * l + 1) + mu  # endpoints of line l are corners 2l, 2l+1
            T[a, a], T[a, c], T[c, a], T[c, c] = r, r, -r, r  # column a is u, column c is v
            short.append(a)
            long_.append(c)
    return T.T @ M @ T, T.T @ Bx, T.T @ Bp, Cxx, Cxp, np.array(short, int), np.array(long_, int)


def hv_over_hu(g: RibbonGraph, x_e, p_root, t, theta=1.0, Omega=0.5) -> complex:
    """Schur complement of the external data against the Gaussian form.

    Solved in short/long variables after symmetric diagonal scaling, which
    keeps t down to 1e-300 well conditioned.
    """
    x_e = np.asarray(x_e, float).reshape(g.Ne, 4) if g.Ne else np.zeros((0, 4))
    p_root = np.asarray(p_root, float)
    t = np.asarray(t, float)
    wt = parametric_omega_tilde(theta, Omega)
    M0, Bx, Bp, Cxx, Cxp, short, long_ = _short_long_blocks(g, float(theta), float(wt))
    xv = x_e.ravel()
    b = Bx @ xv + Bp @ p_root
    const = xv @ Cxx @ xv + xv @ Cxp @ p_root
    if not b.shape[0]:
        return complex(-const)
    w = wt / 4
    diag = np.zeros(M0.shape[0])
    tl = np.repeat(t, 4)
    diag[short] = 2 * w / tl
    diag[long_] = 2 * w * tl
    d = np.sqrt(np.where(diag > 0, diag, 1.0))
    Mr = (M0 + np.diag(diag)) / np.outer(d, d)
    quad = (b / d) @ np.linalg.solve(Mr, b / d) / 4
    return complex(-(quad + const))


def amplitude_eval(g: RibbonGraph, hu: HUPolynomial, x_e, p_root, D, t, theta=1.0, Omega=0.5) -> AmplitudeEvaluation:
    t = np.asarray(t, float)
    if np.any(t <= 0) or np.any(t >= 1):
        raise DomainError("t must lie in the open unit cube")
    s = 1 / Omega
    h = hu.evaluate(t, s)
    if h <= 0:
        raise DomainError(f"HU = {h} <= 0 at t = {t}")
    r = hv_over_hu(g, x_e, p_root, t, theta, Omega)
    wt = parametric_omega_tilde(theta, Omega)
    pref = (wt / 2 ** (D / 2 - 1)) ** g.L
    val = pref * np.prod((1 - t ** 2) ** (D / 2 - 1)) * np.exp(-r) / h ** (D / 2)
    return AmplitudeEvaluation(np.asarray(x_e, float), np.asarray(p_root, float), D, t, r, h, complex(val))


class QuadratureFailure(RuntimeError):
    pass


def convergence_limit(g: RibbonGraph):
    """Smallest 2|S|/b'(S) over line subsets S with b' > 0, or None.

    b'(S) is the least total degree in the lines of S over the monomials of
    the power-counting polynomial; the cube integral converges below this D.
    """
    support = power_counting_polynomial(g).t_support()
    best = None
    for r in range(1, g.L + 1):
        for S in itertools.combinations(range(g.L), r):
            b = min(sum(e[l] for l in S) for e in support)
            if b and (best is None or Fraction(2 * r, b) < best):
                best = Fraction(2 * r, b)
    return best


Y_FLOOR = 1e-40  # nodes below this are dropped: 1/t overflows near 1e-154, and the slab is negligible


def amplitude_quadrature(g: RibbonGraph, hu: HUPolynomial, x_e, p_root, D, theta=1.0, Omega=0.5,
                         rtol=1e-7) -> tuple[complex, float]:
    """Integral of the amplitude integrand over the unit cube.

    Substitutes ``t = y^2`` to soften the t -> 0 endpoint. Returns the value
    and the reported absolute error. Raises when quadrature does not meet
    ``rtol``.
    """
    if g.L == 0:
        return complex(np.exp(-hv_over_hu(g, x_e, p_root, [], theta, Omega))), 0.0
    if g.L > 3:
        raise QuadratureFailure("direct cube quadrature supports at most three lines")
    D_star = convergence_limit(g)
    if D_star is not None and D >= D_star:
        raise DomainError(f"integral diverges for D >= {D_star} (requested D = {D})")

    def f(*y, part):
        y = np.array(y)
        if y.min() < Y_FLOOR:
            return 0.0
        v = amplitude_eval(g, hu, x_e, p_root, D, y ** 2, theta, Omega).integrand * np.prod(2 * y)
        return v.real if part == 0 else v.imag

    out, err = [], 0.0
    opts = {"epsrel": rtol, "epsabs": 0, "limit": 200}
    for part in (0, 1):
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"):
                val, e = integrate.nquad(lambda *y: f(*y, part=part), [(0, 1)] * g.L, opts=[opts] * g.L)
        except (FloatingPointError, ZeroDivisionError, DomainError) as exc:
            raise QuadratureFailure(f"integrand failed: {exc}") from None
        out.append(val)
        err += e
    total = complex(out[0], out[1])
    if not math.isfinite(abs(total)) or err > 10 * rtol * max(abs(total), 1e-300):
        raise QuadratureFailure(f"quadrature error {err:.3e} for value {total:.6e}")
    return total, err
