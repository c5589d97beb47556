"""Hepp-sector power counting and dimensional regularisation.

In the sector ``t_{o(1)} <= .. <= t_{o(L)}`` the map ``t_{o(l)} = prod_{j>=l}
x_j^2`` factors the amplitude into ``prod_i x_i^{2L(G_i) - 1 - D b'(G_i)}``
times a function regular at ``x = 0``. ``G_i`` is the slice formed by the
first ``i`` lines of the order and ``b'(G_i)`` is the minimal total
t-degree of those lines over the monomials of the power-counting polynomial.
The integral over ``x_i`` converges iff ``D < D*_i = 2L(G_i)/b'(G_i)``.

``b'`` of a slice depends only on its line set, so the pole set is computed
once per subset; every nonempty subset is a prefix of some sector.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import integrate

from .parametric import (HUPolynomial, QuadratureFailure, amplitude_eval, amplitude_quadrature, hu_extract,
                         hv_over_hu, parametric_omega_tilde, power_counting_polynomial)
from .ribbon import RibbonGraph, build_graph, subgraph_slice


class UnsupportedCase(ValueError):
    pass


class FitFailure(RuntimeError):
    pass


# -- sectors --------------------------------------------------------------------------------

@dataclass(frozen=True)
class HeppSector:
    """``order[0]`` is the line with the smallest t."""

    order: tuple[int, ...]

    def prefix(self, i: int) -> tuple[int, ...]:
        return tuple(sorted(self.order[:i]))

    def chain(self, g: RibbonGraph):
        return tuple(subgraph_slice(g, self.prefix(i)) for i in range(1, len(self.order) + 1))


def sectors(L: int):
    for p in itertools.permutations(range(L)):
        yield HeppSector(p)


def substitute_sector(hu: HUPolynomial, sigma: HeppSector) -> dict:
    """Exact substitution: ``(s_power, t-exponents) -> (s_power, x-exponents)``.

    The degree in ``x_i`` of ``t^e`` is ``2 sum_{l <= i} e_{order[l]}``.
    """
    out = {}
    for (a, e), c in hu.terms.items():
        acc, xe = 0, []
        for line in sigma.order:
            acc += e[line]
            xe.append(2 * acc)
        key = (a, tuple(xe))
        out[key] = out.get(key, 0) + c
    return out


def evaluate_substituted(poly: dict, x, s) -> float:
    x = np.asarray(x, float)
    return sum(float(c) * s ** a * float(np.prod(x ** np.array(e))) for (a, e), c in poly.items())


def sector_t(sigma: HeppSector, x) -> np.ndarray:
    """t-point of the sector map at ``x``."""
    L = len(sigma.order)
    t = np.empty(L)
    sq = np.asarray(x, float) ** 2
    for pos, line in enumerate(sigma.order):
        t[line] = np.prod(sq[pos:])
    return t


def b_prime_lines(P: HUPolynomial, lines) -> int:
    lines = tuple(lines)
    return min(sum(e[l] for l in lines) for e in P.t_support())


def b_prime(P: HUPolynomial, sigma: HeppSector, i: int) -> int:
    return b_prime_lines(P, sigma.order[:i]) if i else 0


@dataclass(frozen=True)
class SectorExponents:
    L: tuple[int, ...]
    b_prime: tuple[int, ...]

    def exponent(self, i: int, D):
        """Exponent of x_i (1-based) after factoring: 2L_i - 1 - D b'_i."""
        return 2 * self.L[i - 1] - 1 - D * self.b_prime[i - 1]

    def first_pole(self, i: int):
        b = self.b_prime[i - 1]
        return Fraction(2 * self.L[i - 1], b) if b else None


def sector_exponents(P: HUPolynomial, sigma: HeppSector) -> SectorExponents:
    L = len(sigma.order)
    return SectorExponents(tuple(range(1, L + 1)), tuple(b_prime(P, sigma, i) for i in range(1, L + 1)))


def sector_jacobian(x) -> float:
    """dt/dx of the sector map: prod_i 2 x_i^(2i - 1)."""
    return float(np.prod([2 * v ** (2 * i + 1) for i, v in enumerate(x)]))


def sector_sum_quadrature(g: RibbonGraph, D, x_e=None, p_root=None, theta=1.0, Omega=0.5, seed=0,
                          epsrel=1e-9) -> tuple[complex, tuple[complex, ...]]:
    """Amplitude as the sum over all L! Hepp sectors of sector quadratures.

    Returns the total and the per-sector values in ``sectors`` order.
    """
    rng = np.random.default_rng(seed)
    x_e = rng.normal(size=(g.Ne, 4)) if x_e is None else np.asarray(x_e, float)
    p_root = np.zeros(4) if p_root is None else np.asarray(p_root, float)
    hu = hu_extract(g)
    opts = [{"epsrel": epsrel, "epsabs": 0, "limit": 200}] * g.L
    parts = []
    for sigma in sectors(g.L):
        def f(*x, sigma=sigma):
            t = sector_t(sigma, x)
            if t.min() < 1e-300:
                return 0j
            return sector_jacobian(x) * amplitude_eval(g, hu, x_e, p_root, D, t, theta, Omega).integrand
        parts.append(_cquad(f, [[0, 1]] * g.L, opts, f"sector {sigma.order}")[0])
    return complex(sum(parts)), tuple(parts)


# -- topological case bounds -----------------------------------------------------------------

def line_components(g: RibbonGraph, lines) -> list[tuple[int, ...]]:
    parent: dict = {}

    def find(v):
        while parent.setdefault(v, v) != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for l in lines:
        a, b = g.line_vertices(l)
        parent[find(a)] = find(b)
    comps: dict = {}
    for l in sorted(lines):
        comps.setdefault(find(g.line_vertices(l)[0]), []).append(l)
    return [tuple(c) for c in sorted(comps.values())]


@dataclass(frozen=True)
class BPrimeBound:
    """``kind`` is ``'eq'`` when every component is planar regular, else ``'le'``."""

    kind: str
    value: int
    cases: tuple[str, ...]

    def admits(self, b: int) -> bool:
        return b == self.value if self.kind == "eq" else b <= self.value


def b_prime_topological(g: RibbonGraph, lines) -> BPrimeBound:
    """Three-case bound applied per connected component and summed.

    Per component: ``L - (n-1) - 2g`` if g > 0, ``L - n`` if g = 0 and B > 1,
    exactly ``L - (n-1)`` if planar regular.
    """
    total, cases = 0, []
    for comp in line_components(g, lines):
        sl = subgraph_slice(g, comp)
        if sl.g > 0:
            cases.append("genus")
            total += sl.L - (sl.n - 1) - 2 * sl.g
        elif sl.B > 1:
            cases.append("broken")
            total += sl.L - sl.n
        else:
            cases.append("planar-regular")
            total += sl.L - (sl.n - 1)
    kind = "eq" if all(c == "planar-regular" for c in cases) else "le"
    return BPrimeBound(kind, total, tuple(cases))


# -- poles --------------------------------------------------------------------------------------

@dataclass(frozen=True)
class Pole:
    D: Fraction
    slices: tuple[tuple[int, ...], ...]  # inclusion-minimal responsible line sets


def slice_table(g: RibbonGraph, P: HUPolynomial | None = None) -> dict:
    """line subset -> (b', D*) for every nonempty subset."""
    P = power_counting_polynomial(g) if P is None else P
    table = {}
    for r in range(1, g.L + 1):
        for S in itertools.combinations(range(g.L), r):
            b = b_prime_lines(P, S)
            table[S] = (b, Fraction(2 * r, b) if b else None)
    return table


def locate_poles(g: RibbonGraph, P: HUPolynomial | None = None) -> list[Pole]:
    return poles_from_table(slice_table(g, P))


def poles_from_table(table: dict) -> list[Pole]:
    """Group a slice table by D* and keep the inclusion-minimal slices."""
    by_D: dict = {}
    for S, (_, D) in table.items():
        if D is not None:
            by_D.setdefault(D, []).append(S)
    out = []
    for D in sorted(by_D):
        sets = [frozenset(S) for S in by_D[D]]
        minimal = [S for S in by_D[D] if not any(o < frozenset(S) for o in sets)]
        out.append(Pole(D, tuple(sorted(minimal))))
    return out


def first_pole(g: RibbonGraph, P: HUPolynomial | None = None):
    poles = locate_poles(g, P)
    return poles[0].D if poles else None


def divergent_at(g: RibbonGraph, D, P: HUPolynomial | None = None) -> bool:
    p = first_pole(g, P)
    return p is not None and D >= p


# -- subgraphs and quotients -------------------------------------------------------------------

def slice_graph(g: RibbonGraph, lines, root=None) -> RibbonGraph:
    """The slice as a graph: its vertices, its lines, all other corners external."""
    lines = tuple(lines)
    touched = sorted({v for l in lines for v in g.line_vertices(l)})
    verts = [g.vertices[k] for k in touched]
    root = root if root is not None else (g.root if g.root_index in touched else verts[0][0])
    return build_graph(verts, [g.lines[l] for l in lines], None, root)


def boundary_order(g: RibbonGraph, lines, start: str | None = None) -> tuple[str, ...]:
    """External corners of a slice in the order met along its broken face.

    The walk is ``h -> next corner at the vertex of partner(h)``, an outer
    corner being its own partner. With ``start`` (any corner of a touched
    vertex) the cycle begins at the first outer corner reached from it.
    Raises when the corners are not all on one face or ``start`` is not on
    that face.
    """
    lines = tuple(lines)
    inner = {h: p for l in lines for h, p in (g.lines[l], g.lines[l][::-1])}
    touched = {v for l in lines for v in g.line_vertices(l)}
    nxt = {}
    outer = []
    for k in sorted(touched):
        cs = g.vertices[k][1]
        for i, h in enumerate(cs):
            nxt[h] = cs[(i + 1) % 4]
            if h not in inner:
                outer.append(h)
    if not outer:
        raise UnsupportedCase("slice has no external corners")
    first = outer[0]
    if start is not None:
        h, steps = start, 0
        while h not in outer:
            h = nxt[inner[h]]
            steps += 1
            if steps > len(nxt):
                raise UnsupportedCase(f"corner {start!r} is not on the broken face of the slice")
        first = h
    cycle, h = [first], first
    while True:
        h = nxt[inner.get(h, h)]
        if h not in inner:
            if h == first:
                break
            cycle.append(h)
    if sorted(cycle) != sorted(outer):
        raise UnsupportedCase("external corners of the slice lie on several faces")
    return tuple(cycle)


def rooted_off_slice(g: RibbonGraph, lines) -> RibbonGraph:
    """Same graph with the root moved to the first vertex outside the slice."""
    touched = {v for l in lines for v in g.line_vertices(l)}
    if g.root_index not in touched:
        return g
    rest = [k for k in range(g.N) if k not in touched]
    if not rest:
        raise UnsupportedCase("slice covers every vertex; no root left for the quotient")
    return build_graph(g.vertices, g.lines, g.externals, g.vertices[rest[0]][0])


def quotient_graph(g: RibbonGraph, lines, order: Sequence[str] | None = None, name="S") -> RibbonGraph:
    """Contract a four-point slice to one vertex with corners in boundary order.

    The root kernel carries no delta, so its corner labelling matters. When
    the root lies on the slice, the contracted vertex becomes the root and
    its corner 0 is the first outer corner reached from the root's corner 0.
    """
    lines = tuple(lines)
    touched = {v for l in lines for v in g.line_vertices(l)}
    on_slice = g.root_index in touched
    if order is None:
        order = boundary_order(g, lines, g.vertices[g.root_index][1][0] if on_slice else None)
    order = tuple(order)
    if len(order) != 4:
        raise UnsupportedCase(f"slice has {len(order)} external corners; contraction needs four")
    verts = [(name, order)] + [g.vertices[k] for k in range(g.N) if k not in touched]
    rest = [g.lines[l] for l in range(g.L) if l not in lines]
    return build_graph(verts, rest, None, name if on_slice else g.root)


def _line_map(g: RibbonGraph, q: RibbonGraph) -> list[int]:
    """For every line of q, its index in g."""
    pos = {pair: k for k, pair in enumerate(g.lines)}
    return [pos[pair] for pair in q.lines]


# -- factorisation ------------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorizationReport:
    rhos: tuple[float, ...]
    deviations: tuple[float, ...]
    slope: float
    ok: bool
    tolerance: float

    def table(self) -> str:
        rows = [f"{r:.12g} {d:.12g}" for r, d in zip(self.rhos, self.deviations)]
        return "\n".join(["rho deviation"] + rows + [f"slope {self.slope:.12g}"])


def _leading_part(hu: HUPolynomial) -> HUPolynomial:
    low = min(sum(e) for e in hu.t_support())
    return HUPolynomial(hu.L, {k: v for k, v in hu.terms.items() if sum(k[1]) == low}, hu.normalization + " leading")


def factorization_check(g: RibbonGraph, S, rhos=(0.1, 0.05, 0.025, 0.0125), D=3.0, x_e=None, p_root=None,
                        t_point=None, quotient=None, theta=1.0, Omega=0.5, seed=0, target=2.0,
                        tol=0.2) -> FactorizationReport:
    """Relative deviation between ``exp(-HV/HU)/HU^(D/2)`` with the slice's
    sector variables scaled by rho (its t by rho^2) and the factorised form
    ``HU_S^lead^(-D/2) exp(-HV_q/HU_q)/HU_q^(D/2)`` of the quotient q.

    If the root's corner 0 is off the broken face of the slice, the graph is
    re-rooted off the slice first. The
    slope of log deviation against log rho is fitted on the last four points.
    """
    S = tuple(sorted(S))
    if quotient is None:
        try:
            quotient = quotient_graph(g, S)
        except UnsupportedCase:
            g = rooted_off_slice(g, S)
    rng = np.random.default_rng(seed)
    x_e = rng.normal(size=(g.Ne, 4)) if x_e is None else np.asarray(x_e, float)
    p_root = np.zeros(4) if p_root is None else np.asarray(p_root, float)
    t0 = rng.uniform(0.2, 0.8, g.L) if t_point is None else np.asarray(t_point, float)
    sg = slice_graph(g, S)
    q = quotient_graph(g, S) if quotient is None else quotient
    hu_g, hu_s, hu_q = hu_extract(g), _leading_part(hu_extract(sg)), hu_extract(q)
    qmap = _line_map(g, q)
    smap = [S.index(k) for k in _line_map(g, sg)]
    ext_q = {h: k for k, h in enumerate(g.externals)}
    xq = np.array([x_e[ext_q[h]] for h in q.externals]).reshape(q.Ne, 4)
    s = 1 / Omega
    tq = t0[qmap]
    rhs_q = np.exp(-hv_over_hu(q, xq, p_root, tq, theta, Omega)) / hu_q.evaluate(tq, s) ** (D / 2)
    devs = []
    for rho in rhos:
        t = t0.copy()
        t[list(S)] *= rho ** 2
        lhs = np.exp(-hv_over_hu(g, x_e, p_root, t, theta, Omega)) / hu_g.evaluate(t, s) ** (D / 2)
        ts = np.array([t[S[k]] for k in smap])
        rhs = rhs_q / hu_s.evaluate(ts, s) ** (D / 2)
        devs.append(abs(lhs / rhs - 1))
    lr, ld = np.log(rhos[-4:]), np.log(np.maximum(devs[-4:], 1e-300))
    slope = float(np.polyfit(lr, ld, 1)[0])
    ok = abs(slope - target) <= tol and all(a > b for a, b in zip(devs, devs[1:]))
    return FactorizationReport(tuple(rhos), tuple(devs), slope, ok, tol)


# -- single-pole subtraction --------------------------------------------------------------------

RHO_FLOOR = 1e-7  # below this the slice is replaced by its rho -> 0 limit; the correction is O(rho^2)


def _cquad(func, ranges, opts, what):
    """Complex nquad: real and imaginary parts separately."""
    out, err = [], 0.0
    for part in (np.real, np.imag):
        with np.errstate(over="raise", invalid="raise", divide="raise", under="ignore"), warnings.catch_warnings():
            # accuracy is judged by the two-route comparison, not by QUADPACK's estimate
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            v, e = integrate.nquad(lambda *a: float(part(func(*a))), ranges, opts=opts)
        out.append(v)
        err = max(err, e)
    if not np.isfinite(out).all():
        raise QuadratureFailure(f"{what}: non-finite result")
    return complex(out[0], out[1]), err


def laurent_fit(Ds, values, pole=4.0):
    """Least squares ``A(D) = c_-1/(D - pole) + c_0 + c_1 (D - pole)`` on the last four points."""
    Ds = np.asarray(Ds[-4:], float)
    vals = np.asarray(values[-4:], complex)
    X = np.column_stack([1 / (Ds - pole), np.ones_like(Ds), Ds - pole])
    coef, *_ = np.linalg.lstsq(X.astype(complex), vals, rcond=None)
    return complex(coef[0]), complex(coef[1])


@dataclass(frozen=True)
class SubtractionReport:
    slice: tuple[int, ...] | None
    Ds: tuple[float, ...]
    values: tuple[complex, ...]  # A(D) on the sequence D -> 4-
    c_minus1: complex  # fitted residue of 1/(D - 4)
    c0: complex  # fitted finite part, the returned value
    subtracted: complex  # integral of integrand minus counterterm at D = 4 (no slice: A(4))
    counter_finite: complex  # finite part of the counterterm integral
    counter_residue: complex
    sector_residues: tuple[complex, ...]  # residue contributed by each sector of the slice
    tolerance: float

    @property
    def predicted_c0(self) -> complex:
        return self.subtracted + self.counter_finite

    @property
    def ok(self) -> bool:
        scale = abs(self.c0)
        res_scale = abs(self.c_minus1) if self.slice is not None else scale
        return (abs(self.predicted_c0 - self.c0) <= self.tolerance * scale
                and abs(self.counter_residue - self.c_minus1) <= self.tolerance * res_scale)

    def table(self) -> str:
        rows = [f"D {d:.12g} A {v.real:.12g} {v.imag:+.12g}i" for d, v in zip(self.Ds, self.values)]
        rows.append(f"c_-1 {self.c_minus1.real:.12g} {self.c_minus1.imag:+.12g}i")
        rows.append(f"c_0 {self.c0.real:.12g} {self.c0.imag:+.12g}i")
        p = self.predicted_c0
        rows.append(f"subtracted+finite {p.real:.12g} {p.imag:+.12g}i")
        if self.slice is not None:
            rows += [f"sector {k} residue {r.real:.12g} {r.imag:+.12g}i" for k, r in enumerate(self.sector_residues)]
        return "\n".join(rows)


def _single_pole_slice(g: RibbonGraph, S=None):
    poles = [p for p in locate_poles(g) if p.D <= 4]
    if not poles:
        if S is not None:
            raise UnsupportedCase("graph has no pole at or below D = 4")
        return None
    if len(poles) > 1 or poles[0].D != 4 or len(poles[0].slices) != 1:
        raise UnsupportedCase("more than one divergent slice family at or below D = 4")
    found = poles[0].slices[0]
    if S is not None and tuple(sorted(S)) != found:
        raise UnsupportedCase(f"divergent slice is {found}, not {tuple(sorted(S))}")
    return found


def taylor_subtract(g: RibbonGraph, S=None, Ds=(3.99, 3.995, 3.9975, 3.99875), x_e=None, p_root=None, theta=1.0,
                    Omega=0.5, seed=0, epsrel=1e-10, tol=1e-3) -> SubtractionReport:
    """Finite part at D = 4 of an amplitude with at most one divergent slice.

    A(D) is integrated on ``Ds`` and fitted by ``c_-1/(D-4) + c_0 + c_1(D-4)``.
    Independently the integrand minus its factorised leading part (the slice
    at its leading order times the quotient graph) is integrated at D = 4;
    adding the finite part of the counterterm integral must give ``c_0``.

    Both routes work in the sector variables of the slice, where its lines
    have ``t = rho^2 tau`` and the integrand behaves like
    ``rho^(2L_S - 1 - D b')``; route one integrates that endpoint with an
    algebraic quadrature weight.
    """
    S = _single_pole_slice(g, S)
    rng = np.random.default_rng(seed)
    x_e = rng.normal(size=(g.Ne, 4)) if x_e is None else np.asarray(x_e, float)
    p_root = np.zeros(4) if p_root is None else np.asarray(p_root, float)
    hu = hu_extract(g)
    opts = {"epsrel": epsrel, "epsabs": 0, "limit": 200}
    if g.L > 3:
        raise UnsupportedCase("cube quadrature is limited to L <= 3")

    if S is None:
        vals = [amplitude_quadrature(g, hu, x_e, p_root, D, theta, Omega, rtol=epsrel)[0] for D in Ds]
        c_1, c0 = laurent_fit(Ds, vals)
        a4 = amplitude_quadrature(g, hu, x_e, p_root, 4.0, theta, Omega, rtol=epsrel)[0]
        return SubtractionReport(None, tuple(Ds), tuple(vals), c_1, c0, a4, 0j, 0j, (), tol)

    if g.root_index in {v for l in S for v in g.line_vertices(l)}:
        try:
            q = quotient_graph(g, S)
        except UnsupportedCase:
            g = rooted_off_slice(g, S)
            q = quotient_graph(g, S)
    else:
        q = quotient_graph(g, S)
    hu = hu_extract(g)
    hs = _leading_part(hu_extract(slice_graph(g, S)))
    smap = [S.index(k) for k in _line_map(g, slice_graph(g, S))]
    hq = hu_extract(q)
    qmap = _line_map(g, q)
    R = [l for l in range(g.L) if l not in S]
    ext = {h: k for k, h in enumerate(g.externals)}
    xq = np.array([x_e[ext[h]] for h in q.externals]).reshape(q.Ne, 4)
    LS, b = len(S), b_prime_lines(power_counting_polynomial(g), S)
    if {sum(e) for e in hs.t_support()} != {b}:
        raise UnsupportedCase("leading part of the slice is not homogeneous of degree b'")
    s = 1 / Omega
    wt = parametric_omega_tilde(theta, Omega)
    orders = list(itertools.permutations(range(LS)))

    def pref(D):
        return (wt / 2 ** (D / 2 - 1)) ** g.L

    def hs_at(tS):
        return hs.evaluate(np.array([tS[k] for k in smap]), s)

    def tau(order, xs):
        """t of the slice lines at rho = 1; xs are the inner sector variables."""
        full = list(xs) + [1.0]
        tS = np.empty(LS)
        for pos, k in enumerate(order):
            tS[k] = np.prod(np.square(full[pos:]))
        return tS

    def inner_jac(xs):
        return float(np.prod([2 * x ** (2 * j + 1) for j, x in enumerate(xs)])) * 2

    def quotient_factor(tR, D):
        tq = np.array([tR[R.index(l)] for l in qmap]) if qmap else np.zeros(0)
        hv = hv_over_hu(q, xq, p_root, tq, theta, Omega)
        return np.exp(-hv) / hq.evaluate(tq, s) ** (D / 2) * np.prod((1 - np.asarray(tR) ** 2) ** (D / 2 - 1))

    def full_t(order, xs, rho, tR):
        t = np.empty(g.L)
        t[list(S)] = rho ** 2 * tau(order, xs)
        t[R] = tR
        return t

    def integrand(t, D):
        return amplitude_eval(g, hu, x_e, p_root, D, t, theta, Omega).integrand

    def counterterm(tS, tR, D):
        return pref(D) * hs_at(tS) ** (-D / 2) * quotient_factor(tR, D)

    nin, nR = LS - 1, len(R)
    unit = [[0, 1]] * (nin + nR)

    # route one: A(D), the rho endpoint carried by the weight rho^alpha
    vals = []
    for D in Ds:
        alpha = 2 * LS - 1 - D * b
        total = 0j
        for order in orders:
            def f(*a, order=order, D=D):
                xs, tR, rho = a[:nin], a[nin:nin + nR], a[-1]
                if rho < RHO_FLOOR:
                    return inner_jac(xs) * counterterm(tau(order, xs), tR, D)
                return inner_jac(xs) * rho ** (D * b) * integrand(full_t(order, xs, rho, tR), D)
            o = [opts] * (nin + nR) + [dict(opts, weight="alg", wvar=(alpha, 0.0))]
            total += _cquad(f, unit + [[0, 1]], o, f"A({D})")[0]
        vals.append(total)
    c_1, c0 = laurent_fit(Ds, vals)

    # route two: counterterm in closed sector form, subtracted integrand at D = 4
    def J(order, D, weight=None):
        if nin == 0:
            h = hs_at(tau(order, ()))
            return 2 * h ** (-D / 2) * (1 if weight is None else weight(h))
        def f(*xs):
            h = hs_at(tau(order, xs))
            return inner_jac(xs) * h ** (-D / 2) * (1 if weight is None else weight(h))
        return integrate.nquad(f, [[0, 1]] * nin, opts=[opts] * nin)[0]

    def Aq(D, log_weight=False):
        if nR == 0:
            v = quotient_factor([], D)
            return 0j if log_weight else v
        def f(*tR):
            tq = np.array([tR[R.index(l)] for l in qmap]) if qmap else np.zeros(0)
            v = quotient_factor(tR, D)
            if log_weight:
                v *= -0.5 * np.log(hq.evaluate(tq, s)) + 0.5 * np.sum(np.log(1 - np.square(tR)))
            return v
        return _cquad(f, [[0, 1]] * nR, [opts] * nR, "quotient")[0]

    Js = [J(o, 4.0) for o in orders]
    dJs = [J(o, 4.0, lambda h: -0.5 * np.log(h)) for o in orders]
    aq, daq = Aq(4.0), Aq(4.0, True)
    dlogpref = -g.L * np.log(2) / 2
    # counterterm integral = pref(D) * sum_J(D) * Aq(D) * 2/(2L_S - D b'), with 2L_S = 4 b'
    h0 = -pref(4.0) * sum(Js) * aq / b
    dh = -pref(4.0) / b * (dlogpref * sum(Js) * aq + sum(dJs) * aq + sum(Js) * daq)
    sector_res = tuple(-pref(4.0) * Jv * aq / b for Jv in Js)

    sub = 0j
    for order in orders:
        def f(*a, order=order):
            xs, tR, rho = a[:nin], a[nin:nin + nR], a[-1]
            if rho < RHO_FLOOR:
                return 0.0
            t = full_t(order, xs, rho, tR)
            ct = counterterm(t[list(S)], tR, 4.0)
            return inner_jac(xs) * rho ** (2 * LS - 1) * (integrand(t, 4.0) - ct)
        sub += _cquad(f, unit + [[0, 1]], [opts] * (nin + nR + 1), "subtracted")[0]
    return SubtractionReport(S, tuple(Ds), tuple(vals), c_1, c0, sub, dh, h0, sector_res, tol)
