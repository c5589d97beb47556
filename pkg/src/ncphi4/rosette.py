"""Direct-space oscillation bookkeeping: vertex kernels, Filk reduction,
planar vertex contributions and the short-variable (Moyality) limit.

A :class:`PhaseForm` stands for

    delta(sum_a d_a X_a) * exp(i sum_{a<b} C_ab X_a theta^-1 X_b)

over named position variables ``X_a``. Coefficients are exact fractions.

Conventions
-----------
Variables of a tree line ``l`` are ``u[l] = x_start - x_end`` and
``v[l] = x_start + x_end``; loop lines use ``w[l]`` for the long variable.
Phases are normalised like the four-point vertex kernel (coefficient
``2 (-1)^(i+j+1)`` between corners ``i < j``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import sympy as sp

from .ribbon import RibbonGraph, is_spanning_tree, topology


class ReductionError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseForm:
    names: tuple[str, ...]
    matrix: tuple[tuple[Fraction, ...], ...]
    delta: tuple[int, ...]
    eps: tuple[tuple[str, int], ...] = ()
    orient: tuple[tuple[int, str, str], ...] = ()

    def __post_init__(self):
        n = len(self.names)
        assert len(set(self.names)) == n, "variable names must be unique"
        for a in range(n):
            for b in range(n):
                assert self.matrix[a][b] == -self.matrix[b][a], "phase matrix not antisymmetric"
        assert all(c in (-1, 0, 1) for c in self.delta)

    @property
    def index(self) -> dict[str, int]:
        return {n: k for k, n in enumerate(self.names)}

    def entry(self, a: str, b: str) -> Fraction:
        idx = self.index
        return self.matrix[idx[a]][idx[b]]

    def delta_dict(self) -> dict[str, int]:
        return {n: c for n, c in zip(self.names, self.delta) if c}

    def nonzero(self) -> dict[tuple[str, str], Fraction]:
        """Upper-triangle entries, keyed by name pairs in basis order."""
        out = {}
        for a in range(len(self.names)):
            for b in range(a + 1, len(self.names)):
                if self.matrix[a][b]:
                    out[(self.names[a], self.names[b])] = self.matrix[a][b]
        return out

    def restrict(self, keep) -> "PhaseForm":
        keep = [n for n in self.names if n in set(keep)]
        idx = self.index
        mat = tuple(tuple(self.matrix[idx[a]][idx[b]] for b in keep) for a in keep)
        return PhaseForm(tuple(keep), mat, tuple(self.delta[idx[a]] for a in keep), self.eps, self.orient)

    def table(self) -> str:
        """Exact-rational text table: delta line then upper-triangle entries."""
        rows = ["delta: " + " ".join(f"{c:+d}*{n}" for n, c in self.delta_dict().items())]
        for (a, b), c in self.nonzero().items():
            rows.append(f"{a} {b} {c}")
        return "\n".join(rows)


class _Builder:
    def __init__(self, names):
        self.names = list(names)
        self.idx = {n: k for k, n in enumerate(self.names)}
        n = len(self.names)
        self.m = [[Fraction(0)] * n for _ in range(n)]
        self.d = [0] * n
        self.eps = {}
        self.orient = []

    def add(self, a, b, c):
        i, j = self.idx[a], self.idx[b]
        self.m[i][j] += c
        self.m[j][i] -= c

    def form(self) -> PhaseForm:
        return PhaseForm(tuple(self.names), tuple(tuple(r) for r in self.m), tuple(self.d),
                         tuple(sorted(self.eps.items())), tuple(sorted(self.orient)))


def moyal_vertex_form(corners) -> PhaseForm:
    """n-point Moyal kernel: delta(x1 - x2 + ...) exp(2i sum_{i<j} (-1)^(i+j+1) x_i th x_j).

    Repeated names are merged, so identified corners cancel in the phase.
    """
    names = list(dict.fromkeys(corners))
    b = _Builder(names)
    for i, x in enumerate(corners):
        b.d[b.idx[x]] += (-1) ** i
        for j in range(i + 1, len(corners)):
            if corners[j] != x:
                b.add(x, corners[j], 2 * (-1) ** (i + j + 1))
    b.d = [max(-1, min(1, c)) for c in b.d] if all(abs(c) <= 1 for c in b.d) else [0] * len(names)
    return b.form()


def vertex_factor(corners) -> PhaseForm:
    if len(corners) != 4:
        raise ReductionError(f"vertex has {len(corners)} corners, expected 4")
    return moyal_vertex_form(list(corners))


# -- short / long variables ---------------------------------------------------

@dataclass(frozen=True)
class ShortLong:
    """Per line: corner coefficients of u and v (each scaled by 1/sqrt(2)).

    ``u[l]`` maps half-edge -> sign; ``v[l]`` likewise with all signs +1.
    For lines joining two corners of equal parity the sign of the second
    endpoint is flipped so the change of variables stays invertible.
    """

    u: tuple[dict, ...]
    v: tuple[dict, ...]

    def to_uv(self, positions: dict) -> list[tuple[float, float]]:
        out = []
        for cu, cv in zip(self.u, self.v):
            u = sum(c * positions[h] for h, c in cu.items()) / math.sqrt(2)
            v = sum(c * positions[h] for h, c in cv.items()) / math.sqrt(2)
            out.append((u, v))
        return out

    def endpoints(self, l: int, u: float, v: float) -> dict:
        (a, ea), (b, eb) = self.u[l].items()
        return {a: (v + ea * u) / math.sqrt(2), b: (v + eb * u) / math.sqrt(2)}


def short_long_change(g: RibbonGraph) -> ShortLong:
    us, vs = [], []
    for a, b in g.lines:
        ea = (-1) ** g.corner[a][1]
        eb = (-1) ** g.corner[b][1]
        if eb == ea:
            eb = -ea
        us.append({a: ea, b: eb})
        vs.append({a: 1, b: 1})
    return ShortLong(tuple(us), tuple(vs))


# -- rosette combinatorics -------------------------------------------------------

@dataclass(frozen=True)
class Rosette:
    """Contour of a spanning tree, read from corner 1 of the root.

    ``sequence`` lists every corner in contour order. ``s`` lists the
    non-tree corners. ``tree`` maps a tree line to ``(p, q, start)``:
    parent-side corner, child-side corner, and the corner ``u`` starts at.
    """

    sequence: tuple[str, ...]
    s: tuple[str, ...]
    tree: dict
    eps: dict
    position: dict


def _rosette(g: RibbonGraph, tree) -> Rosette:
    tree = tuple(sorted(tree))
    edges = [g.line_vertices(l) for l in tree]
    if any(a == b for a, b in edges):
        raise ReductionError("tree contains a loop line")
    if not is_spanning_tree(g.N, edges):
        raise ReductionError("lines do not form a spanning tree")
    tl = {h for l in tree for h in g.lines[l]}
    seq: list[str] = []
    parent_side: dict[int, tuple[str, str]] = {}

    def visit(vk, entry):
        cs = g.vertices[vk][1]
        i0 = 0 if entry is None else (cs.index(entry) + 1) % 4
        for k in range(4 if entry is None else 3):
            h = cs[(i0 + k) % 4]
            seq.append(h)
            if h in tl:
                o = g.partner[h]
                parent_side[g.line_of[h]] = (h, o)
                visit(g.corner[o][0], o)
        if entry is not None:
            seq.append(entry)

    visit(g.root_index, None)
    pos = {h: k for k, h in enumerate(seq)}
    s = tuple(h for h in seq if h not in tl)
    info, eps = {}, {}
    for l in tree:
        p, q = parent_side[l]
        m = sum(1 for h in s if pos[h] < pos[p])
        start = p if m % 2 == 0 else q
        info[l] = (p, q, start)
        eps[l] = 1 if start == p else -1
    return Rosette(tuple(seq), s, info, eps, pos)


def filk_reduce(g: RibbonGraph, tree) -> PhaseForm:
    """Rosette phase after contracting ``tree`` (first Filk reduction).

    Variables: non-tree corners ``s_1..s_r`` in rosette order, then
    ``u[l]``, ``v[l]`` per tree line. Tree lines are ordered by the contour
    position of their child-side corner.
    """
    ros = _rosette(g, tree)
    tree = sorted(ros.tree)
    names = list(ros.s) + [f"u[{l}]" for l in tree] + [f"v[{l}]" for l in tree]
    b = _Builder(names)
    close = {l: ros.position[ros.tree[l][1]] for l in tree}
    for i, si in enumerate(ros.s, start=1):
        b.d[b.idx[si]] = (-1) ** (i + 1)
        for j in range(i + 1, len(ros.s) + 1):
            b.add(si, ros.s[j - 1], 2 * (-1) ** (i + j + 1))
        for l in tree:
            if ros.position[si] < close[l]:
                b.add(si, f"u[{l}]", 2 * (-1) ** i)
            else:
                b.add(f"u[{l}]", si, 2 * (-1) ** i)
    for l in tree:
        b.d[b.idx[f"u[{l}]"]] = 1
        b.add(f"u[{l}]", f"v[{l}]", -ros.eps[l])
        b.eps[f"u[{l}]"] = ros.eps[l]
        p, q, start = ros.tree[l]
        b.orient.append((l, start, q if start == p else p))
        for l2 in tree:
            if close[l] < close[l2]:
                b.add(f"u[{l}]", f"u[{l2}]", -2)
    return b.form()


def planar_vertex_contribution(g: RibbonGraph, tree) -> PhaseForm:
    """Vertex contribution of a planar graph with one broken face.

    Variables: externals ``x_1..x_Ne`` (named by half-edge) in rosette
    order starting on the broken face, ``u[l]`` for tree and loop lines,
    ``v[l]`` for tree lines, ``w[l]`` for loop lines.
    """
    top = topology(g)
    if top.g != 0 or top.B != 1 or g.Ne == 0:
        raise ReductionError(f"graph is not planar regular (g={top.g}, B={top.B})")
    ros = _rosette(g, tree)
    tree_lines = sorted(ros.tree)
    # hat-signed atoms in contour order: s corners and tree u's (at q)
    atoms = []
    for i, h in enumerate(ros.s, start=1):
        atoms.append((ros.position[h], "s", h, (-1) ** (i + 1)))
    for l in tree_lines:
        atoms.append((ros.position[ros.tree[l][1]], "u", l, 1))
    atoms.sort()
    ext = set(g.externals)
    # rotate so the sequence starts at an external corner of positive sign
    start = next(k for k, a in enumerate(atoms) if a[1] == "s" and a[2] in ext and a[3] == 1)
    atoms = atoms[start:] + atoms[:start]
    at = {(a[1], a[2]): k for k, a in enumerate(atoms)}

    externals = [a[2] for a in atoms if a[1] == "s" and a[2] in ext]
    loops = sorted({g.line_of[a[2]] for a in atoms if a[1] == "s" and a[2] not in ext})
    # spans: (first index, last index) in the rotated atom list
    span, sigma, loop_ends = {}, {}, {}
    for l in loops:
        h1, h2 = sorted(g.lines[l], key=lambda h: at[("s", h)])
        i1, i2 = at[("s", h1)], at[("s", h2)]
        if atoms[i1][3] == atoms[i2][3]:
            raise ReductionError(f"loop line {l} joins rosette corners of equal sign")
        span[l] = (i1, i2)
        sigma[l] = atoms[i1][3]
        loop_ends[l] = (h1, h2)
    for l in tree_lines:
        k = at[("u", l)]
        span[l] = (k, k)
    for l in loops:
        a, c = span[l]
        for h in externals:
            if a < at[("s", h)] < c:
                raise ReductionError("external corner nested inside a loop line")
        for l2 in loops:
            a2, c2 = span[l2]
            if a < a2 < c < c2:
                raise ReductionError("crossing loop lines")

    lines = sorted(tree_lines + loops)
    names = externals + [f"u[{l}]" for l in lines] + [f"v[{l}]" for l in tree_lines] + [f"w[{l}]" for l in loops]
    b = _Builder(names)

    def inside(inner, outer):
        a, c = span[outer]
        a2, c2 = span[inner]
        return outer in sigma and a < a2 and c2 < c

    for i, xi in enumerate(externals, start=1):
        b.d[b.idx[xi]] = (-1) ** (i + 1)
        for j in range(i + 1, len(externals) + 1):
            b.add(xi, externals[j - 1], 2 * (-1) ** (i + j + 1))
        k = at[("s", xi)]
        for l in lines:
            if span[l][0] < k:
                b.add(f"u[{l}]", xi, 2 * (-1) ** i)
            else:
                b.add(xi, f"u[{l}]", 2 * (-1) ** i)
    for l in lines:
        b.d[b.idx[f"u[{l}]"]] = 1
        for l2 in lines:
            if l2 == l:
                continue
            if inside(l2, l):
                b.add(f"u[{l2}]", f"w[{l}]", -2 * (-sigma[l]))
            elif not inside(l, l2) and span[l][1] < span[l2][0]:
                b.add(f"u[{l}]", f"u[{l2}]", -2)
    for l in tree_lines:
        b.add(f"u[{l}]", f"v[{l}]", -ros.eps[l])
        b.eps[f"u[{l}]"] = ros.eps[l]
        p, q, start = ros.tree[l]
        b.orient.append((l, start, q if start == p else p))
    for l in loops:
        b.add(f"u[{l}]", f"w[{l}]", sigma[l])
        b.eps[f"u[{l}]"] = -sigma[l]
        first, second = loop_ends[l]
        b.orient.append((l, first, second) if sigma[l] == 1 else (l, second, first))
    return b.form()


def moyality_limit(p: PhaseForm) -> PhaseForm:
    """Set every short variable ``u`` to zero and drop variables left uncoupled."""
    keep = [n for n in p.names if not n.startswith("u[")]
    q = p.restrict(keep)
    idx = q.index
    live = [n for n in q.names
            if q.delta[idx[n]] or any(q.matrix[idx[n]][k] for k in range(len(q.names)))]
    out = q.restrict(live)
    return PhaseForm(out.names, out.matrix, out.delta)


# -- elimination oracle -------------------------------------------------------------

def corner_substitution(g: RibbonGraph, form: PhaseForm) -> dict:
    """Express every corner of ``g`` linearly in the variables of ``form``.

    Oriented lines give ``x_start = (long + u)/2`` and ``x_end = (long - u)/2``;
    other corners are variables themselves.
    """
    half = Fraction(1, 2)
    sub = {}
    names = set(form.names)
    for l, start, end in form.orient:
        long = f"v[{l}]" if f"v[{l}]" in names else f"w[{l}]"
        sub[start] = {long: half, f"u[{l}]": half}
        sub[end] = {long: half, f"u[{l}]": -half}
    for _, cs in g.vertices:
        for h in cs:
            if h not in sub:
                if h not in names:
                    raise ReductionError(f"corner {h!r} has no variable in the form")
                sub[h] = {h: Fraction(1)}
    return sub


def vertex_product(g: RibbonGraph) -> PhaseForm:
    """Product of all vertex kernels over corner variables (one delta per vertex
    is not representable, so ``delta`` here is the root kernel's)."""
    names = [h for _, cs in g.vertices for h in cs]
    b = _Builder(names)
    for k, (_, cs) in enumerate(g.vertices):
        f = vertex_factor(cs)
        for (x, y), c in f.nonzero().items():
            b.add(x, y, c)
        if k == g.root_index:
            for x, c in f.delta_dict().items():
                b.d[b.idx[x]] = c
    return b.form()


def _vertex_deltas(g: RibbonGraph):
    return [vertex_factor(cs).delta_dict() for _, cs in g.vertices]


def oracle_check(g: RibbonGraph, form: PhaseForm) -> bool:
    """Compare ``form`` with the product of vertex kernels, exactly.

    Corners are rewritten in the variables of ``form``; both phases are
    restricted to the joint support of all vertex deltas and compared as
    rational matrices. The delta of ``form`` must lie in the span of the
    vertex deltas and together with them cut out the same support.
    """
    sub = corner_substitution(g, form)
    names = list(form.names)
    col = {n: k for k, n in enumerate(names)}
    n = len(names)

    def row(lin):
        r = [sp.Rational(0)] * n
        for h, c in lin.items():
            for var, a in sub[h].items():
                r[col[var]] += sp.Rational(c.numerator, c.denominator) * sp.Rational(a.numerator, a.denominator)
        return r

    corners = [h for _, cs in g.vertices for h in cs]
    T = sp.Matrix([row({h: Fraction(1)}) for h in corners])
    prod = vertex_product(g)
    C = sp.Matrix(len(corners), len(corners), lambda a, b: sp.Rational(
        prod.matrix[a][b].numerator, prod.matrix[a][b].denominator))
    C_red = T.T * C * T
    D = sp.Matrix([row(d) for d in _vertex_deltas(g)])
    own = sp.Matrix([[sp.Rational(c) for c in form.delta]])
    if D.rank() != D.col_join(own).rank():
        return False
    if own.rank() == 0:
        return False
    K = D.nullspace()
    if not K:
        return True
    K = sp.Matrix.hstack(*K)
    F = sp.Matrix(n, n, lambda a, b: sp.Rational(form.matrix[a][b].numerator, form.matrix[a][b].denominator))
    return (K.T * (C_red - F) * K).is_zero_matrix
