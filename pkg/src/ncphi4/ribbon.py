"""Ribbon graphs of the quartic Moyal model.

A graph is a combinatorial map: every vertex carries four half-edges in
cyclic order, internal lines pair half-edges, and unpaired half-edges are
external legs. Faces are traced on the amputated map; an external leg
marks the face running through the corner it sits in as *broken*.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property


class GraphError(ValueError):
    """Raised for malformed graph descriptions."""


@dataclass(frozen=True)
class RibbonGraph:
    """Validated ribbon graph.

    ``vertices`` maps a vertex id to its four half-edge ids in cyclic
    order. ``lines`` holds sorted half-edge pairs, itself sorted, so the
    line index used everywhere downstream is the position in this tuple.
    """

    vertices: tuple[tuple[str, tuple[str, str, str, str]], ...]
    lines: tuple[tuple[str, str], ...]
    externals: tuple[str, ...]
    root: str

    # -- derived lookups -------------------------------------------------
    @cached_property
    def vertex_ids(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.vertices)

    @cached_property
    def vertex_index(self) -> dict[str, int]:
        return {v: k for k, v in enumerate(self.vertex_ids)}

    @cached_property
    def corner(self) -> dict[str, tuple[int, int]]:
        """half-edge -> (vertex index, corner index 0..3)."""
        return {h: (k, i) for k, (_, cs) in enumerate(self.vertices) for i, h in enumerate(cs)}

    @cached_property
    def partner(self) -> dict[str, str]:
        out = {}
        for a, b in self.lines:
            out[a] = b
            out[b] = a
        return out

    @cached_property
    def line_of(self) -> dict[str, int]:
        return {h: l for l, pair in enumerate(self.lines) for h in pair}

    @property
    def N(self) -> int:
        return len(self.vertices)

    @property
    def L(self) -> int:
        return len(self.lines)

    @property
    def Ne(self) -> int:
        return len(self.externals)

    @cached_property
    def root_index(self) -> int:
        return self.vertex_index[self.root]

    def line_vertices(self, l: int) -> tuple[int, int]:
        a, b = self.lines[l]
        return self.corner[a][0], self.corner[b][0]

    def is_orientable_line(self, l: int) -> bool:
        """True when the line joins an odd corner to an even corner."""
        a, b = self.lines[l]
        return (self.corner[a][1] + self.corner[b][1]) % 2 == 1

    def to_dict(self) -> dict:
        return {
            "vertices": {v: list(cs) for v, cs in self.vertices},
            "lines": [list(p) for p in self.lines],
            "externals": list(self.externals),
            "root": self.root,
        }


def build_graph(vertices, lines, externals=None, root=None) -> RibbonGraph:
    """Validate a description and return a :class:`RibbonGraph`.

    ``vertices`` is a mapping (or sequence of pairs) vertex id -> four
    half-edge ids. ``externals`` defaults to every unpaired half-edge; when
    given explicitly it must match that set exactly.
    """
    items = list(vertices.items()) if hasattr(vertices, "items") else list(vertices)
    if not items:
        raise GraphError("graph has no vertices")
    seen: dict[str, str] = {}
    verts = []
    for vid, corners in items:
        corners = tuple(str(h) for h in corners)
        if len(corners) != 4:
            raise GraphError(f"vertex {vid!r} has {len(corners)} corners, expected 4")
        for h in corners:
            if h in seen:
                raise GraphError(f"duplicate half-edge {h!r} (vertices {seen[h]!r}, {vid!r})")
            seen[h] = str(vid)
        verts.append((str(vid), corners))
    if len({v for v, _ in verts}) != len(verts):
        raise GraphError("duplicate vertex id")

    paired: set[str] = set()
    norm_lines = []
    for pair in lines:
        pair = tuple(str(h) for h in pair)
        if len(pair) != 2 or pair[0] == pair[1]:
            raise GraphError(f"line {pair!r} must join two distinct half-edges")
        for h in pair:
            if h not in seen:
                raise GraphError(f"line uses unknown half-edge {h!r}")
            if h in paired:
                raise GraphError(f"duplicate half-edge {h!r} in lines")
            paired.add(h)
        norm_lines.append(tuple(sorted(pair)))
    norm_lines.sort()

    free = sorted(set(seen) - paired)
    if externals is None:
        ext = free
    else:
        ext = sorted(str(h) for h in externals)
        if len(set(ext)) != len(ext):
            raise GraphError("duplicate external half-edge")
        both = sorted(set(ext) & paired)
        if both:
            raise GraphError(f"half-edge in line and external: {both[0]!r}")
        unknown = sorted(set(ext) - set(seen))
        if unknown:
            raise GraphError(f"external uses unknown half-edge {unknown[0]!r}")
        if ext != free:
            missing = sorted(set(free) - set(ext))
            raise GraphError(f"half-edge neither paired nor external: {missing[0]!r}")

    if root is None:
        raise GraphError("missing root")
    root = str(root)
    if root not in {v for v, _ in verts}:
        raise GraphError(f"root {root!r} is not a vertex")

    g = RibbonGraph(tuple(verts), tuple(norm_lines), tuple(ext), root)
    if _components(g.N, [g.line_vertices(l) for l in range(g.L)]) != 1:
        raise GraphError("disconnected graph")
    assert 4 * g.N - g.Ne == 2 * g.L
    return g


# -- union find -------------------------------------------------------------

def _components(n: int, edges) -> int:
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    count = n
    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            count -= 1
    return count


def is_spanning_tree(n: int, edges) -> bool:
    edges = list(edges)
    return len(edges) == n - 1 and _components(n, edges) == 1


# -- face tracing -------------------------------------------------------------

@dataclass(frozen=True)
class FaceTrace:
    faces: tuple[tuple[str, ...], ...]
    broken: tuple[bool, ...]
    face_of: dict = field(compare=False)


def trace_faces(g: RibbonGraph, line_ids) -> FaceTrace:
    """Trace the faces of the sub-map formed by ``line_ids``.

    Every half-edge of a touched vertex that is not in the sub-map is
    treated as an external corner and marks the face through that corner
    as broken.
    """
    inner = {h for l in line_ids for h in g.lines[l]}
    succ: dict[str, str] = {}
    ext_corner_face_src: list[str] = []
    for _, cs in g.vertices:
        own = [h for h in cs if h in inner]
        if not own:
            continue
        for k, h in enumerate(own):
            succ[h] = own[(k + 1) % len(own)]
        # external half-edge sits in corner (pred, succ[pred]); that corner
        # belongs to the face containing succ[pred]
        for i, h in enumerate(cs):
            if h in inner:
                continue
            j = i
            while cs[j % 4] not in inner:
                j -= 1
            ext_corner_face_src.append(succ[cs[j % 4]])

    face_of: dict[str, int] = {}
    faces = []
    for start in sorted(inner):
        if start in face_of:
            continue
        cycle = []
        h = start
        while h not in face_of:
            face_of[h] = len(faces)
            cycle.append(h)
            h = succ[g.partner[h]]
        faces.append(tuple(cycle))
    broken = [False] * len(faces)
    for h in ext_corner_face_src:
        broken[face_of[h]] = True
    return FaceTrace(tuple(faces), tuple(broken), face_of)


# -- reports ------------------------------------------------------------------

@dataclass(frozen=True)
class TopologyReport:
    N: int
    L: int
    Ne: int
    F: int
    B: int
    g: int
    omega: Fraction

    def to_dict(self) -> dict:
        return {"N": self.N, "L": self.L, "Ne": self.Ne, "F": self.F, "B": self.B,
                "g": self.g, "omega": str(self.omega)}


def superficial_degree(Ne: int, g: int, B: int) -> Fraction:
    return (2 - Fraction(Ne, 2)) - 2 * (2 * g + B - 1)


def topology(g: RibbonGraph) -> TopologyReport:
    if g.L == 0:
        F, B, genus = 1, 1, 0
    else:
        tr = trace_faces(g, range(g.L))
        F, B = len(tr.faces), sum(tr.broken)
        twice = 2 - g.N + g.L - F
        if twice < 0 or twice % 2:
            raise AssertionError(f"Euler relation violated: N={g.N} L={g.L} F={F}")
        genus = twice // 2
    assert g.N - g.L + F == 2 - 2 * genus
    return TopologyReport(g.N, g.L, g.Ne, F, B, genus, superficial_degree(g.Ne, genus, B))


def classify(r: TopologyReport) -> str:
    """``'divergent'`` iff omega >= 0.

    For graphs with external legs this coincides with planar regular two-
    and four-point graphs; vacuum graphs (``Ne == 0``) are classified by
    omega alone.
    """
    divergent = r.omega >= 0
    if r.Ne > 0:
        assert divergent == (r.g == 0 and r.B == 1 and r.Ne in (2, 4)), r
    return "divergent" if divergent else "convergent"


# -- dual graph -----------------------------------------------------------------

@dataclass(frozen=True)
class DualMap:
    """Dual of a ribbon graph: faces become vertices, lines are kept.

    ``rotation`` holds each dual vertex as its face cycle of half-edges;
    ``ends`` gives, per original line, the two dual vertices it joins.
    """

    rotation: tuple[tuple[str, ...], ...]
    lines: tuple[tuple[str, str], ...]
    ends: tuple[tuple[int, int], ...]

    @property
    def n_vertices(self) -> int:
        return len(self.rotation)

    def n_faces(self) -> int:
        """Faces of the dual map, traced with the face cycles as rotation."""
        succ = {}
        for cyc in self.rotation:
            for k, h in enumerate(cyc):
                succ[h] = cyc[(k + 1) % len(cyc)]
        partner = {}
        for a, b in self.lines:
            partner[a], partner[b] = b, a
        seen, count = set(), 0
        for h in sorted(succ):
            if h in seen:
                continue
            count += 1
            while h not in seen:
                seen.add(h)
                h = succ[partner[h]]
        return count


def dual_graph(g: RibbonGraph) -> DualMap:
    if g.L == 0:
        return DualMap(((),), (), ())
    tr = trace_faces(g, range(g.L))
    ends = tuple((tr.face_of[a], tr.face_of[b]) for a, b in g.lines)
    return DualMap(tr.faces, g.lines, ends)


# -- spanning trees ------------------------------------------------------------

def enumerate_spanning_trees(n: int, edges) -> list[tuple[int, ...]]:
    """All spanning trees of a multigraph as sorted tuples of edge indices.

    Self-loops never belong to a tree. Output is lexicographically sorted.
    """
    edges = list(edges)
    usable = [k for k, (a, b) in enumerate(edges) if a != b]
    if n == 1:
        return [()]
    out = []
    for combo in itertools.combinations(usable, n - 1):
        if _components(n, [edges[k] for k in combo]) == 1:
            out.append(combo)
    return out


def matrix_tree_count(n: int, edges) -> int:
    """Kirchhoff count: determinant of the reduced Laplacian (exact)."""
    if n == 1:
        return 1
    lap = [[Fraction(0)] * n for _ in range(n)]
    for a, b in edges:
        if a == b:
            continue
        lap[a][a] += 1
        lap[b][b] += 1
        lap[a][b] -= 1
        lap[b][a] -= 1
    m = [row[1:] for row in lap[1:]]
    det = Fraction(1)
    size = n - 1
    for c in range(size):
        piv = next((r for r in range(c, size) if m[r][c] != 0), None)
        if piv is None:
            return 0
        if piv != c:
            m[c], m[piv] = m[piv], m[c]
            det = -det
        det *= m[c][c]
        for r in range(c + 1, size):
            f = m[r][c] / m[c][c]
            if f:
                for k in range(c, size):
                    m[r][k] -= f * m[c][k]
    return int(det)


@dataclass(frozen=True)
class SpanningStructures:
    direct: tuple[tuple[int, ...], ...]
    dual: tuple[tuple[int, ...], ...]


def spanning_structures(g: RibbonGraph) -> SpanningStructures:
    """Spanning trees of the graph and of its dual, as line-index tuples."""
    direct_edges = [g.line_vertices(l) for l in range(g.L)]
    d = dual_graph(g)
    direct = enumerate_spanning_trees(g.N, direct_edges)
    dual = enumerate_spanning_trees(d.n_vertices, d.ends)
    assert len(direct) == matrix_tree_count(g.N, direct_edges)
    assert len(dual) == matrix_tree_count(d.n_vertices, d.ends)
    return SpanningStructures(tuple(direct), tuple(dual))


# -- subgraph slices ------------------------------------------------------------

@dataclass(frozen=True)
class SubgraphSlice:
    lines: tuple[int, ...]
    L: int
    n: int
    c: int
    g: int
    B: int
    F: int

    @property
    def planar_regular(self) -> bool:
        return self.L > 0 and self.g == 0 and self.B == 1


def subgraph_slice(g: RibbonGraph, lines) -> SubgraphSlice:
    """Restrict ``g`` to ``lines`` and re-trace faces.

    Half-edges of touched vertices outside the subset act as external legs
    of the slice. Genus is the total over connected components.
    """
    lines = tuple(lines)
    if not lines:
        return SubgraphSlice((), 0, 0, 0, 0, 0, 0)
    touched = sorted({v for l in lines for v in g.line_vertices(l)})
    idx = {v: k for k, v in enumerate(touched)}
    c = _components(len(touched), [tuple(idx[v] for v in g.line_vertices(l)) for l in lines])
    tr = trace_faces(g, lines)
    F, B = len(tr.faces), sum(tr.broken)
    twice = 2 * c - len(touched) + len(lines) - F
    assert twice >= 0 and twice % 2 == 0
    return SubgraphSlice(lines, len(lines), len(touched), c, twice // 2, B, F)
