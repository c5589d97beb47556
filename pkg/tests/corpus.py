"""Graph corpus shared by the test modules.

Reference graphs are written out by hand; ``exhaustive`` enumerates every
connected graph on ``N`` labelled four-corner vertices (up to the choice of
line set), ``random_graph`` draws seeded random connected graphs.
"""

from __future__ import annotations

import itertools
import random
from functools import lru_cache

from ncphi4.ribbon import GraphError, build_graph


def planar_tadpole():
    return build_graph({"V": "abcd"}, [("a", "b")], ["c", "d"], "V")


def crossed_tadpole():
    return build_graph({"V": "abcd"}, [("a", "c")], ["b", "d"], "V")


def double_tadpole():
    return build_graph({"V": "abcd"}, [("a", "c"), ("b", "d")], [], "V")


def bare_vertex():
    return build_graph({"V": "abcd"}, [], "abcd", "V")


def bubble():
    """Planar four-point bubble with lines joining odd to even corners."""
    return build_graph({"V": ["a1", "a2", "a3", "a4"], "W": ["b1", "b2", "b3", "b4"]},
                       [("a1", "b2"), ("a2", "b1")], None, "V")


def sunshine():
    """Planar two-point graph: three parallel lines between two vertices."""
    return build_graph({"V": ["a1", "a2", "a3", "a4"], "W": ["b1", "b2", "b3", "b4"]},
                       [("a1", "b4"), ("a2", "b3"), ("a3", "b2")], None, "V")


def nested_tadpole():
    """Vacuum graph on one vertex: loop 2-3 nested inside loop 1-4."""
    return build_graph({"V": "abcd"}, [("a", "d"), ("b", "c")], [], "V")


def bubble_chain_2pt():
    """Bubble V-W plus a root vertex X carrying a tadpole; two external legs."""
    return build_graph(
        {"V": ["a1", "a2", "a3", "a4"], "W": ["b1", "b2", "b3", "b4"], "X": ["c1", "c2", "c3", "c4"]},
        [("a1", "b2"), ("a2", "b1"), ("a3", "c2"), ("b4", "c1"), ("c3", "c4")],
        None, "X")


REFERENCE = {
    "planar_tadpole": planar_tadpole,
    "crossed_tadpole": crossed_tadpole,
    "double_tadpole": double_tadpole,
    "bare_vertex": bare_vertex,
    "bubble": bubble,
    "sunshine": sunshine,
}


def _half_edges(N):
    return {f"V{k}": [f"h{k}{i}" for i in range(1, 5)] for k in range(N)}


def _matchings(hs, orientable):
    """All partial matchings of ``hs`` (lists of sorted pairs)."""
    if not hs:
        yield []
        return
    first, rest = hs[0], hs[1:]
    for m in _matchings(rest, orientable):
        yield m
    for k, other in enumerate(rest):
        if orientable and (int(first[-1]) + int(other[-1])) % 2 == 0:
            continue
        for m in _matchings(rest[:k] + rest[k + 1:], orientable):
            yield [(first, other)] + m


@lru_cache(maxsize=None)
def exhaustive(N, orientable=False, max_lines=None, min_externals=0):
    """Every connected graph on N labelled vertices (root V0)."""
    verts = _half_edges(N)
    hs = [h for cs in verts.values() for h in cs]
    out = []
    for m in _matchings(hs, orientable):
        if max_lines is not None and len(m) > max_lines:
            continue
        if 4 * N - 2 * len(m) < min_externals:
            continue
        try:
            out.append(build_graph(verts, m, None, "V0"))
        except GraphError:
            continue
    return tuple(out)


@lru_cache(maxsize=None)
def iso_classes(N, orientable=False, min_externals=1):
    """One connected graph per isomorphism class on N vertices.

    Isomorphisms are vertex relabellings combined with cyclic rotations of
    each vertex (even rotations only in the orientable case, which preserve
    the alternating orientation). Each new matching marks its whole orbit as
    seen, so every class is expanded once.
    """
    verts = _half_edges(N)
    hs = [h for cs in verts.values() for h in cs]
    steps = (0, 2) if orientable else range(4)
    maps = []
    for perm in itertools.permutations(range(N)):
        for rots in itertools.product(steps, repeat=N):
            maps.append({f"h{k}{i + 1}": f"h{perm[k]}{(i + rots[k]) % 4 + 1}" for k in range(N) for i in range(4)})
    seen = set()
    out = []
    for m in _matchings(hs, orientable):
        key = frozenset(m)
        if key in seen or 4 * N - 2 * len(m) < min_externals:
            continue
        for f in maps:
            seen.add(frozenset(tuple(sorted((f[a], f[b]))) for a, b in m))
        try:
            out.append(build_graph(verts, m, None, "V0"))
        except GraphError:
            continue
    return tuple(out)


def random_graph(rng: random.Random, max_lines=8, orientable=False):
    """Random connected graph with at most ``max_lines`` internal lines."""
    while True:
        N = rng.randint(1, max(1, (max_lines + 2) // 2))
        verts = _half_edges(N)
        hs = [h for cs in verts.values() for h in cs]
        rng.shuffle(hs)
        lines = []
        # spanning tree first so the graph is connected
        order = list(range(N))
        rng.shuffle(order)
        free = {k: list(verts[f"V{k}"]) for k in range(N)}
        for k in free.values():
            rng.shuffle(k)
        ok = True
        for idx in range(1, N):
            a = order[idx]
            b = order[rng.randrange(idx)]
            pair = _pick(free, a, b, orientable, rng)
            if pair is None:
                ok = False
                break
            lines.append(pair)
        if not ok:
            continue
        target = rng.randint(len(lines), max_lines)
        remaining = [h for k in free for h in free[k]]
        rng.shuffle(remaining)
        while len(lines) < target and len(remaining) >= 2:
            a = remaining.pop()
            cands = [h for h in remaining
                     if not orientable or (int(a[-1]) + int(h[-1])) % 2 == 1]
            if not cands:
                continue
            b = rng.choice(cands)
            remaining.remove(b)
            lines.append((a, b))
        if len(lines) > max_lines:
            continue
        try:
            return build_graph(verts, lines, None, f"V{order[0]}")
        except GraphError:
            continue


def _pick(free, a, b, orientable, rng):
    for ha in list(free[a]):
        for hb in list(free[b]):
            if orientable and (int(ha[-1]) + int(hb[-1])) % 2 == 0:
                continue
            free[a].remove(ha)
            free[b].remove(hb)
            return (ha, hb)
    return None
