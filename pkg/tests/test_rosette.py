import random
from fractions import Fraction

import pytest

from corpus import REFERENCE, bubble_chain_2pt, exhaustive, random_graph
from ncphi4.ribbon import enumerate_spanning_trees, topology
from ncphi4.rosette import (PhaseForm, ReductionError, filk_reduce, moyal_vertex_form, moyality_limit,
                            oracle_check, planar_vertex_contribution, short_long_change, vertex_factor)


def _trees(g):
    return enumerate_spanning_trees(g.N, [g.line_vertices(l) for l in range(g.L)])


def test_vertex_factor_entries():
    f = vertex_factor(["x1", "x2", "x3", "x4"])
    assert f.delta_dict() == {"x1": 1, "x2": -1, "x3": 1, "x4": -1}
    assert f.entry("x1", "x2") == 2 and f.entry("x1", "x3") == -2
    assert f.entry("x2", "x4") == -2 and f.entry("x3", "x4") == 2
    with pytest.raises(ReductionError):
        vertex_factor(["x1", "x2", "x3"])


def test_vertex_factor_cyclic_relabelling():
    import sympy as sp
    f = vertex_factor(["x1", "x2", "x3", "x4"])
    g = vertex_factor(["x2", "x3", "x4", "x1"])
    assert {k: -v for k, v in f.delta_dict().items()} == g.delta_dict()
    names = list(f.names)
    M = lambda p: sp.Matrix(4, 4, lambda a, b: p.entry(names[a], names[b]))
    K = sp.Matrix([[1, 0, 0], [1, 1, 0], [0, 1, 1], [0, 0, 1]])  # null space of the delta
    assert (K.T * (M(f) - M(g)) * K).is_zero_matrix


def test_phase_form_rejects_symmetric_matrix():
    with pytest.raises(AssertionError):
        PhaseForm(("a", "b"), ((Fraction(0), Fraction(1)), (Fraction(1), Fraction(0))), (1, -1))


def test_short_long_is_invertible():
    g = bubble_chain_2pt()
    sl = short_long_change(g)
    rng = random.Random(3)
    pos = {h: rng.uniform(-1, 1) for _, cs in g.vertices for h in cs}
    for l, (u, v) in enumerate(sl.to_uv(pos)):
        back = sl.endpoints(l, u, v)
        for h, x in back.items():
            assert abs(x - pos[h]) < 1e-12


@pytest.mark.parametrize("seed", range(40))
def test_filk_reduction_matches_vertex_product(seed):
    rng = random.Random(seed)
    g = random_graph(rng, max_lines=7)
    for t in _trees(g)[:3]:
        assert oracle_check(g, filk_reduce(g, t))


def test_filk_independent_of_tree_choice():
    g = bubble_chain_2pt()
    forms = [filk_reduce(g, t) for t in _trees(g)]
    assert len(forms) == 5
    assert all(oracle_check(g, f) for f in forms)


def test_filk_structure():
    g = bubble_chain_2pt()
    f = filk_reduce(g, _trees(g)[0])
    s = [n for n in f.names if not n.startswith(("u[", "v["))]
    assert len(s) == 2 * g.N + 2
    for i, a in enumerate(s, start=1):
        assert f.delta_dict()[a] == (-1) ** (i + 1)
        for j in range(i + 1, len(s) + 1):
            assert f.entry(a, s[j - 1]) == 2 * (-1) ** (i + j + 1)
    for name, e in f.eps:
        assert f.entry(name, "v" + name[1:]) == -e


def test_oracle_detects_tampering():
    g = bubble_chain_2pt()
    f = filk_reduce(g, _trees(g)[0])
    m = [list(r) for r in f.matrix]
    a, b = f.index[f.names[0]], f.index[f.names[1]]
    m[a][b] += 2
    m[b][a] -= 2
    bad = PhaseForm(f.names, tuple(map(tuple, m)), f.delta, f.eps, f.orient)
    assert not oracle_check(g, bad)


def _planar_regular(graphs):
    for g in graphs:
        r = topology(g)
        if r.g == 0 and r.B == 1 and g.Ne > 0:
            yield g


def test_planar_contribution_exhaustive_two_vertices():
    count = 0
    for g in _planar_regular(exhaustive(2)):
        for t in _trees(g):
            assert oracle_check(g, planar_vertex_contribution(g, t))
            count += 1
    assert count > 50


def test_planar_contribution_structure():
    g = bubble_chain_2pt()
    p = planar_vertex_contribution(g, _trees(g)[0])
    ext = [n for n in p.names if not n[:2] in ("u[", "v[", "w[")]
    assert len(ext) == 2
    assert sum(1 for n in p.names if n.startswith("u[")) == g.L
    assert sum(1 for n in p.names if n.startswith("w[")) == g.L - g.N + 1
    for name, c in p.delta_dict().items():
        if name.startswith("u["):
            assert c == 1


def test_planar_contribution_rejects_nonplanar():
    g = REFERENCE["crossed_tadpole"]()
    with pytest.raises(ReductionError, match="not planar regular"):
        planar_vertex_contribution(g, ())


@pytest.mark.parametrize("seed", range(20))
def test_moyality_limit(seed):
    rng = random.Random(100 + seed)
    while True:
        g = random_graph(rng, max_lines=7)
        r = topology(g)
        if r.g == 0 and r.B == 1 and g.Ne > 0:
            break
    p = planar_vertex_contribution(g, _trees(g)[0])
    lim = moyality_limit(p)
    ext = [n for n in p.names if not n[:2] in ("u[", "v[", "w[")]
    ref = moyal_vertex_form(ext)
    assert lim.names == ref.names == tuple(ext)
    for a in lim.names:
        assert lim.delta_dict().get(a, 0) == ref.delta_dict().get(a, 0)
        for b in lim.names:
            assert lim.entry(a, b) == ref.entry(a, b)
