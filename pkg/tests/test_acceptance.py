"""Acceptance criteria 1-9, one test each.

Every test prints a single ``ACCEPTANCE #k PASS|FAIL ...`` line to the
terminal (outside pytest's capture) and then asserts the criterion at its
stated tolerance.
"""

import random
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from corpus import REFERENCE, bubble, bubble_chain_2pt, iso_classes, random_graph
from ncphi4 import graphio
from ncphi4.dimreg import b_prime_lines, b_prime_topological, factorization_check, first_pole, line_components, \
    slice_table
from ncphi4.moyal import (GaussianFunction, OscillatorParams, PLANES, ThetaParam, full_residual, matrix_base_form,
                          mehler_convolution, mehler_kernel, star_product, star_product_quadrature,
                          truncated_propagator)
from ncphi4.parametric import (admissible_pairs, hu_extract, leading_term_check, oracle_ratios,
                               power_counting_polynomial)
from ncphi4.ribbon import classify, enumerate_spanning_trees, subgraph_slice, superficial_degree, topology
from ncphi4.rosette import filk_reduce, moyal_vertex_form, moyality_limit, oracle_check, planar_vertex_contribution


@pytest.fixture
def report(capsys):
    def out(k, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE #{k} {'PASS' if ok else 'FAIL'} {detail}")
    return out


def classes(max_N, min_externals=1):
    return [g for N in range(1, max_N + 1) for g in iso_classes(N, min_externals=min_externals)]


def trees(g):
    return enumerate_spanning_trees(g.N, [g.line_vertices(l) for l in range(g.L)])


# -- 1 topology -----------------------------------------------------------------------------

def test_criterion_1_topology(report):
    rng = random.Random(2024)
    bad = 0
    for _ in range(1000):
        r = topology(random_graph(rng, max_lines=8))
        bad += (r.N - r.L + r.F != 2 - 2 * r.g) + (4 * r.N - r.Ne != 2 * r.L)
    refs = {name: topology(REFERENCE[name]()) for name in ("planar_tadpole", "crossed_tadpole", "double_tadpole")}
    got = {k: (r.F, r.B, r.g) for k, r in refs.items()}
    ref_ok = (got["planar_tadpole"] == (2, 1, 0) and got["crossed_tadpole"] == (2, 2, 0)
              and got["double_tadpole"][0] == 1 and got["double_tadpole"][2] == 1)
    ok = bad == 0 and ref_ok
    report(1, ok, f"violations={bad}/1000 references={got}")
    assert ok


# -- 2 power counting versus poles ----------------------------------------------------------

def test_criterion_2_power_counting_agrees_with_poles(report):
    literal = full = sub = n = 0
    for g in classes(3):
        if g.L == 0:
            continue  # no slice, no pole
        n += 1
        table = slice_table(g)
        Ds = [D for _, D in table.values() if D is not None]
        pole = bool(Ds) and min(Ds) <= 4
        divergent = classify(topology(g)) == "divergent"
        literal += pole != divergent
        D_full = table[tuple(range(g.L))][1]
        full += (D_full is not None and D_full <= 4) != divergent
        some = False
        for S in table:
            if len(line_components(g, S)) == 1:
                s = subgraph_slice(g, S)
                some |= superficial_degree(4 * s.n - 2 * s.L, s.g, s.B) >= 0
        sub += some != pole
    bubble_pole = first_pole(bubble())
    ok = literal == 0 and bubble_pole == Fraction(4)
    report(2, ok, f"classify vs min D*<=4 mismatches={literal}/{n}; full-graph D*<=4 vs classify "
                  f"mismatches={full}; min D*<=4 vs some slice omega>=0 mismatches={sub}; bubble pole={bubble_pole}")
    assert bubble_pole == Fraction(4)
    assert full == 0 and sub == 0
    assert literal == 0


# -- 3 rosette ------------------------------------------------------------------------------

def test_criterion_3_rosette(report):
    rng = random.Random(77)
    corpus = [g for g in classes(3, min_externals=0) if g.L <= 6]
    corpus += [random_graph(rng, max_lines=6) for _ in range(40)]
    checked = failed = 0
    for g in corpus:
        for t in trees(g):
            checked += 1
            failed += not oracle_check(g, filk_reduce(g, t))
    moy = moy_bad = 0
    for g in corpus:
        r = topology(g)
        if not (r.g == 0 and r.B == 1 and g.Ne > 0):
            continue
        p = planar_vertex_contribution(g, trees(g)[0])
        lim = moyality_limit(p)
        ref = moyal_vertex_form([n for n in p.names if n[:2] not in ("u[", "v[", "w[")])
        moy += 1
        moy_bad += not (lim.names == ref.names and lim.delta_dict() == ref.delta_dict()
                        and lim.nonzero() == ref.nonzero())
    ok = failed == 0 and moy_bad == 0 and moy > 0
    report(3, ok, f"filk trees failed={failed}/{checked}; moyality failed={moy_bad}/{moy}")
    assert ok


# -- 4 HU -----------------------------------------------------------------------------------

def hu_corpus():
    gs = [f() for f in REFERENCE.values()] + classes(2, min_externals=0)
    n3 = classes(3, min_externals=0)
    gs += [g for g in n3 if g.L <= 3]
    rng = random.Random(5)
    gs += rng.sample([g for g in n3 if g.L in (4, 5)], 8)
    return [g for g in gs if g.L > 0]


def test_criterion_4_hu(report):
    rng = random.Random(11)
    nprng = np.random.default_rng(11)
    oracle_bad = positivity_bad = leading_bad = literal_bad = pairs = 0
    corpus = hu_corpus()
    for g in corpus:
        hu = hu_extract(g)
        pts = [[Fraction(rng.randint(1, 9), rng.randint(10, 13)) for _ in range(g.L)] for _ in range(20)]
        r = oracle_ratios(g, hu, pts, Fraction(2))
        oracle_bad += len(set(r)) != 1 or r[0] == 0
        positivity_bad += not min(hu.evaluate(p, 2.0) for p in nprng.uniform(0, 1, (1000, g.L))) > 0
        rep = leading_term_check(g, hu)
        leading_bad += not rep.leading_ok
        pairs += len(admissible_pairs(g))
        literal_bad += len(rep.mismatches)
    ok = oracle_bad == 0 and positivity_bad == 0 and literal_bad == 0
    report(4, ok, f"graphs={len(corpus)} oracle failed={oracle_bad}; positivity failed={positivity_bad}; "
                  f"admissible monomials off s^(2g-k) 4^g={literal_bad}/{pairs} (leading-pair failures={leading_bad})")
    assert oracle_bad == 0 and positivity_bad == 0 and leading_bad == 0
    assert literal_bad == 0


# -- 5 b' -----------------------------------------------------------------------------------

def test_criterion_5_b_prime(report):
    checked = eq = bad = 0
    for g in classes(3):
        if g.L == 0:
            continue
        P = power_counting_polynomial(g)
        for S in slice_table(g, P):  # every nonempty subset is a prefix of some sector
            bound = b_prime_topological(g, S)
            checked += 1
            eq += bound.kind == "eq"
            bad += not bound.admits(b_prime_lines(P, S))
    report(5, bad == 0, f"slices={checked} (planar-regular equalities={eq}) violations={bad}")
    assert bad == 0


# -- 6 factorisation ------------------------------------------------------------------------

def test_criterion_6_factorization(report):
    t0 = time.perf_counter()
    rep = factorization_check(bubble_chain_2pt(), (0, 1), rhos=(0.1, 0.05, 0.025, 0.0125), D=3.0)
    dt = time.perf_counter() - t0
    ok = abs(rep.slope - 2.0) <= 0.2 and dt < 60
    report(6, ok, f"slope={rep.slope:.6f} runtime={dt:.1f}s")
    assert ok


# -- 7 Moyal numerics -----------------------------------------------------------------------

def _gaussian(rng, factorised=False):
    if factorised:
        M = np.zeros((4, 4))
        for P in PLANES:
            a = rng.normal(size=(2, 2))
            M[np.ix_(P, P)] = 0.5 * a @ a.T + 0.5 * np.eye(2)
    else:
        a = rng.normal(size=(4, 4))
        M = 0.3 * a @ a.T + 0.5 * np.eye(4)
    return GaussianFunction(0.5 * rng.normal(size=4), M, rng.normal(size=4), complex(rng.normal(), rng.normal()))


def _rel(a, b):
    return float(np.max(np.abs(a - b) / np.abs(b)))


def test_criterion_7_moyal_numerics(report):
    th = ThetaParam(1.0)
    rng = np.random.default_rng(70)
    assoc = 0.0
    for _ in range(50):
        f, g, h = (_gaussian(rng) for _ in range(3))
        xs = 0.5 * rng.normal(size=(5, 4))
        assoc = max(assoc, _rel(star_product(star_product(f, g, th), h, th)(xs),
                                star_product(f, star_product(g, h, th), th)(xs)))
    quad = 0.0
    for _ in range(20):
        f, g = _gaussian(rng, True), _gaussian(rng, True)
        x = 0.5 * rng.normal(size=4)
        q, _ = star_product_quadrature(f, g, x, th)
        quad = max(quad, abs(star_product(f, g, th)(x) - q) / abs(q))
    params = OscillatorParams()
    semi = 0.0
    for _ in range(5):
        x, y = rng.normal(size=4), rng.normal(size=4)
        a, b = rng.uniform(0.2, 2, 2)
        ratio = mehler_convolution(x, y, a, b, params) / mehler_kernel(x, y, a + b, params)
        semi = max(semi, abs(ratio * params.OmegaTilde - 1))
    ok = assoc <= 1e-10 and quad <= 1e-9 and semi <= 1e-8
    report(7, ok, f"associativity={assoc:.2e} closed-vs-quadrature={quad:.2e} semigroup={semi:.2e}")
    assert ok


# -- 8 matrix base --------------------------------------------------------------------------

def test_criterion_8_matrix_base(report):
    params = OscillatorParams(Omega=0.8, mu2=1.0, theta=1.0)
    a, b = truncated_propagator(12, params), truncated_propagator(24, params)
    G, _ = matrix_base_form(12, params)
    res = full_residual(G, a)
    low = [((0, 0), (0, 0), (0, 0), (0, 0)), ((1, 0), (0, 0), (0, 0), (1, 0)),
           ((1, 1), (2, 0), (2, 0), (1, 1)), ((2, 1), (1, 2), (1, 2), (2, 1))]
    drift = max(abs(a.entry(*q) - b.entry(*q)) / abs(b.entry(*q)) for q in low)
    ok = res <= 1e-8 and drift <= 1e-4
    report(8, ok, f"residual={res:.2e} cutoff-doubling drift={drift:.2e}")
    assert ok


# -- 9 CLI determinism ----------------------------------------------------------------------

def _cli(args):
    p = subprocess.run([sys.executable, "-m", "ncphi4.cli", *args], capture_output=True, text=True)
    return p.returncode, p.stdout


def test_criterion_9_cli_determinism(report, tmp_path):
    for name in ("bubble", "crossed_tadpole", "bubble_chain_2pt"):
        graphio.dump(REFERENCE[name]() if name in REFERENCE else bubble_chain_2pt(), tmp_path / f"{name}.graph")
    gauss = tmp_path / "f.json"
    gauss.write_text('{"center": [0.1, 0, 0, 0.2], "M": [[1,0,0,0],[0,1,0,0],[0,0,2,0.5],[0,0,0.5,1]], '
                     '"p": [0.3, 0, -0.2, 0], "amplitude": [1, 0.5]}')
    d = str(tmp_path)
    commands = [
        ["analyze", f"{d}/bubble.graph"],
        ["rosette", f"{d}/bubble_chain_2pt.graph"],
        ["hu", f"{d}/bubble_chain_2pt.graph"],
        ["amplitude", f"{d}/crossed_tadpole.graph", "--D", "4"],
        ["dimreg", "poles", f"{d}/bubble_chain_2pt.graph"],
        ["dimreg", "factcheck", f"{d}/bubble_chain_2pt.graph", "--subgraph", "0,1"],
        ["dimreg", "subtract", f"{d}/bubble.graph"],
        ["moyal", "star", "--f", str(gauss), "--g", str(gauss), "--x", "0.1,0,0,0"],
        ["moyal", "propagator", "--x", "0,0,0,0", "--y", "1,0.5,0,0"],
        ["moyal", "matrixbase", "--cutoff", "8"],
    ]
    jobs = [(k, fmt, th) for k in range(len(commands)) for fmt in ("text", "machine") for th in (1, 1, 1, 8)]
    with ThreadPoolExecutor(8) as ex:
        outs = list(ex.map(lambda j: _cli(commands[j[0]] + ["--format", j[1], "--threads", str(j[2])]), jobs))
    groups: dict = {}
    for (k, fmt, _), res in zip(jobs, outs):
        groups.setdefault((k, fmt), []).append(res)
    failed = [" ".join(commands[k][:2]) + f" [{fmt}]" for (k, fmt), rs in groups.items()
              if len(set(rs)) != 1 or rs[0][0] != 0]
    ok = not failed
    report(9, ok, f"commands={len(groups)} (3 runs + 8 threads each) nondeterministic or failing={failed}")
    assert ok
