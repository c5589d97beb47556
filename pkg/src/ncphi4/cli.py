"""Command-line driver.

Every subcommand prints a header with the command and seed, then either a
text report or (``--format machine``) one JSON record with sorted keys.
Floating-point output carries 12 significant digits. ``--threads`` only
changes how independent pieces of work are scheduled; results are collected
in input order, so output bytes do not depend on it.

Exit codes: 0 ok, 1 domain error, 2 usage error, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import dimreg, graphio, moyal, parametric, ribbon, rosette

CONFIG_ENV = "NCPHI4_CONFIG"
EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_INVARIANT = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# -- configuration ----------------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    theta: float = 1.0
    Omega: float | None = None  # None: the module default (0.5 parametric, 0.8 oscillator)
    mu2: float = 1.0
    s: float | None = None  # must equal 1/Omega when both are given
    rtol: float = 1e-7
    cutoff: int = 12
    seed: int = 0
    format: str = "text"
    threads: int = 1

    def validate(self) -> "RunConfig":
        if self.s is not None and self.Omega is not None and abs(self.s * self.Omega - 1) > 1e-12:
            raise UsageError(f"s·Ω ≠ 1 (s = {self.s}, Omega = {self.Omega})")
        if not self.rtol > 0:
            raise UsageError("rtol must be positive")
        if not self.theta > 0:
            raise UsageError("theta must be positive")
        if self.format not in ("text", "machine"):
            raise UsageError(f"unknown format {self.format!r}")
        if self.threads < 1:
            raise UsageError("threads must be at least 1")
        return self

    def parametric_Omega(self) -> float:
        if self.Omega is not None:
            return self.Omega
        return 1 / self.s if self.s is not None else 0.5

    def oscillator(self) -> moyal.OscillatorParams:
        Omega = self.Omega if self.Omega is not None else (1 / self.s if self.s is not None else 0.8)
        return moyal.OscillatorParams(Omega=Omega, mu2=self.mu2, theta=self.theta)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    """Config file (JSON object with RunConfig keys) overridden by flags."""
    base = {}
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                base = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        known = {f.name for f in fields(RunConfig)}
        unknown = sorted(set(base) - known)
        if unknown:
            raise UsageError(f"unknown config key {unknown[0]!r}")
    cfg = replace(RunConfig(), **base)
    cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


# -- formatting ---------------------------------------------------------------------------

def num(x) -> float:
    return float(f"{float(x):.12g}")


def cnum(z) -> list:
    z = complex(z)
    return [num(z.real), num(z.imag)]


def fmt(x) -> str:
    return f"{float(x):.12g}"


def cfmt(z) -> str:
    z = complex(z)
    return f"{z.real:.12g} {z.imag:+.12g}i"


def pmap(func, items, threads: int) -> list:
    """Ordered map, optionally on a thread pool."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, items))


def emit(cfg: RunConfig, command: str, text: list[str], record: dict, out) -> None:
    if cfg.format == "machine":
        # scheduling and formatting do not change results, so they are left out
        config = {k: v for k, v in asdict(cfg).items() if k not in ("threads", "format")}
        doc = {"command": command, "seed": cfg.seed, "config": config, "result": record}
        out.write(json.dumps(doc, sort_keys=True) + "\n")
    else:
        out.write(f"# ncphi4 {command}\n# seed {cfg.seed}\n")
        out.write("\n".join(text) + "\n")


def parse_lines(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise UsageError(f"line list must be comma-separated integers, got {text!r}") from None


def parse_points(text: str, n: int, what: str) -> np.ndarray:
    """``a,b,c,d;e,f,g,h`` -> (n, 4) array."""
    try:
        rows = [[float(v) for v in part.split(",")] for part in text.split(";") if part.strip()]
    except ValueError:
        raise UsageError(f"{what}: numbers expected in {text!r}") from None
    arr = np.array(rows, float)
    if arr.shape != (n, 4):
        raise UsageError(f"{what}: expected {n} points of 4 coordinates, got shape {arr.shape}")
    return arr


def _externals(cfg: RunConfig, g: ribbon.RibbonGraph, text: str | None) -> np.ndarray:
    if text is None:
        return np.random.default_rng(cfg.seed).normal(size=(g.Ne, 4))
    return parse_points(text, g.Ne, "--external")


def _p_root(text: str | None) -> np.ndarray:
    return np.zeros(4) if text is None else parse_points(text, 1, "--p-root")[0]


# -- subcommands ------------------------------------------------------------------------

def cmd_analyze(args, cfg, out):
    g = graphio.load(args.graph)
    r = ribbon.topology(g)
    cls = ribbon.classify(r)
    line = f"N={r.N} L={r.L} Ne={r.Ne} F={r.F} B={r.B} g={r.g} omega={r.omega} class={cls}"
    emit(cfg, "analyze", [line], dict(r.to_dict(), **{"class": cls}), out)


def _form_record(p: rosette.PhaseForm) -> dict:
    return {"names": list(p.names), "delta": list(p.delta),
            "entries": [[a, b, str(c)] for (a, b), c in p.nonzero().items()]}


def cmd_rosette(args, cfg, out):
    g = graphio.load(args.graph)
    trees = ribbon.enumerate_spanning_trees(g.N, [g.line_vertices(l) for l in range(g.L)])
    tree = parse_lines(args.tree)
    if tree is None:
        tree = trees[0]
    elif tuple(sorted(tree)) not in {tuple(sorted(t)) for t in trees}:
        raise parametric.DomainError(f"lines {tree} are not a spanning tree")
    if args.moyality:
        form = rosette.moyality_limit(rosette.planar_vertex_contribution(g, tree))
    else:
        form = rosette.filk_reduce(g, tree)
    text = [f"tree {','.join(map(str, tree))}", form.table()]
    emit(cfg, "rosette", text, dict(_form_record(form), tree=list(tree), moyality=bool(args.moyality)), out)


def cmd_hu(args, cfg, out):
    g = graphio.load(args.graph)
    hu = parametric.hu_extract(g)
    dump = hu.dump()
    emit(cfg, "hu", [f"normalization {hu.normalization}", dump.rstrip("\n")],
         {"normalization": hu.normalization, "dump": dump}, out)


def cmd_amplitude(args, cfg, out):
    g = graphio.load(args.graph)
    x = _externals(cfg, g, args.external)
    p = _p_root(args.p_root)
    hu = parametric.hu_extract(g)
    Omega = cfg.parametric_Omega()
    val, err = parametric.amplitude_quadrature(g, hu, x, p, args.D, cfg.theta, Omega, rtol=cfg.rtol)
    text = [f"D {fmt(args.D)}", f"value {cfmt(val)}", f"error {fmt(err)}"]
    emit(cfg, "amplitude", text, {"D": num(args.D), "value": cnum(val), "error": num(err)}, out)


def cmd_dimreg(args, cfg, out):
    g = graphio.load(args.graph)
    Omega = cfg.parametric_Omega()
    if args.action == "poles":
        P = parametric.power_counting_polynomial(g)
        subsets = [S for r in range(1, g.L + 1) for S in itertools.combinations(range(g.L), r)]
        bs = pmap(lambda S: dimreg.b_prime_lines(P, S), subsets, cfg.threads)
        table = {S: (b, Fraction(2 * len(S), b) if b else None) for S, b in zip(subsets, bs)}
        poles = dimreg.poles_from_table(table)
        text = [f"D={p.D} slices={' '.join(','.join(map(str, s)) for s in p.slices)}" for p in poles] or ["no poles"]
        rec = {"poles": [{"D": str(p.D), "slices": [list(s) for s in p.slices]} for p in poles]}
        emit(cfg, "dimreg poles", text, rec, out)
    elif args.action == "factcheck":
        S = parse_lines(args.subgraph)
        if S is None:
            raise UsageError("factcheck needs --subgraph")
        rep = dimreg.factorization_check(g, S, D=args.D, theta=cfg.theta, Omega=Omega, seed=cfg.seed)
        text = rep.table().splitlines() + [f"ok {rep.ok}"]
        rec = {"rhos": [num(r) for r in rep.rhos], "deviations": [num(d) for d in rep.deviations],
               "slope": num(rep.slope), "ok": bool(rep.ok)}
        emit(cfg, "dimreg factcheck", text, rec, out)
    else:
        S = parse_lines(args.subgraph)
        rep = dimreg.taylor_subtract(g, S, theta=cfg.theta, Omega=Omega, seed=cfg.seed, epsrel=min(cfg.rtol, 1e-9))
        text = rep.table().splitlines() + [f"ok {rep.ok}"]
        rec = {"slice": list(rep.slice) if rep.slice else None, "Ds": [num(d) for d in rep.Ds],
               "values": [cnum(v) for v in rep.values], "c_minus1": cnum(rep.c_minus1), "c0": cnum(rep.c0),
               "predicted_c0": cnum(rep.predicted_c0), "ok": bool(rep.ok)}
        emit(cfg, "dimreg subtract", text, rec, out)


def _gaussian_from_doc(path: str) -> moyal.GaussianFunction:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise graphio.ParseError(f"{path} line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    unknown = set(doc) - {"center", "M", "p", "amplitude"}
    if unknown:
        raise graphio.ParseError(f"{path}: unknown key {sorted(unknown)[0]!r}")
    amp = doc.get("amplitude", 1.0)
    amp = complex(*amp) if isinstance(amp, list) else complex(amp)
    return moyal.GaussianFunction(np.array(doc.get("center", [0.0] * 4), float), np.array(doc["M"], float),
                                  np.array(doc.get("p", [0.0] * 4), float), amp)


def cmd_moyal(args, cfg, out):
    if args.action == "star":
        if not (args.f and args.g):
            raise UsageError("star needs --f and --g")
        f, h = _gaussian_from_doc(args.f), _gaussian_from_doc(args.g)
        r = moyal.star_product(f, h, moyal.ThetaParam(cfg.theta))
        text = [f"amplitude {cfmt(r.amplitude)}", "center " + " ".join(fmt(v) for v in r.center),
                "p " + " ".join(fmt(v) for v in r.p)]
        text += ["M " + " ".join(cfmt(v) for v in row) for row in r.M]
        rec = {"amplitude": cnum(r.amplitude), "center": [num(v) for v in r.center], "p": [num(v) for v in r.p],
               "M": [[cnum(v) for v in row] for row in r.M]}
        if args.x:
            x = parse_points(args.x, 1, "--x")[0]
            text.append(f"value {cfmt(r(x))}")
            rec["value"] = cnum(r(x))
        emit(cfg, "moyal star", text, rec, out)
    elif args.action == "propagator":
        if not (args.x and args.y):
            raise UsageError("propagator needs --x and --y")
        x, y = parse_points(args.x, 1, "--x")[0], parse_points(args.y, 1, "--y")[0]
        v = moyal.propagator(x, y, cfg.oscillator(), rtol=cfg.rtol)
        emit(cfg, "moyal propagator", [f"value {fmt(v)}"], {"value": num(v)}, out)
    else:
        params = cfg.oscillator()
        n = args.cutoff or cfg.cutoff
        tp = moyal.truncated_propagator(n, params)
        G, _ = moyal.matrix_base_form(n, params)
        res = moyal.full_residual(G, tp)
        low = [((0, 0), (0, 0), (0, 0), (0, 0)), ((1, 0), (0, 0), (0, 0), (1, 0)), ((1, 1), (2, 0), (2, 0), (1, 1))]
        have = set(tp.index)
        low = [q for q in low if (*q[0], *q[1]) in have and (*q[2], *q[3]) in have]
        entries = [tp.entry(*q) for q in low]
        text = [f"cutoff {n}", f"residual {fmt(res)}", f"condition {fmt(tp.condition)}"]
        text += [f"C{q} {fmt(e)}" for q, e in zip(low, entries)]
        rec = {"cutoff": n, "residual": num(res), "condition": num(tp.condition),
               "entries": [[str(q), num(e)] for q, e in zip(low, entries)]}
        emit(cfg, "moyal matrixbase", text, rec, out)


# -- argument parsing ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    common.add_argument("--theta", type=float)
    common.add_argument("--Omega", type=float)
    common.add_argument("--mu2", type=float)
    common.add_argument("--s", type=float)
    common.add_argument("--rtol", type=float)
    common.add_argument("--cutoff-default", dest="cutoff", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=["text", "machine"])
    common.add_argument("--threads", type=int)

    p = argparse.ArgumentParser(prog="ncphi4", description="Ribbon graphs, parametric amplitudes and Moyal numerics.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[common], help="topology and power counting of a graph")
    a.add_argument("graph")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("rosette", parents=[common], help="phase form after contracting a spanning tree")
    r.add_argument("graph")
    r.add_argument("--tree", help="comma-separated tree lines (default: first spanning tree)")
    r.add_argument("--moyality", action="store_true", help="planar vertex contribution at u -> 0")
    r.set_defaults(func=cmd_rosette)

    h = sub.add_parser("hu", parents=[common], help="dump the HU polynomial")
    h.add_argument("graph")
    h.set_defaults(func=cmd_hu)

    am = sub.add_parser("amplitude", parents=[common], help="parametric amplitude by cube quadrature")
    am.add_argument("graph")
    am.add_argument("--D", type=float, required=True)
    am.add_argument("--external", help="external points 'a,b,c,d;...' (default: seeded normal)")
    am.add_argument("--p-root", help="hypermomentum 'a,b,c,d' (default: 0)")
    am.set_defaults(func=cmd_amplitude)

    d = sub.add_parser("dimreg", parents=[common], help="poles, factorisation and subtraction")
    d.add_argument("action", choices=["poles", "factcheck", "subtract"])
    d.add_argument("graph")
    d.add_argument("--subgraph", help="comma-separated slice lines")
    d.add_argument("--D", type=float, default=3.0, help="dimension for factcheck")
    d.set_defaults(func=cmd_dimreg)

    m = sub.add_parser("moyal", parents=[common], help="star product, propagator, matrix base")
    m.add_argument("action", choices=["star", "propagator", "matrixbase"])
    m.add_argument("--f")
    m.add_argument("--g")
    m.add_argument("--x")
    m.add_argument("--y")
    m.add_argument("--cutoff", type=int)
    m.set_defaults(func=cmd_moyal)
    return p


DOMAIN_ERRORS = (ribbon.GraphError, parametric.DomainError, parametric.QuadratureFailure, dimreg.UnsupportedCase,
                 dimreg.FitFailure, moyal.DivergenceError, moyal.SingularMatrixError, moyal.QuadratureError,
                 rosette.ReductionError, OSError, ValueError)


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    try:
        cfg = load_config(args.config, overrides)
        args.func(args, cfg, out)
    except UsageError as exc:
        print(f"ncphi4: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssertionError, parametric.NormalizationError) as exc:
        print(f"ncphi4: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except DOMAIN_ERRORS as exc:
        print(f"ncphi4: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
