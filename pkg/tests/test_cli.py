import io
import json

import pytest

from corpus import bubble, bubble_chain_2pt, crossed_tadpole, planar_tadpole
from ncphi4 import cli, graphio
from ncphi4.parametric import HUPolynomial, hu_extract


def run(*argv):
    out = io.StringIO()
    code = cli.main([str(a) for a in argv], out=out)
    return code, out.getvalue()


@pytest.fixture
def graphs(tmp_path):
    paths = {}
    for name, f in [("bubble", bubble), ("chain", bubble_chain_2pt), ("crossed", crossed_tadpole),
                    ("tadpole", planar_tadpole)]:
        paths[name] = tmp_path / f"{name}.graph"
        graphio.dump(f(), paths[name])
    return paths


def test_analyze_bubble(graphs):
    code, out = run("analyze", graphs["bubble"])
    assert code == 0
    assert out.splitlines() == ["# ncphi4 analyze", "# seed 0", "N=2 L=2 Ne=4 F=2 B=1 g=0 omega=0 class=divergent"]


def test_inconsistent_s_and_omega_is_usage_error(graphs, capsys):
    code, _ = run("analyze", graphs["bubble"], "--s", 2, "--Omega", 1)
    assert code == cli.EXIT_USAGE
    assert "s·Ω ≠ 1" in capsys.readouterr().err


def test_consistent_s_and_omega_accepted(graphs):
    assert run("analyze", graphs["bubble"], "--s", 2, "--Omega", 0.5)[0] == 0


def test_hu_machine_dump_byte_identical_and_round_trips(graphs):
    outs = [run("hu", graphs["bubble"], "--format", "machine")[1] for _ in range(3)]
    assert len(set(outs)) == 1
    doc = json.loads(outs[0])
    assert list(doc) == sorted(doc)
    assert HUPolynomial.parse_dump(doc["result"]["dump"]).terms == hu_extract(bubble()).terms


def test_poles_independent_of_threads(graphs):
    a = run("dimreg", "poles", graphs["chain"], "--format", "machine", "--threads", 1)[1]
    b = run("dimreg", "poles", graphs["chain"], "--format", "machine", "--threads", 8)[1]
    assert a == b
    assert json.loads(a)["result"]["poles"][0]["D"] == "2"


def test_amplitude_external_points_and_seed(graphs):
    code, out = run("amplitude", graphs["crossed"], "--D", 4, "--external", "0,0,0,0;1,0,0,0")
    assert code == 0 and "value" in out
    a = run("amplitude", graphs["crossed"], "--D", 4, "--seed", 3)[1]
    b = run("amplitude", graphs["crossed"], "--D", 4, "--seed", 3)[1]
    assert a == b and "# seed 3" in a


def test_amplitude_above_pole_is_domain_error(graphs):
    assert run("amplitude", graphs["tadpole"], "--D", 3)[0] == cli.EXIT_DOMAIN


def test_bad_external_shape_is_usage_error(graphs):
    assert run("amplitude", graphs["crossed"], "--D", 4, "--external", "1,2")[0] == cli.EXIT_USAGE


def test_rosette_rejects_non_tree(graphs):
    assert run("rosette", graphs["bubble"], "--tree", "0,1")[0] == cli.EXIT_DOMAIN
    code, out = run("rosette", graphs["bubble"], "--moyality")
    assert code == 0 and "u[0]" not in out


def test_missing_and_malformed_graph(tmp_path, graphs):
    assert run("analyze", tmp_path / "none.graph")[0] == cli.EXIT_DOMAIN
    bad = tmp_path / "bad.graph"
    bad.write_text('{"vertices": {"V": ["a", "b", "c"]}, "lines": []}')
    assert run("analyze", bad)[0] == cli.EXIT_DOMAIN
    bad.write_text("{not json")
    assert run("analyze", bad)[0] == cli.EXIT_DOMAIN


def test_usage_errors():
    assert run()[0] == cli.EXIT_USAGE
    assert run("frobnicate")[0] == cli.EXIT_USAGE
    assert run("analyze", "x.graph", "--rtol", 0)[0] == cli.EXIT_USAGE


def test_config_file_and_flag_precedence(tmp_path, graphs, monkeypatch):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"theta": 2.0, "seed": 5}))
    doc = json.loads(run("analyze", graphs["bubble"], "--config", cfg, "--format", "machine")[1])
    assert doc["config"]["theta"] == 2.0 and doc["seed"] == 5
    doc = json.loads(run("analyze", graphs["bubble"], "--config", cfg, "--theta", 3, "--format", "machine")[1])
    assert doc["config"]["theta"] == 3.0
    monkeypatch.setenv(cli.CONFIG_ENV, str(cfg))
    assert json.loads(run("analyze", graphs["bubble"], "--format", "machine")[1])["seed"] == 5


def test_bad_config_is_usage_error(tmp_path, graphs):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"nonsense": 1}))
    assert run("analyze", graphs["bubble"], "--config", cfg)[0] == cli.EXIT_USAGE
    cfg.write_text("{")
    assert run("analyze", graphs["bubble"], "--config", cfg)[0] == cli.EXIT_USAGE


def test_invariant_failure_exit_code(graphs, monkeypatch):
    def broken(g):
        raise AssertionError("Euler relation violated")
    monkeypatch.setattr(cli.ribbon, "topology", broken)
    assert run("analyze", graphs["bubble"])[0] == cli.EXIT_INVARIANT


def test_moyal_commands(tmp_path):
    f = tmp_path / "f.json"
    f.write_text(json.dumps({"M": [[1 if i == j else 0 for j in range(4)] for i in range(4)]}))
    code, out = run("moyal", "star", "--f", f, "--g", f, "--x", "0,0,0,0", "--format", "machine")
    assert code == 0 and "value" in json.loads(out)["result"]
    assert run("moyal", "propagator", "--x", "0,0,0,0", "--y", "1,0,0,0")[0] == 0
    code, out = run("moyal", "matrixbase", "--cutoff", 4, "--format", "machine")
    assert code == 0 and json.loads(out)["result"]["residual"] < 1e-12
    assert run("moyal", "star", "--f", f)[0] == cli.EXIT_USAGE
