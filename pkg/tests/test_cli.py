import json

import pytest

from streamhop.cli import read_hopset, run


@pytest.fixture
def unweighted(tmp_path):
    p = tmp_path / "g.txt"
    assert run(["gen", "--n", "120", "--m", "300", "--churn", "1", "--seed", "4", "--out", str(p)]) == 0
    return p


@pytest.fixture
def weighted(tmp_path):
    p = tmp_path / "w.txt"
    assert run(["gen", "--n", "30", "--m", "70", "--weighted", "--max-weight", "4", "--seed", "2",
                "--out", str(p)]) == 0
    return p


def test_stats(unweighted, capsys):
    capsys.readouterr()
    assert run(["stats", "--stream", str(unweighted)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["n"] == 120 and out["strict_turnstile"] and out["schema"] == "1"


def test_spanner_deterministic_and_order_free(unweighted, tmp_path):
    outs = []
    for extra in ([], [], ["--permute-seed", "9"]):
        o = tmp_path / f"s{len(outs)}.txt"
        rep = tmp_path / f"r{len(outs)}.json"
        assert run(["spanner", "--stream", str(unweighted), "--eps", "0.5", "--kappa", "4", "--rho", "0.5",
                    "--seed", "1", "--pairs", "100", "--out", str(o), "--report", str(rep)] + extra) == 0
        outs.append(o.read_bytes())
    assert outs[0] == outs[1] == outs[2]
    report = json.loads(rep.read_text())
    for key in ("schema", "passes", "peak_sketch_bytes", "per_module_peak_bytes", "output_size", "params",
                "timings", "validation"):
        assert key in report
    assert report["validation"]["ok"]
    assert run(["validate", "--graph", str(unweighted), "--spanner", str(o), "--eps", "0.5",
                "--beta", str(report["params"]["beta"])]) == 0


def test_hopset_roundtrip_and_validate(weighted, tmp_path):
    o = tmp_path / "h.txt"
    assert run(["hopset", "--stream", str(weighted), "--eps", "0.5", "--kappa", "2", "--rho", "0.5",
                "--auto-lambda", "--beta-override", "4", "--path-reporting", "--seed", "3",
                "--out", str(o)]) == 0
    edges = read_hopset(o)
    assert edges and all(e.path is not None for e in edges)
    assert run(["validate", "--graph", str(weighted), "--hopset", str(o), "--eps", "0.5", "--beta", "9"]) == 0


def test_validate_reports_failure(weighted, tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 0.0001 0\n")
    assert run(["validate", "--graph", str(weighted), "--hopset", str(bad), "--eps", "0.1", "--beta", "3"]) == 3


def test_asp_rows(weighted, tmp_path):
    o = tmp_path / "a.tsv"
    assert run(["asp", "--stream", str(weighted), "--sources", "1,5", "--eps", "0.5", "--rho", "0.5",
                "--weighted", "--beta-override", "4", "--kappa", "2", "--paths", "--out", str(o)]) == 0
    rows = [line.split("\t") for line in o.read_text().splitlines()]
    assert rows and all(len(r) == 4 for r in rows)
    assert all(r[3].split()[0] == r[0] and r[3].split()[-1] == r[1] for r in rows)


@pytest.mark.parametrize("argv", [
    ["gen", "--n", "1", "--m", "3", "--out", "x"],
    ["stats", "--stream", "/nonexistent/stream.txt"],
    ["spanner", "--stream", "{g}", "--eps", "2", "--kappa", "4", "--rho", "0.5", "--out", "{o}"],
    ["hopset", "--stream", "{g}", "--eps", "0.5", "--kappa", "2", "--rho", "0.5", "--out", "{o}"],
    ["asp", "--stream", "{g}", "--sources", "a,b", "--eps", "0.5", "--rho", "0.5", "--out", "{o}"],
    ["validate", "--graph", "{g}", "--eps", "0.5", "--beta", "3"],
    ["spanner", "--stream", "{g}"],
    ["--threads", "0", "stats", "--stream", "{g}"],
])
def test_bad_input_exits_2(argv, unweighted, tmp_path):
    argv = [a.format(g=unweighted, o=tmp_path / "o.txt") for a in argv]
    assert run(argv) == 2


def test_malformed_stream(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("not a stream\n")
    assert run(["stats", "--stream", str(p)]) == 2
