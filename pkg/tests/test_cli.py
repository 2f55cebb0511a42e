import json
import re
import subprocess
import sys

import numpy as np
import pytest

from mpir import cli, cli_io

TRAIN = ["--epochs", "400", "--warmup", "40", "--lr", "1e-2"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def copy_csv(tmp_path):
    out = tmp_path / "copy.csv"
    assert run("generate", "--probe", "copy-pair", "--length", 1200, "--seed", 0, "--out", out) == 0
    return out


def test_generate_writes_csv_and_truth(tmp_path):
    out = tmp_path / "g.csv"
    assert run("generate", "--n", 4, "--k", 3, "--seed", 30, "--out", out, "--rollouts", 20) == 0
    bundle = cli_io.load_csv(out)
    assert bundle.n_series == 4 and bundle.lengths == [22] * 20
    truth = cli_io.ResultsDocument.read(str(out) + ".truth.json")
    assert truth.kind == "ground_truth"
    assert cli_io.graph_from_tree(truth.body["graph"]).A.shape == (4, 4, 3, 1)
    assert truth.manifest["data_sha256"] == cli_io.fingerprint(bundle)


def test_discover_then_report_shows_the_copy_edge(tmp_path, copy_csv):
    res = tmp_path / "w.json"
    assert run("discover", "--data", copy_csv, "--k", 3, "--seed", 0, "--out", res, *TRAIN) == 0
    doc = cli_io.ResultsDocument.read(res)
    th = cli_io.decode_array(doc.body["thresholded"])
    off = th * (1 - np.eye(2))
    assert off[0, 1] > 0 and off[1, 0] == 0
    assert doc.manifest["config"]["lam"] == 0.002 and doc.manifest["config"]["eta0"] == 0.01
    svg_dir = tmp_path / "svg"
    assert run("report", "--results", res, "--format", "svg", "--out", svg_dir) == 0
    svg = (svg_dir / "heatmap.svg").read_text()
    labels = re.findall(r'font-size="10">([0-9.]+)</text>', svg)
    assert sum(float(v) > 0 for v in labels) == 1
    table = tmp_path / "t.txt"
    assert run("report", "--results", res, "--out", table) == 0
    assert "threshold" in table.read_text()


def test_discover_twice_same_body(tmp_path, copy_csv):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run("discover", "--data", copy_csv, "--out", out, "--epochs", 30, "--warmup", 5) == 0
    da, db = cli_io.ResultsDocument.read(a), cli_io.ResultsDocument.read(b)
    assert da.body_json() == db.body_json()
    assert da.manifest["config"] == db.manifest["config"]


def test_config_file_and_flag_override(tmp_path, copy_csv):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lam": 0.01, "epochs": 20, "warmup": 2, "seed": 5}))
    out = tmp_path / "o.json"
    assert run("discover", "--data", copy_csv, "--config", cfg, "--seed", 7, "--out", out) == 0
    conf = cli_io.ResultsDocument.read(out).manifest["config"]
    assert (conf["lam"], conf["epochs"], conf["seed"]) == (0.01, 20, 7)


def test_baselines_via_cli(tmp_path, copy_csv):
    for method in ("linear_granger", "mutual_information"):
        out = tmp_path / f"{method}.json"
        assert run("baseline", "--method", method, "--data", copy_csv, "--out", out) == 0
        s = cli_io.ResultsDocument.read(out).body["matrices"][0]
        m = cli_io.decode_array(s["scores"])
        assert m[0, 1] > m[1, 0] or method == "mutual_information"
    out = tmp_path / "r.json"
    assert run("baseline", "--method", "gaussian_random", "--count", 5, "--data", copy_csv, "--out", out) == 0
    assert len(cli_io.ResultsDocument.read(out).body["matrices"]) == 5


def test_benchmark_gaussian_random(tmp_path):
    out = tmp_path / "b.json"
    assert run("benchmark", "--methods", "gaussian_random", "--n-list", 5, "--seeds", 0,
               "--rollouts", 10, "--out", out) == 0
    doc = cli_io.ResultsDocument.read(out)
    agg = doc.body["aggregate"][0]
    assert abs(100 * agg["auc_roc_mean"] - 50.0) <= 0.5
    table = tmp_path / "t.txt"
    assert run("report", "--results", out, "--out", table) == 0
    assert "gaussian_random" in table.read_text()


def test_benchmark_twice_same_body(tmp_path):
    outs = [tmp_path / "a.json", tmp_path / "b.json"]
    for out in outs:
        assert run("benchmark", "--methods", "mpir,linear_granger", "--n-list", 3, "--seeds", "0,30",
                   "--rollouts", 30, "--epochs", 20, "--warmup", 2, "--out", out) == 0
    a, b = (cli_io.ResultsDocument.read(p) for p in outs)
    assert a.body_json() == b.body_json()


def test_select_lambda_via_cli(tmp_path, copy_csv):
    out = tmp_path / "l.json"
    assert run("select-lambda", "--data", copy_csv, "--candidates", "0.001,0.05", "--epochs", 30,
               "--warmup", 5, "--out", out) == 0
    body = cli_io.ResultsDocument.read(out).body
    assert [d["lam"] for d in body["diagnostics"]] == [0.001, 0.05]
    assert run("report", "--results", out, "--out", tmp_path / "t.txt") == 0


def test_exit_codes(tmp_path, copy_csv, capsys):
    with pytest.raises(SystemExit) as e:
        run("discover", "--data", tmp_path / "missing.csv")
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        run("discover", "--data", copy_csv, "--bogus")
    assert e.value.code == 2
    assert run("discover", "--data", copy_csv, "--epochs", 10) == 2  # warmup 400 >= epochs
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,x\n")
    assert run("discover", "--data", bad) == 3
    assert "line 3" in capsys.readouterr().err
    const = tmp_path / "const.csv"
    const.write_text("a,b\n" + "".join(f"{i},1\n" for i in range(30)))
    assert run("discover", "--data", const, "--normalize") == 3
    assert run("select-lambda", "--data", copy_csv, "--candidates", "0.1,0.01") == 2


def test_console_entry_point(tmp_path):
    out = tmp_path / "p.csv"
    proc = subprocess.run([sys.executable, "-m", "mpir.cli", "generate", "--probe", "independent-pair",
                           "--length", "50", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
