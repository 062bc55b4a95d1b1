import json
import math

import pytest

from lmodp.cli import main
from lmodp.mgf import Degenerate, MixtureSpec


def laplace_total(delta=1e-10):
    best = math.inf
    for a in range(2, 129):
        e = math.log(a / (2 * a - 1) * math.exp(a - 1)
                     + (a - 1) / (2 * a - 1) * math.exp(-a)) / (a - 1)
        best = min(best, e + math.log(1 / delta) / (a - 1))
    return best


@pytest.fixture
def deg_spec(tmp_path):
    path = tmp_path / "deg.json"
    path.write_text(json.dumps(MixtureSpec.single(Degenerate(1.0)).to_dict()))
    return path


def test_account(tmp_path, deg_spec, capsys):
    out = tmp_path / "acc"
    assert main(["account", "--spec", str(deg_spec), "--out", str(out)]) == 0
    body = json.loads((out / "account.json").read_text())
    assert body["eps_total"] == pytest.approx(laplace_total(), rel=1e-12)
    printed = capsys.readouterr().out.strip().splitlines()
    assert printed[0].startswith("2,") and len(printed) == 128
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 42 and len(manifest["config_sha256"]) == 64
    assert manifest["config"]["spec"]["mode"] == "mixture"


def test_out_dir_from_environment(tmp_path, deg_spec, monkeypatch):
    monkeypatch.setenv("LMODP_OUT", str(tmp_path / "env"))
    assert main(["account", "--spec", str(deg_spec)]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_search_infeasible_exit_code(tmp_path, capsys):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"budget": {"eps": 1e-9, "delta": 1e-10},
                               "components": ["degenerate"], "degenerate_values": [0.5, 1.0]}))
    assert main(["search", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NoFeasibleCandidate" and err["exit_code"] == 2


def test_usage_and_io_errors(tmp_path, capsys):
    assert main(["nope"]) == 1
    assert main(["account", "--spec", str(tmp_path / "missing.json")]) == 1
    assert json.loads(capsys.readouterr().err.splitlines()[-1])["error"] == "FileNotFoundError"
    assert main(["sample", "--out", str(tmp_path)]) == 1


def test_sample_csv_and_histogram(tmp_path, deg_spec):
    out = tmp_path / "s"
    assert main(["sample", "--spec", str(deg_spec), "--d", "3", "--n", "5", "--out", str(out)]) == 0
    lines = (out / "samples.csv").read_text().splitlines()
    assert lines[0] == "w0,w1,w2" and len(lines) == 6
    assert main(["sample", "--sigma", "2", "--n", "1000", "--format", "hist",
                 "--out", str(out)]) == 0
    hist = json.loads((out / "histogram.json").read_text())
    assert sum(hist["counts"]) <= 1000 and len(hist["edges"]) == 1025


def run_twice(tmp_path, argv, files):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(argv + ["--out", str(out)]) == 0
        outs.append({f: (out / f).read_bytes() for f in files})
        m = json.loads((out / "manifest.json").read_text())
        outs[-1]["manifest"] = {k: v for k, v in m.items() if k not in ("created_at", "argv")}
    return outs


def test_search_deterministic(tmp_path):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"base": "default", "budget": {"eps": 1.0, "delta": 1e-10},
                               "uniform_pairs": [[0.5, 0.51], [1.0, 1.02], [1.3, 1.33]]}))
    a, b = run_twice(tmp_path, ["search", "--config", str(cfg)], ["search_result.json"])
    assert a == b


def test_train_deterministic_and_baseline(tmp_path, capsys):
    a, b = run_twice(tmp_path, ["train", "--steps", "300"], ["ledger.json", "metrics.csv",
                                                             "params.txt"])
    assert a == b
    acc = float(capsys.readouterr().out.split("accuracy=")[1].split()[0])
    assert acc >= 0.95


def test_train_with_noise_file(tmp_path, capsys):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"budget": {"eps": 2.0, "delta": 1e-10},
                               "components": ["degenerate"],
                               "degenerate_values": [0.01, 0.05, 0.1],
                               "steps": 50, "budget_scope": "total"}))
    assert main(["search", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert main(["train", "--steps", "50", "--noise", str(tmp_path / "search_result.json"),
                 "--out", str(tmp_path / "t")]) == 0
    ledger = json.loads((tmp_path / "t" / "ledger.json").read_text())
    assert ledger["eps_total"] <= 2.0
    assert main(["train", "--steps", "5", "--sigma", "2", "--noise", "x", "--out",
                 str(tmp_path)]) == 1
