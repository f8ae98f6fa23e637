import csv
import json

import numpy as np
import pytest

from gegcn.cli import main
from gegcn.graph import WeightedGraph
from gegcn.io import save_graph

from conftest import random_connected_graph

QUICK = ["--max-epochs", "15", "--patience", "10", "--hidden", "8", "--lstm-hidden", "4"]


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(0)
    g = random_connected_graph(rng, 18, features=4, classes=2)
    g = WeightedGraph.from_edges(g.n, g.edges, None, g.features, g.labels, "toy")
    save_graph(g, tmp_path / "g.json")
    assert main(["precompute", "--graph", str(tmp_path / "g.json"), "--T", "2",
                 "--out", str(tmp_path / "s.jsonl")]) == 0
    return tmp_path


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_convert_planetoid(tmp_path, capsys):
    (tmp_path / "toy.content").write_text("a 1 0 X\nb 0 1 Y\nc 1 1 X\n")
    (tmp_path / "toy.cites").write_text("a b\nb c\n")
    assert main(["convert", str(tmp_path), "--format", "planetoid-raw",
                 "--out", str(tmp_path / "o.json")]) == 0
    assert "n=3 edges=2" in capsys.readouterr().out
    assert main(["convert", str(tmp_path / "o.json"), "--format", "normalized-json",
                 "--out", str(tmp_path / "o2.json")]) == 0
    assert (tmp_path / "o.json").read_bytes() == (tmp_path / "o2.json").read_bytes()


def test_precompute_samples(workspace, capsys):
    assert main(["precompute", "--graph", str(workspace / "g.json"), "--T", "1",
                 "--out", str(workspace / "t1.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "step  1" in out
    lines = (workspace / "t1.jsonl").read_text().splitlines()
    g = json.loads((workspace / "g.json").read_text())
    assert len(lines) == 1 + len(g["edges"]) + g["n"]
    assert all(len(json.loads(ln)["kappa"]) == 2 for ln in lines[1:])


def test_config_precedence(workspace):
    cfg = workspace / "c.json"
    cfg.write_text(json.dumps({"flow": {"T": 3, "delta": 0.5}}))
    assert main(["precompute", "--graph", str(workspace / "g.json"), "--config", str(cfg),
                 "--delta", "0.25", "--out", str(workspace / "p.jsonl")]) == 0
    head = json.loads((workspace / "p.jsonl").read_text().splitlines()[0])
    assert head["T"] == 3 and head["delta"] == 0.25 and head["alpha"] == 0.5


def test_train_and_report(workspace, capsys):
    g, s, runs = str(workspace / "g.json"), str(workspace / "s.jsonl"), workspace / "runs"
    assert main(["train", "--graph", g, "--mode", "gcn-baseline", "--seeds", "3",
                 "--out", str(runs)] + QUICK) == 0
    assert "±" in capsys.readouterr().out
    assert main(["train", "--graph", g, "--seq", s, "--mode", "gegcn", "--seeds", "3",
                 "--reuse-splits", "--out", str(runs)] + QUICK) == 0
    assert main(["train", "--graph", g, "--seq", s, "--mode", "ablate-mean", "--seeds", "3",
                 "--reuse-splits", "--out", str(runs)] + QUICK) == 0
    assert len(list(runs.glob("run_gegcn_seed*.json"))) == 3
    rec = json.loads((runs / "run_gegcn_seed0.json").read_text())
    assert set(rec) >= {"config", "seed", "best_val", "test_acc", "epochs", "curve"}
    assert rec["config"]["train"]["max_epochs"] == 15
    assert main(["report", str(runs), "--out", str(workspace / "r.csv"),
                 "--long", str(workspace / "l.csv")]) == 0
    table = read_csv(workspace / "r.csv")
    assert table[0] == ["mode", "toy"]
    assert [r[0] for r in table[1:]] == ["gegcn", "gcn-baseline", "ablate-mean"]
    assert len(read_csv(workspace / "l.csv")) == 4


def test_train_determinism(workspace):
    g, s = str(workspace / "g.json"), str(workspace / "s.jsonl")
    for d in ("a", "b"):
        assert main(["train", "--graph", g, "--seq", s, "--seeds", "2",
                     "--out", str(workspace / d)] + QUICK) == 0
    for k in (0, 1):
        a = (workspace / "a" / f"run_gegcn_seed{k}.json").read_text()
        b = (workspace / "b" / f"run_gegcn_seed{k}.json").read_text()
        assert a == b


def test_sweep_depth(workspace):
    out = workspace / "d.csv"
    assert main(["sweep", "--kind", "depth", "--grid", "2,4,8", "--graph",
                 str(workspace / "g.json"), "--mode", "gcn-baseline", "--seeds", "2",
                 "--out", str(out)] + QUICK) == 0
    rows = read_csv(out)
    assert rows[0][:4] == ["grid_value", "mean", "std", "n_seeds"]
    assert [r[0] for r in rows[1:]] == ["2", "4", "8"]


def test_sweep_flow_T(workspace):
    out = workspace / "t.csv"
    assert main(["sweep", "--kind", "flow-T", "--grid", "1,2", "--graph",
                 str(workspace / "g.json"), "--seq", str(workspace / "s.jsonl"), "--seeds", "1",
                 "--out", str(out)] + QUICK) == 0
    assert len(read_csv(out)) == 3


def test_exit_codes(workspace, tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty), "--out", str(tmp_path / "x.csv")]) == 2
    assert "no runs found" in capsys.readouterr().err
    g = str(workspace / "g.json")
    assert main(["train", "--graph", g, "--out", str(tmp_path / "r")]) == 2
    assert main(["train", "--graph", g, "--mode", "gcn-baseline", "--lr", "-1",
                 "--out", str(tmp_path / "r")]) == 2
    assert main(["precompute", "--graph", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "s")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"nonsense": 1}}))
    assert main(["train", "--graph", g, "--mode", "gcn-baseline", "--config", str(bad),
                 "--out", str(tmp_path / "r")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["train"])
    assert info.value.code == 2


def test_runtime_failure_exit_code(workspace, monkeypatch):
    from gegcn import cli
    from gegcn.flow import FlowError

    def boom(g, cfg):
        raise FlowError(3, "transport diverged")

    monkeypatch.setattr(cli, "run_flow", boom)
    assert main(["precompute", "--graph", str(workspace / "g.json"),
                 "--out", str(workspace / "z.jsonl")]) == 3
