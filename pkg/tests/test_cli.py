import json

import numpy as np
import pytest

from kgnids.cli import main
from kgnids.features.extract import read_vectors_csv
from kgnids.features.mapping import FeatureSchema
from kgnids.kg.build import CONTINUE_PROMPT, SearchQuery, crawl
from kgnids.kg.compress import embed_strategies
from kgnids.kg.clients import ChatClient, EmbeddingClient, SearchClient
from kgnids.kg.core import (ClusterNode, FamilyNode, KnowledgeGraph, RepositoryNode, StrategyNode, read_graphml,
                            validate, write_graphml)
from kgnids.kg.transport import CallbackTransport, RecordingTransport


@pytest.fixture(autouse=True)
def no_env(monkeypatch):
    for k in ("KGNIDS_LM_BASE_URL", "KGNIDS_LM_API_KEY", "KGNIDS_SEARCH_TOKEN"):
        monkeypatch.delenv(k, raising=False)


def small_graph(path):
    g = KnowledgeGraph()
    g.add_node(FamilyNode("family:tcp", "TCP DoS"))
    g.add_node(FamilyNode("family:http", "HTTP DoS"))
    g.add_node(RepositoryNode("repo:r1", "https://github.com/a/r1", "family:tcp"))
    g.add_node(RepositoryNode("repo:r2", "https://github.com/a/r2", "family:http"))
    for sid, name, fam, repo in [("s1", "packet size", "family:tcp", "repo:r1"),
                                 ("s2", "zero window", "family:tcp", "repo:r1"),
                                 ("s3", "--packet-size", "family:http", "repo:r2"),
                                 ("s4", "keep alive", "family:http", "repo:r2")]:
        g.add_node(StrategyNode(sid, name, "", fam, repo))
    g.add_node(ClusterNode("cluster:size", {"s1", "s3"}, "s1"))
    write_graphml(g, path)
    return g


def test_pipeline_end_to_end(tmp_path, capsys):
    graph = tmp_path / "g.graphml"
    small_graph(graph)
    cfg = tmp_path / "scen.json"
    prof = {"n_clients": 40, "n_servers": 10, "session_rate": 10.0}
    cfg.write_text(json.dumps({"scenarios": [
        {"kind": "benign_poisson", "duration": 60, "rng_seed": 1, "profile": prof},
        {"kind": "zero_window", "duration": 6, "start": 57, "rng_seed": 2, "profile": prof}]}))
    d = tmp_path
    assert main(["generate", "--config", str(cfg), "--out", str(d / "t.tsv")]) == 0
    assert main(["reason", "--graph", str(graph), "--out", str(d / "rules.json")]) == 0
    rules = json.loads((d / "rules.json").read_text())
    assert set(rules["invariants"]) == {"s1", "s3"}
    assert main(["schema", "--graph", str(graph), "--rules", str(d / "rules.json"), "--out", str(d / "s.json"),
                 "--report", str(d / "map.json")]) == 0
    schema = FeatureSchema.load(d / "s.json")
    names = [s.name for s in schema.specs]
    assert "packet_size" in names and "tcp_zero_window" in names and "packet_size_dst" in names
    assert main(["extract", "--schema", str(d / "s.json"), "--input", str(d / "t.tsv"), "--out", str(d / "v.csv"),
                 "--f32", str(d / "v.f32"), "--idle-timeout", "30"]) == 0
    cols, X, ts, labels = read_vectors_csv(d / "v.csv")
    assert cols == schema.column_names and X.shape[1] == schema.dimension
    assert np.fromfile(d / "v.f32", "<f4").size == X.size
    assert main(["train", "--vectors", str(d / "v.csv"), "--model", "gmm", "--out", str(d / "m.json"),
                 "--params", '{"n_components": 3}', "--fpr", "0.01"]) == 0
    assert main(["evaluate", "--model", str(d / "m.json"), "--vectors", str(d / "v.csv"),
                 "--out", str(d / "r.json"), "--plot", str(d / "p.png")]) == 0
    report = json.loads((d / "r.json").read_text())
    assert "zero_window" in report["per_attack"] and report["model_id"] == "m"
    capsys.readouterr()
    assert main(["report", str(d / "r.json"), "--out", str(d / "table.txt")]) == 0
    out = capsys.readouterr().out
    assert "zero_window" in out and "F1@FPR=1%" in out and (d / "table.txt").read_text() == out


def test_train_with_grid(tmp_path):
    rng = np.random.default_rng(0)
    path = tmp_path / "v.csv"
    rows = ["ts,label,a,b"] + [f"{i},benign,{x:.6f},{y:.6f}" for i, (x, y) in enumerate(rng.random((300, 2)))]
    path.write_text("\n".join(rows) + "\n")
    grid = tmp_path / "grid.json"
    grid.write_text('{"n_components": [1, 2], "covariance_type": ["diag"]}')
    assert main(["train", "--vectors", str(path), "--model", "gmm", "--out", str(tmp_path / "m.json"),
                 "--grid", str(grid), "--grid-out", str(tmp_path / "cells.json")]) == 0
    cells = json.loads((tmp_path / "cells.json").read_text())
    assert cells["fitted"] == 2 and len(cells["cells"]) == 2


def test_compress_with_embeddings_and_replay(tmp_path):
    graph = tmp_path / "g.graphml"
    small_graph(graph)
    vecs = {"s1": [1.0, 0.0], "s2": [0.0, 1.0], "s3": [0.99, 0.05], "s4": [-1.0, 0.0]}

    def answer(r):
        order = ["s1", "s2", "s3", "s4"]
        return {"status": 200, "json": {"data": [{"index": i, "embedding": vecs[order[i]]}
                                                 for i in range(len(r["json"]["input"]))]}}
    rec = tmp_path / "emb.jsonl"
    strategies = sorted(read_graphml(graph).strategies, key=lambda s: s.id)
    embed_strategies(strategies, EmbeddingClient(RecordingTransport(CallbackTransport(answer), rec), api_key=""))
    (tmp_path / "vecs.json").write_text(json.dumps(vecs))
    assert main(["compress", "--graph", str(graph), "--out", str(tmp_path / "c1.graphml"),
                 "--embeddings", str(tmp_path / "vecs.json")]) == 0
    g1 = read_graphml(tmp_path / "c1.graphml")
    assert sorted(sorted(c.member_ids) for c in g1.clusters) == [["s1", "s3"], ["s2"], ["s4"]]
    assert main(["compress", "--graph", str(graph), "--out", str(tmp_path / "c2.graphml"),
                 "--replay", str(rec)]) == 0
    assert read_graphml(tmp_path / "c2.graphml") == g1
    # a recording that lacks the request is a miss, never a live call
    rec.write_text("")
    assert main(["compress", "--graph", str(graph), "--out", str(tmp_path / "c3.graphml"),
                 "--replay", str(rec)]) == 1


def test_crawl_from_recording(tmp_path):
    def answer(r):
        url = r["url"]
        if url.endswith("/readme"):
            return {"status": 200, "text": "Usage: flood [-a] [-b]"}
        if "search/repositories" in url:
            return {"status": 200, "json": {"items": [{"html_url": "https://github.com/a/x", "full_name": "a/x",
                                                       "description": "TCP flood"}]}}
        last = r["json"]["messages"][-1]["content"]
        if last == CONTINUE_PROMPT:
            return {"status": 200, "json": {"choices": [{"message": {"content": "NO"}}]}}
        body = '{"relevant": true, "strategies": [{"name": "-a"}, {"name": "-b"}]}'
        return {"status": 200, "json": {"choices": [{"message": {"content": body}}]}}

    rec = tmp_path / "net.jsonl"
    t = RecordingTransport(CallbackTransport(answer), rec)
    q = [SearchQuery("TCP DoS", ["TCP"], ["Flood"])]
    g0, _ = crawl(q, SearchClient(t), ChatClient(t), workers=1)
    (tmp_path / "q.json").write_text(json.dumps([{"family": "TCP DoS", "base_keywords": ["TCP"],
                                                  "variations": ["Flood"]}]))
    assert main(["crawl", "--queries", str(tmp_path / "q.json"), "--replay", str(rec), "--out",
                 str(tmp_path / "g.graphml"), "--workers", "1", "--log", str(tmp_path / "log.json")]) == 0
    g = read_graphml(tmp_path / "g.graphml")
    assert g == g0 and validate(g) == [] and len(g.strategies) == 2
    assert json.loads((tmp_path / "log.json").read_text())[0]["relevance"] == "RELEVANT"


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.graphml"
    bad.write_text("<graphml>\n<graph>\n")
    assert main(["reason", "--graph", str(bad), "--out", str(tmp_path / "r.json")]) == 1
    assert "malformed XML" in capsys.readouterr().err
    assert main(["generate", "--scenario", "mn_flood", "--duration", "0", "--out", str(tmp_path / "x.tsv")]) == 1
    with pytest.raises(SystemExit):
        main(["train"])
