import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kgnids.kg.clients import EmbeddingClient
from kgnids.kg.compress import (ClusteringConfig, EmbeddingError, StrategyEmbedding, cluster, compress,
                                embed_strategies, pairwise_distances, select_representative)
from kgnids.kg.core import ClusterNode, FamilyNode, KnowledgeGraph, RepositoryNode, StrategyNode, validate
from kgnids.kg.transport import CallbackTransport
from kgnids.reasoning import (ReasoningError, RuleReport, apply_rules, cross_family_invariants, frequency,
                              transitive_closure)

from oracles import closure_by_matrix_power, random_graph


def emb(pairs):
    return [StrategyEmbedding(i, v if isinstance(v, (list, tuple)) else [v]) for i, v in pairs]


def strategies(n):
    return [StrategyNode(f"s{i}", f"name {i}", "desc", "family:f", "repo:r") for i in range(n)]


def embed_transport(dims):
    dims = list(dims)

    def answer(r):
        return {"status": 200, "json": {"data": [{"index": i, "embedding": [0.5] * dims.pop(0)}
                                                 for i in range(len(r["json"]["input"]))]}}
    return CallbackTransport(answer)


# -- embeddings --------------------------------------------------------------

def test_embed_zero_strategies():
    assert embed_strategies([], EmbeddingClient(CallbackTransport(pytest.fail), api_key="")) == []


def test_embed_three():
    out = embed_strategies(strategies(3), EmbeddingClient(embed_transport([4, 4, 4]), api_key=""))
    assert [e.strategy_id for e in out] == ["s0", "s1", "s2"] and {len(e.vector) for e in out} == {4}


def test_embed_dimension_mismatch():
    with pytest.raises(EmbeddingError, match="dimension"):
        embed_strategies(strategies(2), EmbeddingClient(embed_transport([5, 4]), api_key=""))


def test_non_finite_embedding_rejected():
    with pytest.raises(ValueError):
        StrategyEmbedding("s", [1.0, float("nan")])


# -- clustering --------------------------------------------------------------

def test_single_point():
    assert cluster(emb([("a", 1.0)])) == [{"a"}]


def test_hand_example():
    cfg = ClusteringConfig("euclidean", 1.0)
    assert cluster(emb([("x0", 0.0), ("x1", 0.1), ("x5", 5.0)]), cfg) == [{"x0", "x1"}, {"x5"}]


def test_threshold_below_all_distances():
    pts = emb([(f"p{i}", float(i)) for i in range(5)])
    assert cluster(pts, ClusteringConfig("euclidean", 0.5)) == [{f"p{i}"} for i in range(5)]


def test_cluster_errors():
    with pytest.raises(ValueError):
        cluster([])
    with pytest.raises(EmbeddingError):
        cluster([StrategyEmbedding("a", [1.0]), StrategyEmbedding("b", [1.0, 2.0])])
    with pytest.raises(ValueError):
        ClusteringConfig(cut_threshold=0)
    with pytest.raises(ValueError):
        ClusteringConfig(linkage="single")


def test_cosine_distance_range():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])
    d = pairwise_distances(x, "cosine")
    assert d[0, 1] == pytest.approx(1.0) and d[0, 2] == pytest.approx(2.0)
    assert np.all(np.diag(d) == 0) and np.allclose(d, d.T)


def test_representative_examples():
    assert select_representative(emb([("only", 3.0)]), "euclidean") == "only"
    assert select_representative(emb([("A", 0.0), ("B", 1.0), ("C", 2.0)]), "euclidean") == "B"
    assert select_representative(emb([("b", 0.0), ("a", 1.0)]), "euclidean") == "a"


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=12),
       st.floats(0.1, 4.0), st.randoms(use_true_random=False))
def test_partition_bound_and_permutation_invariance(points, thr, rnd):
    cfg = ClusteringConfig("euclidean", thr)
    items = emb([(f"s{i:02d}", list(map(float, p))) for i, p in enumerate(points)])
    out = cluster(items, cfg)
    ids = sorted(e.strategy_id for e in items)
    assert sorted(x for c in out for x in c) == ids
    vec = {e.strategy_id: np.array(e.vector) for e in items}
    for c in out:
        members = sorted(c)
        for a in members:
            for b in members:
                assert np.linalg.norm(vec[a] - vec[b]) <= thr
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert cluster(shuffled, cfg) == out
    for c in out:
        group = [e for e in items if e.strategy_id in c]
        rnd.shuffle(group)
        assert select_representative(group, "euclidean") == select_representative(
            [e for e in items if e.strategy_id in c], "euclidean")


def test_compress_adds_clusters():
    g = KnowledgeGraph()
    g.add_node(FamilyNode("family:f", "F"))
    g.add_node(RepositoryNode("repo:r", "https://x/r", "family:f"))
    for s in strategies(3):
        g.add_node(s)
    g.add_node(ClusterNode("cluster:old", {"s0"}, "s0"))
    e = emb([("s0", [1.0, 0.0]), ("s1", [0.99, 0.05]), ("s2", [0.0, 1.0])])
    out = compress(g, e)
    assert "cluster:old" not in out.nodes and "cluster:old" in g.nodes
    assert sorted(sorted(c.member_ids) for c in out.clusters) == [["s0", "s1"], ["s2"]]
    assert validate(out) == []
    with pytest.raises(ValueError, match="no embedding"):
        compress(g, e[:2])


# -- reasoning ---------------------------------------------------------------

def four_repo_graph():
    g = KnowledgeGraph()
    g.add_node(FamilyNode("family:tcp", "TCP DoS"))
    g.add_node(FamilyNode("family:http", "HTTP DoS"))
    g.add_node(FamilyNode("family:ssh", "SSH"))
    fams = ["family:tcp", "family:tcp", "family:http", "family:ssh"]
    for i, f in enumerate(fams, 1):
        g.add_node(RepositoryNode(f"repo:r{i}", f"https://x/r{i}", f))
    return g


def add(g, sid, repo):
    g.add_node(StrategyNode(sid, sid, "", g.nodes[repo].family_id, repo))


def test_frequency_examples():
    g = four_repo_graph()
    for i in range(1, 5):
        add(g, f"a{i}", f"repo:r{i}")
    add(g, "lonely", "repo:r1")
    g.add_node(ClusterNode("cluster:a", {"a1", "a2", "a3", "a4"}, "a1"))
    assert frequency(g, "a3") == 1.0
    assert frequency(g, "lonely") == 0.25
    with pytest.raises(ReasoningError):
        frequency(g, "nope")
    empty = KnowledgeGraph()
    empty.add_node(FamilyNode("family:f", "F"))
    with pytest.raises(ReasoningError):
        frequency(empty, "x")


def test_transitive_examples():
    g = four_repo_graph()
    add(g, "s1", "repo:r1")
    add(g, "s2", "repo:r1")
    add(g, "s3", "repo:r2")
    add(g, "s4", "repo:r2")
    add(g, "alone", "repo:r3")
    g.add_node(ClusterNode("cluster:x", {"s2", "s3"}, "s2"))
    assert transitive_closure(g, "s1") == {"s2", "s3", "s4"}
    assert transitive_closure(g, "alone") == set()
    assert closure_by_matrix_power(g)["s1"] == {"s2", "s3", "s4"}
    with pytest.raises(ReasoningError):
        transitive_closure(g, "missing")


def test_cross_family_examples():
    g = four_repo_graph()
    add(g, "t", "repo:r1")
    add(g, "h", "repo:r3")
    add(g, "t2", "repo:r2")
    g.add_node(ClusterNode("cluster:th", {"t", "h"}, "t"))
    assert cross_family_invariants(g) == {"t", "h"}
    assert cross_family_invariants(g, strict=True) == set()
    assert "t2" not in cross_family_invariants(g)
    with pytest.raises(ReasoningError):
        cross_family_invariants(g, 1)


def test_rule_report_json_round_trip():
    g = random_graph(np.random.default_rng(5), n_families=3)
    r = apply_rules(g)
    back = RuleReport.from_json(r.to_json())
    assert back.frequencies == r.frequencies
    assert back.transitive_sets == r.transitive_sets
    assert back.invariant_strategies == r.invariant_strategies


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_rule_report_invariants(seed):
    g = random_graph(np.random.default_rng(seed))
    r = apply_rules(g)
    ids = {s.id for s in g.strategies}
    assert all(0.0 <= v <= 1.0 for v in r.frequencies.values())
    assert all(k not in v and v <= ids for k, v in r.transitive_sets.items())
    assert r.invariant_strategies <= ids
    # closure is symmetric
    for a, others in r.transitive_sets.items():
        for b in others:
            assert a in r.transitive_sets[b]
    assert all(a < b for a, b in r.pairs())
