import random

import numpy as np
import pytest

from ctg.errors import BackendFailure, EmptyIndex, UnknownNode
from ctg.graph import CausalVariable
from ctg.retrieval import (
    DEFAULT_K,
    DEFAULT_P,
    HashEmbeddingBackend,
    VectorIndex,
    expand,
    node_text,
    retrieve_for_document,
)

from helpers import mkgraph, random_dag
from oracles import cosine_rank_oracle, expand_oracle


class OneHotBackend:
    """Stub emitting one-hot vectors keyed by exact text matches."""

    model_tag = "one-hot"

    def __init__(self, vocabulary: list[str], dimension: int | None = None):
        self.vocabulary = list(vocabulary)
        self.dimension = dimension or len(self.vocabulary)

    def embed(self, texts):
        vectors = []
        for text in texts:
            v = np.zeros(self.dimension)
            if text in self.vocabulary:
                v[self.vocabulary.index(text)] = 1.0
            else:
                v[0] = 1.0
            vectors.append(v)
        return vectors


class TestVectorIndex:
    def test_index_single_node(self):
        index = VectorIndex(HashEmbeddingBackend())
        index.index_node(CausalVariable(name="Oil Prices"))
        assert len(index) == 1

    def test_reindex_replaces(self):
        index = VectorIndex(HashEmbeddingBackend())
        var = CausalVariable(name="Oil Prices")
        index.index_node(var)
        first = index.entries["oil-prices"].copy()
        var.description = "changed"
        index.index_node(var)
        assert len(index) == 1
        assert not np.allclose(first, index.entries["oil-prices"])

    def test_wrong_dimension_rejected(self):
        class Bad:
            model_tag = "bad"

            def __init__(self):
                self.n = 0

            def embed(self, texts):
                self.n += 1
                dim = 4 if self.n == 1 else 8
                v = np.ones(dim)
                return [v / np.linalg.norm(v) for _ in texts]

        index = VectorIndex(Bad())
        index.index_node(CausalVariable(name="A"))
        with pytest.raises(BackendFailure):
            index.index_node(CausalVariable(name="B"))

    def test_unnormalized_rejected(self):
        class Bad:
            model_tag = "bad"

            def embed(self, texts):
                return [np.ones(4) for _ in texts]

        index = VectorIndex(Bad())
        with pytest.raises(BackendFailure):
            index.index_node(CausalVariable(name="A"))

    def test_identical_text_scores_one(self):
        index = VectorIndex(HashEmbeddingBackend())
        var = CausalVariable(name="Oil Prices", description="crude benchmark")
        index.index_node(var)
        ranked = index.top_k(node_text(var), k=1)
        assert ranked[0][0] == "oil-prices"
        assert abs(ranked[0][1] - 1.0) < 1e-6

    def test_one_hot_separation(self):
        texts = [node_text(CausalVariable(name=f"n{i}")) for i in range(4)]
        backend = OneHotBackend(texts)
        index = VectorIndex(backend)
        for i in range(4):
            index.index_node(CausalVariable(name=f"n{i}"))
        ranked = index.top_k(texts[2], k=4)
        assert ranked[0] == ("n2", 1.0)
        assert all(abs(score) < 1e-9 for _, score in ranked[1:])

    def test_empty_index(self):
        index = VectorIndex(HashEmbeddingBackend())
        with pytest.raises(EmptyIndex):
            index.top_k("anything", k=1)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(17)
        entries = {}
        for i in range(100):
            v = rng.standard_normal(16)
            entries[f"node-{i:03d}"] = v / np.linalg.norm(v)
        index = VectorIndex(HashEmbeddingBackend(dimension=16))
        index.entries = dict(entries)
        index.dimension = 16
        query = rng.standard_normal(16)
        query /= np.linalg.norm(query)
        for k in (1, 3, 10):
            got = index.top_k_vector(query, k)
            expected = cosine_rank_oracle(
                {k_: list(v) for k_, v in entries.items()}, list(query), k
            )
            assert [nid for nid, _ in got] == [nid for nid, _ in expected]
            for (_, s1), (_, s2) in zip(got, expected):
                assert abs(s1 - s2) < 1e-9

    def test_top_k_is_prefix_of_full_ranking(self):
        index = VectorIndex(HashEmbeddingBackend())
        g = mkgraph([], nodes=[f"n{i}" for i in range(20)])
        index.index_graph(g)
        query = "name: probe\ndescription: \ntype: string\nvalues: "
        full = index.top_k(query, k=20)
        for k in (1, 3, 7):
            assert index.top_k(query, k) == full[:k]

    def test_k_larger_than_index(self):
        index = VectorIndex(HashEmbeddingBackend())
        g = mkgraph([], nodes=["a", "b"])
        index.index_graph(g)
        assert len(index.top_k("whatever", k=10)) == 2


class TestExpand:
    def test_chain_one_hop(self):
        g = mkgraph([("a", "b"), ("b", "c")])
        nodes, edges = expand(g, ["a"], 1)
        assert nodes == {"a", "b"}
        assert edges == [("a", "b")]

    def test_p_zero_returns_seeds(self):
        g = mkgraph([("a", "b")])
        nodes, edges = expand(g, ["a"], 0)
        assert nodes == {"a"}
        assert edges == []

    def test_star_from_leaf(self):
        star = [("s", f"leaf{i}") for i in range(5)]
        g = mkgraph(star)
        nodes, _ = expand(g, ["leaf1"], 2)
        expected = expand_oracle(star, {"leaf1"}, 2)
        assert nodes == expected == {"s", "leaf0", "leaf1", "leaf2", "leaf3", "leaf4"}

    def test_unknown_seed(self):
        g = mkgraph([("a", "b")])
        with pytest.raises(UnknownNode):
            expand(g, ["zz"], 1)

    def test_monotone_in_p_and_seed_order_invariant(self):
        for seed in range(25):
            rng = random.Random(seed)
            names, edges = random_dag(rng, rng.randint(3, 12))
            g = mkgraph(edges, nodes=names)
            seeds = rng.sample(names, min(3, len(names)))
            previous: set[str] = set()
            for p in range(4):
                nodes, _ = expand(g, seeds, p)
                assert previous <= nodes
                assert nodes == expand_oracle(edges, set(seeds), p) | set(seeds)
                previous = nodes
            shuffled = list(reversed(seeds))
            assert expand(g, shuffled, 2)[0] == expand(g, seeds, 2)[0]

    def test_directed_mode(self):
        g = mkgraph([("a", "b"), ("c", "b")])
        nodes, _ = expand(g, ["a"], 2, directed=True)
        assert nodes == {"a", "b"}


class TestRetrieveForDocument:
    def test_empty_graph_renders_empty_sections(self):
        g = mkgraph([])
        index = VectorIndex(HashEmbeddingBackend())
        context = retrieve_for_document(g, index, "some document")
        text = context.render(g)
        assert "Retrieved nodes:\n<empty>" in text
        assert "Retrieved edges:\n<empty>" in text

    def test_defaults_are_k3_p2(self):
        import inspect

        sig = inspect.signature(retrieve_for_document)
        assert sig.parameters["k"].default == DEFAULT_K == 3
        assert sig.parameters["p"].default == DEFAULT_P == 2

    def test_k_exceeding_graph_seeds_all(self):
        g = mkgraph([("a", "b")])
        index = VectorIndex(HashEmbeddingBackend())
        index.index_graph(g)
        context = retrieve_for_document(g, index, "doc", k=10)
        assert {nid for nid, _ in context.seeds} == {"a", "b"}

    def test_expansion_includes_neighbors(self):
        g = mkgraph([("a", "b"), ("b", "c"), ("c", "d"), ("d", "e")])
        texts = {nid: node_text(g.nodes[nid]) for nid in g.nodes}
        backend = OneHotBackend(list(texts.values()))
        index = VectorIndex(backend)
        index.index_graph(g)
        context = retrieve_for_document(g, index, texts["a"], k=1, p=2)
        assert {nid for nid, _ in context.seeds[:1]} == {"a"}
        assert context.nodes == {"a", "b", "c"}
        assert ("a", "b") in context.edges and ("b", "c") in context.edges


class TestHashBackend:
    def test_deterministic(self):
        b = HashEmbeddingBackend()
        v1 = b.embed(["hello"])[0]
        v2 = b.embed(["hello"])[0]
        assert np.allclose(v1, v2)

    def test_unit_norm(self):
        b = HashEmbeddingBackend()
        for v in b.embed(["a", "b", "longer text"]):
            assert abs(np.linalg.norm(v) - 1.0) < 1e-9

    def test_scores_in_range(self):
        b = HashEmbeddingBackend()
        vs = b.embed([f"text {i}" for i in range(30)])
        for v in vs:
            for w in vs:
                assert -1.0 - 1e-9 <= float(np.dot(v, w)) <= 1.0 + 1e-9
