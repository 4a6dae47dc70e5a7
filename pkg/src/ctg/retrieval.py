"""Embedding-based node retrieval with hop-bounded neighborhood expansion.

Node descriptions are embedded once and held in an in-memory index; queries
are ranked by exact cosine scan (the graph is small enough that approximate
structures would only cost determinism). Retrieved seeds are expanded P
hops through the graph so structurally related context is not omitted.
Defaults K=3 and P=2.
"""

from __future__ import annotations

import hashlib
import os
import time
from dataclasses import dataclass

import numpy as np

from .errors import BackendFailure, EmptyIndex
from .graph import CausalVariable, WorldGraph

DEFAULT_K = 3
DEFAULT_P = 2

EMBED_URL_ENV = "CTG_EMBED_URL"
EMBED_KEY_ENV = "CTG_EMBED_KEY"


def node_text(variable: CausalVariable) -> str:
    """Canonical world-invariant serialization used for indexing and queries."""
    return (
        f"name: {variable.name}\n"
        f"description: {variable.description}\n"
        f"type: {variable.var_type}\n"
        f"values: {variable.values}"
    )


class HashEmbeddingBackend:
    """Deterministic offline pseudo-embeddings seeded from a text digest.

    Identical texts map to identical unit vectors; distinct texts are nearly
    orthogonal at moderate dimension. Good enough to exercise every retrieval
    contract without a network.
    """

    def __init__(self, dimension: int = 64, model_tag: str = "hash-stub"):
        self.dimension = dimension
        self.model_tag = model_tag

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        vectors = []
        for text in texts:
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            v = rng.standard_normal(self.dimension)
            vectors.append(v / np.linalg.norm(v))
        return vectors


class HttpEmbeddingBackend:
    """Remote embeddings over a JSON POST protocol.

    Request: {"model": tag, "input": [texts]};
    reply: {"data": [{"embedding": [floats]}, ...]}. Transient failures are
    retried with exponential backoff (3 attempts).
    """

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model_tag: str = "remote",
        timeout: float = 30.0,
        attempts: int = 3,
    ):
        self.url = url or os.environ.get(EMBED_URL_ENV)
        self.api_key = api_key or os.environ.get(EMBED_KEY_ENV)
        self.model_tag = model_tag
        self.timeout = timeout
        self.attempts = attempts
        if not self.url:
            raise BackendFailure(f"no embedding endpoint; set {EMBED_URL_ENV}")

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        import httpx

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model_tag, "input": list(texts)}
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                reply = httpx.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                reply.raise_for_status()
                data = reply.json()["data"]
                vectors = []
                for entry in data:
                    v = np.asarray(entry["embedding"], dtype=float)
                    norm = np.linalg.norm(v)
                    if norm == 0:
                        raise BackendFailure("backend returned a zero vector")
                    vectors.append(v / norm)
                if len(vectors) != len(texts):
                    raise BackendFailure(
                        f"backend returned {len(vectors)} vectors for {len(texts)} texts"
                    )
                return vectors
            except BackendFailure:
                raise
            except Exception as exc:  # network / schema errors are retriable
                last_error = exc
                time.sleep(min(2.0**attempt * 0.25, 4.0))
        raise BackendFailure(f"embedding backend failed after {self.attempts} attempts: {last_error}")


class VectorIndex:
    """In-memory map node-id -> unit vector bound to one embedding backend."""

    def __init__(self, backend):
        self.backend = backend
        self.entries: dict[str, np.ndarray] = {}
        self.dimension: int | None = None
        self.model_tag = getattr(backend, "model_tag", "unknown")

    def __len__(self) -> int:
        return len(self.entries)

    def _check(self, vector: np.ndarray) -> np.ndarray:
        vector = np.asarray(vector, dtype=float)
        if vector.ndim != 1:
            raise BackendFailure("embedding must be a flat vector")
        if self.dimension is None:
            self.dimension = vector.shape[0]
        elif vector.shape[0] != self.dimension:
            raise BackendFailure(
                f"dimension {vector.shape[0]} != index dimension {self.dimension}"
            )
        norm = np.linalg.norm(vector)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise BackendFailure("embedding is not unit-normalized")
        return vector

    def index_node(self, variable: CausalVariable) -> None:
        vector = self.backend.embed([node_text(variable)])[0]
        self.entries[variable.id] = self._check(vector)

    def index_graph(self, graph: WorldGraph) -> None:
        for nid in sorted(graph.nodes):
            self.index_node(graph.nodes[nid])

    def top_k_vector(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        if not self.entries:
            raise EmptyIndex("vector index is empty")
        query = self._check(query)
        scored = [
            (nid, float(np.dot(vec, query))) for nid, vec in self.entries.items()
        ]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return scored[: max(1, k)]

    def top_k(self, query_text: str, k: int = DEFAULT_K) -> list[tuple[str, float]]:
        query = self.backend.embed([query_text])[0]
        return self.top_k_vector(query, k)


def expand(
    graph: WorldGraph,
    seed_nodes,
    p: int = DEFAULT_P,
    directed: bool = False,
) -> tuple[set[str], list[tuple[str, str]]]:
    """Nodes within distance <= p of any seed plus all induced edges.

    Traversal is undirected by default: related context flows both ways
    along causal edges. p=0 returns the seeds alone.
    """
    seeds = sorted(set(seed_nodes))
    for seed in seeds:
        graph.require(seed)
    visited = set(seeds)
    frontier = list(seeds)
    for _ in range(p):
        nxt = []
        for node in frontier:
            neighbors = set(graph._succ.get(node, ()))
            if not directed:
                neighbors |= set(graph._pred.get(node, ()))
            for n in neighbors:
                if n not in visited:
                    visited.add(n)
                    nxt.append(n)
        frontier = nxt
        if not frontier:
            break
    edges = [
        (a, b) for (a, b) in sorted(graph.edges) if a in visited and b in visited
    ]
    return visited, edges


@dataclass
class RetrievalContext:
    seeds: list[tuple[str, float]]
    nodes: set[str]
    edges: list[tuple[str, str]]

    def render(self, graph: WorldGraph) -> str:
        """Context block handed to the extraction agent."""
        if not self.nodes:
            node_block = "<empty>"
        else:
            lines = []
            for nid in sorted(self.nodes):
                var = graph.nodes[nid]
                lines.append(f"- {var.name} ({var.var_type}): {var.description}")
            node_block = "\n".join(lines)
        if not self.edges:
            edge_block = "<empty>"
        else:
            edge_lines = []
            for a, b in self.edges:
                rel = graph.edges[(a, b)]
                edge_lines.append(
                    f"- {graph.nodes[a].name} -> {graph.nodes[b].name}: {rel.description}"
                )
            edge_block = "\n".join(edge_lines)
        return f"Retrieved nodes:\n{node_block}\n\nRetrieved edges:\n{edge_block}"


def retrieve_for_document(
    graph: WorldGraph,
    index: VectorIndex,
    doc_text: str,
    k: int = DEFAULT_K,
    p: int = DEFAULT_P,
) -> RetrievalContext:
    """Rank top-k similar nodes for a document, then expand p hops."""
    if not index.entries:
        return RetrievalContext(seeds=[], nodes=set(), edges=[])
    seeds = index.top_k(doc_text, k)
    nodes, edges = expand(graph, [nid for nid, _ in seeds], p)
    return RetrievalContext(seeds=seeds, nodes=nodes, edges=edges)
