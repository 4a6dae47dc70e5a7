"""Multi-world causal graph store.

Nodes are world-invariant concepts (name, description, type, value domain)
carrying one instantiation per world; edges are directed cause->effect
relations, unique per ordered pair. Cycles are permitted at the store level;
operations that need an acyclic region check and reject.

Persistence is canonical JSON (sorted keys, nodes sorted by id, edges by
(cause, effect)) so save -> load -> save round-trips byte-identically.
"""

from __future__ import annotations

import heapq
import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import networkx as nx

from .errors import (
    CyclicQueryRegion,
    InvalidVariable,
    SelfLoop,
    UnknownEndpoint,
    UnknownNode,
    WorldCollision,
)
from .values import slugify, values_match

VAR_TYPES = ("boolean", "integer", "float", "string", "trend")


@dataclass
class WorldAssignment:
    """One world's instantiation of a variable."""

    current_value: str
    contextual_information: str = ""
    supporting_text_snippets: list[str] = field(default_factory=list)
    causal_effect: str | None = None
    source_doc: str | None = None

    def to_dict(self) -> dict:
        return {
            "causal_effect": self.causal_effect,
            "contextual_information": self.contextual_information,
            "current_value": self.current_value,
            "supporting_text_snippets": list(self.supporting_text_snippets),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WorldAssignment":
        return cls(
            current_value=data["current_value"],
            contextual_information=data.get("contextual_information") or "",
            supporting_text_snippets=list(data.get("supporting_text_snippets") or []),
            causal_effect=data.get("causal_effect"),
        )


@dataclass
class CausalVariable:
    """World-invariant concept plus per-world instantiations."""

    name: str
    description: str = ""
    var_type: str = "string"
    values: str = ""
    worlds: dict[str, WorldAssignment] = field(default_factory=dict)
    id: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            self.id = slugify(self.name)

    def validate(self) -> None:
        if not self.name or not self.name.strip():
            raise InvalidVariable("variable name must be non-empty")
        if not self.id:
            raise InvalidVariable(f"name {self.name!r} yields an empty id")
        for wid, assignment in self.worlds.items():
            if not str(assignment.current_value).strip():
                raise InvalidVariable(
                    f"node {self.id!r} has an empty current_value in world {wid!r}"
                )

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "id": self.id,
            "name": self.name,
            "type": self.var_type,
            "values": self.values,
            "worlds": {
                wid: self.worlds[wid].to_dict() for wid in sorted(self.worlds)
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CausalVariable":
        return cls(
            name=data["name"],
            description=data.get("description") or "",
            var_type=data.get("type") or "string",
            values=data.get("values") or "",
            worlds={
                wid: WorldAssignment.from_dict(w)
                for wid, w in (data.get("worlds") or {}).items()
            },
            id=data.get("id") or "",
        )


@dataclass
class CausalRelation:
    """Directed cause -> effect edge."""

    cause: str
    effect: str
    description: str = ""
    contextual_information: str | None = None
    rel_type: str = "direct"
    strength: str | None = None
    confidence: str | None = None
    mechanism: str | None = None

    def to_dict(self) -> dict:
        data = {
            "cause": self.cause,
            "confidence": self.confidence,
            "contextual_information": self.contextual_information,
            "description": self.description,
            "effect": self.effect,
            "strength": self.strength,
            "type": self.rel_type,
        }
        if self.mechanism is not None:
            data["mechanism"] = self.mechanism
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CausalRelation":
        return cls(
            cause=data["cause"],
            effect=data["effect"],
            description=data.get("description") or "",
            contextual_information=data.get("contextual_information"),
            rel_type=data.get("type") or "direct",
            strength=data.get("strength"),
            confidence=data.get("confidence"),
            mechanism=data.get("mechanism"),
        )


@dataclass
class StatsReport:
    node_count: int
    edge_count: int
    density: float
    weakly_connected_components: dict[int, int]
    strongly_connected_components: dict[int, int]
    in_degree: dict[int, int]
    out_degree: dict[int, int]
    cycle_count_by_length: dict[int, int]
    world_count_per_node: dict[int, int]
    bridge_nodes: list[str]
    max_cycle_length: int

    def to_dict(self) -> dict:
        def keyed(hist: dict[int, int]) -> dict[str, int]:
            return {str(k): hist[k] for k in sorted(hist)}

        return {
            "bridge_nodes": self.bridge_nodes,
            "cycle_count_by_length": keyed(self.cycle_count_by_length),
            "density": self.density,
            "edge_count": self.edge_count,
            "in_degree": keyed(self.in_degree),
            "max_cycle_length": self.max_cycle_length,
            "node_count": self.node_count,
            "out_degree": keyed(self.out_degree),
            "strongly_connected_components": keyed(self.strongly_connected_components),
            "weakly_connected_components": keyed(self.weakly_connected_components),
            "world_count_per_node": keyed(self.world_count_per_node),
        }


class WorldGraph:
    """Directed multi-world causal graph with a world registry.

    Single-writer / multiple-reader: mutations take the internal lock;
    ``snapshot()`` produces an independent copy for consistent reads.
    """

    def __init__(self) -> None:
        self.nodes: dict[str, CausalVariable] = {}
        self.edges: dict[tuple[str, str], CausalRelation] = {}
        self.worlds: dict[str, dict] = {}
        self._succ: dict[str, set[str]] = {}
        self._pred: dict[str, set[str]] = {}
        self._lock = threading.RLock()

    # -- registry -----------------------------------------------------------

    def register_world(self, world_id: str, source: dict | str | None = None) -> str:
        with self._lock:
            if world_id not in self.worlds:
                self.worlds[world_id] = (
                    source if isinstance(source, dict) else {"source": source}
                )
            return world_id

    def next_world_id(self) -> str:
        n = 0
        while f"world_{n}" in self.worlds:
            n += 1
        return f"world_{n}"

    # -- mutation -----------------------------------------------------------

    def upsert_variable(self, variable: CausalVariable) -> str:
        """Insert a node or merge new world assignments into an existing one.

        World-invariant fields of an existing node are preserved. A second
        assignment for the same (node, world) pair must agree on the value,
        otherwise WorldCollision.
        """
        variable.validate()
        with self._lock:
            for wid in variable.worlds:
                if wid not in self.worlds:
                    raise InvalidVariable(
                        f"world {wid!r} is not registered in the graph"
                    )
            existing = self.nodes.get(variable.id)
            if existing is None:
                self.nodes[variable.id] = variable
                self._succ.setdefault(variable.id, set())
                self._pred.setdefault(variable.id, set())
                return variable.id
            for wid, assignment in variable.worlds.items():
                held = existing.worlds.get(wid)
                if held is None:
                    existing.worlds[wid] = assignment
                elif not values_match(held.current_value, assignment.current_value):
                    raise WorldCollision(
                        f"node {variable.id!r} already holds "
                        f"{held.current_value!r} in world {wid!r}, "
                        f"got {assignment.current_value!r}"
                    )
            return existing.id

    def upsert_relation(self, relation: CausalRelation) -> None:
        """Insert an edge; re-adding an existing (cause, effect) pair is a no-op."""
        if relation.cause == relation.effect:
            raise SelfLoop(f"self-loop on {relation.cause!r}")
        with self._lock:
            for endpoint in (relation.cause, relation.effect):
                if endpoint not in self.nodes:
                    raise UnknownEndpoint(f"unknown endpoint {endpoint!r}")
            key = (relation.cause, relation.effect)
            if key in self.edges:
                return
            self.edges[key] = relation
            self._succ[relation.cause].add(relation.effect)
            self._pred[relation.effect].add(relation.cause)

    # -- structure queries ----------------------------------------------------

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.nodes

    def require(self, node_id: str) -> CausalVariable:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown node {node_id!r}") from None

    def parents(self, node_id: str) -> set[str]:
        self.require(node_id)
        return set(self._pred.get(node_id, ()))

    def children(self, node_id: str) -> set[str]:
        self.require(node_id)
        return set(self._succ.get(node_id, ()))

    def ancestors(self, target: str) -> set[str]:
        """All nodes with a directed path to target; target itself excluded."""
        self.require(target)
        seen: set[str] = set()
        stack = list(self._pred.get(target, ()))
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self._pred.get(node, ()))
        seen.discard(target)
        return seen

    def descendants(self, source: str) -> set[str]:
        self.require(source)
        seen: set[str] = set()
        stack = list(self._succ.get(source, ()))
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self._succ.get(node, ()))
        seen.discard(source)
        return seen

    def region_is_acyclic(self, nodes: Iterable[str]) -> bool:
        region = set(nodes)
        sub = [(a, b) for (a, b) in self.edges if a in region and b in region]
        g = nx.DiGraph(sub)
        g.add_nodes_from(region)
        return nx.is_directed_acyclic_graph(g)

    def topological_order(self, nodes: Iterable[str]) -> list[str]:
        """Deterministic topological order of the induced subgraph (lexicographic ties)."""
        region = set(nodes)
        indeg = {n: 0 for n in region}
        succ: dict[str, list[str]] = {n: [] for n in region}
        for (a, b) in self.edges:
            if a in region and b in region:
                indeg[b] += 1
                succ[a].append(b)
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order: list[str] = []
        while heap:
            node = heapq.heappop(heap)
            order.append(node)
            for child in succ[node]:
                indeg[child] -= 1
                if indeg[child] == 0:
                    heapq.heappush(heap, child)
        if len(order) != len(region):
            raise CyclicQueryRegion(
                f"region of {len(region)} nodes contains a directed cycle"
            )
        return order

    def count_directed_paths(
        self, sources: Iterable[str], target: str, cap: int = 50
    ) -> int:
        """Distinct directed paths from any source to target, saturating at cap.

        The region induced by ancestors(target) + target must be acyclic.
        """
        self.require(target)
        sources = {s for s in sources if s in self.nodes}
        region = self.ancestors(target) | {target}
        order = self.topological_order(region)  # raises CyclicQueryRegion
        paths: dict[str, int] = {target: 1}
        for node in reversed(order):
            if node == target:
                continue
            total = 0
            for child in self._succ.get(node, ()):
                if child in region:
                    total += paths.get(child, 0)
                    if total >= cap:
                        total = cap
                        break
            paths[node] = total
        total = 0
        for source in sources:
            total += paths.get(source, 0)
            if total >= cap:
                return cap
        return total

    # -- statistics -----------------------------------------------------------

    def density(self) -> float:
        n = len(self.nodes)
        if n < 2:
            return 0.0
        return len(self.edges) / (n * (n - 1))

    def graph_stats(self, max_cycle_len: int = 14) -> StatsReport:
        with self._lock:
            graph = self.snapshot()
        g = nx.DiGraph()
        g.add_nodes_from(graph.nodes)
        g.add_edges_from(graph.edges)

        wcc = Counter(len(c) for c in nx.weakly_connected_components(g))
        scc = Counter(len(c) for c in nx.strongly_connected_components(g))
        in_deg = Counter(d for _, d in g.in_degree())
        out_deg = Counter(d for _, d in g.out_degree())
        cycles = Counter()
        if max_cycle_len >= 2:
            for cycle in nx.simple_cycles(g, length_bound=max_cycle_len):
                if len(cycle) >= 2:
                    cycles[len(cycle)] += 1
        worlds_per_node = Counter(len(v.worlds) for v in graph.nodes.values())
        undirected = g.to_undirected()
        bridges = sorted(nx.articulation_points(undirected))

        return StatsReport(
            node_count=g.number_of_nodes(),
            edge_count=g.number_of_edges(),
            density=graph.density(),
            weakly_connected_components=dict(wcc),
            strongly_connected_components=dict(scc),
            in_degree=dict(in_deg),
            out_degree=dict(out_deg),
            cycle_count_by_length=dict(cycles),
            world_count_per_node=dict(worlds_per_node),
            bridge_nodes=bridges,
            max_cycle_length=max_cycle_len,
        )

    # -- worlds ----------------------------------------------------------------

    def instantiated_in(self, world_id: str) -> set[str]:
        return {
            nid for nid, var in self.nodes.items() if world_id in var.worlds
        }

    def value_in(self, node_id: str, world_id: str) -> str | None:
        var = self.require(node_id)
        assignment = var.worlds.get(world_id)
        return assignment.current_value if assignment else None

    # -- persistence ------------------------------------------------------------

    def snapshot(self) -> "WorldGraph":
        clone = WorldGraph.from_dict(self.to_dict())
        return clone

    def to_dict(self) -> dict:
        return {
            "edges": [
                self.edges[key].to_dict() for key in sorted(self.edges)
            ],
            "nodes": [self.nodes[nid].to_dict() for nid in sorted(self.nodes)],
            "worlds": {wid: self.worlds[wid] for wid in sorted(self.worlds)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "WorldGraph":
        graph = cls()
        for wid, meta in (data.get("worlds") or {}).items():
            graph.register_world(wid, meta if isinstance(meta, dict) else {"source": meta})
        for node_data in data.get("nodes") or []:
            graph.upsert_variable(CausalVariable.from_dict(node_data))
        for edge_data in data.get("edges") or []:
            graph.upsert_relation(CausalRelation.from_dict(edge_data))
        return graph

    @classmethod
    def from_json(cls, text: str) -> "WorldGraph":
        return cls.from_dict(json.loads(text))


def save_graph(graph: WorldGraph, path: str | Path) -> None:
    Path(path).write_text(graph.to_json() + "\n", encoding="utf-8")


def load_graph(path: str | Path) -> WorldGraph:
    return WorldGraph.from_json(Path(path).read_text(encoding="utf-8"))
