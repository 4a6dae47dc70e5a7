"""Causal blankets, cross-world matching, and query generation.

A blanket of a target T is an ancestor set that screens T from every free
source of variation: with deterministic mechanisms, knowing the blanket
values fully determines T. The structural criterion implemented here checks
that no undetermined source (a root ancestor outside the blanket, or a cycle
in the region) retains a member-free directed path into T. Along a chain
A -> B -> C the single node {A} is a blanket for C: B is itself determined
by A upstream.

Matching pairs two worlds so that a blanket for T in the counterfactual
world can be rebuilt from K intervened values plus shared observations whose
values are recoverable from the factual world; the recorded ground truth of
T then makes a real counterfactual query checkable.
"""

from __future__ import annotations

import logging
import math
import random
import warnings
from collections import deque
from dataclasses import dataclass

import networkx as nx

from .errors import (
    CyclicQueryRegion,
    InsufficientMaterialWarning,
    NoBlanketFound,
    NoSharedObservations,
    UnknownNode,
)
from .evaluation import coerce
from .graph import WorldGraph
from .values import values_match

logger = logging.getLogger(__name__)

DEFAULT_PATH_CAP = 50
MAX_BLANKET_EXPANSIONS = 256


@dataclass(frozen=True)
class Blanket:
    target: str
    members: frozenset[str]
    graph_ref: str = ""


def _free_seeds(graph: WorldGraph, region: set[str], members: frozenset[str]) -> set[str]:
    """Sources of unscreened variation in the region once members are removed.

    Root ancestors outside the blanket are free; so is every node of a
    directed cycle that survives member removal (cyclic values are never
    cleanly determined).
    """
    pruned = region - members
    seeds = {n for n in pruned if not graph._pred.get(n)}
    sub = nx.DiGraph()
    sub.add_nodes_from(pruned)
    sub.add_edges_from(
        (a, b) for (a, b) in graph.edges if a in pruned and b in pruned
    )
    for comp in nx.strongly_connected_components(sub):
        if len(comp) >= 2:
            seeds |= comp
    return seeds


def is_causal_blanket(graph: WorldGraph, members, target: str) -> bool:
    """True iff members sit among target's ancestors and screen every free source.

    Checked structurally: after deleting the members from the region induced
    by ancestors(target) + target, no root ancestor (and no surviving cycle)
    may still reach the target.
    """
    graph.require(target)
    members = frozenset(members)
    for m in members:
        graph.require(m)
    if target in members:
        return False
    anc = graph.ancestors(target)
    if not members <= anc:
        return False
    region = anc | {target}
    seeds = _free_seeds(graph, region, members)
    seeds.discard(target)
    if not seeds:
        return True
    pruned = region - members
    reached: set[str] = set()
    stack = [s for s in seeds]
    while stack:
        node = stack.pop()
        if node in reached:
            continue
        reached.add(node)
        if node == target:
            return False
        stack.extend(
            c for c in graph._succ.get(node, ()) if c in pruned and c not in reached
        )
    return target not in reached


def minimal_blanket(graph: WorldGraph, target: str, available) -> Blanket:
    """Deterministic backward search for a blanket within `available`.

    Walks from the target toward the roots breadth-first, admitting a node
    when it is available and expanding to its parents otherwise; fails when
    an unavailable root is reached.
    """
    graph.require(target)
    available = set(available)
    region = graph.ancestors(target) | {target}
    if not graph.region_is_acyclic(region):
        raise CyclicQueryRegion(f"ancestor region of {target!r} is cyclic")
    members: set[str] = set()
    visited: set[str] = set()
    queue = deque(sorted(graph.parents(target)))
    while queue:
        node = queue.popleft()
        if node in visited:
            continue
        visited.add(node)
        if node in available:
            members.add(node)
            continue
        parents = sorted(graph.parents(node))
        if not parents:
            raise NoBlanketFound(
                f"root ancestor {node!r} of {target!r} is not available"
            )
        queue.extend(parents)
    return Blanket(target=target, members=frozenset(members))


def enumerate_blankets(
    graph: WorldGraph,
    target: str,
    max_expansions: int = MAX_BLANKET_EXPANSIONS,
) -> list[frozenset[str]]:
    """Blanket family reached from parents(target) by replacing a member with its parents.

    Bounded breadth-first closure; order of results is deterministic.
    """
    graph.require(target)
    region = graph.ancestors(target) | {target}
    if not graph.region_is_acyclic(region):
        raise CyclicQueryRegion(f"ancestor region of {target!r} is cyclic")
    start = frozenset(graph.parents(target))
    seen = {start}
    queue = deque([start])
    results: list[frozenset[str]] = []
    while queue and len(seen) <= max_expansions:
        blanket = queue.popleft()
        results.append(blanket)
        for member in sorted(blanket):
            parents = graph.parents(member)
            if not parents:
                continue
            candidate = frozenset((blanket - {member}) | parents)
            if candidate not in seen:
                seen.add(candidate)
                queue.append(candidate)
    return results


@dataclass(frozen=True)
class MatchProposal:
    target: str
    blanket_c: frozenset[str]
    intervened: frozenset[str]
    matched_observations: frozenset[str]
    abduction_support: frozenset[str]

    def sort_key(self) -> tuple:
        return (self.target, tuple(sorted(self.blanket_c)), tuple(sorted(self.intervened)))


def shared_observations(
    graph: WorldGraph, factual_world: str, counterfactual_world: str
) -> set[str]:
    """Nodes instantiated in both worlds with equal canonical values."""
    common = graph.instantiated_in(factual_world) & graph.instantiated_in(
        counterfactual_world
    )
    return {
        n
        for n in common
        if values_match(
            graph.value_in(n, factual_world), graph.value_in(n, counterfactual_world)
        )
    }


def _abducible(graph: WorldGraph, node: str, evidence: set[str]) -> bool:
    """Node value recoverable anticausally: some strict descendant is observed."""
    return bool(graph.descendants(node) & evidence)


def k_match(
    graph: WorldGraph,
    factual_world: str,
    counterfactual_world: str,
    target: str,
    k: int,
    max_expansions: int = MAX_BLANKET_EXPANSIONS,
) -> list[MatchProposal]:
    """Blanket rebuildings of `target` across a world pair with exactly k interventions.

    Every proposal's intervened + matched set is a blanket in the
    counterfactual world view; matched nodes must be recoverable from the
    factual-only observations, which are recorded as abduction support.
    """
    graph.require(target)
    obs_f = graph.instantiated_in(factual_world)
    obs_c = graph.instantiated_in(counterfactual_world)
    if target not in obs_f or target not in obs_c:
        raise UnknownNode(
            f"target {target!r} is not instantiated in both worlds"
        )
    shared = shared_observations(graph, factual_world, counterfactual_world)
    if not shared:
        raise NoSharedObservations(
            f"worlds {factual_world!r} and {counterfactual_world!r} share no observation"
        )
    factual_only = obs_f - shared
    proposals: list[MatchProposal] = []
    for blanket in enumerate_blankets(graph, target, max_expansions=max_expansions):
        if target in blanket:
            continue
        if not blanket <= obs_c:
            continue
        intervened = blanket - shared
        matched = blanket & shared
        if len(intervened) != k:
            continue
        if k > 0 and not all(_abducible(graph, m, factual_only) for m in matched):
            continue
        # an intervention must not disturb a matched observation: the shared
        # value only survives the do() when the matched node is not downstream
        downstream = set()
        for node in intervened:
            downstream |= graph.descendants(node)
        if matched & downstream:
            continue
        if not is_causal_blanket(graph, blanket, target):
            continue
        proposals.append(
            MatchProposal(
                target=target,
                blanket_c=blanket,
                intervened=intervened,
                matched_observations=matched,
                abduction_support=frozenset(factual_only),
            )
        )
    proposals.sort(key=MatchProposal.sort_key)
    return proposals


# --- query construction -------------------------------------------------------


@dataclass
class QueryNode:
    id: str
    role: str  # observed | intervened | latent | target
    value: str | None = None
    name: str = ""
    description: str = ""
    var_type: str = "string"
    values: str = ""
    contextual_information: str | None = None

    def to_dict(self) -> dict:
        return {
            "contextual_information": self.contextual_information,
            "description": self.description,
            "id": self.id,
            "name": self.name,
            "role": self.role,
            "type": self.var_type,
            "value": self.value,
            "values": self.values,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QueryNode":
        return cls(
            id=data["id"],
            role=data["role"],
            value=data.get("value"),
            name=data.get("name") or data["id"],
            description=data.get("description") or "",
            var_type=data.get("type") or "string",
            values=data.get("values") or "",
            contextual_information=data.get("contextual_information"),
        )


@dataclass
class QueryEdge:
    cause: str
    effect: str
    description: str = ""
    rel_type: str = "direct"

    def to_dict(self) -> dict:
        return {
            "cause": self.cause,
            "description": self.description,
            "effect": self.effect,
            "type": self.rel_type,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QueryEdge":
        return cls(
            cause=data["cause"],
            effect=data["effect"],
            description=data.get("description") or "",
            rel_type=data.get("type") or "direct",
        )


@dataclass
class Query:
    query_id: str
    kind: str  # observation | counterfactual
    target: str
    nodes: list[QueryNode]
    edges: list[QueryEdge]
    factual_world: str
    counterfactual_world: str | None
    interventions: dict[str, str]
    observations: dict[str, str]
    ground_truth: str
    ground_truth_type: str
    k: int
    # matched blanket members whose shared values must be abduced from the
    # factual side; together with the interventions they form the blanket
    matched: list[str] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.matched is None:
            self.matched = []

    def to_dict(self) -> dict:
        return {
            "counterfactual_world": self.counterfactual_world,
            "factual_world": self.factual_world,
            "ground_truth": self.ground_truth,
            "ground_truth_type": self.ground_truth_type,
            "interventions": dict(sorted(self.interventions.items())),
            "k": self.k,
            "kind": self.kind,
            "matched": sorted(self.matched),
            "observations": dict(sorted(self.observations.items())),
            "query_graph": {
                "edges": [e.to_dict() for e in self.edges],
                "nodes": [n.to_dict() for n in self.nodes],
            },
            "query_id": self.query_id,
            "target": self.target,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Query":
        qg = data.get("query_graph") or {}
        return cls(
            query_id=data["query_id"],
            kind=data["kind"],
            target=data["target"],
            nodes=[QueryNode.from_dict(n) for n in qg.get("nodes") or []],
            edges=[QueryEdge.from_dict(e) for e in qg.get("edges") or []],
            factual_world=data["factual_world"],
            counterfactual_world=data.get("counterfactual_world"),
            interventions=dict(data.get("interventions") or {}),
            observations=dict(data.get("observations") or {}),
            ground_truth=data["ground_truth"],
            ground_truth_type=data["ground_truth_type"],
            k=int(data.get("k") or 0),
            matched=list(data.get("matched") or []),
        )


def _query_region(graph: WorldGraph, target: str, members: frozenset[str]) -> set[str]:
    """Nodes between the blanket frontier and the target.

    Members act as sources: their incoming edges are ignored, so the region
    is the target plus every node that still reaches it.
    """
    region = {target}
    stack = [target]
    while stack:
        node = stack.pop()
        for parent in graph._pred.get(node, ()):
            if parent in region:
                continue
            if parent in members:
                region.add(parent)  # frontier node, do not expand past it
                continue
            region.add(parent)
            stack.append(parent)
    return region


def _region_edges(graph: WorldGraph, region: set[str], members: frozenset[str]) -> list[QueryEdge]:
    edges = []
    for (a, b), rel in sorted(graph.edges.items()):
        if a in region and b in region and b not in members:
            edges.append(
                QueryEdge(cause=a, effect=b, description=rel.description, rel_type=rel.rel_type)
            )
    return edges


def _witness_chain(graph: WorldGraph, node: str, evidence: set[str]) -> list[str] | None:
    """Shortest anticausal witness: a directed chain from node to an observed descendant."""
    prev: dict[str, str] = {}
    queue = deque([node])
    seen = {node}
    found = None
    while queue:
        current = queue.popleft()
        for child in sorted(graph._succ.get(current, ())):
            if child in seen:
                continue
            seen.add(child)
            prev[child] = current
            if child in evidence:
                found = child
                queue.clear()
                break
            queue.append(child)
    if found is None:
        return None
    chain = [found]
    while chain[-1] != node:
        chain.append(prev[chain[-1]])
    chain.reverse()
    return chain  # node ... observed descendant


def _node_payload(graph: WorldGraph, node_id: str, role: str, value: str | None, world: str | None) -> QueryNode:
    var = graph.require(node_id)
    ctx = None
    if world is not None and world in var.worlds and value is not None:
        ctx = var.worlds[world].contextual_information or None
    return QueryNode(
        id=node_id,
        role=role,
        value=value,
        name=var.name,
        description=var.description,
        var_type=var.var_type,
        values=var.values,
        contextual_information=ctx,
    )


def build_observation_query(
    graph: WorldGraph, target: str, world: str, query_id: str = ""
) -> Query:
    """Observation query: infer target from its blanket inside one world."""
    available = graph.instantiated_in(world) - {target}
    blanket = minimal_blanket(graph, target, available)
    region = _query_region(graph, target, blanket.members)
    nodes = []
    observations: dict[str, str] = {}
    for nid in sorted(region):
        if nid == target:
            nodes.append(_node_payload(graph, nid, "target", None, None))
        elif nid in blanket.members:
            value = graph.value_in(nid, world)
            observations[nid] = value
            nodes.append(_node_payload(graph, nid, "observed", value, world))
        else:
            nodes.append(_node_payload(graph, nid, "latent", None, None))
    gt = graph.value_in(target, world)
    return Query(
        query_id=query_id,
        kind="observation",
        target=target,
        nodes=nodes,
        edges=_region_edges(graph, region, blanket.members),
        factual_world=world,
        counterfactual_world=None,
        interventions={},
        observations=observations,
        ground_truth=gt,
        ground_truth_type=coerce(gt).coerced_type,
        k=0,
    )


def build_counterfactual_query(
    graph: WorldGraph,
    proposal: MatchProposal,
    factual_world: str,
    counterfactual_world: str,
    query_id: str = "",
) -> Query:
    """Counterfactual query from a match proposal.

    Intervened nodes carry counterfactual-world values; matched blanket nodes
    stay latent and must be abduced from the factual-only observations, whose
    witness chains are included in the query graph with factual values.
    """
    target = proposal.target
    members = proposal.blanket_c
    region = _query_region(graph, target, members)
    evidence = set(proposal.abduction_support)
    observed: dict[str, str] = {}
    witness_nodes: set[str] = set()
    witness_edges: list[QueryEdge] = []
    for m in sorted(proposal.matched_observations):
        chain = _witness_chain(graph, m, evidence)
        if chain is None:
            raise NoBlanketFound(
                f"matched node {m!r} has no observed descendant in the factual world"
            )
        for a, b in zip(chain, chain[1:]):
            rel = graph.edges[(a, b)]
            witness_edges.append(
                QueryEdge(cause=a, effect=b, description=rel.description, rel_type=rel.rel_type)
            )
        for n in chain[1:]:
            witness_nodes.add(n)
        observed[chain[-1]] = graph.value_in(chain[-1], factual_world)

    nodes: list[QueryNode] = []
    for nid in sorted(region | witness_nodes):
        if nid == target:
            # the target may double as factual evidence; role stays target and
            # its factual value lives in the observations map only
            role, value, world = "target", None, None
        elif nid in proposal.intervened:
            role, value, world = (
                "intervened",
                graph.value_in(nid, counterfactual_world),
                counterfactual_world,
            )
        elif nid in observed:
            role, value, world = "observed", observed[nid], factual_world
        else:
            role, value, world = "latent", None, None
        nodes.append(_node_payload(graph, nid, role, value, world))

    edges = _region_edges(graph, region, members)
    known = {(e.cause, e.effect) for e in edges}
    for e in witness_edges:
        if (e.cause, e.effect) not in known:
            edges.append(e)
            known.add((e.cause, e.effect))
    edges.sort(key=lambda e: (e.cause, e.effect))

    observations = dict(observed)
    interventions = {
        nid: graph.value_in(nid, counterfactual_world)
        for nid in sorted(proposal.intervened)
    }
    gt = graph.value_in(target, counterfactual_world)
    return Query(
        query_id=query_id,
        kind="counterfactual",
        target=target,
        nodes=nodes,
        edges=edges,
        factual_world=factual_world,
        counterfactual_world=counterfactual_world,
        interventions=interventions,
        observations=observations,
        ground_truth=gt,
        ground_truth_type=coerce(gt).coerced_type,
        k=len(proposal.intervened),
        matched=sorted(proposal.matched_observations),
    )


def build_whatif_query(
    graph: WorldGraph,
    target: str,
    interventions: dict[str, str],
    factual_world: str,
) -> Query:
    """Interactive counterfactual: intervene on a factual world, re-derive the target.

    The query graph is the target's ancestor region after intervention cuts,
    expanded to the true roots so hidden sources are abduced from the factual
    evidence and re-predicted downstream (twin semantics). Direct parents of
    intervened nodes stay in the graph with their edges so the cuts remain
    visible; the plan leaves them untouched.
    """
    graph.require(target)
    if not interventions:
        raise NoBlanketFound("whatif requires at least one intervention")
    for node in interventions:
        graph.require(node)
    if factual_world not in graph.worlds:
        raise UnknownNode(f"unknown world {factual_world!r}")
    instantiated = graph.instantiated_in(factual_world)
    available = (instantiated | set(interventions)) - {target}
    minimal_blanket(graph, target, available)  # raises NoBlanketFound / CyclicQueryRegion

    # ancestor region of the target in the cut graph
    region = {target}
    stack = [target]
    while stack:
        node = stack.pop()
        if node in interventions:
            continue  # cut: do not walk above an intervened node
        for parent in graph._pred.get(node, ()):
            if parent not in region:
                region.add(parent)
                stack.append(parent)
    # keep the severed parents visible for display
    cut_parents = set()
    for node in interventions:
        if node in region:
            cut_parents |= graph._pred.get(node, set())
    all_nodes = region | cut_parents
    if not graph.region_is_acyclic(all_nodes):
        raise CyclicQueryRegion(f"whatif region of {target!r} is cyclic")

    observations = {
        nid: graph.value_in(nid, factual_world)
        for nid in sorted(all_nodes & instantiated)
    }
    nodes = []
    for nid in sorted(all_nodes):
        if nid == target:
            nodes.append(_node_payload(graph, nid, "target", None, None))
        elif nid in interventions:
            nodes.append(
                _node_payload(graph, nid, "intervened", str(interventions[nid]), None)
            )
        elif nid in observations:
            nodes.append(
                _node_payload(graph, nid, "observed", observations[nid], factual_world)
            )
        else:
            nodes.append(_node_payload(graph, nid, "latent", None, None))
    edges = [
        QueryEdge(cause=a, effect=b, description=rel.description, rel_type=rel.rel_type)
        for (a, b), rel in sorted(graph.edges.items())
        if a in all_nodes and b in all_nodes
    ]
    return Query(
        query_id="whatif",
        kind="counterfactual",
        target=target,
        nodes=nodes,
        edges=edges,
        factual_world=factual_world,
        counterfactual_world=None,
        interventions={k: str(v) for k, v in sorted(interventions.items())},
        observations=observations,
        ground_truth="",
        ground_truth_type="text",
        k=len(interventions),
    )


# --- dataset generation ----------------------------------------------------------


@dataclass
class DatasetConfig:
    n_samples: int
    k: int = 1
    path_cap: int = DEFAULT_PATH_CAP
    seed: int = 0
    max_expansions: int = MAX_BLANKET_EXPANSIONS


def blanket_sources(query: Query) -> set[str]:
    """Blanket frontier of a query: intervened nodes plus observed/matched members."""
    if query.kind == "observation":
        return set(query.observations)
    return set(query.interventions) | set(query.matched)


def _passes_path_cap(graph: WorldGraph, query: Query, cap: int) -> bool:
    try:
        count = graph.count_directed_paths(blanket_sources(query), query.target, cap=cap)
    except CyclicQueryRegion:
        return False
    return count < cap


def generate_dataset(graph: WorldGraph, config: DatasetConfig) -> list[Query]:
    """Emit a balanced, reproducible set of observation and counterfactual queries.

    Half the quota is observational, half counterfactual. Per-target counts
    are capped at ceil(quota / eligible targets) first; remaining slots are
    filled without the cap. Queries whose blanket-to-target region reaches
    the path cap are rejected, as are cyclic ancestor regions.
    """
    rng = random.Random(config.seed)
    n_obs = math.ceil(config.n_samples / 2)
    n_cf = config.n_samples - n_obs

    observations = _generate_split(
        graph, config, rng, kind="observation", quota=n_obs
    )
    counterfactuals = _generate_split(
        graph, config, rng, kind="counterfactual", quota=n_cf
    )
    queries = observations + counterfactuals
    for idx, query in enumerate(queries):
        query.query_id = f"q{idx:05d}"
    if len(queries) < config.n_samples:
        warnings.warn(
            f"graph yields only {len(queries)} of {config.n_samples} requested queries",
            InsufficientMaterialWarning,
        )
    return queries


def _generate_split(graph, config, rng, kind, quota):
    worlds = sorted(graph.worlds)
    if kind == "observation":
        candidates = [
            (t, w)
            for w in worlds
            for t in sorted(graph.instantiated_in(w))
            if graph.parents(t)
        ]
        build = lambda cand, qid: build_observation_query(graph, cand[0], cand[1], qid)
        target_of = lambda cand: cand[0]
    else:
        candidates = []
        for wo in worlds:
            inst_o = graph.instantiated_in(wo)
            for wc in worlds:
                if wc == wo:
                    continue
                both = inst_o & graph.instantiated_in(wc)
                for t in sorted(both):
                    if graph.parents(t):
                        candidates.append((t, wo, wc))
        target_of = lambda cand: cand[0]

        def build(cand, qid):
            t, wo, wc = cand
            proposals = k_match(
                graph, wo, wc, t, config.k, max_expansions=config.max_expansions
            )
            if not proposals:
                raise NoBlanketFound(f"no {config.k}-matching for {t!r}")
            proposal = rng.choice(proposals)
            return build_counterfactual_query(graph, proposal, wo, wc, qid)

    eligible_targets = sorted({target_of(c) for c in candidates})
    if not eligible_targets:
        return []
    cap = math.ceil(quota / len(eligible_targets))
    rng.shuffle(candidates)

    chosen: list[Query] = []
    per_target: dict[str, int] = {}
    deferred = []
    for cand in candidates:
        if len(chosen) >= quota:
            break
        target = target_of(cand)
        if per_target.get(target, 0) >= cap:
            deferred.append(cand)
            continue
        query = _try_build(graph, build, cand, config)
        if query is None:
            continue
        chosen.append(query)
        per_target[target] = per_target.get(target, 0) + 1
    # relax the per-target cap to fill the quota
    for cand in deferred:
        if len(chosen) >= quota:
            break
        query = _try_build(graph, build, cand, config)
        if query is None:
            continue
        chosen.append(query)
        per_target[target_of(cand)] = per_target.get(target_of(cand), 0) + 1
    return chosen


def _try_build(graph, build, cand, config):
    try:
        query = build(cand, "")
    except (NoBlanketFound, NoSharedObservations, UnknownNode) as exc:
        logger.debug("skipping candidate %r: %s", cand, exc)
        return None
    except CyclicQueryRegion as exc:
        logger.info("skipping candidate %r: cyclic ancestor region (%s)", cand, exc)
        return None
    if not _passes_path_cap(graph, query, config.path_cap):
        logger.debug("skipping candidate %r: path cap reached", cand)
        return None
    return query
