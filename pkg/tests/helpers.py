"""Shared builders for test graphs, worlds, and mechanized fixtures."""

from __future__ import annotations

import itertools
import random

from ctg.graph import CausalRelation, CausalVariable, WorldAssignment, WorldGraph
from ctg.scm import ExogenousSpec, Mechanism, ScmInstance


def mkgraph(edges, nodes=(), worlds=None) -> WorldGraph:
    """Graph from an edge list; worlds maps world-id -> {node: value}."""
    graph = WorldGraph()
    ids = set(nodes)
    for a, b in edges:
        ids.update((a, b))
    worlds = worlds or {}
    for wid in sorted(worlds):
        graph.register_world(wid, {"source": wid})
    for nid in sorted(ids):
        assignments = {
            wid: WorldAssignment(current_value=str(values[nid]))
            for wid, values in worlds.items()
            if nid in values
        }
        graph.upsert_variable(
            CausalVariable(name=nid, worlds=assignments, id=nid)
        )
    for a, b in edges:
        graph.upsert_relation(CausalRelation(cause=a, effect=b))
    return graph


def random_dag(rng: random.Random, n_nodes: int, edge_prob: float = 0.4):
    """Random labeled DAG as an edge list over n00..nXX (topological by index)."""
    width = max(2, len(str(n_nodes)))
    names = [f"n{i:0{width}d}" for i in range(n_nodes)]
    edges = []
    for j in range(1, n_nodes):
        for i in range(j):
            if rng.random() < edge_prob:
                edges.append((names[i], names[j]))
    return names, edges


def scm_to_tables(scm: ScmInstance):
    """Plain-data view of a table-mechanism instance for the oracles."""
    exo_domains = {n: tuple(spec.domain) for n, spec in scm.exogenous.items()}
    tables = {}
    for node, mech in scm.mechanisms.items():
        if mech.table is None:
            table = {
                combo: mech(dict(zip(mech.parents, combo)))
                for combo in itertools.product(
                    *(scm.domains[p] for p in mech.parents)
                )
            }
        else:
            table = dict(mech.table)
        tables[node] = (mech.parents, table)
    priors = {}
    for node, spec in scm.exogenous.items():
        if spec.prior is not None:
            priors[node] = dict(zip(spec.domain, spec.weights()))
    return exo_domains, tables, priors or None


def xor_twin_scm() -> ScmInstance:
    """Two exogenous roots, two identity nodes, one XOR collider."""
    return ScmInstance(
        exogenous={
            "u": ExogenousSpec(domain=(0, 1)),
            "v": ExogenousSpec(domain=(0, 1)),
        },
        mechanisms={
            "x": Mechanism.from_expr("x", "v"),
            "z": Mechanism.from_expr("z", "u"),
            "y": Mechanism.from_expr("y", "x ^ z"),
        },
    )


def xor_twin_graph(worlds=None) -> WorldGraph:
    """Store-side view of the twin example; worlds maps wid -> {x,z,y values}."""
    edges = [("v", "x"), ("u", "z"), ("x", "y"), ("z", "y")]
    graph = WorldGraph()
    worlds = worlds or {}
    for wid in sorted(worlds):
        graph.register_world(wid, {"source": wid})
    for nid in ["u", "v", "x", "y", "z"]:
        assignments = {
            wid: WorldAssignment(current_value=str(values[nid]))
            for wid, values in worlds.items()
            if nid in values
        }
        graph.upsert_variable(
            CausalVariable(
                name=nid.upper(),
                description=f"twin example node {nid}",
                var_type="integer",
                values="0/1",
                worlds=assignments,
                id=nid,
            )
        )
    for a, b in edges:
        graph.upsert_relation(CausalRelation(cause=a, effect=b))
    return graph


def graph_from_scm(scm: ScmInstance, world_values: dict[str, dict]) -> WorldGraph:
    """WorldGraph mirroring an SCM; worlds instantiate the endogenous nodes only."""
    graph = WorldGraph()
    for wid in sorted(world_values):
        graph.register_world(wid, {"source": wid})
    endogenous = set(scm.mechanisms)
    for node in sorted(scm.nodes):
        assignments = {}
        for wid, values in world_values.items():
            if node in endogenous and node in values:
                assignments[wid] = WorldAssignment(current_value=str(values[node]))
        graph.upsert_variable(
            CausalVariable(
                name=node,
                description=f"synthetic variable {node}",
                var_type="integer",
                values="0/1",
                worlds=assignments,
                id=node,
            )
        )
    for parent, child in scm.edges():
        graph.upsert_relation(CausalRelation(cause=parent, effect=child))
    return graph


def synthetic_scm(n_nodes: int = 60, seed: int = 7, max_parents: int = 3) -> ScmInstance:
    """Layered random binary SCM: parents drawn from a short recent window.

    The window keeps ancestor regions shallow so path counts stay small and
    blanket enumeration stays cheap.
    """
    rng = random.Random(seed)
    width = max(2, len(str(n_nodes)))
    names = [f"v{i:0{width}d}" for i in range(n_nodes)]
    exogenous: dict[str, ExogenousSpec] = {}
    mechanisms: dict[str, Mechanism] = {}
    domain = (0, 1)
    for idx, node in enumerate(names):
        if idx == 0 or rng.random() < 0.35:
            exogenous[node] = ExogenousSpec(domain=domain)
            continue
        window = names[max(0, idx - 6) : idx]
        k = rng.randint(1, min(max_parents, len(window)))
        parents = tuple(sorted(rng.sample(window, k)))
        table = {
            combo: rng.choice(domain)
            for combo in itertools.product(domain, repeat=len(parents))
        }
        mechanisms[node] = Mechanism(node=node, parents=parents, table=table)
    return ScmInstance(exogenous, mechanisms)


def synthetic_world_graph(
    n_nodes: int = 60, n_worlds: int = 24, seed: int = 7
) -> tuple[WorldGraph, ScmInstance, dict[str, dict]]:
    """Multi-world fixture: one SCM, many worlds from random exogenous draws."""
    scm = synthetic_scm(n_nodes=n_nodes, seed=seed)
    rng = random.Random(seed + 1)
    exo_names = sorted(scm.exogenous)
    worlds: dict[str, dict] = {}
    seen = set()
    attempt = 0
    while len(worlds) < n_worlds and attempt < n_worlds * 20:
        attempt += 1
        draw = tuple(rng.choice(scm.exogenous[n].domain) for n in exo_names)
        if draw in seen:
            continue
        seen.add(draw)
        values = scm.evaluate(dict(zip(exo_names, draw)))
        worlds[f"w{len(worlds):02d}"] = values
    graph = graph_from_scm(scm, worlds)
    return graph, scm, worlds
