"""Deterministic structural-model semantics over an acyclic node set.

Each endogenous node carries a total mechanism (finite table or a restricted
arithmetic/boolean expression over its parents); exogenous roots carry finite
domains with optional prior weights. Fixing all exogenous values determines
every endogenous value, so counterfactual distributions can be computed
exactly: abduction enumerates the exogenous product domain, intervention cuts
parents and pins values, prediction re-evaluates in topological order. All
probability mass is kept as Fractions; nothing is accumulated in floats.
"""

from __future__ import annotations

import ast
import itertools
import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    CyclicQueryRegion,
    DomainViolation,
    InfeasibleEvidence,
    MechanismMissing,
    MissingExogenous,
    StateSpaceTooLarge,
    UnknownNode,
)

Value = object  # hashable mechanism values: ints, strings, bools

DEFAULT_STATE_CAP = 2**20

_ALLOWED_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.FloorDiv: lambda a, b: a // b,
    ast.Mod: lambda a, b: a % b,
    ast.BitXor: lambda a, b: a ^ b,
    ast.BitAnd: lambda a, b: a & b,
    ast.BitOr: lambda a, b: a | b,
}

_ALLOWED_CMPOPS = {
    ast.Eq: lambda a, b: a == b,
    ast.NotEq: lambda a, b: a != b,
    ast.Lt: lambda a, b: a < b,
    ast.LtE: lambda a, b: a <= b,
    ast.Gt: lambda a, b: a > b,
    ast.GtE: lambda a, b: a >= b,
}

_ALLOWED_CALLS = {"min": min, "max": max, "abs": abs}


def _eval_expr(node: ast.AST, env: Mapping[str, Value]) -> Value:
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body, env)
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise MechanismMissing(f"expression references unknown symbol {node.id!r}")
        return env[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _ALLOWED_BINOPS:
        return _ALLOWED_BINOPS[type(node.op)](
            _eval_expr(node.left, env), _eval_expr(node.right, env)
        )
    if isinstance(node, ast.UnaryOp):
        operand = _eval_expr(node.operand, env)
        if isinstance(node.op, ast.USub):
            return -operand
        if isinstance(node.op, ast.Not):
            return not operand
    if isinstance(node, ast.BoolOp):
        vals = [_eval_expr(v, env) for v in node.values]
        if isinstance(node.op, ast.And):
            result = vals[0]
            for v in vals[1:]:
                result = result and v
            return result
        result = vals[0]
        for v in vals[1:]:
            result = result or v
        return result
    if isinstance(node, ast.Compare) and len(node.ops) == 1:
        op = type(node.ops[0])
        if op in _ALLOWED_CMPOPS:
            return _ALLOWED_CMPOPS[op](
                _eval_expr(node.left, env), _eval_expr(node.comparators[0], env)
            )
    if isinstance(node, ast.IfExp):
        return (
            _eval_expr(node.body, env)
            if _eval_expr(node.test, env)
            else _eval_expr(node.orelse, env)
        )
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        fn = _ALLOWED_CALLS.get(node.func.id)
        if fn is not None and not node.keywords:
            return fn(*(_eval_expr(a, env) for a in node.args))
    raise MechanismMissing(f"disallowed construct in expression: {ast.dump(node)}")


def _expr_symbols(expr: str) -> tuple[str, ...]:
    tree = ast.parse(expr, mode="eval")
    names = sorted(
        {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)} - set(_ALLOWED_CALLS)
    )
    return tuple(names)


@dataclass(frozen=True)
class Mechanism:
    """Total deterministic function from parent values to a node value."""

    node: str
    parents: tuple[str, ...]
    table: Mapping[tuple, Value] | None = None
    expr: str | None = None

    def __post_init__(self) -> None:
        if (self.table is None) == (self.expr is None):
            raise MechanismMissing(
                f"mechanism for {self.node!r} needs exactly one of table/expr"
            )
        given = tuple(self.parents)
        ordered = tuple(sorted(given))
        if self.table is not None and ordered != given:
            # table keys follow the given parent order; remap to sorted order
            perm = [given.index(p) for p in ordered]
            remapped = {
                tuple(key[i] for i in perm): value for key, value in self.table.items()
            }
            object.__setattr__(self, "table", remapped)
        object.__setattr__(self, "parents", ordered)

    def __call__(self, env: Mapping[str, Value]) -> Value:
        if self.table is not None:
            key = tuple(env[p] for p in self.parents)
            try:
                return self.table[key]
            except KeyError:
                raise DomainViolation(
                    f"mechanism table of {self.node!r} undefined for {key!r}"
                ) from None
        return _eval_expr(ast.parse(self.expr, mode="eval"), env)

    @classmethod
    def from_expr(cls, node: str, expr: str) -> "Mechanism":
        return cls(node=node, parents=_expr_symbols(expr), expr=expr)

    @classmethod
    def constant(cls, node: str, value: Value) -> "Mechanism":
        return cls(node=node, parents=(), table={(): value})


@dataclass(frozen=True)
class ExogenousSpec:
    domain: tuple[Value, ...]
    prior: tuple[Fraction, ...] | None = None

    def weights(self) -> tuple[Fraction, ...]:
        if self.prior is None:
            w = Fraction(1, len(self.domain))
            return tuple(w for _ in self.domain)
        total = sum(self.prior, Fraction(0))
        return tuple(Fraction(p) / total for p in self.prior)


class ScmInstance:
    """Acyclic graph of exogenous roots and mechanized endogenous nodes."""

    def __init__(
        self,
        exogenous: Mapping[str, ExogenousSpec],
        mechanisms: Mapping[str, Mechanism],
        domains: Mapping[str, Sequence[Value]] | None = None,
    ) -> None:
        self.exogenous = dict(exogenous)
        self.mechanisms = dict(mechanisms)
        overlap = set(self.exogenous) & set(self.mechanisms)
        if overlap:
            raise MechanismMissing(
                f"nodes {sorted(overlap)} are both exogenous and mechanized"
            )
        self._check_parents()
        self.order = self._topological_order()
        self.domains = self._resolve_domains(domains)

    # -- construction helpers ---------------------------------------------------

    def _check_parents(self) -> None:
        known = set(self.exogenous) | set(self.mechanisms)
        for mech in self.mechanisms.values():
            missing = set(mech.parents) - known
            if missing:
                raise MechanismMissing(
                    f"mechanism of {mech.node!r} references unknown parents {sorted(missing)}"
                )

    def _topological_order(self) -> list[str]:
        order = sorted(self.exogenous)
        placed = set(order)
        pending = dict(self.mechanisms)
        while pending:
            ready = sorted(
                n for n, m in pending.items() if set(m.parents) <= placed
            )
            if not ready:
                raise CyclicQueryRegion(
                    f"mechanisms of {sorted(pending)} form a dependency cycle"
                )
            for n in ready:
                order.append(n)
                placed.add(n)
                del pending[n]
        return order

    def _resolve_domains(
        self, declared: Mapping[str, Sequence[Value]] | None
    ) -> dict[str, tuple[Value, ...]]:
        domains: dict[str, tuple[Value, ...]] = {}
        declared = declared or {}
        for node, spec in self.exogenous.items():
            domains[node] = tuple(spec.domain)
        for node in self.order:
            if node in domains:
                continue
            if node in declared:
                domains[node] = tuple(declared[node])
                continue
            mech = self.mechanisms[node]
            if mech.table is not None:
                domains[node] = tuple(sorted(set(mech.table.values()), key=repr))
            else:
                combos = 1
                for p in mech.parents:
                    combos *= len(domains[p])
                if combos > 4096:
                    raise StateSpaceTooLarge(
                        f"cannot derive domain of {node!r}: {combos} parent combinations"
                    )
                values = {
                    mech(dict(zip(mech.parents, combo)))
                    for combo in itertools.product(*(domains[p] for p in mech.parents))
                }
                domains[node] = tuple(sorted(values, key=repr))
        return domains

    # -- structure ---------------------------------------------------------------

    @property
    def nodes(self) -> list[str]:
        return list(self.order)

    def parents(self, node: str) -> tuple[str, ...]:
        mech = self.mechanisms.get(node)
        return mech.parents if mech else ()

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(
            sorted(m.node for m in self.mechanisms.values() if node in m.parents)
        )

    def edges(self) -> list[tuple[str, str]]:
        return sorted(
            (p, m.node) for m in self.mechanisms.values() for p in m.parents
        )

    # -- semantics -----------------------------------------------------------------

    def evaluate(self, exogenous_values: Mapping[str, Value]) -> dict[str, Value]:
        """Assign every node by evaluating mechanisms in topological order."""
        env: dict[str, Value] = {}
        for node, spec in self.exogenous.items():
            if node not in exogenous_values:
                raise MissingExogenous(f"no value for exogenous node {node!r}")
            value = exogenous_values[node]
            if value not in spec.domain:
                raise DomainViolation(
                    f"value {value!r} outside domain of exogenous {node!r}"
                )
            env[node] = value
        for node in self.order:
            if node in env:
                continue
            env[node] = self.mechanisms[node](env)
        return env

    def intervene(self, assignments: Mapping[str, Value]) -> "ScmInstance":
        """Pin each assigned node to a constant and drop its incoming edges."""
        for node, value in assignments.items():
            if node not in self.domains:
                raise UnknownNode(f"cannot intervene on unknown node {node!r}")
            if value not in self.domains[node]:
                raise DomainViolation(
                    f"value {value!r} outside domain of {node!r}"
                )
        exogenous = {
            n: s for n, s in self.exogenous.items() if n not in assignments
        }
        mechanisms = {
            n: m for n, m in self.mechanisms.items() if n not in assignments
        }
        for node, value in assignments.items():
            mechanisms[node] = Mechanism.constant(node, value)
        return ScmInstance(exogenous, mechanisms, domains=self.domains)

    def _exogenous_assignments(self, cap: int):
        names = sorted(self.exogenous)
        size = 1
        for n in names:
            size *= len(self.exogenous[n].domain)
        if size > cap:
            raise StateSpaceTooLarge(
                f"exogenous product domain has {size} states (cap {cap})"
            )
        return names, itertools.product(*(self.exogenous[n].domain for n in names))

    def abduce(
        self,
        evidence: Mapping[str, Value],
        cap: int = DEFAULT_STATE_CAP,
    ) -> list[tuple[dict[str, Value], Fraction]]:
        """All exogenous assignments consistent with evidence, with normalized weights."""
        for node in evidence:
            if node not in self.domains:
                raise UnknownNode(f"evidence on unknown node {node!r}")
        names, assignments = self._exogenous_assignments(cap)
        weights = {n: dict(zip(self.exogenous[n].domain, self.exogenous[n].weights())) for n in names}
        consistent: list[tuple[dict[str, Value], Fraction]] = []
        total = Fraction(0)
        for combo in assignments:
            u = dict(zip(names, combo))
            world = self.evaluate(u)
            if all(world[k] == v for k, v in evidence.items()):
                w = Fraction(1)
                for n in names:
                    w *= weights[n][u[n]]
                consistent.append((u, w))
                total += w
        if total == 0:
            return []
        return [(u, w / total) for u, w in consistent]

    def counterfactual(
        self,
        evidence: Mapping[str, Value],
        interventions: Mapping[str, Value],
        target: str,
        cap: int = DEFAULT_STATE_CAP,
    ) -> dict[Value, Fraction]:
        """Exact counterfactual distribution of target.

        Sums, over exogenous assignments weighted by their posterior given the
        factual evidence, the target value reached after pinning the
        interventions; exogenous values are shared between both passes.
        """
        posterior = self.abduce(evidence, cap=cap)
        if not posterior:
            raise InfeasibleEvidence(
                f"evidence {dict(evidence)!r} admits no exogenous assignment"
            )
        modified = self.intervene(interventions)
        dist: dict[Value, Fraction] = {}
        for u, weight in posterior:
            u_kept = {k: v for k, v in u.items() if k in modified.exogenous}
            world = modified.evaluate(u_kept)
            value = world[target]
            dist[value] = dist.get(value, Fraction(0)) + weight
        return dist

    def observational(
        self,
        conditioning: Mapping[str, Value],
        target: str,
        cap: int = DEFAULT_STATE_CAP,
    ) -> dict[Value, Fraction]:
        """Exact conditional distribution P(target | conditioning) by enumeration."""
        posterior = self.abduce(conditioning, cap=cap)
        if not posterior:
            raise InfeasibleEvidence(
                f"conditioning {dict(conditioning)!r} has zero probability"
            )
        dist: dict[Value, Fraction] = {}
        for u, weight in posterior:
            world = self.evaluate(u)
            value = world[target]
            dist[value] = dist.get(value, Fraction(0)) + weight
        return dist

    # -- persistence ------------------------------------------------------------

    def to_dict(self) -> dict:
        mechanisms = {}
        for node, mech in self.mechanisms.items():
            if mech.expr is not None:
                mechanisms[node] = {"expr": mech.expr, "parents": list(mech.parents)}
            else:
                mechanisms[node] = {
                    "parents": list(mech.parents),
                    "table": {
                        ",".join(str(v) for v in key): value
                        for key, value in sorted(
                            mech.table.items(), key=lambda kv: repr(kv[0])
                        )
                    },
                }
        exogenous = {}
        for node, spec in self.exogenous.items():
            entry: dict = {"domain": list(spec.domain)}
            if spec.prior is not None:
                entry["prior"] = [str(p) for p in spec.prior]
            exogenous[node] = entry
        return {"exogenous": exogenous, "mechanisms": mechanisms}

    @classmethod
    def from_dict(cls, data: dict) -> "ScmInstance":
        exogenous = {}
        for node, entry in (data.get("exogenous") or {}).items():
            prior = entry.get("prior")
            exogenous[node] = ExogenousSpec(
                domain=tuple(entry["domain"]),
                prior=tuple(Fraction(p) for p in prior) if prior else None,
            )
        mechanisms = {}
        for node, entry in (data.get("mechanisms") or {}).items():
            if "expr" in entry:
                mechanisms[node] = Mechanism.from_expr(node, entry["expr"])
            else:
                parents = tuple(entry["parents"])
                table = {}
                for key, value in entry["table"].items():
                    parts = tuple(key.split(",")) if key else ()
                    if len(parts) != len(parents):
                        raise MechanismMissing(
                            f"table key {key!r} does not match parents {parents}"
                        )
                    table[tuple(_parse_table_atom(p) for p in parts)] = value
                mechanisms[node] = Mechanism(node=node, parents=parents, table=table)
        return cls(exogenous, mechanisms)


def _parse_table_atom(text: str) -> Value:
    try:
        return int(text)
    except ValueError:
        return text


def load_overlay(path: str | Path) -> ScmInstance:
    return ScmInstance.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def save_overlay(scm: ScmInstance, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scm.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )


@dataclass(frozen=True)
class TwinGraph:
    """Paired factual/counterfactual views sharing exogenous roots."""

    factual: ScmInstance
    counterfactual: ScmInstance
    shared_exogenous: frozenset[str]
    interventions: Mapping[str, Value] = field(default_factory=dict)


def build_twin(scm: ScmInstance, interventions: Mapping[str, Value]) -> TwinGraph:
    modified = scm.intervene(interventions)
    return TwinGraph(
        factual=scm,
        counterfactual=modified,
        shared_exogenous=frozenset(modified.exogenous),
        interventions=dict(interventions),
    )


def random_scm(
    n_nodes: int,
    max_parents: int = 3,
    domain: Sequence[Value] = (0, 1),
    seed: int = 0,
    exogenous_fraction: float = 0.4,
) -> ScmInstance:
    """Seeded random acyclic instance with total random table mechanisms."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    rng = random.Random(seed)
    width = max(2, len(str(n_nodes - 1)))
    names = [f"v{idx:0{width}d}" for idx in range(n_nodes)]
    order = names[:]
    rng.shuffle(order)
    exogenous: dict[str, ExogenousSpec] = {}
    mechanisms: dict[str, Mechanism] = {}
    domain = tuple(domain)
    for idx, node in enumerate(order):
        earlier = order[:idx]
        is_root = idx == 0 or rng.random() < exogenous_fraction
        if is_root:
            exogenous[node] = ExogenousSpec(domain=domain)
            continue
        k = rng.randint(1, min(max_parents, len(earlier)))
        parents = tuple(sorted(rng.sample(earlier, k)))
        table = {
            combo: rng.choice(domain)
            for combo in itertools.product(domain, repeat=len(parents))
        }
        mechanisms[node] = Mechanism(node=node, parents=parents, table=table)
    return ScmInstance(exogenous, mechanisms)
