"""Step-by-step causal inference over a query graph.

A query is answered in three phases: anticausal abduction resolves hidden
source values from their observed descendants in the factual world, those
values transfer to the counterfactual side, incoming edges of intervened
nodes are cut, and the target is predicted from its parents, recursively.
Each reasoning step sees only the node under inference plus its direct
parents (causal direction) or direct children (anticausal) and the
connecting relations; the plan is precomputed so the trace is auditable
and the step count well defined.
"""

from __future__ import annotations

import ast
import heapq
import itertools
import json
import re
from dataclasses import dataclass, field
from typing import Protocol

from .blanket import Query, QueryNode
from .errors import (
    AbductionConflict,
    AmbiguousAbduction,
    CyclicQueryRegion,
    DomainViolation,
    MaxRetriesExceeded,
    MechanismMissing,
    ParseFailure,
    ReasonerFailure,
    UnresolvableNode,
)
from .scm import ScmInstance
from .values import canonical_value

DEFAULT_MAX_RETRIES = 5


@dataclass
class InferencePlan:
    target: str
    abduction_steps: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)
    transfer: tuple[str, ...] = ()
    cut_edges: list[tuple[str, str]] = field(default_factory=list)
    prediction_steps: list[tuple[str, tuple[str, ...]]] = field(default_factory=list)

    @property
    def step_count(self) -> int:
        return len(self.abduction_steps) + len(self.prediction_steps)

    def to_dict(self) -> dict:
        return {
            "abduction_steps": [
                {"node": n, "from_children": list(c)} for n, c in self.abduction_steps
            ],
            "cut_edges": [list(e) for e in self.cut_edges],
            "prediction_steps": [
                {"node": n, "from_parents": list(p)} for n, p in self.prediction_steps
            ],
            "target": self.target,
            "transfer": list(self.transfer),
        }


class _QueryView:
    """Adjacency over a query graph, before and after intervention cuts."""

    def __init__(self, query: Query):
        self.query = query
        self.nodes: dict[str, QueryNode] = {n.id: n for n in query.nodes}
        self.pred: dict[str, set[str]] = {n: set() for n in self.nodes}
        self.succ: dict[str, set[str]] = {n: set() for n in self.nodes}
        for edge in query.edges:
            if edge.cause in self.nodes and edge.effect in self.nodes:
                self.pred[edge.effect].add(edge.cause)
                self.succ[edge.cause].add(edge.effect)
        self.cut_edges = sorted(
            (parent, node)
            for node in query.interventions
            if node in self.nodes
            for parent in self.pred[node]
        )
        self.cut_pred = {
            n: (set() if n in query.interventions else set(ps))
            for n, ps in self.pred.items()
        }
        self.cut_succ: dict[str, set[str]] = {n: set() for n in self.nodes}
        for n, ps in self.cut_pred.items():
            for p in ps:
                self.cut_succ[p].add(n)

    def topo_cut(self, region: set[str]) -> list[str]:
        indeg = {n: len(self.cut_pred[n] & region) for n in region}
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            node = heapq.heappop(heap)
            order.append(node)
            for child in self.cut_succ[node]:
                if child in region:
                    indeg[child] -= 1
                    if indeg[child] == 0:
                        heapq.heappush(heap, child)
        if len(order) != len(region):
            raise CyclicQueryRegion("query region contains a directed cycle after cuts")
        return order

    def ancestors_cut(self, target: str) -> set[str]:
        seen: set[str] = set()
        stack = list(self.cut_pred.get(target, ()))
        while stack:
            node = stack.pop()
            if node in seen:
                continue
            seen.add(node)
            stack.extend(self.cut_pred.get(node, ()))
        seen.discard(target)
        return seen


def plan_inference(query: Query) -> InferencePlan:
    """Deterministic plan: abduction order, transfer set, cuts, prediction order."""
    view = _QueryView(query)
    target = query.target
    if target not in view.nodes:
        raise UnresolvableNode(f"target {target!r} missing from the query graph")

    if query.kind == "observation":
        return _plan_observation(query, view)
    return _plan_counterfactual(query, view)


def _plan_observation(query: Query, view: _QueryView) -> InferencePlan:
    target = query.target
    if target in query.observations:
        return InferencePlan(target=target)
    needed = view.ancestors_cut(target) | {target}
    order = view.topo_cut(needed)
    prediction_steps = []
    for node in order:
        if node in query.observations:
            continue
        parents = tuple(sorted(view.pred[node]))
        unresolved = [
            p for p in parents if p not in query.observations and not _planned(p, prediction_steps)
        ]
        if unresolved:
            raise UnresolvableNode(
                f"node {node!r} depends on unplanned parents {unresolved}"
            )
        prediction_steps.append((node, parents))
    return InferencePlan(target=target, prediction_steps=prediction_steps)


def _planned(node: str, steps: list[tuple[str, tuple[str, ...]]]) -> bool:
    return any(n == node for n, _ in steps)


def _plan_counterfactual(query: Query, view: _QueryView) -> InferencePlan:
    target = query.target
    matched = frozenset(query.matched or ())
    stops = set(query.interventions) | matched

    # needed region: walk up the cut graph without expanding past the frontier
    needed = {target}
    stack = [target]
    while stack:
        node = stack.pop()
        if node in stops and node != target:
            continue
        for parent in view.cut_pred[node]:
            if parent not in needed:
                needed.add(parent)
                stack.append(parent)

    # deterministic topo order with frontier in-edges ignored
    effective_pred = {
        n: (set() if n in stops else view.cut_pred[n] & needed) for n in needed
    }
    indeg = {n: len(ps) for n, ps in effective_pred.items()}
    succ: dict[str, set[str]] = {n: set() for n in needed}
    for n, ps in effective_pred.items():
        for p in ps:
            succ[p].add(n)
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
    if len(order) != len(needed):
        raise CyclicQueryRegion("query region contains a directed cycle after cuts")

    # factual-side anticausal closure: which hidden nodes can be recovered
    observed = set(query.observations)
    abducible: set[str] = set(observed)
    changed = True
    while changed:
        changed = False
        for node in view.nodes:
            if node in abducible or node in query.interventions:
                continue
            if view.succ[node] & abducible:
                abducible.add(node)
                changed = True

    resolved: set[str] = set(query.interventions)
    transfer: list[str] = []
    abduction_plan: list[tuple[str, tuple[str, ...]]] = []
    prediction_steps: list[tuple[str, tuple[str, ...]]] = []

    def schedule_abduction(source: str) -> None:
        """Anticausal chains: resolve observed-side descendants first, bottom-up."""
        stack = [source]
        seen = {source}
        resolved_f = set(observed) | {n for n, _ in abduction_plan}
        while stack:
            node = stack[-1]
            if node in resolved_f:
                stack.pop()
                continue
            children = sorted(view.succ[node])
            usable = [c for c in children if c in resolved_f]
            if usable:
                abduction_plan.append((node, tuple(usable)))
                resolved_f.add(node)
                stack.pop()
                continue
            expandable = [c for c in children if c in abducible and c not in seen]
            if not expandable:
                raise UnresolvableNode(
                    f"node {node!r} has no resolvable children for abduction"
                )
            stack.extend(reversed(expandable))
            seen.update(expandable)

    for node in order:
        if node in query.interventions:
            continue
        is_source = node in matched or not effective_pred[node]
        if not is_source:
            parents = tuple(sorted(view.cut_pred[node] & needed))
            missing = [p for p in parents if p not in resolved]
            if missing:
                raise UnresolvableNode(
                    f"node {node!r} has unresolved parents {missing}"
                )
            prediction_steps.append((node, parents))
            resolved.add(node)
            continue
        # frontier node: its value comes from the factual side
        if node in observed:
            pass  # factual roots are shared; transfer the observed value directly
        elif node in abducible:
            schedule_abduction(node)
        else:
            raise UnresolvableNode(
                f"source node {node!r} is neither observed nor abducible"
            )
        transfer.append(node)
        resolved.add(node)

    return InferencePlan(
        target=target,
        abduction_steps=abduction_plan,
        transfer=tuple(transfer),
        cut_edges=view.cut_edges,
        prediction_steps=prediction_steps,
    )


# --- execution -----------------------------------------------------------------


@dataclass
class StepResult:
    current_value: str
    contextual_information: str = ""
    causal_effect: str = ""


class Reasoner(Protocol):
    def infer_step(
        self,
        target_attrs: dict,
        neighbor_variables: list[dict],
        causal_relationships: list[dict],
        direction: str,
        feedback: str | None = None,
    ) -> StepResult: ...

    def pop_usage(self) -> tuple[int, int]: ...


@dataclass
class StepRecord:
    node: str
    direction: str  # causal | anticausal
    value: str
    inputs: tuple[str, ...]
    retries: int = 0
    ambiguous: bool = False
    contextual_information: str = ""

    def to_dict(self) -> dict:
        return {
            "ambiguous": self.ambiguous,
            "contextual_information": self.contextual_information,
            "direction": self.direction,
            "inputs": list(self.inputs),
            "node": self.node,
            "retries": self.retries,
            "value": self.value,
        }


@dataclass
class Trace:
    steps: list[StepRecord] = field(default_factory=list)
    retries: int = 0
    input_tokens: int = 0
    output_tokens: int = 0

    def to_dict(self) -> dict:
        return {
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "retries": self.retries,
            "steps": [s.to_dict() for s in self.steps],
        }


@dataclass
class InferenceResult:
    target_value: str
    resolved: dict[str, str]
    trace: Trace

    def to_dict(self) -> dict:
        return {
            "resolved": dict(sorted(self.resolved.items())),
            "target_value": self.target_value,
            "trace": self.trace.to_dict(),
        }


def _variable_payload(node: QueryNode, value: str | None) -> dict:
    return {
        "name": node.id,
        "description": node.description or node.name,
        "type": node.var_type,
        "values": node.values,
        "causal_effect": None,
        "supporting_text_snippets": None,
        "current_value": value,
        "contextual_information": node.contextual_information,
    }


def _relation_payloads(query: Query, node: str, neighbors: tuple[str, ...], direction: str) -> list[dict]:
    wanted = (
        {(p, node) for p in neighbors}
        if direction == "causal"
        else {(node, c) for c in neighbors}
    )
    payloads = []
    for edge in query.edges:
        if (edge.cause, edge.effect) in wanted:
            payloads.append(
                {
                    "cause": edge.cause,
                    "effect": edge.effect,
                    "description": edge.description,
                    "contextual_information": None,
                    "type": edge.rel_type,
                    "strength": None,
                    "confidence": None,
                    "function": None,
                }
            )
    return payloads


def execute(
    plan: InferencePlan,
    query: Query,
    reasoner: Reasoner,
    max_retries: int = DEFAULT_MAX_RETRIES,
) -> InferenceResult:
    """Run the plan step by step, aggregating the trace.

    Abduction steps consume factual values; predictions consume
    counterfactual values. Each reasoner call gets the target node and its
    direct neighbors only. Parse failures retry with error feedback up to
    max_retries per step.
    """
    view = _QueryView(query)
    factual: dict[str, str] = dict(query.observations)
    counterfactual: dict[str, str] = dict(query.interventions)
    if query.kind == "observation":
        # single-world query: observed values feed predictions directly
        counterfactual.update(query.observations)
    trace = Trace()

    def add_usage() -> None:
        pop = getattr(reasoner, "pop_usage", None)
        if pop is not None:
            used_in, used_out = pop()
            trace.input_tokens += used_in
            trace.output_tokens += used_out

    def run_step(node: str, neighbors: tuple[str, ...], direction: str, values: dict) -> str:
        qnode = view.nodes[node]
        neighbor_payloads = [
            _variable_payload(view.nodes[n], values.get(n)) for n in neighbors
        ]
        relations = _relation_payloads(query, node, neighbors, direction)
        attempt = 0
        feedback = None
        while True:
            try:
                result = reasoner.infer_step(
                    _variable_payload(qnode, None),
                    neighbor_payloads,
                    relations,
                    direction,
                    feedback=feedback,
                )
                add_usage()
                break
            except ParseFailure as exc:
                add_usage()
                attempt += 1
                trace.retries += 1
                feedback = str(exc)
                if attempt > max_retries:
                    raise MaxRetriesExceeded(
                        f"step for {node!r} failed after {max_retries} retries: {exc}"
                    ) from exc
        trace.steps.append(
            StepRecord(
                node=node,
                direction=direction,
                value=result.current_value,
                inputs=neighbors,
                retries=attempt,
                contextual_information=result.contextual_information,
            )
        )
        return result.current_value

    for node, children in plan.abduction_steps:
        factual[node] = run_step(node, children, "anticausal", factual)
    for node in plan.transfer:
        counterfactual[node] = factual[node]
    for node, parents in plan.prediction_steps:
        counterfactual[node] = run_step(node, parents, "causal", counterfactual)

    if plan.target in counterfactual:
        target_value = counterfactual[plan.target]
    elif plan.target in query.observations:
        target_value = query.observations[plan.target]
    else:
        raise ReasonerFailure(f"plan did not resolve target {plan.target!r}")
    resolved = dict(counterfactual)
    for node, value in factual.items():
        resolved.setdefault(node, value)
    return InferenceResult(target_value=target_value, resolved=resolved, trace=trace)


# --- reasoners ---------------------------------------------------------------------


class DeterministicReasoner:
    """Mechanism-backed reasoner: exact causal evaluation, anticausal inversion.

    Causal steps evaluate the node's mechanism on the provided parent values.
    Anticausal steps enumerate the node's domain and keep the values
    consistent with every provided child; zero candidates is a conflict,
    several an ambiguity.
    """

    def __init__(self, scm: ScmInstance):
        self.scm = scm

    def pop_usage(self) -> tuple[int, int]:
        return (0, 0)

    def _parse(self, payload: dict) -> object:
        value = payload.get("current_value")
        return _to_native(value)

    def infer_step(
        self, target_attrs, neighbor_variables, causal_relationships, direction, feedback=None
    ):
        node = target_attrs["name"]
        if direction == "causal":
            mech = self.scm.mechanisms.get(node)
            if mech is None:
                raise MechanismMissing(f"no mechanism for node {node!r}")
            env = {v["name"]: self._parse(v) for v in neighbor_variables}
            missing = [p for p in mech.parents if p not in env]
            if missing:
                raise MechanismMissing(
                    f"step for {node!r} lacks parent values {missing}"
                )
            for name, value in env.items():
                domain = self.scm.domains.get(name)
                if domain is not None and value not in domain:
                    raise DomainViolation(
                        f"value {value!r} outside domain of {name!r}"
                    )
            value = mech(env)
            return StepResult(
                current_value=str(value),
                contextual_information="computed from parent mechanisms",
                causal_effect=str(value),
            )
        # anticausal: invert against each observed child
        domain = self.scm.domains.get(node)
        if domain is None:
            raise MechanismMissing(f"node {node!r} has no declared domain")
        children = {v["name"]: self._parse(v) for v in neighbor_variables}
        candidates = []
        for value in domain:
            if all(
                self._consistent(node, value, child, observed)
                for child, observed in children.items()
            ):
                candidates.append(value)
        if not candidates:
            raise AbductionConflict(
                f"no value of {node!r} explains children {children!r}"
            )
        if len(candidates) > 1:
            raise AmbiguousAbduction(
                f"values {candidates!r} of {node!r} all explain the children"
            )
        value = candidates[0]
        return StepResult(
            current_value=str(value),
            contextual_information="inverted from child mechanisms",
            causal_effect=str(value),
        )

    def _consistent(self, node: str, value, child: str, observed) -> bool:
        mech = self.scm.mechanisms.get(child)
        if mech is None:
            raise MechanismMissing(f"no mechanism for child {child!r}")
        others = [p for p in mech.parents if p != node]
        for combo in itertools.product(*(self.scm.domains[p] for p in others)):
            env = dict(zip(others, combo))
            env[node] = value
            if mech(env) == observed:
                return True
        return False


def _to_native(value):
    """Best-effort canonical native value for mechanism tables."""
    if value is None or isinstance(value, (int, bool)):
        return value
    text = str(value).strip()
    try:
        return int(text)
    except ValueError:
        pass
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    return canonical_value(text)


def deterministic_reasoner(scm: ScmInstance) -> DeterministicReasoner:
    return DeterministicReasoner(scm)


_JSON_BLOCK = re.compile(r"```(?:json|py|python)?\s*(.*?)```", re.DOTALL)


class ChatReasoner:
    """Chat-backed reasoner following the step prompt contract.

    Sends the target attributes, direct neighbors, and connecting relations;
    expects a reply containing a code block with a dictionary of updated
    attributes including `current_value`.
    """

    def __init__(self, backend, system_prompt: str | None = None):
        from .prompts import inference_system_prompt

        self.backend = backend
        self.system_prompt = system_prompt or inference_system_prompt()
        self._pending_usage = [0, 0]

    def pop_usage(self) -> tuple[int, int]:
        used = (self._pending_usage[0], self._pending_usage[1])
        self._pending_usage = [0, 0]
        return used

    def infer_step(
        self, target_attrs, neighbor_variables, causal_relationships, direction, feedback=None
    ):
        from .prompts import inference_step_prompt

        user = inference_step_prompt(
            target_attrs, neighbor_variables, causal_relationships, direction
        )
        messages = [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": user},
        ]
        if feedback:
            messages.append(
                {
                    "role": "user",
                    "content": f"The previous reply could not be parsed: {feedback}. "
                    "Reply again with a single code block holding the updated attribute dictionary.",
                }
            )
        reply = self.backend.complete(messages)
        self._pending_usage[0] += reply.input_tokens
        self._pending_usage[1] += reply.output_tokens
        payload = parse_step_reply(reply.content)
        return StepResult(
            current_value=str(payload["current_value"]),
            contextual_information=str(payload.get("contextual_information") or ""),
            causal_effect=str(payload.get("causal_effect") or ""),
        )


def _balanced_blocks(text: str):
    """Yield each balanced {...} block, tolerating string literals inside."""
    start = text.find("{")
    while start >= 0:
        depth = 0
        quote: str | None = None
        i = start
        end = None
        while i < len(text):
            ch = text[i]
            if quote:
                if ch == "\\":
                    i += 1
                elif ch == quote:
                    quote = None
            elif ch in "'\"":
                quote = ch
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    end = i
                    break
            i += 1
        if end is None:
            return
        yield text[start : end + 1]
        start = text.find("{", end + 1)


def parse_step_reply(content: str) -> dict:
    """Extract the updated-attributes dictionary from a reasoner reply."""
    sections = _JSON_BLOCK.findall(content) or [content]
    for section in sections:
        for block in _balanced_blocks(section):
            try:
                payload = json.loads(block)
            except json.JSONDecodeError:
                try:
                    payload = ast.literal_eval(block)
                except (ValueError, SyntaxError):
                    continue
            if isinstance(payload, dict) and payload.get("current_value") is not None:
                return payload
    raise ParseFailure("reply does not contain a dictionary with current_value")


def chat_reasoner(backend, system_prompt: str | None = None) -> ChatReasoner:
    return ChatReasoner(backend, system_prompt)
