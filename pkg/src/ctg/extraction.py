"""Document-to-graph extraction pipeline.

A chat backend is driven through a fixed plan: propose variables and
confounders, dedup them against the graph through retrieval, propose
relationships, emit a structured payload. The orchestrator never executes
model-written code; it parses the structured payload out of the reply's
code block, validates it, and merges it into the store. Each document
grounds one world.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    BackendFailure,
    InvalidVariable,
    MaxRetriesExceeded,
    SchemaViolation,
    UnknownEndpoint,
)
from .graph import CausalRelation, CausalVariable, WorldAssignment, WorldGraph
from .inference import _balanced_blocks  # same code-block parsing rules
from .prompts import (
    extraction_payload_prompt,
    extraction_system_prompt,
    extraction_variables_prompt,
)
from .retrieval import VectorIndex, node_text, retrieve_for_document
from .values import slugify

CHAT_URL_ENV = "CTG_CHAT_URL"
CHAT_KEY_ENV = "CTG_CHAT_KEY"

DEFAULT_MATCH_THRESHOLD = 0.85

NODE_REQUIRED_FIELDS = ("name", "description", "type", "values")
NODE_OPTIONAL_FIELDS = (
    "causal_effect",
    "supporting_text_snippets",
    "current_value",
    "contextual_information",
)
EDGE_REQUIRED_FIELDS = ("cause", "effect", "description")
EDGE_OPTIONAL_FIELDS = (
    "contextual_information",
    "type",
    "strength",
    "confidence",
    "function",
)


@dataclass
class Document:
    doc_id: str
    title: str
    body: str
    metadata: dict = field(default_factory=dict)
    world_id: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> "Document":
        return cls(
            doc_id=str(data.get("doc_id") or data.get("id") or ""),
            title=data.get("title") or "",
            body=data.get("body") or data.get("text") or "",
            metadata=data.get("metadata") or {},
        )


@dataclass
class ChatReply:
    content: str
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass
class TranscriptStep:
    thought: str
    code: str
    observation: str


@dataclass
class AgentTranscript:
    steps: list[TranscriptStep] = field(default_factory=list)
    final_payload: dict | None = None
    retry_count: int = 0
    input_tokens: int = 0
    output_tokens: int = 0


class MockChatBackend:
    """Replays canned replies in order; used for offline tests and demos."""

    def __init__(self, replies: list[dict | str]):
        self._replies = list(replies)
        self._cursor = 0
        self.calls: list[list[dict]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        replies = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    replies.append(json.loads(line))
        return cls(replies)

    def complete(self, messages: list[dict]) -> ChatReply:
        self.calls.append(messages)
        if self._cursor >= len(self._replies):
            raise BackendFailure("mock transcript exhausted")
        entry = self._replies[self._cursor]
        self._cursor += 1
        if isinstance(entry, str):
            entry = {"content": entry}
        usage = entry.get("usage") or {}
        content = entry["content"]
        return ChatReply(
            content=content,
            input_tokens=int(
                usage.get("input_tokens")
                or sum(len(m["content"].split()) for m in messages)
            ),
            output_tokens=int(usage.get("output_tokens") or len(content.split())),
        )


class HttpChatBackend:
    """Chat completions over a JSON POST protocol.

    Request: {"model": ..., "messages": [{"role", "content"}]};
    reply: {"choices": [{"message": {"content"}}], "usage": {...}}.
    """

    def __init__(
        self,
        url: str | None = None,
        api_key: str | None = None,
        model: str = "default",
        timeout: float = 120.0,
        attempts: int = 3,
    ):
        self.url = url or os.environ.get(CHAT_URL_ENV)
        self.api_key = api_key or os.environ.get(CHAT_KEY_ENV)
        self.model = model
        self.timeout = timeout
        self.attempts = attempts
        if not self.url:
            raise BackendFailure(f"no chat endpoint; set {CHAT_URL_ENV}")

    def complete(self, messages: list[dict]) -> ChatReply:
        import httpx

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {"model": self.model, "messages": list(messages)}
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                reply = httpx.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                reply.raise_for_status()
                data = reply.json()
                usage = data.get("usage") or {}
                return ChatReply(
                    content=data["choices"][0]["message"]["content"],
                    input_tokens=int(usage.get("prompt_tokens") or usage.get("input_tokens") or 0),
                    output_tokens=int(
                        usage.get("completion_tokens") or usage.get("output_tokens") or 0
                    ),
                )
            except Exception as exc:
                last_error = exc
                time.sleep(min(2.0**attempt * 0.25, 4.0))
        raise BackendFailure(f"chat backend failed after {self.attempts} attempts: {last_error}")


def make_backend(spec: str):
    """Backend factory for CLI flags: 'live' or 'mock:<transcript.jsonl>'."""
    if spec == "live":
        return HttpChatBackend()
    if spec.startswith("mock:"):
        return MockChatBackend.from_file(spec.split(":", 1)[1])
    raise BackendFailure(f"unknown backend spec {spec!r}")


# --- payload parsing and validation ----------------------------------------------


def _split_reply(content: str) -> tuple[str, str]:
    """Thought text before the first code fence, plus the fenced code."""
    fence = content.find("```")
    if fence < 0:
        return content.strip(), ""
    thought = content[:fence].strip()
    rest = content[fence + 3 :]
    newline = rest.find("\n")
    if newline >= 0 and rest[:newline].strip().isalpha():
        rest = rest[newline + 1 :]
    close = rest.find("```")
    code = rest[:close] if close >= 0 else rest
    return thought, code.strip()


def parse_structured_reply(content: str, required_key: str) -> dict:
    """Pull the first dictionary containing required_key out of a reply."""
    _, code = _split_reply(content)
    searchable = code or content
    for block in _balanced_blocks(searchable):
        try:
            payload = json.loads(block)
        except json.JSONDecodeError:
            try:
                import ast

                payload = ast.literal_eval(block)
            except (ValueError, SyntaxError):
                continue
        if isinstance(payload, dict) and required_key in payload:
            return payload
    raise SchemaViolation(f"reply holds no dictionary with key {required_key!r}")


def normalize_node(entry: dict) -> dict:
    if not isinstance(entry, dict):
        raise SchemaViolation(f"node entry is not a dictionary: {entry!r}")
    missing = [f for f in NODE_REQUIRED_FIELDS if not entry.get(f)]
    if missing:
        raise SchemaViolation(f"node {entry.get('name')!r} lacks fields {missing}")
    node = {f: entry[f] for f in NODE_REQUIRED_FIELDS}
    if isinstance(node["values"], (list, tuple)):
        node["values"] = json.dumps(list(node["values"]))
    for f in NODE_OPTIONAL_FIELDS:
        node[f] = entry.get(f)
    snippets = node["supporting_text_snippets"]
    if snippets is not None and not isinstance(snippets, list):
        node["supporting_text_snippets"] = [str(snippets)]
    return node


def normalize_edge(entry: dict) -> dict:
    if not isinstance(entry, dict):
        raise SchemaViolation(f"edge entry is not a dictionary: {entry!r}")
    missing = [f for f in EDGE_REQUIRED_FIELDS if not entry.get(f)]
    if missing:
        raise SchemaViolation(
            f"edge {entry.get('cause')!r}->{entry.get('effect')!r} lacks fields {missing}"
        )
    edge = {f: entry[f] for f in EDGE_REQUIRED_FIELDS}
    for f in EDGE_OPTIONAL_FIELDS:
        edge[f] = entry.get(f)
    if not edge["type"]:
        edge["type"] = "direct"
    return edge


def validate_payload(payload: dict) -> dict:
    """Schema-checked payload with every optional field made explicit."""
    nodes = [normalize_node(n) for n in payload.get("nodes") or []]
    edges = [normalize_edge(e) for e in payload.get("edges") or []]
    names = {n["name"] for n in nodes}
    for edge in edges:
        for endpoint in (edge["cause"], edge["effect"]):
            if endpoint not in names:
                raise SchemaViolation(
                    f"edge endpoint {endpoint!r} is not among the payload nodes"
                )
    return {"nodes": nodes, "edges": edges}


# --- orchestration ------------------------------------------------------------------


def run_extraction(
    doc: Document,
    graph: WorldGraph,
    index: VectorIndex,
    backend,
    max_steps: int = 8,
    max_retries: int = 3,
) -> AgentTranscript:
    """Drive the extraction plan for one document and return the transcript."""
    if not doc.body.strip():
        raise InvalidVariable(f"document {doc.doc_id!r} has an empty body")
    transcript = AgentTranscript()
    system = {"role": "system", "content": extraction_system_prompt()}
    context = retrieve_for_document(graph, index, f"{doc.title}\n{doc.body}")
    messages = [
        system,
        {
            "role": "user",
            "content": extraction_variables_prompt(
                doc.title, doc.body, context.render(graph)
            ),
        },
    ]

    variables_payload = _call_until_parsed(
        backend, messages, "variables", transcript, max_steps, max_retries
    )
    candidates = [normalize_node(v) for v in variables_payload["variables"]]

    dedup_lines = []
    for candidate in candidates:
        probe = CausalVariable(
            name=candidate["name"],
            description=candidate["description"],
            var_type=candidate["type"],
            values=str(candidate["values"]),
        )
        if len(index) == 0:
            dedup_lines.append(f"- {candidate['name']}: <no existing match>")
            continue
        ranked = index.top_k(node_text(probe), k=3)
        best_id, best_score = ranked[0]
        if best_score >= DEFAULT_MATCH_THRESHOLD:
            dedup_lines.append(
                f"- {candidate['name']}: matches existing node "
                f"{graph.nodes[best_id].name!r} (id {best_id}, score {best_score:.3f})"
            )
        else:
            dedup_lines.append(
                f"- {candidate['name']}: closest is {graph.nodes[best_id].name!r} "
                f"(score {best_score:.3f}), below the match threshold"
            )
    dedup_block = "\n".join(dedup_lines) if dedup_lines else "<empty>"
    messages.append({"role": "user", "content": extraction_payload_prompt(dedup_block)})

    payload = _call_until_parsed(
        backend, messages, "nodes", transcript, max_steps, max_retries
    )
    transcript.final_payload = validate_payload(payload)
    return transcript


def _call_until_parsed(backend, messages, required_key, transcript, max_steps, max_retries):
    retries = 0
    while True:
        if len(transcript.steps) >= max_steps:
            raise MaxRetriesExceeded(
                f"extraction exceeded the {max_steps}-step budget"
            )
        reply = backend.complete(messages)
        transcript.input_tokens += reply.input_tokens
        transcript.output_tokens += reply.output_tokens
        thought, code = _split_reply(reply.content)
        try:
            payload = parse_structured_reply(reply.content, required_key)
            observation = f"parsed payload with key {required_key!r}"
            transcript.steps.append(
                TranscriptStep(thought=thought, code=code, observation=observation)
            )
            return payload
        except SchemaViolation as exc:
            retries += 1
            transcript.retry_count += 1
            transcript.steps.append(
                TranscriptStep(thought=thought, code=code, observation=f"error: {exc}")
            )
            if retries > max_retries:
                raise MaxRetriesExceeded(
                    f"no parseable payload after {max_retries} retries: {exc}"
                ) from exc
            messages.append({"role": "assistant", "content": reply.content})
            messages.append(
                {
                    "role": "user",
                    "content": f"Observation: {exc}. Reply again with one code block "
                    "holding the requested dictionary.",
                }
            )


@dataclass
class MergeReport:
    world_id: str
    new_nodes: int = 0
    matched_nodes: int = 0
    new_edges: int = 0
    skipped_edges: int = 0

    def to_dict(self) -> dict:
        return {
            "matched_nodes": self.matched_nodes,
            "new_edges": self.new_edges,
            "new_nodes": self.new_nodes,
            "skipped_edges": self.skipped_edges,
            "world_id": self.world_id,
        }


def merge_payload(
    graph: WorldGraph,
    payload: dict,
    world_id: str,
    index: VectorIndex,
    match_threshold: float = DEFAULT_MATCH_THRESHOLD,
) -> MergeReport:
    """Merge a validated payload into the graph under one world.

    Candidate nodes are matched against the index; scores at or above the
    threshold merge into the existing node, everything else inserts fresh.
    Edges resolve payload names to ids and insert idempotently.
    """
    payload = validate_payload(payload)
    report = MergeReport(world_id=world_id)
    name_to_id: dict[str, str] = {}
    for entry in payload["nodes"]:
        probe = CausalVariable(
            name=entry["name"],
            description=entry["description"],
            var_type=entry["type"],
            values=str(entry["values"]),
        )
        target_id = None
        if len(index) > 0:
            ranked = index.top_k(node_text(probe), k=3)
            best_id, best_score = ranked[0]
            if best_score >= match_threshold:
                target_id = best_id
        worlds = {}
        if entry.get("current_value"):
            worlds[world_id] = WorldAssignment(
                current_value=str(entry["current_value"]),
                contextual_information=str(entry.get("contextual_information") or ""),
                supporting_text_snippets=[
                    str(s) for s in entry.get("supporting_text_snippets") or []
                ],
                causal_effect=entry.get("causal_effect"),
            )
        if target_id is None:
            variable = CausalVariable(
                name=entry["name"],
                description=entry["description"],
                var_type=entry["type"],
                values=str(entry["values"]),
                worlds=worlds,
            )
            fresh = variable.id not in graph.nodes
            node_id = graph.upsert_variable(variable)
            if fresh:
                report.new_nodes += 1
                index.index_node(graph.nodes[node_id])
            else:
                report.matched_nodes += 1
        else:
            existing = graph.nodes[target_id]
            merged = CausalVariable(
                name=existing.name,
                description=existing.description,
                var_type=existing.var_type,
                values=existing.values,
                worlds=worlds,
                id=existing.id,
            )
            node_id = graph.upsert_variable(merged)
            report.matched_nodes += 1
        name_to_id[entry["name"]] = node_id

    for entry in payload["edges"]:
        cause = _resolve_endpoint(graph, name_to_id, entry["cause"])
        effect = _resolve_endpoint(graph, name_to_id, entry["effect"])
        key = (cause, effect)
        if key in graph.edges:
            report.skipped_edges += 1
            continue
        graph.upsert_relation(
            CausalRelation(
                cause=cause,
                effect=effect,
                description=str(entry["description"]),
                contextual_information=entry.get("contextual_information"),
                rel_type=str(entry.get("type") or "direct"),
                strength=entry.get("strength"),
                confidence=entry.get("confidence"),
                mechanism=entry.get("function"),
            )
        )
        report.new_edges += 1
    return report


def _resolve_endpoint(graph: WorldGraph, name_to_id: dict[str, str], name: str) -> str:
    if name in name_to_id:
        return name_to_id[name]
    slug = slugify(name)
    if slug in graph.nodes:
        return slug
    for nid, var in graph.nodes.items():
        if var.name == name:
            return nid
    raise UnknownEndpoint(f"edge endpoint {name!r} resolves to no node")


def ingest_documents(
    docs: list[Document],
    graph: WorldGraph,
    index: VectorIndex,
    backend,
    max_retries: int = 3,
) -> list[MergeReport]:
    """Process documents in order; each one registers and fills a new world."""
    reports = []
    for doc in docs:
        world_id = doc.world_id or graph.next_world_id()
        graph.register_world(
            world_id,
            {"source": doc.doc_id, "title": doc.title, **(doc.metadata or {})},
        )
        doc.world_id = world_id
        transcript = run_extraction(
            doc, graph, index, backend, max_retries=max_retries
        )
        report = merge_payload(graph, transcript.final_payload, world_id, index)
        reports.append(report)
    return reports


def load_documents(path: str | Path) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                docs.append(Document.from_dict(json.loads(line)))
    return docs
