import json

import pytest

from ctg.errors import (
    InvalidVariable,
    MaxRetriesExceeded,
    SchemaViolation,
    UnknownEndpoint,
)
from ctg.extraction import (
    AgentTranscript,
    Document,
    MockChatBackend,
    ingest_documents,
    load_documents,
    make_backend,
    merge_payload,
    parse_structured_reply,
    run_extraction,
    validate_payload,
)
from ctg.graph import WorldGraph
from ctg.retrieval import HashEmbeddingBackend, VectorIndex

AIR_DOC = Document(
    doc_id="doc-air-1",
    title="City air quality worsens as summer heat peaks",
    body=(
        "Cities with heavy air pollution report rising respiratory complaints "
        "during the hottest months. Physicians point to a mix of higher "
        "temperatures and industrial emissions, and note that residents with "
        "asthma are hit hardest."
    ),
)


def air_variables_reply() -> str:
    variables = [
        {
            "name": "Air Pollution",
            "description": "Level of airborne pollutants in the city.",
            "type": "float",
            "values": "range(0,100)",
            "supporting_text_snippets": ["heavy air pollution"],
            "current_value": "high",
            "contextual_information": "Elevated in several cities.",
        },
        {
            "name": "Temperature",
            "description": "Ambient temperature during summer.",
            "type": "float",
            "values": "range(20,50)",
            "supporting_text_snippets": ["hottest months"],
            "current_value": "high",
            "contextual_information": "Summer peak.",
        },
        {
            "name": "Industrial Pollution",
            "description": "Emissions from industrial activity.",
            "type": "float",
            "values": "range(0,100)",
            "current_value": None,
            "contextual_information": None,
        },
        {
            "name": "Respiratory Issues",
            "description": "Rate of respiratory complaints in the population.",
            "type": "float",
            "values": "range(0,100)",
            "supporting_text_snippets": ["rising respiratory complaints"],
            "current_value": "rising",
            "contextual_information": "Reported by physicians.",
        },
        {
            "name": "Pre-existing Respiratory Conditions",
            "description": "Share of residents with conditions such as asthma.",
            "type": "float",
            "values": "range(0,100)",
            "current_value": None,
            "contextual_information": None,
        },
    ]
    return (
        "Identified the observed variables plus one confounder.\n"
        "```json\n" + json.dumps({"variables": variables}) + "\n```"
    )


def air_payload_reply() -> str:
    nodes = json.loads(air_variables_reply().split("```json\n")[1].split("\n```")[0])[
        "variables"
    ]
    edges = [
        {
            "cause": "Air Pollution",
            "effect": "Respiratory Issues",
            "description": "More pollution drives more respiratory complaints.",
            "type": "direct",
        },
        {
            "cause": "Temperature",
            "effect": "Industrial Pollution",
            "description": "Heat intensifies industrial emissions.",
            "type": "direct",
        },
        {
            "cause": "Industrial Pollution",
            "effect": "Respiratory Issues",
            "description": "Industrial emissions aggravate breathing problems.",
            "type": "direct",
        },
        {
            "cause": "Pre-existing Respiratory Conditions",
            "effect": "Respiratory Issues",
            "description": "Vulnerable residents react more strongly.",
            "type": "direct",
        },
    ]
    return (
        "Building the full graph payload now.\n"
        "```json\n" + json.dumps({"nodes": nodes, "edges": edges}) + "\n```"
    )


def fresh_state():
    graph = WorldGraph()
    index = VectorIndex(HashEmbeddingBackend())
    return graph, index


class TestRunExtraction:
    def test_air_pollution_example(self):
        graph, index = fresh_state()
        backend = MockChatBackend([air_variables_reply(), air_payload_reply()])
        transcript = run_extraction(AIR_DOC, graph, index, backend)
        assert transcript.final_payload is not None
        assert len(transcript.final_payload["nodes"]) == 5
        assert len(transcript.final_payload["edges"]) == 4
        assert transcript.retry_count == 0
        assert len(transcript.steps) == 2

    def test_empty_document_fails_before_any_call(self):
        graph, index = fresh_state()
        backend = MockChatBackend([])
        with pytest.raises(InvalidVariable):
            run_extraction(
                Document(doc_id="d", title="t", body="   "), graph, index, backend
            )
        assert backend.calls == []

    def test_malformed_then_valid_retries(self):
        graph, index = fresh_state()
        backend = MockChatBackend(
            [
                "no code block here",
                "still not parseable",
                air_variables_reply(),
                air_payload_reply(),
            ]
        )
        transcript = run_extraction(AIR_DOC, graph, index, backend)
        assert transcript.retry_count == 2
        assert transcript.final_payload is not None
        # the parse error was fed back as an observation
        assert any("Observation" in m["content"] for m in backend.calls[-2][2:])

    def test_max_retries_exceeded(self):
        graph, index = fresh_state()
        backend = MockChatBackend(["bad"] * 10)
        with pytest.raises(MaxRetriesExceeded):
            run_extraction(AIR_DOC, graph, index, backend, max_retries=2)

    def test_token_totals_equal_call_sums(self):
        graph, index = fresh_state()
        replies = [
            {"content": air_variables_reply(), "usage": {"input_tokens": 100, "output_tokens": 50}},
            {"content": air_payload_reply(), "usage": {"input_tokens": 120, "output_tokens": 70}},
        ]
        backend = MockChatBackend(replies)
        transcript = run_extraction(AIR_DOC, graph, index, backend)
        assert transcript.input_tokens == 220
        assert transcript.output_tokens == 120


class TestPayloadValidation:
    def test_missing_required_field(self):
        with pytest.raises(SchemaViolation):
            validate_payload({"nodes": [{"name": "X"}], "edges": []})

    def test_edge_endpoint_must_exist(self):
        node = {
            "name": "A",
            "description": "d",
            "type": "string",
            "values": "v",
        }
        with pytest.raises(SchemaViolation):
            validate_payload(
                {
                    "nodes": [node],
                    "edges": [
                        {"cause": "A", "effect": "Ghost", "description": "x"}
                    ],
                }
            )

    def test_optional_fields_become_explicit(self):
        node = {"name": "A", "description": "d", "type": "string", "values": "v"}
        out = validate_payload({"nodes": [node], "edges": []})
        for f in ("causal_effect", "supporting_text_snippets", "current_value", "contextual_information"):
            assert f in out["nodes"][0]

    def test_parse_structured_reply_python_literal(self):
        reply = "Thought.\n```py\nresult = {'variables': [{'name': 'A'}]}\n```"
        payload = parse_structured_reply(reply, "variables")
        assert payload["variables"][0]["name"] == "A"


class TestMergePayload:
    def payload(self):
        return validate_payload(
            {
                "nodes": [
                    {
                        "name": "Crude Oil Prices",
                        "description": "Global oil price per barrel.",
                        "type": "float",
                        "values": "USD per barrel",
                        "current_value": "$63.27",
                    },
                    {
                        "name": "Oil Demand",
                        "description": "Worldwide demand for oil.",
                        "type": "trend",
                        "values": "increasing/decreasing/stable",
                        "current_value": "increasing",
                    },
                ],
                "edges": [
                    {
                        "cause": "Oil Demand",
                        "effect": "Crude Oil Prices",
                        "description": "Demand pushes prices.",
                    }
                ],
            }
        )

    def test_all_new_on_empty_graph(self):
        graph, index = fresh_state()
        graph.register_world("world_0")
        report = merge_payload(graph, self.payload(), "world_0", index)
        assert report.new_nodes == 2
        assert report.matched_nodes == 0
        assert report.new_edges == 1
        assert graph.value_in("crude-oil-prices", "world_0") == "$63.27"

    def test_identical_node_matches_and_merges_world(self):
        graph, index = fresh_state()
        graph.register_world("world_0")
        graph.register_world("world_1")
        merge_payload(graph, self.payload(), "world_0", index)
        payload = self.payload()
        payload["nodes"][0]["current_value"] = "$63.27"
        report = merge_payload(graph, payload, "world_1", index)
        assert report.new_nodes == 0
        assert report.matched_nodes == 2
        assert set(graph.nodes["crude-oil-prices"].worlds) == {"world_0", "world_1"}

    def test_duplicate_edge_skipped(self):
        graph, index = fresh_state()
        graph.register_world("world_0")
        graph.register_world("world_1")
        merge_payload(graph, self.payload(), "world_0", index)
        report = merge_payload(graph, self.payload(), "world_1", index)
        assert report.skipped_edges == 1
        assert report.new_edges == 0

    def test_merge_preserves_invariant_fields(self):
        graph, index = fresh_state()
        graph.register_world("world_0")
        graph.register_world("world_1")
        merge_payload(graph, self.payload(), "world_0", index)
        altered = self.payload()
        altered["nodes"][0]["description"] = "totally different"
        merge_payload(graph, altered, "world_1", index)
        assert (
            graph.nodes["crude-oil-prices"].description
            == "Global oil price per barrel."
        )

    def test_unknown_endpoint(self):
        graph, index = fresh_state()
        graph.register_world("world_0")
        payload = self.payload()
        payload["edges"][0] = dict(payload["edges"][0], cause="Oil Demand")
        payload["nodes"] = payload["nodes"][:1]
        payload["edges"][0]["cause"] = "Missing Node"
        with pytest.raises((UnknownEndpoint, SchemaViolation)):
            merge_payload(graph, payload, "world_0", index)

    def test_structural_idempotence(self):
        graph1, index1 = fresh_state()
        graph1.register_world("world_0")
        merge_payload(graph1, self.payload(), "world_0", index1)
        snapshot = graph1.to_json()
        # replaying the same payload into the same world changes nothing
        merge_payload(graph1, self.payload(), "world_0", index1)
        assert graph1.to_json() == snapshot


class TestIngest:
    def test_ingest_assigns_sequential_worlds(self):
        graph, index = fresh_state()
        backend = MockChatBackend(
            [air_variables_reply(), air_payload_reply()] * 2
        )
        doc2 = Document(doc_id="doc-air-2", title=AIR_DOC.title, body=AIR_DOC.body)
        reports = ingest_documents([AIR_DOC, doc2], graph, index, backend)
        assert [r.world_id for r in reports] == ["world_0", "world_1"]
        assert set(graph.worlds) == {"world_0", "world_1"}
        # second document's identical nodes matched, not duplicated
        assert reports[1].new_nodes == 0
        assert len(graph.nodes) == 5
        assert len(graph.edges) == 4

    def test_load_documents(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        path.write_text(
            json.dumps({"doc_id": "d1", "title": "t", "body": "b"})
            + "\n"
            + json.dumps({"id": "d2", "title": "t2", "text": "b2"})
            + "\n"
        )
        docs = load_documents(path)
        assert [d.doc_id for d in docs] == ["d1", "d2"]
        assert docs[1].body == "b2"

    def test_make_backend_mock(self, tmp_path):
        path = tmp_path / "replies.jsonl"
        path.write_text(json.dumps({"content": "hi"}) + "\n")
        backend = make_backend(f"mock:{path}")
        assert backend.complete([{"role": "user", "content": "x"}]).content == "hi"
