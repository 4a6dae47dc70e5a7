import json

from click.testing import CliRunner

from ctg.cli import main
from ctg.graph import save_graph
from ctg.scm import save_overlay

from helpers import xor_twin_graph, xor_twin_scm, mkgraph
from test_extraction import air_payload_reply, air_variables_reply


def write_graph(tmp_path, graph, name="graph.json"):
    path = tmp_path / name
    save_graph(graph, path)
    return path


class TestStatsCommand:
    def test_human_readable(self, tmp_path):
        path = write_graph(tmp_path, mkgraph([("a", "b"), ("b", "c"), ("c", "a")]))
        result = CliRunner().invoke(main, ["stats", str(path)])
        assert result.exit_code == 0
        assert "nodes: 3" in result.output
        assert "cycles up to length 14: 1" in result.output

    def test_json_output_with_cycle_bound(self, tmp_path):
        path = write_graph(tmp_path, mkgraph([("a", "b"), ("b", "a")]))
        result = CliRunner().invoke(
            main, ["stats", str(path), "--max-cycle-len", "2", "--json"]
        )
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["cycle_count_by_length"] == {"2": 1}


class TestGenDatasetCommand:
    def test_writes_jsonl(self, tmp_path):
        graph = mkgraph(
            [("a", "b")], worlds={"w0": {"a": "1", "b": "2"}}
        )
        gpath = write_graph(tmp_path, graph)
        out = tmp_path / "data.jsonl"
        result = CliRunner().invoke(
            main,
            ["gen-dataset", str(gpath), "--n", "1", "--seed", "3", "-o", str(out)],
        )
        assert result.exit_code == 0, result.output
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert len(lines) == 1
        assert lines[0]["kind"] == "observation"


class TestInferAndEvalCommands:
    def test_deterministic_round_trip(self, tmp_path):
        scm = xor_twin_scm()
        world = scm.evaluate({"u": 1, "v": 1})
        graph = xor_twin_graph(
            worlds={
                "wf": {"x": world["x"], "z": world["z"], "y": world["y"]},
                "wc": {"x": 0, "z": 1, "y": 1},
            }
        )
        gpath = write_graph(tmp_path, graph)
        spath = tmp_path / "overlay.json"
        save_overlay(scm, spath)
        dpath = tmp_path / "data.jsonl"
        runner = CliRunner()
        result = runner.invoke(
            main,
            ["gen-dataset", str(gpath), "--n", "2", "--seed", "1", "-o", str(dpath)],
        )
        assert result.exit_code == 0, result.output
        rpath = tmp_path / "results.jsonl"
        result = runner.invoke(
            main,
            [
                "infer",
                str(dpath),
                "--graph",
                str(gpath),
                "--reasoner",
                "det",
                "--scm",
                str(spath),
                "-o",
                str(rpath),
            ],
        )
        assert result.exit_code == 0, result.output
        lines = [json.loads(l) for l in rpath.read_text().splitlines()]
        assert lines
        report_path = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["eval", str(rpath), str(dpath), "--report", str(report_path)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(report_path.read_text())
        assert report["result_count"] == len(lines)

    def test_infer_requires_scm_for_det(self, tmp_path):
        graph = mkgraph([("a", "b")], worlds={"w0": {"a": "1", "b": "2"}})
        gpath = write_graph(tmp_path, graph)
        dpath = tmp_path / "data.jsonl"
        CliRunner().invoke(
            main, ["gen-dataset", str(gpath), "--n", "1", "-o", str(dpath)]
        )
        result = CliRunner().invoke(
            main,
            ["infer", str(dpath), "--graph", str(gpath), "-o", str(tmp_path / "r.jsonl")],
        )
        assert result.exit_code != 0


class TestRetrieveCommand:
    def test_ranked_output(self, tmp_path):
        graph = mkgraph([("a", "b"), ("b", "c")])
        gpath = write_graph(tmp_path, graph)
        doc = tmp_path / "doc.txt"
        doc.write_text("a document about node b")
        result = CliRunner().invoke(
            main, ["retrieve", str(gpath), "--text-file", str(doc), "--k", "2"]
        )
        assert result.exit_code == 0, result.output
        assert "Retrieved nodes:" in result.output


class TestIngestCommand:
    def test_mock_backend_ingest(self, tmp_path):
        docs = tmp_path / "docs.jsonl"
        docs.write_text(
            json.dumps(
                {
                    "doc_id": "d1",
                    "title": "Air quality report",
                    "body": "Pollution worsens as heat rises.",
                }
            )
            + "\n"
        )
        transcript = tmp_path / "replies.jsonl"
        with open(transcript, "w") as handle:
            for content in (air_variables_reply(), air_payload_reply()):
                handle.write(json.dumps({"content": content}) + "\n")
        gpath = tmp_path / "graph.json"
        result = CliRunner().invoke(
            main,
            [
                "ingest",
                str(docs),
                "--graph",
                str(gpath),
                "--backend",
                f"mock:{transcript}",
            ],
        )
        assert result.exit_code == 0, result.output
        data = json.loads(gpath.read_text())
        assert len(data["nodes"]) == 5
        assert len(data["edges"]) == 4
        assert set(data["worlds"]) == {"world_0"}
