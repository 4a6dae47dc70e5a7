"""Umbrella command line: ingest, stats, retrieve, gen-dataset, infer, eval, serve."""

from __future__ import annotations

import json
import sys

import click

from .graph import load_graph, save_graph


@click.group()
def main() -> None:
    """Multi-world causal graph tooling."""


@main.command()
@click.argument("graph_path", type=click.Path(exists=True))
@click.option("--max-cycle-len", default=14, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="emit the full report as JSON")
def stats(graph_path: str, max_cycle_len: int, as_json: bool) -> None:
    """Structural statistics of a graph file."""
    graph = load_graph(graph_path)
    report = graph.graph_stats(max_cycle_len=max_cycle_len)
    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        return
    click.echo(f"nodes: {report.node_count}")
    click.echo(f"edges: {report.edge_count}")
    click.echo(f"density: {report.density:.6f}")
    wcc = report.weakly_connected_components
    click.echo(f"weak components: {sum(wcc.values())} (largest {max(wcc) if wcc else 0})")
    scc = report.strongly_connected_components
    nontrivial = {k: v for k, v in scc.items() if k >= 2}
    click.echo(f"non-trivial strong components: {sum(nontrivial.values())}")
    cycles = report.cycle_count_by_length
    click.echo(
        f"cycles up to length {report.max_cycle_length}: {sum(cycles.values())}"
    )
    click.echo(f"bridge nodes: {len(report.bridge_nodes)}")


@main.command()
@click.argument("docs_path", type=click.Path(exists=True))
@click.option("--graph", "graph_path", required=True, type=click.Path())
@click.option("--backend", "backend_spec", required=True, help="live or mock:<file>")
@click.option("--max-retries", default=3, show_default=True)
def ingest(docs_path: str, graph_path: str, backend_spec: str, max_retries: int) -> None:
    """Extract causal structure from documents into a graph file."""
    import os

    from .extraction import ingest_documents, load_documents, make_backend
    from .retrieval import HashEmbeddingBackend, HttpEmbeddingBackend, VectorIndex

    if os.path.exists(graph_path):
        graph = load_graph(graph_path)
    else:
        from .graph import WorldGraph

        graph = WorldGraph()
    if os.environ.get("CTG_EMBED_URL"):
        embed_backend = HttpEmbeddingBackend()
    else:
        embed_backend = HashEmbeddingBackend()
    index = VectorIndex(embed_backend)
    index.index_graph(graph)
    backend = make_backend(backend_spec)
    docs = load_documents(docs_path)
    reports = ingest_documents(docs, graph, index, backend, max_retries=max_retries)
    save_graph(graph, graph_path)
    for report in reports:
        click.echo(json.dumps(report.to_dict(), sort_keys=True))
    click.echo(f"graph saved to {graph_path}")


@main.command()
@click.argument("graph_path", type=click.Path(exists=True))
@click.option("--text-file", required=True, type=click.Path(exists=True))
@click.option("--k", default=3, show_default=True)
@click.option("--p", default=2, show_default=True)
def retrieve(graph_path: str, text_file: str, k: int, p: int) -> None:
    """Rank graph nodes against a document and expand the neighborhood."""
    import os

    from .retrieval import (
        HashEmbeddingBackend,
        HttpEmbeddingBackend,
        VectorIndex,
        retrieve_for_document,
    )

    graph = load_graph(graph_path)
    if os.environ.get("CTG_EMBED_URL"):
        backend = HttpEmbeddingBackend()
    else:
        backend = HashEmbeddingBackend()
    index = VectorIndex(backend)
    index.index_graph(graph)
    with open(text_file, encoding="utf-8") as handle:
        text = handle.read()
    context = retrieve_for_document(graph, index, text, k=k, p=p)
    for nid, score in context.seeds:
        click.echo(f"{score:.6f}  {nid}")
    click.echo()
    click.echo(context.render(graph))


@main.command("gen-dataset")
@click.argument("graph_path", type=click.Path(exists=True))
@click.option("--n", "n_samples", default=400, show_default=True)
@click.option("--k", default=1, show_default=True)
@click.option("--path-cap", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def gen_dataset(graph_path, n_samples, k, path_cap, seed, output) -> None:
    """Generate a balanced observation/counterfactual query set."""
    from .blanket import DatasetConfig, generate_dataset

    graph = load_graph(graph_path)
    config = DatasetConfig(n_samples=n_samples, k=k, path_cap=path_cap, seed=seed)
    queries = generate_dataset(graph, config)
    with open(output, "w", encoding="utf-8") as handle:
        for query in queries:
            handle.write(json.dumps(query.to_dict(), sort_keys=True, ensure_ascii=False))
            handle.write("\n")
    kinds = {}
    for query in queries:
        kinds[query.kind] = kinds.get(query.kind, 0) + 1
    click.echo(f"wrote {len(queries)} queries to {output} ({kinds})")
    if len(queries) < n_samples:
        click.echo("warning: graph material was insufficient for the full quota", err=True)


@main.command()
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--reasoner", "reasoner_kind", type=click.Choice(["det", "chat"]), default="det", show_default=True)
@click.option("--scm", "scm_path", type=click.Path(exists=True), help="mechanism overlay for the deterministic reasoner")
@click.option("--backend", "backend_spec", default="live", show_default=True, help="chat backend: live or mock:<file>")
@click.option("--max-retries", default=5, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def infer(dataset_path, graph_path, reasoner_kind, scm_path, backend_spec, max_retries, output) -> None:
    """Answer dataset queries step by step and write result lines."""
    from .blanket import Query
    from .evaluation import load_jsonl
    from .inference import chat_reasoner, deterministic_reasoner, execute, plan_inference

    load_graph(graph_path)  # validates the graph file
    if reasoner_kind == "det":
        if not scm_path:
            raise click.UsageError("--scm is required for the deterministic reasoner")
        from .scm import load_overlay

        reasoner = deterministic_reasoner(load_overlay(scm_path))
    else:
        from .extraction import make_backend

        reasoner = chat_reasoner(make_backend(backend_spec))
    lines = load_jsonl(dataset_path)
    written = 0
    with open(output, "w", encoding="utf-8") as handle:
        for line in lines:
            query = Query.from_dict(line)
            record: dict = {"query_id": query.query_id}
            try:
                plan = plan_inference(query)
                result = execute(plan, query, reasoner, max_retries=max_retries)
                record.update(result.to_dict())
            except Exception as exc:
                record["error"] = {"type": type(exc).__name__, "message": str(exc)}
                record["target_value"] = ""
                record["trace"] = {"steps": [], "retries": 0, "input_tokens": 0, "output_tokens": 0}
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            handle.write("\n")
            written += 1
    click.echo(f"wrote {written} results to {output}")


@main.command("eval")
@click.argument("results_path", type=click.Path(exists=True))
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--outlier-pct", default=1000.0, show_default=True)
@click.option("--report", "report_path", type=click.Path())
@click.option("--plots", "plots_dir", type=click.Path())
def eval_cmd(results_path, dataset_path, outlier_pct, report_path, plots_dir) -> None:
    """Score results against ground truth and report metrics."""
    from .evaluation import build_report, load_jsonl
    from .retrieval import HashEmbeddingBackend

    results = load_jsonl(results_path)
    dataset = load_jsonl(dataset_path)
    report = build_report(
        results, dataset, backend=HashEmbeddingBackend(), outlier_pct=outlier_pct
    )
    body = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as handle:
            handle.write(body + "\n")
        click.echo(f"report written to {report_path}")
    else:
        click.echo(body)
    if plots_dir:
        _write_plots(results, dataset, plots_dir, outlier_pct)
        click.echo(f"plots written to {plots_dir}")


def _write_plots(results, dataset, plots_dir, outlier_pct) -> None:
    import os

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    from .evaluation import Excluded, coerce, relative_error

    os.makedirs(plots_dir, exist_ok=True)
    by_id = {line["query_id"]: line for line in dataset}
    errors = []
    for line in results:
        query = by_id.get(line.get("query_id"))
        if not query:
            continue
        gt = coerce(query["ground_truth"])
        pred = coerce(line.get("target_value", ""))
        if gt.coerced_type == "number" and pred.coerced_type == "number":
            scored = relative_error(gt.number_value, pred.number_value, outlier_pct)
            if not isinstance(scored, Excluded):
                errors.append(scored)
    fig, ax = plt.subplots()
    if errors:
        ax.hist(errors, bins=30)
    ax.set_xlabel("relative error (%)")
    ax.set_ylabel("count")
    fig.savefig(os.path.join(plots_dir, "relative_error.png"), dpi=120)
    plt.close(fig)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--scm", "scm_path", type=click.Path(exists=True))
def serve(port: int, graph_path: str, scm_path: str | None) -> None:
    """Run the exploration HTTP service."""
    from .service import serve as run_service

    run_service(graph_path, port=port, scm_path=scm_path)


if __name__ == "__main__":
    sys.exit(main())
