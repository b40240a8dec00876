"""Command line: one subcommand per pipeline stage."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

logger = logging.getLogger("kgnids")


def _load_structured(path):
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith((".yaml", ".yml")):
        import yaml
        return yaml.safe_load(text)
    return json.loads(text)


def _transport(args):
    from .kg.transport import HttpTransport, RecordingTransport, ReplayTransport
    if getattr(args, "replay", None):
        return ReplayTransport.from_file(args.replay)
    t = HttpTransport()
    if getattr(args, "record", None):
        t = RecordingTransport(t, args.record)
    return t


def cmd_crawl(args):
    from .kg.build import DEFAULT_QUERIES, ExtractionConfig, SearchQuery, crawl
    from .kg.clients import ChatClient, SearchClient
    from .kg.core import write_graphml
    queries = DEFAULT_QUERIES
    if args.queries:
        queries = [SearchQuery(**q) for q in _load_structured(args.queries)]
    transport = _transport(args)
    search = SearchClient(transport, max_pages=args.pages)
    lm = ChatClient(transport, model=args.lm_model)
    graph, outcomes = crawl(queries, search, lm, ExtractionConfig(max_gleaning_rounds=args.gleaning),
                            workers=args.workers, fetch_readmes=not args.no_readme)
    write_graphml(graph, args.out)
    if args.log:
        with open(args.log, "w", encoding="utf-8") as fh:
            json.dump([o.__dict__ for o in outcomes], fh, indent=2)
    print(f"{len(graph.strategies)} strategies from {len(graph.repositories)} repositories -> {args.out}")


def cmd_compress(args):
    from .kg.clients import EmbeddingClient
    from .kg.compress import ClusteringConfig, StrategyEmbedding, compress, embed_strategies
    from .kg.core import read_graphml, write_graphml
    graph = read_graphml(args.graph)
    strategies = sorted(graph.strategies, key=lambda s: s.id)
    if args.embeddings:
        vecs = _load_structured(args.embeddings)
        embs = [StrategyEmbedding(s.id, vecs[s.id]) for s in strategies]
    else:
        embs = embed_strategies(strategies, EmbeddingClient(_transport(args), model=args.embedding_model))
        if args.save_embeddings:
            with open(args.save_embeddings, "w", encoding="utf-8") as fh:
                json.dump({e.strategy_id: list(e.vector) for e in embs}, fh)
    out = compress(graph, embs, ClusteringConfig(args.metric, args.threshold))
    write_graphml(out, args.out)
    print(f"{len(strategies)} strategies -> {len(out.clusters)} clusters -> {args.out}")


def cmd_reason(args):
    from .kg.core import read_graphml
    from .reasoning import apply_rules
    report = apply_rules(read_graphml(args.graph), args.min_families, args.strict)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(f"{len(report.frequencies)} strategies, {len(report.invariant_strategies)} cross-family -> {args.out}")


def cmd_schema(args):
    from .features.catalog import Catalog
    from .features.mapping import schema_from_graph
    from .kg.core import read_graphml
    from .reasoning import RuleReport, apply_rules
    graph = read_graphml(args.graph)
    rules = RuleReport.from_json(Path(args.rules).read_text()) if args.rules else apply_rules(graph)
    catalog = Catalog.load(args.catalog) if args.catalog else Catalog.default()
    built = schema_from_graph(graph, rules, catalog, args.min_freq, args.stats.split(","),
                              composites=not args.no_composites)
    built.schema.save(args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(built.report_dict(), indent=2), encoding="utf-8")
    print(f"{len(built.schema.specs)} features, dimension {built.schema.dimension} -> {args.out}")


def cmd_extract(args):
    from .features.extract import EvictionPolicy, extract_stream, write_vectors_csv, write_vectors_f32
    from .features.mapping import FeatureSchema
    from .ingest import FormatConfig, stream
    schema = FeatureSchema.load(args.schema)
    fmt = FormatConfig.load(args.format) if args.format else FormatConfig()
    src = stream(args.input, fmt)
    out = extract_stream(src, schema, EvictionPolicy(args.idle_timeout), args.emit_every)
    if args.out:
        write_vectors_csv(out, args.out)
        schema.save(str(args.out) + ".schema.json")
    if args.f32:
        write_vectors_f32(out, args.f32)
    if src.backward_jumps:
        logger.warning("%d backward timestamp jumps in input", src.backward_jumps)
    print(f"{len(out.X)} vectors of dimension {schema.dimension} ({src.backward_jumps} timestamp warnings)")


def cmd_generate(args):
    from .harness.generate import ScenarioSpec, generate, merge
    from .ingest import write_records
    if args.config:
        cfg = _load_structured(args.config)
        specs = [ScenarioSpec.from_dict(s) for s in cfg.get("scenarios", [cfg])]
    else:
        specs = [ScenarioSpec(args.scenario, args.duration, args.seed, args.start)]
    recs = merge(*(generate(s) for s in specs))
    write_records(recs, args.out)
    print(f"{len(recs)} records -> {args.out}")


def _split_rows(args, ts, labels):
    from .harness.split import SplitSpec, time_split
    fr = tuple(float(x) for x in args.split.split(","))
    return time_split(ts, labels, SplitSpec(fr))


def cmd_train(args):
    from .detectors import calibrate_threshold, fit, save_model, score
    from .features.extract import read_vectors_csv
    from .harness.grid import DEFAULT_GRIDS, grid_search
    columns, X, ts, labels = read_vectors_csv(args.vectors)
    sp = _split_rows(args, ts, labels)
    train, val = X[sp.train], X[sp.val]
    hp = json.loads(args.params) if args.params else {}
    if args.grid:
        grid = _load_structured(args.grid) if args.grid != "default" else DEFAULT_GRIDS[args.model]
        res = grid_search(args.model, train, val, grid=grid, fpr_targets=[args.fpr], seed=args.seed,
                          workers=args.workers, holdout=args.holdout or ())
        if args.grid_out:
            Path(args.grid_out).write_text(res.to_json(), encoding="utf-8")
        best = res.best(args.fpr)
        if best is None:
            raise SystemExit("every grid cell failed")
        hp = best.hyperparams
    model = fit(args.model, train, hp, args.seed)
    th = calibrate_threshold(score(model, val), args.fpr)
    save_model(model, args.out, th)
    print(json.dumps({"split": sp.summary(), "hyperparams": model.hyperparams(), "threshold": th.to_dict()}))


def cmd_evaluate(args):
    from .detectors import calibrate_threshold, load_model, score
    from .features.extract import read_vectors_csv
    from .harness.evaluate import evaluate
    model, th = load_model(args.model)
    columns, X, ts, labels = read_vectors_csv(args.vectors)
    rows = np.arange(len(X)) if args.all_rows else _split_rows(args, ts, labels).test
    if args.fpr is not None:
        if args.all_rows:
            raise SystemExit("--fpr recalibration needs the validation window; drop --all-rows")
        th = calibrate_threshold(score(model, X[_split_rows(args, ts, labels).val]), args.fpr)
    if th is None:
        raise SystemExit("model file carries no threshold; pass --fpr")
    report = evaluate(model, th, X[rows], [labels[i] for i in rows], args.model_id or Path(args.model).stem)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    if args.plot:
        from .harness.report import plot_scores
        plot_scores(score(model, X[rows]), [labels[i] for i in rows], th.value, args.plot)
    print(f"FPR {report.fpr:.5f}; " + ", ".join(f"{k}: F1 {v.f1:.3f}" for k, v in report.per_attack.items()))


def cmd_report(args):
    from .harness.evaluate import EvalReport
    from .harness.report import f1_table
    reports = [EvalReport.from_dict(json.loads(Path(p).read_text())) for p in args.reports]
    table = f1_table(reports)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgnids", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("crawl", help="search repositories and extract strategies into a graph")
    s.add_argument("--out", required=True)
    s.add_argument("--queries", help="JSON/YAML list of {family, base_keywords, variations}")
    s.add_argument("--record", help="append every HTTP exchange to this JSONL file")
    s.add_argument("--replay", help="answer HTTP requests from this JSONL recording")
    s.add_argument("--workers", type=int, default=4)
    s.add_argument("--pages", type=int, default=1)
    s.add_argument("--gleaning", type=int, default=3)
    s.add_argument("--lm-model", default="gpt-4o-mini")
    s.add_argument("--no-readme", action="store_true")
    s.add_argument("--log", help="write per-repository outcomes as JSON")
    s.set_defaults(func=cmd_crawl)

    s = sub.add_parser("compress", help="cluster equivalent strategies")
    s.add_argument("--graph", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--embeddings", help="JSON map strategy id -> vector (skips the embedding service)")
    s.add_argument("--save-embeddings")
    s.add_argument("--embedding-model", default="text-embedding-3-small")
    s.add_argument("--metric", default="cosine", choices=["cosine", "euclidean"])
    s.add_argument("--threshold", type=float, default=0.3)
    s.add_argument("--record")
    s.add_argument("--replay")
    s.set_defaults(func=cmd_compress)

    s = sub.add_parser("reason", help="apply frequency / transitive / cross-family rules")
    s.add_argument("--graph", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--min-families", type=int, default=2)
    s.add_argument("--strict", action="store_true")
    s.set_defaults(func=cmd_reason)

    s = sub.add_parser("schema", help="map strategies to a feature schema")
    s.add_argument("--graph", required=True)
    s.add_argument("--rules")
    s.add_argument("--catalog")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    s.add_argument("--stats", default="W,MEAN,STD")
    s.add_argument("--min-freq", type=float, default=0.0)
    s.add_argument("--no-composites", action="store_true")
    s.set_defaults(func=cmd_schema)

    s = sub.add_parser("extract", help="stream packet records into feature vectors")
    s.add_argument("--schema", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out")
    s.add_argument("--f32", help="also write raw float32 rows here")
    s.add_argument("--format", help="column-map config (JSON/YAML)")
    s.add_argument("--emit-every", type=int, default=1)
    s.add_argument("--idle-timeout", type=float)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("generate", help="synthesize labelled packet records")
    s.add_argument("--out", required=True)
    s.add_argument("--config", help="JSON/YAML with a 'scenarios' list")
    s.add_argument("--scenario", default="benign_poisson")
    s.add_argument("--duration", type=float, default=60.0)
    s.add_argument("--start", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("train", help="fit a detector on the benign training window")
    s.add_argument("--vectors", required=True)
    s.add_argument("--model", required=True, choices=["gmm", "da", "kit"])
    s.add_argument("--out", required=True)
    s.add_argument("--params", help="hyperparameters as a JSON object")
    s.add_argument("--grid", help="'default' or a JSON/YAML grid file")
    s.add_argument("--grid-out")
    s.add_argument("--holdout", nargs="*")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--fpr", type=float, default=1e-3)
    s.add_argument("--split", default="0.8,0.1,0.1")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", help="score the test window and write a report")
    s.add_argument("--model", required=True)
    s.add_argument("--vectors", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--fpr", type=float, help="recalibrate the threshold for this target")
    s.add_argument("--split", default="0.8,0.1,0.1")
    s.add_argument("--all-rows", action="store_true")
    s.add_argument("--model-id")
    s.add_argument("--plot", help="write a score histogram image")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="tabulate F1 at each FPR target")
    s.add_argument("reports", nargs="+")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        if args.verbose:
            raise
        print(f"kgnids {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
