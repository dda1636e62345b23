"""Command-line interface.

Subcommands: gen, communities, partition, covertness, analyze, eval.
Every subcommand is deterministic given its flags plus --seed: reruns
produce byte-identical output files. Wall-clock numbers (which cannot be
deterministic) go to stderr only.

Exit codes: 0 success, 1 usage error, 2 input validation error,
3 internal pipeline error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import classify, community, generate, homophily, pipeline
from .classify import LabeledSample
from .features import feature_names
from .model import InputError, load_graph, serialize_graph

logger = logging.getLogger("homgraph")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--catalog", metavar="FILE", help="sensitive-API catalog file")
    parser.add_argument("--threshold", type=float, default=3.0,
                        help="coupling threshold (default 3)")
    parser.add_argument("--algo", choices=community.ALGORITHMS,
                        default=community.MULTILEVEL, help="community detection algorithm")
    parser.add_argument("--k", type=int, default=1, help="kNN neighbor count (default 1)")
    parser.add_argument("--folds", type=int, default=10,
                        help="cross-validation folds (default 10)")
    parser.add_argument("--seed", type=int, default=0, help="pseudorandom seed (default 0)")
    parser.add_argument("--coupling-denominator", choices=homophily.DENOMINATORS,
                        default=homophily.DENOMINATOR_TOTAL,
                        help="edge denominator of the coupling fraction")
    parser.add_argument("--hops", type=int, default=1,
                        help="caller hops in the malicious part (default 1)")
    parser.add_argument("--out", metavar="PATH", help="output file or directory")


def _config(args: argparse.Namespace) -> pipeline.PipelineConfig:
    if args.threshold <= 0:
        raise InputError(f"--threshold must be positive, got {args.threshold}")
    if args.hops < 0:
        raise InputError(f"--hops must be non-negative, got {args.hops}")
    if args.k < 1:
        raise InputError(f"--k must be at least 1, got {args.k}")
    if args.folds < 2:
        raise InputError(f"--folds must be at least 2, got {args.folds}")
    return pipeline.PipelineConfig(
        catalog_path=args.catalog,
        threshold=args.threshold,
        community_algorithm=args.algo,
        knn_k=args.k,
        folds=args.folds,
        seed=args.seed,
        coupling_denominator=args.coupling_denominator,
        hops=args.hops,
    )


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")


def _json_text(payload) -> str:
    return json.dumps(payload, indent=1) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="homgraph",
                     description="Call-graph homophily analytics for covert-malware triage")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p_gen = sub.add_parser("gen", help="generate a synthetic corpus")
    _common_flags(p_gen)
    defaults = generate.SyntheticSpec()
    p_gen.add_argument("--benign", type=int, default=0, help="benign graph count")
    p_gen.add_argument("--covert", type=int, default=0, help="covert graph count")
    p_gen.add_argument("--nodes", type=int, default=defaults.node_count)
    p_gen.add_argument("--communities", type=int, default=defaults.community_count)
    p_gen.add_argument("--planted-size", type=int,
                       default=defaults.planted_sensitive_community_size)
    p_gen.add_argument("--intra-p", type=float, default=defaults.intra_edge_prob)
    p_gen.add_argument("--inter-p", type=float, default=defaults.inter_edge_prob)
    p_gen.add_argument("--apis", type=int, default=defaults.sensitive_api_count,
                       help="sensitive APIs planted per graph")
    p_gen.add_argument("--coupling-target", type=float,
                       default=defaults.planted_coupling_target,
                       help="coupling target of covert planted communities")
    p_gen.add_argument("--benign-coupling-target", type=float,
                       default=defaults.benign_coupling_target,
                       help="coupling target of benign sensitive communities")
    p_gen.set_defaults(func=cmd_gen)

    p_comm = sub.add_parser("communities", help="compare community detection algorithms")
    _common_flags(p_comm)
    p_comm.add_argument("paths", nargs="+", metavar="GRAPH",
                        help="graph documents or directories")
    p_comm.set_defaults(func=cmd_communities)

    p_part = sub.add_parser("partition", help="partition one graph and report verdicts")
    _common_flags(p_part)
    p_part.add_argument("path", metavar="GRAPH")
    p_part.set_defaults(func=cmd_partition)

    p_cov = sub.add_parser("covertness", help="covertness profile of one graph")
    _common_flags(p_cov)
    p_cov.add_argument("path", metavar="GRAPH")
    p_cov.set_defaults(func=cmd_covertness)

    p_an = sub.add_parser("analyze", help="feature records and partition reports")
    _common_flags(p_an)
    p_an.add_argument("paths", nargs="+", metavar="GRAPH",
                      help="graph documents or directories")
    p_an.set_defaults(func=cmd_analyze)

    p_ev = sub.add_parser("eval", help="cross-validated metrics over a corpus")
    _common_flags(p_ev)
    p_ev.add_argument("paths", nargs="*", metavar="GRAPH",
                      help="graph documents or directories")
    p_ev.add_argument("--features", metavar="CSV",
                      help="reuse a feature file from a prior analyze run")
    p_ev.add_argument("--sweep", metavar="T1,T2,...",
                      help="also evaluate each coupling threshold in the list")
    p_ev.set_defaults(func=cmd_eval)

    return parser


def cmd_gen(args: argparse.Namespace) -> int:
    if args.out is None:
        raise InputError("gen requires --out DIRECTORY")
    spec = generate.SyntheticSpec(
        node_count=args.nodes,
        community_count=args.communities,
        intra_edge_prob=args.intra_p,
        inter_edge_prob=args.inter_p,
        planted_sensitive_community_size=args.planted_size,
        planted_coupling_target=args.coupling_target,
        benign_coupling_target=args.benign_coupling_target,
        sensitive_api_count=args.apis,
        seed=args.seed,
    )
    catalog = pipeline.PipelineConfig(catalog_path=args.catalog).catalog()
    corpus = generate.generate_corpus(spec, args.benign, args.covert, catalog)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"spec": asdict(spec), "catalog": catalog.source, "graphs": []}
    for graph, truth in corpus:
        file_name = f"{graph.app_id}.json"
        (out_dir / file_name).write_text(serialize_graph(graph), encoding="utf-8")
        manifest["graphs"].append(
            {
                "app_id": truth.app_id,
                "label": truth.label,
                "file": file_name,
                "planted_nodes": sorted(truth.planted_nodes),
                "api_indices": list(truth.api_indices),
                "planted_coupling": truth.planted_coupling,
            }
        )
    (out_dir / "manifest.json").write_text(_json_text(manifest), encoding="utf-8")
    print(f"wrote {len(corpus)} graphs + manifest to {out_dir}", file=sys.stderr)
    return EXIT_OK


def cmd_communities(args: argparse.Namespace) -> int:
    config = _config(args)
    graphs = pipeline.load_corpus(args.paths, config.catalog())
    rows = community.compare_algorithms(graphs, args.seed)
    for row in rows:
        print(
            f"{row.algorithm}: mean Q {row.mean_q:.4f}, "
            f"mean runtime {row.mean_runtime_seconds * 1000:.1f} ms "
            f"over {row.graph_count} graphs",
            file=sys.stderr,
        )
    report = {
        "graph_count": len(graphs),
        "seed": args.seed,
        "rows": [{"algorithm": r.algorithm, "mean_modularity_q": r.mean_q} for r in rows],
    }
    _emit(_json_text(report), args.out)
    return EXIT_OK


def cmd_partition(args: argparse.Namespace) -> int:
    config = _config(args)
    catalog = config.catalog()
    graph = load_graph(args.path, catalog)
    analysis = pipeline.analyze_graph(graph, catalog, config)
    _emit(_json_text(pipeline.partition_report(analysis)), args.out)
    return EXIT_OK


def cmd_covertness(args: argparse.Namespace) -> int:
    config = _config(args)
    catalog = config.catalog()
    graph = load_graph(args.path, catalog)
    report = homophily.covertness(graph, args.hops, args.coupling_denominator)
    _emit(_json_text(pipeline.covertness_report_dict(graph, report)), args.out)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    if args.out is None:
        raise InputError("analyze requires --out DIRECTORY")
    config = _config(args)
    catalog = config.catalog()
    graphs = pipeline.load_corpus(args.paths, catalog)
    analyses = pipeline.analyze_corpus(graphs, catalog, config)
    if not analyses:
        raise InputError("every graph in the corpus failed to analyze")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_features_csv(out_dir / "features.csv", analyses, catalog)
    reports = [pipeline.partition_report(a) for a in analyses]
    (out_dir / "partitions.json").write_text(_json_text(reports), encoding="utf-8")
    print(f"analyzed {len(analyses)} graphs into {out_dir}", file=sys.stderr)
    return EXIT_OK


def _write_features_csv(path: Path, analyses, catalog) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["app_id", "label", *feature_names(catalog)])
        for a in analyses:
            label = a.graph.ground_truth or ""
            vector = a.features.as_array()
            writer.writerow([a.graph.app_id, label, *(repr(float(x)) for x in vector)])


def read_features_csv(path: str | Path) -> list[LabeledSample]:
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read features file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["app_id", "label"]:
            raise InputError(f"{path}: not a feature file (bad header)")
        samples = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InputError(f"{path}:{line_no}: expected {len(header)} columns")
            app_id, label, *values = row
            if not label:
                logger.warning("%s:%d: unlabeled sample %r excluded", path, line_no, app_id)
                continue
            vector = np.array([float(v) for v in values], dtype=np.float64)
            samples.append(LabeledSample(app_id, label, vector))
    return samples


def _metrics_dict(report: classify.MetricsReport) -> dict:
    return {
        "TPR": report.tpr,
        "FNR": report.fnr,
        "TNR": report.tnr,
        "FPR": report.fpr,
        "A": report.accuracy,
        "P": report.precision,
        "R": report.recall,
        "F1": report.f_measure,
    }


def _cv_dict(report: classify.CrossValidationReport) -> dict:
    micro = report.micro_counts
    return {
        "macro": _metrics_dict(report.macro),
        "micro_counts": {"TP": micro.tp, "TN": micro.tn, "FP": micro.fp, "FN": micro.fn},
        "micro": _metrics_dict(classify.metrics(micro)),
    }


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config(args)
    if bool(args.features) == bool(args.paths):
        raise InputError("eval needs either graph paths or --features, not both")

    payload: dict = {
        "seed": args.seed,
        "k": args.k,
        "folds": args.folds,
        "threshold": args.threshold,
        "algorithm": args.algo,
    }
    if args.features:
        if args.sweep:
            raise InputError("--sweep needs graph paths (features must be re-extracted)")
        samples = read_features_csv(args.features)
        payload["samples"] = len(samples)
        payload["report"] = _cv_dict(
            classify.cross_validate(samples, args.folds, args.k, args.seed)
        )
    else:
        catalog = config.catalog()
        graphs = pipeline.load_corpus(args.paths, catalog)
        analyses = pipeline.analyze_corpus(graphs, catalog, config)
        samples = pipeline.samples_from_analyses(analyses)
        payload["samples"] = len(samples)
        payload["report"] = _cv_dict(
            classify.cross_validate(samples, args.folds, args.k, args.seed)
        )
        if args.sweep:
            thresholds = _parse_thresholds(args.sweep)
            rows = classify.threshold_sweep(
                graphs,
                catalog,
                thresholds,
                k=args.k,
                folds=args.folds,
                seed=args.seed,
                algorithm=args.algo,
                denominator=args.coupling_denominator,
            )
            payload["sweep"] = [
                {"threshold": row.threshold, "samples": row.sample_count, **_cv_dict(row.report)}
                for row in rows
            ]
    _emit(_json_text(payload), args.out)
    return EXIT_OK


def _parse_thresholds(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise InputError(f"bad --sweep list {raw!r}: {exc}") from exc
    if not values:
        raise InputError("--sweep list is empty")
    return values


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"homgraph: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # pragma: no cover - defensive
        logger.exception("internal error: %s", exc)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
