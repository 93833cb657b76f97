"""Command line entry point: ``rapo <command> [options]``.

Secrets (API keys, endpoint URLs) come from the environment only.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .analytics import (
    distribution_distance,
    length_distribution,
    load_median,
    write_histogram_csv,
    write_stats,
)
from .config import RunConfig, embedder_for
from .corpus import ReadStats, iter_prompts, sniff_format
from .datasets import (
    DIMENSIONS,
    build_discriminator_dataset,
    build_refactor_dataset,
    load_labels,
    simulate_user_prompts,
)
from .embedding import CachedEmbedder, LocalHashEmbedder, RemoteEmbedder
from .errors import RapoError
from .graph import build_graph, load_graph, nonempty_filter, save_graph
from .llm.extraction import llm_extractor
from .pipeline import Optimizer
from .text import normalize_text

logger = logging.getLogger("rapo")


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False)


def _emit_summary(summary: dict, path: str | None) -> None:
    print(_dump(summary))
    if path:
        Path(path).write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")


def _corpus_filter(value: str):
    if value == "nonempty":
        return nonempty_filter
    if value.startswith("min-words:"):
        n = int(value.split(":", 1)[1])
        return lambda p: len(normalize_text(p).split()) >= n
    raise argparse.ArgumentTypeError(f"unknown filter {value!r}")


def _nonneg(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return n


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _config(args) -> RunConfig:
    return RunConfig(
        graph_path=getattr(args, "graph", None),
        k_scenes=getattr(args, "k_scenes", 3),
        k_modifiers=getattr(args, "k_modifiers", 5),
        fixture_path=args.fixtures,
        examples_path=getattr(args, "examples", None),
        rewrite_instruction_path=getattr(args, "rewrite_instruction", None),
        stats_path=getattr(args, "stats", None),
        worker_limit=args.workers,
        concurrency=args.concurrency,
        transcript=args.transcript,
        max_refactor_words=getattr(args, "max_refactor_words", 120),
        embed_cache=getattr(args, "embed_cache", None),
    )


def _optimizer(cfg: RunConfig) -> Optimizer:
    graph = load_graph(cfg.graph_path)
    return Optimizer(
        graph=graph,
        embedder=embedder_for(graph.embedding_backend_id, cfg.embed_cache),
        gateway=cfg.gateway(),
        k_scenes=cfg.k_scenes,
        k_modifiers=cfg.k_modifiers,
        max_refactor_words=cfg.max_refactor_words,
        median_words=load_median(cfg.stats_path),
        merge_examples=cfg.merge_examples(),
    )


# commands


def cmd_build_graph(args) -> int:
    cfg = _config(args)
    if args.embedder == "local":
        embedder = LocalHashEmbedder()
    else:
        embedder = RemoteEmbedder.from_env()
        if args.embed_cache:
            embedder = CachedEmbedder(embedder, args.embed_cache)
    fmt = sniff_format(args.corpus) if args.format == "auto" else args.format
    read = ReadStats()
    corpus = (text for _, text in iter_prompts(args.corpus, fmt, read))
    if args.limit == 0:
        corpus = iter(())
    graph = build_graph(
        corpus,
        llm_extractor(cfg.gateway()) if args.limit != 0 else (lambda p: None),
        embedder,
        corpus_filter=args.filter,
        workers=cfg.worker_limit,
        limit=args.limit,
    )
    save_graph(graph, args.out)
    summary = {**graph.stats, **graph.report.as_dict(), "corrupt_lines": read.corrupt}
    _emit_summary(summary, None)
    return 0


def _read_batch(path: str) -> list[tuple[str, str]]:
    return list(iter_prompts(path, sniff_format(path)))


def cmd_optimize(args) -> int:
    cfg = _config(args)
    optimizer = _optimizer(cfg)
    if args.prompt is not None:
        if not args.prompt.strip():
            print("error: --prompt is empty", file=sys.stderr)
            return 2
        results = [optimizer.optimize(args.prompt, no_select=args.no_select)]
    else:
        results = optimizer.optimize_batch(
            _read_batch(args.batch), workers=cfg.worker_limit, no_select=args.no_select
        )
    lines = [_dump(r.as_dict(include_timings=args.timings)) + "\n" for r in results]
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(lines)
    else:
        sys.stdout.writelines(lines)
    failed = sum(1 for r in results if r.warning)
    if failed:
        print(f"warning: {failed} prompt(s) produced no optimized output", file=sys.stderr)
    return 0 if failed == 0 else 1


def cmd_prepare_refactor_data(args) -> int:
    cfg = _config(args)
    fmt = sniff_format(args.corpus) if args.format == "auto" else args.format
    read = ReadStats()
    corpus = (text for _, text in iter_prompts(args.corpus, fmt, read))
    gateway = cfg.gateway() if args.limit != 0 else None
    if gateway is None:
        Path(args.out).write_text("", encoding="utf-8")
        _emit_summary({"dataset": "refactor", "requested": 0, "written": 0, "rejected": 0, "failed": 0}, args.summary_out)
        return 0
    summary = build_refactor_dataset(corpus, args.out, gateway, limit=args.limit, workers=cfg.worker_limit)
    _emit_summary({**summary.as_dict(), "corrupt_lines": read.corrupt}, args.summary_out)
    return 0


def cmd_prepare_discriminator_data(args) -> int:
    cfg = _config(args)
    optimizer = _optimizer(cfg)
    dims = tuple(args.dimensions.split(",")) if args.dimensions else DIMENSIONS
    shortfall = 0
    if args.prompts:
        prompts = _read_batch(args.prompts)
    else:
        sim = simulate_user_prompts(optimizer.gateway, args.simulate, [d for d in dims if d != "other"] or dims)
        prompts = [(f"sim-{i}", text) for i, (text, _) in enumerate(sim.prompts)]
        shortfall = sim.shortfall
    labels = load_labels(args.labels) if args.labels else None
    summary = build_discriminator_dataset(
        prompts,
        optimizer,
        args.out,
        labels=labels,
        median_words=optimizer.median_words,
        dimensions=dims,
        workers=cfg.worker_limit,
    )
    out = summary.as_dict()
    out["label_source"] = "labels" if labels is not None else "heuristic"
    if not args.prompts:
        out["simulation_shortfall"] = shortfall
    _emit_summary(out, args.summary_out)
    return 0


def cmd_analyze_lengths(args) -> int:
    labels = args.labels.split(",") if args.labels else [Path(f).stem for f in args.files]
    if len(labels) != len(args.files):
        print("error: --labels must name every file", file=sys.stderr)
        return 2
    dists = []
    for path, label in zip(args.files, labels):
        if not os.path.exists(path):
            print(f"error: no such file: {path}", file=sys.stderr)
            return 1
        dists.append(length_distribution((t for _, t in iter_prompts(path, sniff_format(path))), label))
    distances = [
        {"a": a.source_label, "b": b.source_label, "distance": distribution_distance(a, b)}
        for a, b in itertools.combinations(dists, 2)
    ]
    report = {
        "distributions": [{k: v for k, v in d.as_dict().items() if k != "counts"} for d in dists],
        "distances": distances,
    }
    print(json.dumps(report, indent=2))
    if args.csv:
        os.makedirs(args.csv, exist_ok=True)
        for d in dists:
            write_histogram_csv(d, Path(args.csv) / f"{d.source_label}.csv")
    if args.stats_out:
        write_stats(dists[0], args.stats_out)
    return 0


def cmd_serve(args) -> int:
    from .server import make_server

    cfg = _config(args)
    optimizer = _optimizer(cfg)
    host, _, port = args.addr.rpartition(":")
    server = make_server(optimizer, host or "127.0.0.1", int(port))
    logger.info("serving on %s", args.addr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rapo", description="Retrieval-augmented prompt optimization toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    llm = argparse.ArgumentParser(add_help=False)
    llm.add_argument("--fixtures", help="fixture file (sha256 of prompt -> response); overrides the remote backend")
    llm.add_argument("--transcript", help="append every LLM request/response to this file")
    llm.add_argument("--workers", type=_positive, default=1, help="worker threads (default 1)")
    llm.add_argument("--concurrency", type=_positive, default=8, help="max in-flight LLM calls (default 8)")
    llm.add_argument("--embed-cache", help="persistent embedding cache file for remote embedders")

    pipe = argparse.ArgumentParser(add_help=False)
    pipe.add_argument("--graph", required=True, help="relation graph file")
    pipe.add_argument("--k-scenes", type=_nonneg, default=3)
    pipe.add_argument("--k-modifiers", type=_nonneg, default=5)
    pipe.add_argument("--examples", help="merge few-shot examples ({body, modifier, merged} lines)")
    pipe.add_argument("--rewrite-instruction", help="file holding the rewrite template (must contain {x_i})")
    pipe.add_argument("--stats", help="corpus_stats.json supplying the training median length")
    pipe.add_argument("--max-refactor-words", type=_positive, default=120)

    p = sub.add_parser("build-graph", parents=[llm], help="extract scenes/modifiers from a corpus into a graph")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("auto", "text", "jsonl"), default="auto")
    p.add_argument("--filter", type=_corpus_filter, default=nonempty_filter, help="nonempty | min-words:N")
    p.add_argument("--limit", type=_nonneg, default=None)
    p.add_argument("--embedder", choices=("local", "remote"), default="local")
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("optimize", parents=[llm, pipe], help="optimize one prompt or a batch")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompt")
    src.add_argument("--batch", help="prompt file (text lines or {id, text} objects)")
    p.add_argument("--out", help="write results here instead of stdout")
    p.add_argument("--no-select", action="store_true", help="emit both branches without selection")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings in results")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("prepare-refactor-data", parents=[llm], help="build the refactoring instruction dataset")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("auto", "text", "jsonl"), default="auto")
    p.add_argument("--limit", type=_nonneg, default=None)
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_prepare_refactor_data)

    p = sub.add_parser("prepare-discriminator-data", parents=[llm, pipe], help="build the discriminator dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompts", help="user prompt file (text lines or {id, text} objects)")
    src.add_argument("--simulate", type=_positive, help="generate this many user prompts via the LLM")
    lab = p.add_mutually_exclusive_group()
    lab.add_argument("--labels", help="offline labels file ({id, y_d} lines)")
    lab.add_argument("--heuristic", action="store_true", help="label by length proximity (default)")
    p.add_argument("--dimensions", help="comma-separated dimension set")
    p.add_argument("--out", required=True)
    p.add_argument("--summary-out")
    p.set_defaults(func=cmd_prepare_discriminator_data)

    p = sub.add_parser("analyze-lengths", help="word-length distributions and pairwise distances")
    p.add_argument("files", nargs="+")
    p.add_argument("--labels", help="comma-separated labels, one per file")
    p.add_argument("--csv", help="directory for per-file length,count CSVs")
    p.add_argument("--stats-out", help="write the first file's stats (corpus_stats.json)")
    p.set_defaults(func=cmd_analyze_lengths)

    p = sub.add_parser("serve", parents=[llm, pipe], help="HTTP service: POST /optimize, GET /healthz")
    p.add_argument("--addr", default="127.0.0.1:8080")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (RapoError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
