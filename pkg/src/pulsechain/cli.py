"""Command-line entry point: ``pulsechain {ingest,cluster,run,eval}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import clusterer, corpus, docparse, metrics, pipeline
from .backend import Backend, Mode, RetryPolicy, Transcript
from .config import Config
from .errors import PulseError

logger = logging.getLogger("pulsechain")


def _config(args) -> Config:
    if args.config:
        return Config.from_file(args.config)
    default = Path("pulse.toml")
    return Config.from_file(default) if default.is_file() else Config()


def _backend(args, config: Config) -> Backend:
    mode = Mode(args.backend)
    transcript = None
    if mode is Mode.REPLAY:
        if not args.transcript:
            raise SystemExit("--transcript is required with --backend replay")
        if not Path(args.transcript).is_file():
            raise SystemExit(f"transcript not found: {args.transcript}")
        transcript = Transcript.load(args.transcript)
    elif mode is Mode.RECORD:
        if not args.transcript:
            raise SystemExit("--transcript is required with --backend record")
        transcript = Transcript.load(args.transcript)
    return Backend(
        mode=mode,
        endpoint=args.endpoint or config.endpoint,
        transcript=transcript,
        models=config.models,
        parallelism=config.parallelism,
        retry=RetryPolicy(seed=config.retry_seed),
    )


def cmd_ingest(args) -> int:
    corp = corpus.load_manifest(args.manifest, parallelism=args.parallelism)
    edges = corpus.build_citation_graph(corp)
    stats = corp.stats()
    stats["citation_edges"] = len(edges)
    if args.parse_report:
        tables = {d.id: docparse.extract_tables(d.text, d.id) for d in corp.documents.values()}
        docparse.write_parse_report(tables, args.parse_report)
    print(json.dumps(stats, indent=2))
    return 0


def cmd_cluster(args) -> int:
    config = _config(args)
    corp = corpus.load_manifest(args.manifest)
    docs = [corp.documents[d] for d in sorted(corp.documents)]
    vectors = clusterer.embed_abstracts(docs, _backend(args, config))
    result = clusterer.kmeans(vectors, args.k, seed=args.seed)
    manifest = clusterer.clusters_manifest(docs, result, corpus.Split(args.split))
    out = Path(args.out) if args.out else Path(args.manifest).parent / "clusters_out.json"
    clusterer.write_clusters(manifest, out, Path(args.manifest).parent)
    print(json.dumps({
        "k": result.k,
        "inertia": result.inertia,
        "iterations": result.iterations,
        "clusters": {c["id"]: c["label"] for c in manifest["clusters"]},
        "output": str(out),
    }, indent=2))
    return 0


def cmd_run(args) -> int:
    config = _config(args)
    corp = corpus.load_manifest(args.manifest)
    backend = _backend(args, config)
    intent = pipeline.classify_intent(args.ask, backend)
    instruction = pipeline.Instruction(args.ask, intent, args.cluster)
    report = pipeline.run(instruction, corp, backend, args.out, config)
    print(json.dumps({
        "out_dir": str(report.out_dir),
        "intent": intent.value,
        "chain_length": report.chain_length,
        "failures": len(report.failures),
        "render_ok": report.render_ok,
        "timings": {k: round(v, 4) for k, v in report.timings.items()},
    }, indent=2))
    return 0 if report.render_ok else 1


def cmd_eval(args) -> int:
    result = metrics.evaluate_dirs(args.golden, args.actual)
    out = Path(args.report) if args.report else Path(args.actual) / "eval_report.json"
    out.write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
    print(json.dumps({"pairs": len(result["pairs"]), "pass_at_1": result["pass_at_1"], "report": str(out)}))
    return 0


def _add_backend_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=[m.value for m in Mode], default="replay")
    p.add_argument("--transcript", help="JSON-lines transcript to replay from or record into")
    p.add_argument("--endpoint", help="backend base URL (overrides pulse.toml)")
    p.add_argument("--config", help="pulse.toml settings file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulsechain", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a manifest and report corpus statistics")
    p.add_argument("manifest")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--parse-report", help="write table parse notes to this JSON file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("cluster", help="group documents by abstract embeddings")
    p.add_argument("--manifest", default="corpus.json")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", choices=[s.value for s in corpus.Split], default="train")
    p.add_argument("--out", help="output manifest (default: clusters_out.json beside the input)")
    _add_backend_args(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("run", help="build a research chain for one cluster")
    p.add_argument("--manifest", default="corpus.json")
    p.add_argument("--cluster", required=True)
    p.add_argument("--ask", required=True, help="instruction, e.g. 'track how methods evolved'")
    p.add_argument("--out", default="out")
    _add_backend_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score actual artifacts against goldens")
    p.add_argument("--golden", required=True)
    p.add_argument("--actual", required=True)
    p.add_argument("--report", help="output path (default: <actual>/eval_report.json)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except PulseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
