"""Command-line surface: ingest, build, retrieve, explain, eval.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.
``--fake-providers`` makes every command hermetic (deterministic offline
embedder and chat), which is also how the test suite drives the CLI.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import PipelineConfig
from .errors import DataError, ProviderError, UsageError
from .pipeline import (
    run_build,
    run_eval_pairwise,
    run_eval_ranking,
    run_explain,
    run_ingest,
    run_retrieve,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1 here
        raise UsageError(message)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (full-word keys)")
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    parser.add_argument("--jobs", type=int, help="max parallel workers")
    parser.add_argument("--seed", type=int, help="retrieval sampling seed")
    parser.add_argument("--no-prune", action="store_true", help="score all candidates at every level")
    parser.add_argument("--fake-providers", action="store_true", help="run hermetically with offline fakes")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="reviewgraph", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p_ingest = commands.add_parser("ingest", help="parse a corpus manifest into corpus.json")
    p_ingest.add_argument("--manifest", required=True)
    _common_flags(p_ingest)

    p_build = commands.add_parser("build", help="build both graphs from a corpus artifact")
    p_build.add_argument("--corpus", required=True)
    _common_flags(p_build)

    p_retrieve = commands.add_parser("retrieve", help="dump per-comment retrieval JSON")
    p_retrieve.add_argument("--corpus", required=True)
    p_retrieve.add_argument("--graphs", required=True)
    p_retrieve.add_argument("--review", required=True)
    _common_flags(p_retrieve)

    p_explain = commands.add_parser("explain", help="generate one explanation per review comment")
    p_explain.add_argument("--corpus", required=True)
    p_explain.add_argument("--graphs", required=True)
    p_explain.add_argument("--review", required=True)
    _common_flags(p_explain)

    p_eval = commands.add_parser("eval", help="pairwise judging or ranking aggregation")
    p_eval.add_argument("--mode", choices=("pairwise", "ranking"), required=True)
    p_eval.add_argument(
        "--method",
        action="append",
        default=[],
        metavar="NAME=DIR",
        help="explanation directory per method (repeat; pairwise mode)",
    )
    p_eval.add_argument("--ranks", help="ranking file (ranking mode)")
    p_eval.add_argument("--ndcg-k", type=int, default=5)
    p_eval.add_argument(
        "--metrics",
        default="relevance,clarity,criticality,novelty",
        help="comma-separated pairwise metrics",
    )
    _common_flags(p_eval)
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {}
    if getattr(args, "jobs", None) is not None:
        if args.jobs < 1:
            raise UsageError("--jobs must be >= 1")
        overrides["jobs"] = args.jobs
    if getattr(args, "seed", None) is not None:
        overrides["rng_seed"] = args.seed
    if getattr(args, "no_prune", False):
        overrides["prune"] = False
    return dataclasses.replace(config, **overrides) if overrides else config


def _parse_methods(pairs: list[str]) -> dict[str, str]:
    methods = {}
    for pair in pairs:
        name, sep, directory = pair.partition("=")
        if not sep or not name or not directory:
            raise UsageError(f"--method must look like NAME=DIR, got {pair!r}")
        if name in methods:
            raise UsageError(f"duplicate method name: {name}")
        methods[name] = directory
    return methods


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = _load_config(args)
        fake = getattr(args, "fake_providers", False)
        if args.command == "ingest":
            path = run_ingest(args.manifest, args.out, config)
            print(path)
        elif args.command == "build":
            smg_path, hbg_path = run_build(args.corpus, args.out, config, fake=fake)
            print(smg_path)
            print(hbg_path)
        elif args.command == "retrieve":
            for path in run_retrieve(args.corpus, args.graphs, args.review, args.out, config, fake=fake):
                print(path)
        elif args.command == "explain":
            summary = run_explain(args.corpus, args.graphs, args.review, args.out, config, fake=fake)
            print(f"ok={summary['ok']} failed={summary['failed']}")
            if summary["queries"] and summary["ok"] == 0:
                statuses = {r["status"] for r in summary["queries"]}
                return EXIT_PROVIDER if statuses == {"provider_error"} else EXIT_DATA
        elif args.command == "eval":
            if args.mode == "pairwise":
                methods = _parse_methods(args.method)
                metrics = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
                path = run_eval_pairwise(methods, args.out, config, metrics=metrics, fake=fake)
            else:
                if not args.ranks:
                    raise UsageError("ranking mode requires --ranks")
                path = run_eval_ranking(args.ranks, args.out, config, ndcg_k=args.ndcg_k)
            print(path)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    sys.exit(main())
