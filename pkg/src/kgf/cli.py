"""Command-line entry point: ``kgf <verb> [--config PATH] [--offline] [--cohort NAME] [--out DIR]``.

Each stage verb runs the pipeline up to and including that stage; earlier
stages are served from the on-disk cache when their fingerprints match.

Exit codes: 0 success, 1 stage failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from kgf.errors import ConfigError, KgfError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_STAGE_FAILURE = 1
EXIT_CONFIG = 2

STAGE_VERBS = ("extract", "ground", "map", "relate", "encode", "validate", "report", "pipeline")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="kgf.yaml", help="YAML configuration file (default: ./kgf.yaml)")
    common.add_argument("--offline", action="store_true", help="use deterministic offline agents only")
    common.add_argument("--cohort", help="restrict the run to one cohort (e.g. PDAC)")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    parser = argparse.ArgumentParser(prog="kgf", description="Clinical knowledge-graph pipeline")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in STAGE_VERBS:
        help_text = "run every stage" if verb == "pipeline" else f"run the pipeline through '{verb}'"
        sub.add_parser(verb, parents=[common], help=help_text)
    q = sub.add_parser("query", parents=[common], help="evaluate a SPARQL query over an N-Triples graph")
    q.add_argument("sparql", help="query text, or a path to a file containing it")
    q.add_argument("--graph", help="N-Triples file (default: <out>/graph/cohort.nt)")
    return parser


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _run_query(args, out_dir: Optional[Path]) -> int:
    from kgf.graph.ntriples import NTriplesError, read_ntriples
    from kgf.graph.sparql import SparqlSyntaxError, eval_sparql, parse_sparql

    text = args.sparql
    candidate = Path(text)
    if "\n" not in text and len(text) < 4096 and candidate.is_file():
        text = candidate.read_text(encoding="utf-8")
    if args.graph:
        graph = Path(args.graph)
    elif out_dir is not None:
        graph = out_dir / "graph" / "cohort.nt"
    else:
        print("kgf: query needs --graph or a config with an output directory", file=sys.stderr)
        return EXIT_CONFIG
    if not graph.is_file():
        print(f"kgf: graph file not found: {graph}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    try:
        query = parse_sparql(text)
        store = read_ntriples(graph)
    except (SparqlSyntaxError, NTriplesError) as exc:
        print(f"kgf: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    names = [v.name for v in query.select]
    print("\t".join("?" + n for n in names))
    for row in eval_sparql(query, store):
        print("\t".join(row[n].n3() for n in names))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    from kgf.config import load_config

    overrides = {"out": args.out} if args.out else None
    if args.verb == "query":
        out_dir = Path(args.out) if args.out else None
        if args.graph is None and out_dir is None:
            try:
                out_dir = load_config(args.config).out
            except ConfigError as exc:
                print(f"kgf: config error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
        return _run_query(args, out_dir)

    from kgf.pipeline import Pipeline

    try:
        cfg = load_config(args.config, overrides)
        pipeline = Pipeline(cfg, offline=args.offline, cohort=args.cohort)
    except ConfigError as exc:
        print(f"kgf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    until = "report" if args.verb == "pipeline" else args.verb
    try:
        result = pipeline.run(until)
    except ConfigError as exc:
        print(f"kgf: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KgfError, OSError) as exc:
        logger.exception("stage failure")
        print(f"kgf: {exc}", file=sys.stderr)
        return EXIT_STAGE_FAILURE
    for failure in result.failures:
        print(f"kgf: stage failure: {failure}", file=sys.stderr)
    print(f"kgf: {until} finished, outputs in {result.out_dir}", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
