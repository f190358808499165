"""Command-line entry point: ``m3 <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import DEFAULT_TEMPLATES, __version__
from .generator import TemplateError, load_template_file, match_templates, materialize
from .knowledge import CatalogError, load_catalog, select_knowledge
from .pipeline import (EXIT_KNOWLEDGE, EXIT_OK, EXIT_TEMPLATE, EXIT_USAGE, StageError,
                       default_manifest_path, default_taxonomy_path, parse_domains,
                       read_config_file, resolve_config, run_pipeline, stage_annotate,
                       stage_link, stage_query, stage_reason)
from .taxonomy import TaxonomyError, UnificationError, load_taxonomy_file

log = logging.getLogger("m3engine")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2, which is the annotate stage code here
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _split(values: Optional[Sequence[str]]) -> list[str]:
    out = []
    for v in values or ():
        out.extend(x for x in v.split(",") if x.strip())
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="m3", description="Annotate, reason over and query IoT sensor readings.")
    p.add_argument("--version", action="version", version=f"m3 {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    a = sub.add_parser("annotate", help="raw readings -> annotated Turtle")
    a.add_argument("--in", dest="input", required=True, type=Path, help="readings file")
    a.add_argument("--format", choices=("csv", "json"), default="csv")
    a.add_argument("--taxonomy", type=Path, help="taxonomy Turtle (env M3_TAXONOMY, default shipped)")
    a.add_argument("--out", type=Path, help="output Turtle file (default stdout)")

    r = sub.add_parser("reason", help="apply rules to a graph")
    r.add_argument("--in", dest="input", required=True, type=Path)
    r.add_argument("--rules", nargs="+", required=True, type=Path)
    r.add_argument("--out", type=Path, help="enriched Turtle file (default stdout)")
    r.add_argument("--log", type=Path, help="derivation log, one JSON record per line")

    q = sub.add_parser("query", help="run a query over a graph")
    q.add_argument("--in", dest="input", required=True, type=Path)
    q.add_argument("--query", required=True, type=Path)
    q.add_argument("--out", choices=("csv", "json"), default="csv", help="result format")
    q.add_argument("--result", type=Path, help="result file (default stdout)")

    k = sub.add_parser("knowledge", help="domain knowledge catalog")
    ksub = k.add_subparsers(dest="action", parser_class=_Parser)
    kv = ksub.add_parser("validate", help="check a catalog manifest")
    kv.add_argument("manifest", nargs="?", type=Path)
    ks = ksub.add_parser("select", help="entries for some domains")
    ks.add_argument("--domains", action="append", required=True)
    ks.add_argument("--manifest", type=Path)
    ks.add_argument("--taxonomy", type=Path)
    kl = ksub.add_parser("link", help="merge a graph with the knowledge of its domains")
    kl.add_argument("--in", dest="input", required=True, type=Path)
    kl.add_argument("--out", type=Path)
    kl.add_argument("--manifest", type=Path)
    kl.add_argument("--domains", action="append",
                    help="domains to link (default: those the observations name)")
    kl.add_argument("--taxonomy", type=Path)

    t = sub.add_parser("templates", help="SWoT template catalog")
    tsub = t.add_subparsers(dest="action", parser_class=_Parser)
    for name, helptext in (("list", "list templates"), ("match", "templates for a request"),
                           ("gen", "write a template bundle")):
        tp = tsub.add_parser(name, help=helptext)
        tp.add_argument("--catalog", type=Path, help="template Turtle (default shipped)")
        tp.add_argument("--manifest", type=Path)
        tp.add_argument("--taxonomy", type=Path)
        if name == "match":
            tp.add_argument("--sensors", action="append", default=[])
            tp.add_argument("--domains", action="append", default=[])
        if name == "gen":
            tp.add_argument("--id", required=True, help="template IRI or short name")
            tp.add_argument("--out", required=True, type=Path)

    rn = sub.add_parser("run", help="whole pipeline from a config file and flags")
    rn.add_argument("--config", type=Path, help="flat TOML key/value file")
    rn.add_argument("--in", dest="readings", type=Path)
    rn.add_argument("--format", dest="readings_format", choices=("csv", "json"))
    rn.add_argument("--taxonomy", type=Path)
    rn.add_argument("--rules", nargs="+", type=Path)
    rn.add_argument("--knowledge-manifest", dest="knowledge_manifest", type=Path)
    rn.add_argument("--query", type=Path)
    rn.add_argument("--domains", action="append")
    rn.add_argument("--out-dir", dest="out_dir", type=Path)
    rn.add_argument("--result-format", dest="result_format", choices=("csv", "json"))
    return p


def _emit(text: str) -> None:
    sys.stdout.write(text)


def _cmd_annotate(args) -> int:
    text = stage_annotate(args.input, args.format, args.taxonomy or default_taxonomy_path(), args.out)
    if args.out is None:
        _emit(text)
    return EXIT_OK


def _cmd_reason(args) -> int:
    inference = stage_reason(args.input, args.rules, args.out, args.log)
    if args.out is None:
        from .rdf import serialize
        _emit(serialize(inference.graph, "turtle"))
    return EXIT_OK


def _cmd_query(args) -> int:
    text = stage_query(args.input, args.query, args.out, args.result)
    if args.result is None:
        _emit(text)
    return EXIT_OK


def _cmd_knowledge(args) -> int:
    if args.action is None:
        raise UsageError("m3 knowledge: choose validate, select or link")
    manifest = args.manifest or default_manifest_path()
    try:
        if args.action == "validate":
            cat = load_catalog(manifest)
            _emit(f"ok: {len(cat)} entries in {manifest}\n")
            return EXIT_OK
        if args.action == "select":
            cat = load_catalog(manifest)
            domains = parse_domains(_split(args.domains), args.taxonomy)
            for e in select_knowledge(domains, cat):
                _emit(f"{e.id}\t{e.kind}\t{e.path}\n")
            return EXIT_OK
        domains = parse_domains(_split(args.domains), args.taxonomy) if args.domains else None
    except CatalogError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_KNOWLEDGE
    except (UnificationError, TaxonomyError, OSError) as exc:
        print(f"m3 knowledge: {exc}", file=sys.stderr)
        return EXIT_KNOWLEDGE
    text = stage_link(args.input, manifest, domains, args.out)
    if args.out is None:
        _emit(text)
    return EXIT_OK


def _cmd_templates(args) -> int:
    if args.action is None:
        raise UsageError("m3 templates: choose list, match or gen")
    try:
        tax = load_taxonomy_file(args.taxonomy or default_taxonomy_path())
        cat = load_catalog(args.manifest or default_manifest_path())
        templates = load_template_file(args.catalog or DEFAULT_TEMPLATES, cat, tax)
        if args.action == "list":
            for t in templates:
                _emit(f"{t.id.value}\t{t.title}\n")
        elif args.action == "match":
            for t in match_templates(_split(args.sensors), _split(args.domains), templates, tax):
                _emit(f"{t.id.value}\t{t.title}\n")
        else:
            chosen = [t for t in templates if args.id in (t.id.value, t.short_id)]
            if not chosen:
                raise TemplateError(args.id, "no such template")
            bundle = materialize(chosen[0], cat, tax, args.out)
            _emit(f"wrote {len(bundle.files) + 1} files to {bundle.root}\n")
    except (TemplateError, CatalogError, TaxonomyError, UnificationError, OSError) as exc:
        print(f"m3 templates: {exc}", file=sys.stderr)
        return EXIT_TEMPLATE
    return EXIT_OK


def _cmd_run(args) -> int:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {k: getattr(args, k) for k in ("readings", "readings_format", "taxonomy", "rules",
                                            "knowledge_manifest", "query", "out_dir", "result_format")}
    flags["domains"] = _split(args.domains) or None
    flags["verbosity"] = args.verbose or None
    config = resolve_config(flags, file_values)
    problems = config.missing()
    if problems:
        raise UsageError("m3 run: " + "; ".join(problems))
    return run_pipeline(config)


COMMANDS = {
    "annotate": _cmd_annotate,
    "reason": _cmd_reason,
    "query": _cmd_query,
    "knowledge": _cmd_knowledge,
    "templates": _cmd_templates,
    "run": _cmd_run,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="m3: %(message)s", stream=sys.stderr, force=True)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"m3: {exc.stage} stage failed: {exc.cause}", file=sys.stderr)
        return exc.code
    except (ValueError, OSError) as exc:
        print(f"m3: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
