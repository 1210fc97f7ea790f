"""Command-line interface: validate, slice, flows, prompts, analyze, score, run."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import ingest, oracle, report, slicer
from .ingest import ProgramIndex
from .model import Diagnostic, ExportError


def _common_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=["http", "mock"], default="mock")
    p.add_argument("--mock-script", help="scripted replies file for the mock backend")
    p.add_argument("--base-url", help="chat-completion endpoint for the http backend")
    p.add_argument("--model", default="mock")
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--api-key-env", default="LLM_API_KEY",
                   help="environment variable holding the API key")


def _spec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sinks-file", help="sink list file, one 'name; parameters' per line")
    p.add_argument("--sources-file", help="source list file, same format")
    p.add_argument("--cache", dest="cache_path", help="oracle cache file (JSON)")
    p.add_argument("--corrections", dest="corrections_file",
                   help="selector corrections file (JSON)")
    p.add_argument("--effects-file",
                   help="extra write effects, lines of 'name writes_arg k'")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="taintslice",
        description="Slice decompiled programs into dangerous source-to-sink "
                    "flows and drive an LLM conversation per flow.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an export file")
    p.add_argument("export")

    p = sub.add_parser("slice", help="locate VDs and build call chains")
    p.add_argument("export")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--depth-limit", type=int, default=slicer.DEFAULT_DEPTH_LIMIT)
    _spec_flags(p)
    _common_backend_flags(p)

    p = sub.add_parser("flows", help="match sources into chains, deduplicate")
    p.add_argument("export")
    p.add_argument("slice_doc", help="output of the slice command")
    p.add_argument("-o", "--out", required=True)
    _spec_flags(p)
    _common_backend_flags(p)

    p = sub.add_parser("prompts", help="build prompt sequences for flows")
    p.add_argument("export")
    p.add_argument("flows_doc", help="output of the flows command")
    p.add_argument("-o", "--out", required=True)

    p = sub.add_parser("analyze", help="drive one conversation per flow")
    p.add_argument("export")
    p.add_argument("flows_doc")
    p.add_argument("prompts_doc")
    p.add_argument("-o", "--out", required=True, help="verdict directory")
    p.add_argument("--jobs", type=int, default=1)
    _common_backend_flags(p)

    p = sub.add_parser("score", help="score persisted run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--labels", required=True)
    p.add_argument("-o", "--out", help="also write metrics JSON here")

    p = sub.add_parser("run", help="full pipeline into a run directory")
    p.add_argument("export")
    p.add_argument("-o", "--out", required=True, help="run directory")
    p.add_argument("--depth-limit", type=int, default=slicer.DEFAULT_DEPTH_LIMIT)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--rounds", type=int, default=1)
    p.add_argument("--labels", dest="labels_file")
    _spec_flags(p)
    _common_backend_flags(p)
    return ap


def _config_from(args: argparse.Namespace, export_path: str, out: str) -> report.RunConfig:
    return report.RunConfig(
        export_path=export_path,
        out_dir=out,
        sinks_file=getattr(args, "sinks_file", None),
        sources_file=getattr(args, "sources_file", None),
        cache_path=getattr(args, "cache_path", None),
        corrections_file=getattr(args, "corrections_file", None),
        effects_file=getattr(args, "effects_file", None),
        backend_kind=getattr(args, "backend", "mock"),
        mock_script=getattr(args, "mock_script", None),
        base_url=getattr(args, "base_url", None),
        model=getattr(args, "model", "mock"),
        temperature=getattr(args, "temperature", 0.5),
        api_key_env=getattr(args, "api_key_env", "LLM_API_KEY"),
        depth_limit=getattr(args, "depth_limit", slicer.DEFAULT_DEPTH_LIMIT),
        jobs=getattr(args, "jobs", 1),
        rounds=getattr(args, "rounds", 1),
        labels_file=getattr(args, "labels_file", None),
    )


def _print_diags(diags: list[Diagnostic]) -> None:
    for d in diags:
        print(str(d), file=sys.stderr)


def cmd_validate(args) -> int:
    diags: list[Diagnostic] = []
    try:
        export = ingest.load(args.export, diags)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_diags(diags)
    print(f"{export.name}: ok ({len(export.functions)} functions, "
          f"{len(export.imports)} imports)")
    return 0


def cmd_slice(args) -> int:
    cfg = _config_from(args, args.export, ".")
    diags: list[Diagnostic] = []
    export = ingest.load(args.export, diags)
    backend = report.make_backend(cfg) if not cfg.sinks_file else None
    sinks = report.resolve_specs(cfg, export, "sink", backend=backend)
    sources = report.resolve_specs(cfg, export, "source", backend=backend) \
        if (cfg.sources_file or cfg.cache_path) else []
    effects = report.build_effects(cfg, sources)
    index = ProgramIndex(export, effects=effects)
    graph = ingest.build_call_graph(export, index=index, diags=diags)
    doc = report.stage_slice(export, index, graph, sinks, cfg.depth_limit, diags)
    report.write_json(args.out, doc)
    _print_diags(diags + index.diagnostics)
    print(f"{len(doc['vds'])} VDs, {len(doc['chains'])} chains -> {args.out}")
    return 0


def cmd_flows(args) -> int:
    cfg = _config_from(args, args.export, ".")
    export = ingest.load(args.export)
    backend = report.make_backend(cfg) if not cfg.sources_file else None
    sources = report.resolve_specs(cfg, export, "source", backend=backend)
    effects = report.build_effects(cfg, sources)
    index = ProgramIndex(export, effects=effects)
    doc = report.stage_flows(export, index, report.read_json(args.slice_doc), sources)
    report.write_json(args.out, doc)
    print(f"{len(doc['flows'])} dangerous flows -> {args.out}")
    return 0


def cmd_prompts(args) -> int:
    export = ingest.load(args.export)
    doc = report.stage_prompts(export, report.read_json(args.flows_doc))
    report.write_json(args.out, doc)
    print(f"{len(doc['sequences'])} prompt sequences -> {args.out}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _config_from(args, args.export, args.out)
    export = ingest.load(args.export)
    backend = report.make_backend(cfg)
    results = report.stage_analyze(
        report.read_json(args.prompts_doc), report.read_json(args.flows_doc),
        export, backend, args.out, jobs=cfg.jobs)
    yes = sum(1 for v in results.values() if v.vulnerable == "yes")
    print(f"{len(results)} verdicts ({yes} positive) -> {args.out}")
    return 0


def cmd_score(args) -> int:
    labels = report.CorpusLabels.load(args.labels)
    table = report.score_runs(args.run_dirs, labels)
    print(table.render())
    if args.out:
        report.write_json(args.out, table.to_json())
    return 0


def cmd_run(args) -> int:
    cfg = _config_from(args, args.export, args.out)
    try:
        out = report.run_pipeline(cfg)
    except (ExportError, oracle.OracleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    manifest = report.read_json(Path(out) / "manifest.json")
    counts = manifest["counts"]
    print(f"{manifest['export_name']}: {counts['vds']} VDs, "
          f"{counts['chains']} chains, {counts['flows']} flows -> {out}")
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "slice": cmd_slice,
    "flows": cmd_flows,
    "prompts": cmd_prompts,
    "analyze": cmd_analyze,
    "score": cmd_score,
    "run": cmd_run,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
