#!/usr/bin/env python3
"""Run the pipeline over every subject of a labeled corpus and score it.

Defaults to the checked-in mini corpus with the mock backend; point
--mock-script at a reply file to steer the verdicts, or switch to the http
backend for a live model.
"""

from __future__ import annotations

import argparse
from pathlib import Path

from taintslice import report
from taintslice.report import CorpusLabels, RunConfig, run_pipeline, score_runs

DEFAULT_CORPUS = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--corpus", default=str(DEFAULT_CORPUS))
    ap.add_argument("--out", required=True, help="directory for per-subject runs")
    ap.add_argument("--backend", choices=["mock", "http"], default="mock")
    ap.add_argument("--mock-script")
    ap.add_argument("--base-url")
    ap.add_argument("--model", default="mock")
    ap.add_argument("--temperature", type=float, default=0.5)
    ap.add_argument("--rounds", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()

    corpus = Path(args.corpus)
    out = Path(args.out)
    run_dirs = []
    for subject in sorted(corpus.glob("subject_*.json")):
        cfg = RunConfig(
            export_path=str(subject),
            out_dir=str(out / subject.stem),
            sinks_file=str(corpus / "sinks.txt"),
            sources_file=str(corpus / "sources.txt"),
            backend_kind=args.backend,
            mock_script=args.mock_script,
            base_url=args.base_url,
            model=args.model,
            temperature=args.temperature,
            rounds=args.rounds,
            jobs=args.jobs,
        )
        run_dirs.append(run_pipeline(cfg))
        manifest = report.read_json(run_dirs[-1] / "manifest.json")
        counts = manifest["counts"]
        print(f"{subject.stem}: {counts['vds']} VDs, {counts['flows']} flows")

    labels = CorpusLabels.load(corpus / "labels.json")
    table = score_runs(run_dirs, labels)
    print()
    print(table.render())
    report.write_json(out / "metrics.json", table.to_json())
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
