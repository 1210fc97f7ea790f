"""Result persistence, corpus metrics, and the end-to-end pipeline runner."""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import flowgen, ingest, oracle, promptchat, slicer
from .dataflow import EffectTable
from .ingest import ProgramIndex
from .model import (
    CallChain, ChainHop, DangerousFlow, Diagnostic, FuncSpec, ModelParams,
    ParamSelector, Prompt, PromptSequence, SiteBinding, SourceCall,
    Verdict, VulnerableDestination,
)


class ScoringError(Exception):
    pass


# ---------------------------------------------------------------------------
# labels and metrics

@dataclass(frozen=True)
class CorpusLabels:
    """subject id -> (expected CWE id, vulnerable flag)."""

    entries: tuple[tuple[str, str, bool], ...]

    def __post_init__(self) -> None:
        ids = [s for s, _c, _v in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate subject ids in labels")

    def get(self, subject: str) -> tuple[str, bool] | None:
        for s, cwe, vuln in self.entries:
            if s == subject:
                return cwe, vuln
        return None

    def __contains__(self, subject: str) -> bool:
        return self.get(subject) is not None

    @classmethod
    def load(cls, path) -> "CorpusLabels":
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        entries = []
        for subject, row in sorted(obj.items()):
            entries.append((subject, str(row["cwe"]), bool(row["vulnerable"])))
        return cls(entries=tuple(entries))


def confusion_rates(tp: int, fn: int, tn: int, fp: int) -> dict[str, float | None]:
    """Accuracy/precision/recall/F1 with undefined (None) on zero divisors."""
    total = tp + fn + tn + fp
    accuracy = (tp + tn) / total if total else None
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None or precision + recall == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return {"accuracy": accuracy, "precision": precision,
            "recall": recall, "f1": f1}


@dataclass(frozen=True)
class MetricsRow:
    tp: int
    fn: int
    tn: int
    fp: int
    accuracy: float | None
    precision: float | None
    recall: float | None
    f1: float | None
    avg_seconds: float

    @classmethod
    def from_counts(cls, tp: int, fn: int, tn: int, fp: int,
                    avg_seconds: float = 0.0) -> "MetricsRow":
        rates = confusion_rates(tp, fn, tn, fp)
        return cls(tp=tp, fn=fn, tn=tn, fp=fp, avg_seconds=avg_seconds, **rates)

    def to_json(self) -> dict:
        return {"tp": self.tp, "fn": self.fn, "tn": self.tn, "fp": self.fp,
                "accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1,
                "avg_seconds": self.avg_seconds}


@dataclass(frozen=True)
class MetricsTable:
    rows: tuple[tuple[str, MetricsRow], ...]  # (CWE class or "all", row)

    def row(self, key: str) -> MetricsRow | None:
        for k, r in self.rows:
            if k == key:
                return r
        return None

    def to_json(self) -> dict:
        return {k: r.to_json() for k, r in self.rows}

    @classmethod
    def from_json(cls, obj: dict) -> "MetricsTable":
        rows = []
        for k in sorted(obj):
            d = dict(obj[k])
            rows.append((k, MetricsRow(**d)))
        return cls(rows=tuple(rows))

    def render(self) -> str:
        def pct(x: float | None) -> str:
            return "undef" if x is None else f"{100 * x:.2f}%"

        header = f"{'class':<10}{'TP':>6}{'FN':>6}{'TN':>6}{'FP':>6}" \
                 f"{'acc':>10}{'prec':>10}{'recall':>10}{'F1':>10}{'avg s':>9}"
        lines = [header, "-" * len(header)]
        for key, r in self.rows:
            lines.append(
                f"{key:<10}{r.tp:>6}{r.fn:>6}{r.tn:>6}{r.fp:>6}"
                f"{pct(r.accuracy):>10}{pct(r.precision):>10}"
                f"{pct(r.recall):>10}{pct(r.f1):>10}{r.avg_seconds:>9.2f}")
        return "\n".join(lines)


def subject_is_positive(verdicts, expected_cwe: str) -> bool:
    """The tool calls a subject vulnerable when any of its flows yields a
    yes verdict tagged with the expected CWE (indeterminate counts as no)."""
    return any(v.vulnerable == "yes" and expected_cwe in v.cwe_tags
               for v in verdicts)


def unique_bug_keys(flows_by_id: dict, verdicts: dict) -> set:
    """Distinct bugs among positive verdicts, keyed by the pair of the
    data-receiving site and the triggering site; several flows reporting
    the same pair collapse into one bug."""
    keys = set()
    for df_id, verdict in verdicts.items():
        if verdict.vulnerable != "yes" or df_id not in flows_by_id:
            continue
        df = flows_by_id[df_id]
        vd_site = (df.vd.function_id, df.vd.site_line)
        for sc in df.source_calls:
            keys.add(((sc.function_id, sc.site_line), vd_site))
    return keys


def score(verdicts_by_subject: dict, labels: CorpusLabels,
          seconds_by_subject: dict | None = None) -> MetricsTable:
    seconds_by_subject = seconds_by_subject or {}
    per_class: dict[str, dict[str, list]] = {}
    for subject in sorted(verdicts_by_subject):
        labeled = labels.get(subject)
        if labeled is None:
            raise ScoringError(f"unknown subject id {subject!r}")
        cwe, vulnerable = labeled
        positive = subject_is_positive(verdicts_by_subject[subject], cwe)
        bucket = per_class.setdefault(cwe, {"tp": [], "fn": [], "tn": [], "fp": [],
                                            "seconds": []})
        if vulnerable:
            bucket["tp" if positive else "fn"].append(subject)
        else:
            bucket["fp" if positive else "tn"].append(subject)
        bucket["seconds"].append(seconds_by_subject.get(subject, 0.0))

    rows = []
    totals = {"tp": 0, "fn": 0, "tn": 0, "fp": 0}
    all_seconds: list[float] = []
    for cwe in sorted(per_class):
        b = per_class[cwe]
        counts = {k: len(b[k]) for k in ("tp", "fn", "tn", "fp")}
        for k, v in counts.items():
            totals[k] += v
        avg = sum(b["seconds"]) / len(b["seconds"]) if b["seconds"] else 0.0
        all_seconds.extend(b["seconds"])
        rows.append((cwe, MetricsRow.from_counts(avg_seconds=avg, **counts)))
    overall_avg = sum(all_seconds) / len(all_seconds) if all_seconds else 0.0
    rows.append(("all", MetricsRow.from_counts(avg_seconds=overall_avg, **totals)))
    return MetricsTable(rows=tuple(rows))


# ---------------------------------------------------------------------------
# JSON forms of the analysis records

def vd_to_json(vd: VulnerableDestination) -> dict:
    return {"function": vd.function_id, "line": vd.site_line,
            "sink": vd.sink_name, "args": list(vd.args)}


def vd_from_json(obj: dict) -> VulnerableDestination:
    return VulnerableDestination(function_id=obj["function"], site_line=obj["line"],
                                 sink_name=obj["sink"], args=tuple(obj["args"]))


def chain_to_json(chain: CallChain) -> dict:
    return {
        "funcs": list(chain.funcs),
        "vd": vd_to_json(chain.vd),
        "hops": [{
            "caller": h.caller,
            "callee": h.callee,
            "sites": [{"line": sb.site_line,
                       "bindings": [[p, a] for p, a in sb.bindings]}
                      for sb in h.sites],
        } for h in chain.hops],
        "reach": {fid: list(idents) for fid, idents in chain.reach},
    }


def chain_from_json(obj: dict) -> CallChain:
    hops = tuple(
        ChainHop(caller=h["caller"], callee=h["callee"],
                 sites=tuple(SiteBinding(site_line=s["line"],
                                         bindings=tuple((p, a) for p, a in s["bindings"]))
                             for s in h["sites"]))
        for h in obj["hops"])
    reach = tuple(sorted((fid, tuple(idents)) for fid, idents in obj["reach"].items()))
    return CallChain(funcs=tuple(obj["funcs"]), vd=vd_from_json(obj["vd"]),
                     hops=hops, reach=reach)


def spec_to_json(spec: FuncSpec) -> dict:
    return {"name": spec.name, "role": spec.role, "selector": spec.selector.render()}


def spec_from_json(obj: dict) -> FuncSpec:
    return FuncSpec(name=obj["name"], role=obj["role"],
                    selector=ParamSelector.parse(obj["selector"]))


def flow_to_json(df: DangerousFlow, df_id: str) -> dict:
    return {
        "id": df_id,
        "chain": chain_to_json(df.chain),
        "source_calls": [{
            "function": sc.function_id, "line": sc.site_line,
            "spec": spec_to_json(sc.spec),
            "tainted_args": list(sc.tainted_args),
        } for sc in df.source_calls],
    }


def flow_from_json(obj: dict) -> tuple[str, DangerousFlow]:
    calls = tuple(SourceCall(function_id=c["function"], site_line=c["line"],
                             spec=spec_from_json(c["spec"]),
                             tainted_args=tuple(c["tainted_args"]))
                  for c in obj["source_calls"])
    return obj["id"], DangerousFlow(chain=chain_from_json(obj["chain"]),
                                    source_calls=calls)


def verdict_to_json(v: Verdict) -> dict:
    return {
        "df_id": v.df_id,
        "vulnerable": v.vulnerable,
        "cwe_tags": list(v.cwe_tags),
        "note": v.note,
        "retries": v.retries,
        "model_params": {"model": v.model_params.model,
                         "temperature": v.model_params.temperature,
                         "timestamp": v.model_params.timestamp},
        "transcript": [{"role": r, "content": c} for r, c in v.transcript],
    }


def verdict_from_json(obj: dict) -> Verdict:
    mp = obj["model_params"]
    return Verdict(
        df_id=obj["df_id"], vulnerable=obj["vulnerable"],
        cwe_tags=tuple(obj["cwe_tags"]),
        transcript=tuple((m["role"], m["content"]) for m in obj["transcript"]),
        model_params=ModelParams(model=mp["model"], temperature=mp["temperature"],
                                 timestamp=mp["timestamp"]),
        note=obj.get("note", ""), retries=obj.get("retries", 0))


def write_json(path, obj) -> None:
    """Atomic write: temp file in the same directory, then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# pipeline stages

@dataclass
class RunConfig:
    export_path: str
    out_dir: str
    sinks_file: str | None = None
    sources_file: str | None = None
    cache_path: str | None = None
    corrections_file: str | None = None
    effects_file: str | None = None
    backend_kind: str = "mock"
    mock_script: str | None = None
    base_url: str | None = None
    model: str = "mock"
    temperature: float = 0.5
    api_key_env: str = "LLM_API_KEY"
    depth_limit: int = slicer.DEFAULT_DEPTH_LIMIT
    jobs: int = 1
    rounds: int = 1
    labels_file: str | None = None


def make_backend(cfg: RunConfig):
    if cfg.backend_kind == "mock":
        if cfg.mock_script:
            return promptchat.MockBackend.from_script(
                cfg.mock_script, model=cfg.model, temperature=cfg.temperature)
        return promptchat.MockBackend(model=cfg.model, temperature=cfg.temperature)
    if cfg.backend_kind == "http":
        if not cfg.base_url:
            raise ValueError("http backend needs --base-url")
        return promptchat.HttpBackend(
            base_url=cfg.base_url, model=cfg.model, temperature=cfg.temperature,
            api_key_env=cfg.api_key_env)
    raise ValueError(f"unknown backend {cfg.backend_kind!r}")


def resolve_specs(cfg: RunConfig, export, role: str,
                  backend=None) -> list[FuncSpec]:
    """Sources/sinks from a spec file when given, otherwise via the oracle
    (cache first, then the backend)."""
    path = cfg.sinks_file if role == "sink" else cfg.sources_file
    if path:
        return oracle.load_spec_file(path, role)
    cache = oracle.OracleCache(cfg.cache_path) if cfg.cache_path else None
    corrections = (oracle.load_corrections(cfg.corrections_file)
                   if cfg.corrections_file else None)
    specs = oracle.classify_imports(export, role, backend=backend, cache=cache,
                                    corrections=corrections)
    if cache is not None and cfg.cache_path:
        cache.save()
    return specs


def build_effects(cfg: RunConfig, sources: list[FuncSpec]) -> EffectTable:
    table = EffectTable.builtin()
    if cfg.effects_file:
        with open(cfg.effects_file, "r", encoding="utf-8") as fh:
            table = table.merged(EffectTable.from_config_text(fh.read()))
    return table.with_sources(sources)


def stage_slice(export, index: ProgramIndex, graph, sinks: list[FuncSpec],
                depth_limit: int, diags: list[Diagnostic]) -> dict:
    vds = slicer.locate_vds(export, graph, sinks, index=index, diags=diags)
    chains = []
    for vd in vds:
        chains.extend(slicer.backward_slice(
            export, graph, vd, depth_limit=depth_limit, index=index, diags=diags))
    return {"vds": [vd_to_json(v) for v in vds],
            "chains": [chain_to_json(c) for c in chains]}


def stage_flows(export, index: ProgramIndex, slice_doc: dict,
                sources: list[FuncSpec]) -> dict:
    chains = [chain_from_json(c) for c in slice_doc["chains"]]
    candidates = flowgen.match_sources(export, chains, sources, index=index)
    flows = flowgen.dedup(candidates)
    return {"flows": [flow_to_json(df, f"df{i:04d}")
                      for i, df in enumerate(flows, start=1)]}


def stage_prompts(export, flows_doc: dict) -> dict:
    sequences = []
    for row in flows_doc["flows"]:
        df_id, df = flow_from_json(row)
        ps = promptchat.build_prompt_sequence(df, export)
        sequences.append({"df_id": df_id,
                          "prompts": [{"kind": p.kind, "text": p.text}
                                      for p in ps.prompts]})
    return {"sequences": sequences}


def stage_analyze(prompts_doc: dict, flows_doc: dict, export, backend,
                  out_dir, jobs: int = 1) -> dict[str, Verdict]:
    """Run one conversation per flow; verdict files land in ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flows = dict(flow_from_json(row) for row in flows_doc["flows"])

    def one(row) -> tuple[str, Verdict]:
        df_id = row["df_id"]
        df = flows[df_id]
        ps = PromptSequence(df=df, prompts=tuple(
            Prompt(kind=p["kind"], text=p["text"]) for p in row["prompts"]))
        verdict = promptchat.run_conversation(ps, backend, df_id=df_id)
        return df_id, verdict

    rows = prompts_doc["sequences"]
    results: dict[str, Verdict] = {}
    if jobs > 1 and len(rows) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for df_id, verdict in pool.map(one, rows):
                results[df_id] = verdict
    else:
        for row in rows:
            df_id, verdict = one(row)
            results[df_id] = verdict
    for df_id in sorted(results):
        write_json(out_dir / f"{df_id}.json", verdict_to_json(results[df_id]))
    return results


def load_verdict_dir(path) -> list[Verdict]:
    out = []
    for p in sorted(Path(path).glob("*.json")):
        out.append(verdict_from_json(read_json(p)))
    return out


# ---------------------------------------------------------------------------
# whole-pipeline run

def run_pipeline(cfg: RunConfig) -> Path:
    """Execute the full pipeline and persist every stage into the run
    directory; returns the directory path."""
    t0 = time.perf_counter()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    diags: list[Diagnostic] = []

    export = ingest.load(cfg.export_path, diags)
    backend = make_backend(cfg)
    sinks = resolve_specs(cfg, export, "sink", backend=backend)
    sources = resolve_specs(cfg, export, "source", backend=backend)
    effects = build_effects(cfg, sources)
    index = ProgramIndex(export, effects=effects)
    graph = ingest.build_call_graph(export, index=index, diags=diags)

    slice_doc = stage_slice(export, index, graph, sinks, cfg.depth_limit, diags)
    write_json(out / "slice.json", slice_doc)

    flows_doc = stage_flows(export, index, slice_doc, sources)
    write_json(out / "flows.json", flows_doc)

    prompts_doc = stage_prompts(export, flows_doc)
    write_json(out / "prompts.json", prompts_doc)

    round_verdicts: list[dict[str, Verdict]] = []
    for r in range(1, cfg.rounds + 1):
        vdir = out / "verdicts" if r == 1 else out / f"verdicts_round{r}"
        round_verdicts.append(stage_analyze(
            prompts_doc, flows_doc, export, backend, vdir, jobs=cfg.jobs))

    diags.extend(index.diagnostics)
    write_json(out / "diagnostics.json",
               [{"severity": d.severity, "location": d.location,
                 "message": d.message} for d in diags])
    flows_by_id = dict(flow_from_json(row) for row in flows_doc["flows"])
    bug_keys = unique_bug_keys(flows_by_id, round_verdicts[0])
    write_json(out / "manifest.json", {
        "export_name": export.name,
        "export_path": str(cfg.export_path),
        "backend": cfg.backend_kind,
        "model": cfg.model,
        "temperature": cfg.temperature,
        "depth_limit": cfg.depth_limit,
        "rounds": cfg.rounds,
        "counts": {
            "functions": len(export.functions),
            "vds": len(slice_doc["vds"]),
            "chains": len(slice_doc["chains"]),
            "flows": len(flows_doc["flows"]),
            "unique_bugs": len(bug_keys),
        },
    })

    labels = CorpusLabels.load(cfg.labels_file) if cfg.labels_file else None

    if cfg.rounds > 1:
        yes_sets = [sorted(df_id for df_id, v in rv.items() if v.vulnerable == "yes")
                    for rv in round_verdicts]
        intersection = sorted(set(yes_sets[0]).intersection(*yes_sets[1:]))
        stability: dict = {
            "rounds": cfg.rounds,
            "yes_flows_per_round": yes_sets,
            "yes_flows_intersection": intersection,
        }
        if labels is not None:
            expected = labels.get(export.name)
            if expected is not None:
                cwe, _vulnerable = expected
                tp_rounds = [subject_is_positive(rv.values(), cwe)
                             for rv in round_verdicts]
                stability["subject_tp_per_round"] = tp_rounds
                stability["subject_tp_intersection"] = all(tp_rounds)
        write_json(out / "stability.json", stability)

    elapsed = time.perf_counter() - t0
    write_json(out / "timing.json", {"total_s": elapsed})

    if labels is not None:
        for r, rv in enumerate(round_verdicts, start=1):
            table = score({export.name: list(rv.values())}, labels,
                          {export.name: elapsed})
            name = "metrics.json" if r == 1 else f"metrics_round{r}.json"
            write_json(out / name, table.to_json())
            if r == 1:
                (out / "metrics.txt").write_text(table.render() + "\n",
                                                 encoding="utf-8")

    return out


def score_runs(run_dirs, labels: CorpusLabels) -> MetricsTable:
    """Re-score persisted run directories (manifest + verdict files)."""
    verdicts_by_subject: dict[str, list[Verdict]] = {}
    seconds: dict[str, float] = {}
    for run_dir in run_dirs:
        run_dir = Path(run_dir)
        manifest = read_json(run_dir / "manifest.json")
        subject = manifest["export_name"]
        verdicts_by_subject.setdefault(subject, []).extend(
            load_verdict_dir(run_dir / "verdicts"))
        timing = run_dir / "timing.json"
        if timing.exists():
            seconds[subject] = seconds.get(subject, 0.0) + read_json(timing)["total_s"]
    return score(verdicts_by_subject, labels, seconds)
