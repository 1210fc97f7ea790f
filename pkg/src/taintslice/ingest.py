"""Loading and indexing of program exports; call-graph construction."""

from __future__ import annotations

import json
from dataclasses import dataclass

from . import pseudoc
from .dataflow import DepGraph, EffectTable, build_deps
from .model import (
    Diagnostic, ExportError, ProgramExport, WARNING,
    decode_export, validate_export,
)


def load(path, diags: list[Diagnostic] | None = None) -> ProgramExport:
    """Load, decode and validate an export file.

    Fails with ExportError on IO problems, schema violations, or the first
    fatal validation diagnostic; warnings are appended to ``diags``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ExportError(f"{path} is not valid JSON: {exc}") from exc

    export = decode_export(obj, diags)
    for d in validate_export(export):
        if d.is_fatal():
            raise ExportError(f"{d.location}: {d.message}", d.location)
        if diags is not None:
            diags.append(d)
    return export


@dataclass(frozen=True)
class CallEdge:
    caller: str   # function id
    callee: str   # function id (internal) or bare name (external)
    line: int
    external: bool


@dataclass(frozen=True)
class CallGraph:
    nodes: frozenset[str]
    edges: tuple[CallEdge, ...]
    _reverse: tuple[tuple[str, tuple[tuple[str, int], ...]], ...]

    def callers_of(self, callee: str) -> tuple[tuple[str, int], ...]:
        for key, entry in self._reverse:
            if key == callee:
                return entry
        return ()

    def callees_of(self, caller: str) -> tuple[CallEdge, ...]:
        return tuple(e for e in self.edges if e.caller == caller)

    def reverse_index(self) -> dict[str, tuple[tuple[str, int], ...]]:
        return dict(self._reverse)


class ProgramIndex:
    """Parse cache over an export: IRs, dependency graphs, unparseable set.

    Built once, read-only afterwards; safe to share between workers.
    """

    def __init__(self, export: ProgramExport, effects: EffectTable | None = None):
        self.export = export
        self.effects = effects if effects is not None else EffectTable.builtin()
        self.diagnostics: list[Diagnostic] = []
        self._irs: dict[str, pseudoc.FunctionIR | None] = {}
        self._deps: dict[str, DepGraph | None] = {}
        self._by_id = {f.id: f for f in export.functions}
        self._by_name = {}
        for f in export.functions:
            self._by_name.setdefault(f.name, f)

    def function(self, fid: str):
        return self._by_id.get(fid)

    def resolve_name(self, name: str):
        return self._by_name.get(name)

    def ir(self, fid: str) -> pseudoc.FunctionIR | None:
        """Parsed IR, or None when the function is unparseable or bodyless."""
        if fid in self._irs:
            return self._irs[fid]
        f = self._by_id.get(fid)
        ir = None
        if f is None:
            self.diagnostics.append(Diagnostic(WARNING, fid, "unknown function id"))
        elif f.body_text is None:
            self.diagnostics.append(Diagnostic(WARNING, fid, "no body text, excluded from slicing"))
        else:
            try:
                ir = pseudoc.parse_function(f.body_text)
            except pseudoc.FunctionParseError as exc:
                self.diagnostics.append(
                    Diagnostic(WARNING, fid, f"unparseable body ({exc}), excluded from slicing"))
        self._irs[fid] = ir
        return ir

    def deps(self, fid: str) -> DepGraph | None:
        if fid in self._deps:
            return self._deps[fid]
        ir = self.ir(fid)
        dep = None
        if ir is not None:
            f = self._by_id[fid]
            params = f.params if f.params else ir.params
            dep = build_deps(ir, params=params, effects=self.effects)
        self._deps[fid] = dep
        return dep

    def params_of(self, fid: str) -> tuple[tuple[str, str], ...]:
        f = self._by_id.get(fid)
        if f is not None and f.params:
            return f.params
        ir = self.ir(fid)
        return ir.params if ir is not None else ()


def build_call_graph(export: ProgramExport, index: ProgramIndex | None = None,
                     diags: list[Diagnostic] | None = None) -> CallGraph:
    """One edge per call site, unioned from the export's declared edges and
    the call statements recovered from parsed bodies.

    Declared edges that the parsed body does not show produce a warning but
    are kept (decompilers see indirect calls the text parser cannot).
    """
    if index is None:
        index = ProgramIndex(export)
    by_name = {f.name: f.id for f in reversed(export.functions)}
    import_names = {imp.name for imp in export.imports}

    def resolve(callee_name: str) -> tuple[str, bool]:
        if callee_name in by_name:
            return by_name[callee_name], False
        return callee_name, True

    recovered: set[tuple[str, str, int]] = set()  # (caller, callee name, line)
    for f in export.functions:
        ir = index.ir(f.id)
        if ir is None:
            continue
        for line, callee, _args, _lhs in pseudoc.all_call_sites(ir):
            recovered.add((f.id, callee, line))

    declared: set[tuple[str, str, int]] = {
        (e.caller, e.callee, e.line) for e in export.call_edges}

    for caller, callee, line in sorted(declared - recovered):
        if index.ir(caller) is None:
            continue  # cannot cross-check an unparseable body
        if diags is not None:
            diags.append(Diagnostic(
                WARNING, f"{caller}:{line}",
                f"declared call edge to {callee!r} not found in parsed body"))

    edges = []
    for caller, callee_name, line in sorted(declared | recovered):
        target, external = resolve(callee_name)
        if external and callee_name not in import_names and callee_name != "<indirect>":
            if diags is not None:
                diags.append(Diagnostic(WARNING, f"{caller}:{line}",
                                        f"unresolved callee {callee_name!r}"))
        edges.append(CallEdge(caller=caller, callee=target, line=line, external=external))

    reverse: dict[str, list[tuple[str, int]]] = {}
    for e in edges:
        reverse.setdefault(e.callee, []).append((e.caller, e.line))
    reverse_frozen = tuple(sorted(
        (callee, tuple(sorted(pairs))) for callee, pairs in reverse.items()))

    nodes = frozenset(f.id for f in export.functions)
    return CallGraph(nodes=nodes, edges=tuple(edges), _reverse=reverse_frozen)
