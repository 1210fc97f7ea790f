"""Domain types shared by the whole pipeline, plus the export JSON codec."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

SCHEMA_VERSION = 1

ERROR = "error"
WARNING = "warning"


class ExportError(Exception):
    """Raised when an export file cannot be loaded or violates the schema."""

    def __init__(self, message: str, location: str = "") -> None:
        super().__init__(message)
        self.location = location


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # ERROR or WARNING
    location: str
    message: str

    def is_fatal(self) -> bool:
        return self.severity == ERROR

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


# ---------------------------------------------------------------------------
# parameter selectors

_SELECTOR_RE = re.compile(r"^\s*(>\s*\d+|\d+(?:\s*,\s*\d+)*(?:\s*,\s*\.\.\.)?)\s*$")


@dataclass(frozen=True)
class ParamSelector:
    """Which parameters of a function carry checked/tainted data.

    Parameter indices are 1-based; index 0 is reserved for the return value.
    ``from_index`` selects every index >= from_index (open-ended lists).
    """

    indices: frozenset[int] = frozenset()
    from_index: int | None = None

    def __post_init__(self) -> None:
        if self.from_index is not None and self.from_index < 1:
            raise ValueError("from_index must be >= 1")
        for i in self.indices:
            if i < 0:
                raise ValueError("parameter indices must be >= 0")
        if 0 in self.indices and (len(self.indices) > 1 or self.from_index):
            raise ValueError("return-value selector cannot be combined with indices")

    @classmethod
    def of(cls, *indices: int) -> "ParamSelector":
        return cls(indices=frozenset(indices))

    @classmethod
    def all_from(cls, start: int) -> "ParamSelector":
        return cls(from_index=start)

    @classmethod
    def return_value(cls) -> "ParamSelector":
        return cls(indices=frozenset({0}))

    @classmethod
    def parse(cls, text: str) -> "ParamSelector":
        """Parse "1", "2, 3", "2, 3, ...", ">2" or "0" (return value)."""
        text = text.strip()
        if not _SELECTOR_RE.match(text):
            raise ValueError(f"bad selector {text!r}")
        if text.startswith(">"):
            return cls.all_from(int(text[1:]) + 1)
        parts = [p.strip() for p in text.split(",")]
        if parts[-1] == "...":
            nums = [int(p) for p in parts[:-1]]
            start = min(nums)
            rest = frozenset(n for n in nums if n > start)
            sel = cls(indices=rest, from_index=start)
        else:
            sel = cls(indices=frozenset(int(p) for p in parts))
        return sel._normalized()

    def _normalized(self) -> "ParamSelector":
        if self.from_index is None:
            return self
        start = self.from_index
        idx = set(i for i in self.indices if i < start)
        while start - 1 in idx:
            start -= 1
            idx.discard(start)
        return ParamSelector(indices=frozenset(idx), from_index=start)

    @property
    def is_return(self) -> bool:
        return self.indices == frozenset({0})

    def matches(self, index: int) -> bool:
        if index < 1:
            return False
        if index in self.indices:
            return True
        return self.from_index is not None and index >= self.from_index

    def select(self, args: list) -> list[tuple[int, object]]:
        """1-based (index, arg) pairs of the selected positional arguments."""
        return [(i, a) for i, a in enumerate(args, start=1) if self.matches(i)]

    def union(self, other: "ParamSelector") -> "ParamSelector":
        if self.is_return or other.is_return:
            if self.is_return and other.is_return:
                return self
            raise ValueError("cannot merge return-value and positional selectors")
        froms = [f for f in (self.from_index, other.from_index) if f is not None]
        merged = ParamSelector(
            indices=self.indices | other.indices,
            from_index=min(froms) if froms else None,
        )
        return merged._normalized()

    def render(self) -> str:
        if self.is_return:
            return "0"
        parts = sorted(self.indices)
        out = ", ".join(str(i) for i in parts)
        if self.from_index is not None:
            tail = f">{self.from_index - 1}"
            out = f"{out}, {tail}" if out else tail
        return out

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class FuncSpec:
    """A (function name; checked parameters) pair for a source or sink role."""

    name: str
    role: str  # "source" | "sink"
    selector: ParamSelector

    def __post_init__(self) -> None:
        if self.role not in ("source", "sink"):
            raise ValueError(f"bad role {self.role!r}")
        if self.role == "sink" and self.selector.is_return:
            raise ValueError("sinks are checked on arguments, not return values")

    def __str__(self) -> str:
        return f"({self.name}; {self.selector})"


# ---------------------------------------------------------------------------
# program export

@dataclass(frozen=True)
class FunctionRecord:
    id: str
    name: str
    params: tuple[tuple[str, str], ...]  # (name, declared type text), call order
    body_text: str | None
    entry_address: str | None = None

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.params)


@dataclass(frozen=True)
class ImportEntry:
    name: str
    kind: str  # "dynamic" | "static"
    body_text: str | None = None


@dataclass(frozen=True)
class CallEdgeDecl:
    caller: str
    callee: str
    line: int


@dataclass(frozen=True)
class ProgramExport:
    name: str
    functions: tuple[FunctionRecord, ...]
    imports: tuple[ImportEntry, ...]
    call_edges: tuple[CallEdgeDecl, ...]
    schema_version: int = SCHEMA_VERSION

    def function_by_id(self, fid: str) -> FunctionRecord | None:
        for f in self.functions:
            if f.id == fid:
                return f
        return None

    def function_by_name(self, name: str) -> FunctionRecord | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None

    def import_by_name(self, name: str) -> ImportEntry | None:
        for imp in self.imports:
            if imp.name == name:
                return imp
        return None


def validate_export(export: ProgramExport) -> list[Diagnostic]:
    """Check the structural invariants; empty result means a valid export."""
    diags: list[Diagnostic] = []
    where = export.name or "<export>"

    if export.schema_version != SCHEMA_VERSION:
        diags.append(Diagnostic(ERROR, where,
                                f"unsupported schema_version {export.schema_version}"))

    seen_ids: set[str] = set()
    names: dict[str, int] = {}
    for f in export.functions:
        if f.id in seen_ids:
            diags.append(Diagnostic(ERROR, where, f"duplicate function id {f.id!r}"))
        seen_ids.add(f.id)
        names[f.name] = names.get(f.name, 0) + 1
        if f.body_text is None:
            diags.append(Diagnostic(WARNING, f.id, "function has no body text"))
    for name, count in names.items():
        if count > 1:
            diags.append(Diagnostic(WARNING, where,
                                    f"function name {name!r} used by {count} functions"))

    import_names = set()
    for imp in export.imports:
        if imp.kind not in ("dynamic", "static"):
            diags.append(Diagnostic(ERROR, imp.name, f"bad import kind {imp.kind!r}"))
        if imp.kind == "dynamic" and imp.body_text is not None:
            diags.append(Diagnostic(ERROR, imp.name,
                                    "dynamic import must not carry a body"))
        if imp.name in import_names:
            diags.append(Diagnostic(WARNING, where, f"duplicate import {imp.name!r}"))
        import_names.add(imp.name)

    callable_names = {f.name for f in export.functions} | import_names
    for edge in export.call_edges:
        loc = f"{edge.caller}:{edge.line}"
        if edge.caller not in seen_ids:
            diags.append(Diagnostic(ERROR, loc,
                                    f"call edge caller {edge.caller!r} is not a function id"))
        if edge.line < 1:
            diags.append(Diagnostic(ERROR, loc, f"bad call edge line {edge.line}"))
        if edge.callee not in callable_names and edge.callee != "<indirect>":
            diags.append(Diagnostic(WARNING, loc,
                                    f"unresolved callee {edge.callee!r}"))
    return diags


# --- JSON codec (schema_version 1) -----------------------------------------
# Top level: {name, schema_version, functions, imports, call_edges}.
# Unknown fields anywhere are ignored with a warning, never an error.

_TOP_FIELDS = {"name", "schema_version", "functions", "imports", "call_edges"}
_FUNC_FIELDS = {"id", "name", "params", "body", "entry_address"}
_PARAM_FIELDS = {"name", "type"}
_IMPORT_FIELDS = {"name", "kind", "body"}
_EDGE_FIELDS = {"caller", "callee", "line"}


def _warn_unknown(obj: dict, known: set[str], where: str,
                  diags: list[Diagnostic] | None) -> None:
    if diags is None:
        return
    for key in obj:
        if key not in known:
            diags.append(Diagnostic(WARNING, where, f"ignoring unknown field {key!r}"))


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise ExportError(f"missing field {key!r}", where)
    return obj[key]


def decode_export(obj: dict, diags: list[Diagnostic] | None = None) -> ProgramExport:
    if not isinstance(obj, dict):
        raise ExportError("export must be a JSON object", "<top>")
    _warn_unknown(obj, _TOP_FIELDS, "<top>", diags)
    name = _need(obj, "name", "<top>")
    version = _need(obj, "schema_version", "<top>")
    if not isinstance(version, int):
        raise ExportError("schema_version must be an integer", "<top>")

    functions = []
    for i, fo in enumerate(obj.get("functions", [])):
        where = f"functions[{i}]"
        if not isinstance(fo, dict):
            raise ExportError("function entry must be an object", where)
        _warn_unknown(fo, _FUNC_FIELDS, where, diags)
        params = []
        for j, po in enumerate(fo.get("params", [])):
            pwhere = f"{where}.params[{j}]"
            if not isinstance(po, dict):
                raise ExportError("param entry must be an object", pwhere)
            _warn_unknown(po, _PARAM_FIELDS, pwhere, diags)
            params.append((str(_need(po, "name", pwhere)), str(po.get("type", ""))))
        functions.append(FunctionRecord(
            id=str(_need(fo, "id", where)),
            name=str(_need(fo, "name", where)),
            params=tuple(params),
            body_text=fo.get("body"),
            entry_address=fo.get("entry_address"),
        ))

    imports = []
    for i, io in enumerate(obj.get("imports", [])):
        where = f"imports[{i}]"
        if not isinstance(io, dict):
            raise ExportError("import entry must be an object", where)
        _warn_unknown(io, _IMPORT_FIELDS, where, diags)
        imports.append(ImportEntry(
            name=str(_need(io, "name", where)),
            kind=str(io.get("kind", "dynamic")),
            body_text=io.get("body"),
        ))

    edges = []
    for i, eo in enumerate(obj.get("call_edges", [])):
        where = f"call_edges[{i}]"
        if not isinstance(eo, dict):
            raise ExportError("call edge entry must be an object", where)
        _warn_unknown(eo, _EDGE_FIELDS, where, diags)
        line = _need(eo, "line", where)
        if not isinstance(line, int):
            raise ExportError("call edge line must be an integer", where)
        edges.append(CallEdgeDecl(
            caller=str(_need(eo, "caller", where)),
            callee=str(_need(eo, "callee", where)),
            line=line,
        ))

    return ProgramExport(
        name=str(name),
        functions=tuple(functions),
        imports=tuple(imports),
        call_edges=tuple(edges),
        schema_version=version,
    )


def encode_export(export: ProgramExport) -> dict:
    out: dict = {
        "name": export.name,
        "schema_version": export.schema_version,
        "functions": [],
        "imports": [],
        "call_edges": [],
    }
    for f in export.functions:
        fo: dict = {
            "id": f.id,
            "name": f.name,
            "params": [{"name": n, "type": t} for n, t in f.params],
        }
        if f.body_text is not None:
            fo["body"] = f.body_text
        if f.entry_address is not None:
            fo["entry_address"] = f.entry_address
        out["functions"].append(fo)
    for imp in export.imports:
        io: dict = {"name": imp.name, "kind": imp.kind}
        if imp.body_text is not None:
            io["body"] = imp.body_text
        out["imports"].append(io)
    for e in export.call_edges:
        out["call_edges"].append({"caller": e.caller, "callee": e.callee, "line": e.line})
    return out


# ---------------------------------------------------------------------------
# analysis results

@dataclass(frozen=True)
class VulnerableDestination:
    """A sink call site with the argument expressions that need a taint check."""

    function_id: str
    site_line: int
    sink_name: str
    args: tuple[str, ...]

    def key(self) -> tuple:
        return (self.function_id, self.site_line, self.sink_name, self.args)

    def __str__(self) -> str:
        return f"({self.site_line}; {self.sink_name}; {', '.join(self.args)})"


@dataclass(frozen=True)
class SiteBinding:
    site_line: int
    bindings: tuple[tuple[str, str], ...]  # (callee param, caller argument text)


@dataclass(frozen=True)
class ChainHop:
    caller: str
    callee: str
    sites: tuple[SiteBinding, ...]


@dataclass(frozen=True)
class CallChain:
    """Functions [f1..fn] where each calls the next and fn houses the VD.

    ``reach`` records, per function, the identifiers backward-reachable from
    the VD-relevant seeds while the chain was being built (alias-closed).
    """

    funcs: tuple[str, ...]
    vd: VulnerableDestination
    hops: tuple[ChainHop, ...] = ()
    reach: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self) -> None:
        if not self.funcs:
            raise ValueError("a call chain needs at least one function")
        if self.funcs[-1] != self.vd.function_id:
            raise ValueError("chain must end at the VD's function")
        if len(self.hops) != len(self.funcs) - 1:
            raise ValueError("need exactly one hop record per adjacent pair")

    def reach_of(self, fid: str) -> frozenset[str]:
        for f, idents in self.reach:
            if f == fid:
                return frozenset(idents)
        return frozenset()

    def suffix(self, start: int) -> "CallChain":
        kept = set(self.funcs[start:])
        return CallChain(
            funcs=self.funcs[start:],
            vd=self.vd,
            hops=self.hops[start:],
            reach=tuple((f, r) for f, r in self.reach if f in kept),
        )


def chain_is_adjacent(chain: CallChain, edges) -> bool:
    """True iff every consecutive pair of chain functions is a call edge.

    ``edges`` is any iterable of objects with caller/callee attributes
    (CallEdgeDecl works, and so do call-graph edges).
    """
    pairs = {(e.caller, e.callee) for e in edges}
    return all((a, b) in pairs for a, b in zip(chain.funcs, chain.funcs[1:]))


@dataclass(frozen=True)
class SourceCall:
    function_id: str
    site_line: int
    spec: FuncSpec
    tainted_args: tuple[str, ...]


@dataclass(frozen=True)
class DangerousFlow:
    chain: CallChain
    source_calls: tuple[SourceCall, ...]

    def __post_init__(self) -> None:
        if not self.source_calls:
            raise ValueError("a dangerous flow needs at least one source call")
        head = self.chain.funcs[0]
        if not any(sc.function_id == head for sc in self.source_calls):
            raise ValueError("first chain element must contain a source call")

    @property
    def funcs(self) -> tuple[str, ...]:
        return self.chain.funcs

    @property
    def vd(self) -> VulnerableDestination:
        return self.chain.vd

    def sources_in(self, fid: str) -> tuple[SourceCall, ...]:
        return tuple(sc for sc in self.source_calls if sc.function_id == fid)


START = "start"
MIDDLE = "middle"
END = "end"


@dataclass(frozen=True)
class Prompt:
    kind: str  # START | MIDDLE | END
    text: str


@dataclass(frozen=True)
class PromptSequence:
    df: DangerousFlow
    prompts: tuple[Prompt, ...]

    def __post_init__(self) -> None:
        kinds = [p.kind for p in self.prompts]
        n = len(self.df.funcs)
        expected = [START] + [MIDDLE] * (n - 1) + [END]
        if kinds != expected:
            raise ValueError(f"bad prompt kinds {kinds} for a chain of {n}")


@dataclass(frozen=True)
class ModelParams:
    model: str
    temperature: float
    timestamp: str


@dataclass(frozen=True)
class Verdict:
    df_id: str
    vulnerable: str  # "yes" | "no" | "indeterminate"
    cwe_tags: tuple[str, ...]
    transcript: tuple[tuple[str, str], ...]  # ordered (role, content)
    model_params: ModelParams
    note: str = ""
    retries: int = 0

    def __post_init__(self) -> None:
        if self.vulnerable not in ("yes", "no", "indeterminate"):
            raise ValueError(f"bad verdict flag {self.vulnerable!r}")
        if self.cwe_tags and self.vulnerable != "yes":
            raise ValueError("CWE tags imply a positive verdict")
