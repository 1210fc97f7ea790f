"""LLM-assisted source/sink identification with corrections and a cache.

Classification results survive across binaries that share libraries, so the
cache file is the unit of reuse; a warm cache never touches the backend.
Model replies are noisy about out-parameters, hence the user-editable
correction table (seeded with the fscanf fix: external input lands in the
pointer arguments after the format string).
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, replace

from .model import FuncSpec, ParamSelector
from .promptchat import OversizeError, TransportError, send_with_retry

SINK_PROMPT = (
    "As a program analyst, is it possible to use a call {subject} as a sink "
    "when performing taint analysis? If so which parameters need to be "
    "checked for taint. Please answer yes or no without additional "
    "explanation. If yes, please indicate the corresponding parameters. "
    "For example, the system function can be used as a sink, and the first "
    "parameter needs to be checked as (system; 1)."
)

SOURCE_PROMPT = (
    "As a program analyst, is it possible to use a call to {subject} as a "
    "starting point (source) for taint analysis? If the function can be "
    "used as a taint source, which parameter in the call stores the "
    "external input data. Please answer yes or no without additional "
    "explanation. If yes, please indicate the corresponding parameters. "
    "For example, the recv function call can be used as a taint source, and "
    "the second parameter as a buffer stores the input data as (recv; 2)."
)

POSITIVE = "positive"
NEGATIVE = "negative"
INDETERMINATE = "indeterminate"

DEFAULT_CORRECTIONS: dict[tuple[str, str], str] = {
    ("fscanf", "source"): ">2",
}


class OracleError(Exception):
    pass


class ReplyParseError(Exception):
    def __init__(self, message: str, raw: str) -> None:
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class OracleEntry:
    name: str
    role: str
    status: str  # POSITIVE | NEGATIVE | INDETERMINATE
    selector: ParamSelector | None
    model: str
    timestamp: str
    raw: str = ""

    @property
    def spec(self) -> FuncSpec | None:
        if self.status != POSITIVE or self.selector is None:
            return None
        return FuncSpec(name=self.name, role=self.role, selector=self.selector)

    def to_json(self) -> dict:
        sel: str
        if self.status == POSITIVE and self.selector is not None:
            sel = self.selector.render()
        else:
            sel = self.status
        out = {"name": self.name, "role": self.role, "selector": sel,
               "model": self.model, "timestamp": self.timestamp}
        if self.raw:
            out["raw"] = self.raw
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "OracleEntry":
        sel_text = obj["selector"]
        if sel_text in (NEGATIVE, INDETERMINATE):
            status, selector = sel_text, None
        else:
            status, selector = POSITIVE, ParamSelector.parse(sel_text)
        return cls(name=obj["name"], role=obj["role"], status=status,
                   selector=selector, model=obj.get("model", ""),
                   timestamp=obj.get("timestamp", ""), raw=obj.get("raw", ""))


class OracleCache:
    """Thread-safe (name, role) -> OracleEntry store with JSON persistence."""

    def __init__(self, path=None):
        self.path = path
        self._entries: dict[tuple[str, str], OracleEntry] = {}
        self._lock = threading.Lock()
        self._inflight: dict[tuple[str, str], threading.Event] = {}
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    rows = json.load(fh)
            except FileNotFoundError:
                rows = []
            for row in rows:
                entry = OracleEntry.from_json(row)
                self._entries[(entry.name, entry.role)] = entry

    def get(self, name: str, role: str) -> OracleEntry | None:
        with self._lock:
            return self._entries.get((name, role))

    def put(self, entry: OracleEntry) -> None:
        with self._lock:
            self._entries[(entry.name, entry.role)] = entry

    def entries(self) -> list[OracleEntry]:
        with self._lock:
            return [self._entries[k] for k in sorted(self._entries)]

    def save(self, path=None) -> None:
        path = path or self.path
        if path is None:
            raise OracleError("no cache path configured")
        rows = [e.to_json() for e in self.entries()]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# reply parsing

_PAIR_RE = re.compile(r"\(\s*([A-Za-z_][\w.$@]*)\s*;\s*([^()]*?)\s*\)")
_HEAD_RE = re.compile(r"\b(yes|no)\b", re.I)


def parse_spec_reply(text: str, role: str) -> list[tuple[str, ParamSelector]] | None:
    """Extract (name, selector) pairs from a classification reply.

    Returns None for a negative answer.  Raises ReplyParseError when the
    yes/no head is missing or a positive answer carries no usable pattern.
    """
    head = _HEAD_RE.search(text)
    if head is None:
        raise ReplyParseError("no yes/no head in reply", text)
    if head.group(1).lower() == "no":
        return None
    pairs: list[tuple[str, ParamSelector]] = []
    for m in _PAIR_RE.finditer(text):
        name, sel_text = m.group(1), m.group(2)
        try:
            sel = ParamSelector.parse(sel_text)
        except ValueError:
            continue
        pairs.append((name, sel))
    if not pairs:
        raise ReplyParseError("positive reply without a (name; parameters) pattern", text)
    return pairs


def _merge_pairs(pairs: list[tuple[str, ParamSelector]],
                 name: str, is_static: bool) -> ParamSelector | None:
    """Combine the parsed selectors that talk about ``name``.

    Static-library queries show a body instead of a name, so the reply may
    call the function anything; take whatever single subject it used.
    """
    mine = [sel for n, sel in pairs if n == name]
    if not mine and is_static:
        subjects = {n for n, _ in pairs}
        if len(subjects) == 1:
            mine = [sel for _n, sel in pairs]
    if not mine:
        return None
    merged = mine[0]
    for sel in mine[1:]:
        merged = merged.union(sel)
    return merged


# ---------------------------------------------------------------------------
# classification

def render_prompt(name: str, role: str, body_text: str | None = None) -> str:
    subject = body_text if body_text else name
    template = SINK_PROMPT if role == "sink" else SOURCE_PROMPT
    return template.format(subject=subject)


def apply_corrections(entry: OracleEntry, corrections=None) -> OracleEntry:
    table = DEFAULT_CORRECTIONS if corrections is None else corrections
    fix = table.get((entry.name, entry.role))
    if fix is None:
        return entry
    return replace(entry, status=POSITIVE, selector=ParamSelector.parse(fix))


def load_corrections(path) -> dict[tuple[str, str], str]:
    """User corrections file: [{"name", "role", "selector"}, ...];
    merged over the built-in defaults."""
    with open(path, "r", encoding="utf-8") as fh:
        rows = json.load(fh)
    table = dict(DEFAULT_CORRECTIONS)
    for row in rows:
        table[(row["name"], row["role"])] = row["selector"]
    return table


def classify(name: str, role: str, backend=None, body_text: str | None = None,
             cache: OracleCache | None = None, corrections=None) -> OracleEntry:
    """Classify one external function as source/sink (or not).

    Cache hits bypass the backend entirely; at most one in-flight backend
    request runs per (name, role).  Backend failure after retries and
    unparseable replies both produce indeterminate entries, never negatives.
    """
    if cache is not None:
        hit = cache.get(name, role)
        if hit is not None:
            return hit

    if cache is not None:
        waiter = None
        with cache._lock:
            hit = cache._entries.get((name, role))
            if hit is not None:
                return hit
            waiter = cache._inflight.get((name, role))
            if waiter is None:
                cache._inflight[(name, role)] = threading.Event()
        if waiter is not None:
            waiter.wait()
            hit = cache.get(name, role)
            if hit is not None:
                return hit

    try:
        entry = _classify_uncached(name, role, backend, body_text, corrections)
        if cache is not None:
            cache.put(entry)
        return entry
    finally:
        if cache is not None:
            with cache._lock:
                event = cache._inflight.pop((name, role), None)
            if event is not None:
                event.set()


def _classify_uncached(name, role, backend, body_text, corrections) -> OracleEntry:
    if backend is None:
        raise OracleError(f"no backend configured and ({name}; {role}) not cached")
    prompt = render_prompt(name, role, body_text)
    conv = backend.start()
    try:
        reply, _retries = send_with_retry(conv, backend, [("user", prompt)])
    except (TransportError, OversizeError) as exc:
        return OracleEntry(name=name, role=role, status=INDETERMINATE,
                           selector=None, model=backend.model,
                           timestamp=backend.timestamp(), raw=str(exc))
    try:
        pairs = parse_spec_reply(reply, role)
    except ReplyParseError:
        return apply_corrections(OracleEntry(
            name=name, role=role, status=INDETERMINATE, selector=None,
            model=backend.model, timestamp=backend.timestamp(), raw=reply),
            corrections)
    if pairs is None:
        entry = OracleEntry(name=name, role=role, status=NEGATIVE, selector=None,
                            model=backend.model, timestamp=backend.timestamp())
        return apply_corrections(entry, corrections)
    merged = _merge_pairs(pairs, name, is_static=body_text is not None)
    if merged is None:
        return apply_corrections(OracleEntry(
            name=name, role=role, status=INDETERMINATE, selector=None,
            model=backend.model, timestamp=backend.timestamp(), raw=reply),
            corrections)
    entry = OracleEntry(name=name, role=role, status=POSITIVE, selector=merged,
                        model=backend.model, timestamp=backend.timestamp())
    return apply_corrections(entry, corrections)


def classify_imports(export, role: str, backend=None,
                     cache: OracleCache | None = None,
                     corrections=None) -> list[FuncSpec]:
    """Run classification over the whole import table; positive entries come
    back as specs, everything else is only visible through the cache."""
    specs: list[FuncSpec] = []
    for imp in export.imports:
        body = imp.body_text if imp.kind == "static" else None
        entry = classify(imp.name, role, backend=backend, body_text=body,
                         cache=cache, corrections=corrections)
        if entry.spec is not None:
            specs.append(entry.spec)
    return specs


# ---------------------------------------------------------------------------
# spec list files (bypass mode)

def load_spec_file(path, role: str) -> list[FuncSpec]:
    """Plain-text spec list, one "name; selector" per line, '#' comments."""
    specs = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            line = line.strip("()")
            if ";" not in line:
                raise OracleError(f"bad spec line {raw!r} (want 'name; parameters')")
            name, sel_text = line.split(";", 1)
            specs.append(FuncSpec(name=name.strip(), role=role,
                                  selector=ParamSelector.parse(sel_text)))
    return specs
