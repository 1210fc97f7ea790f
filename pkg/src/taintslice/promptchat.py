"""Prompt-sequence construction and the conversation driver.

One dangerous flow maps to one conversation: a start prompt for the
function hosting the source, one middle prompt per subsequent chain
function (with a new-taint-source note only when that function itself
calls a source), and a closing prompt asking for the CWE-classified
verdict.  Backends are pluggable; the mock backend replays a scripted
transcript and makes the whole pipeline bit-deterministic.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time

from .model import (
    DangerousFlow, END, MIDDLE, ModelParams, Prompt, PromptSequence,
    ProgramExport, START, SourceCall, Verdict,
)

START_TEMPLATE = (
    "As a program analyst, I give you snippets of C code generated by "
    "decompilation, using {function} as the taint source, and the {parameter} "
    "parameter marked as the taint label to extract the taint data flow. "
    "Pay attention to the data alias and tainted data operations. "
    "Output in the form of data flows.\n\n{code}"
)

MIDDLE_TEMPLATE = (
    "Continue to analyze function according to the above taint analysis "
    "results. Pay attention to the data alias and tainted data operations."
    "{note}\n\n{code}"
)

MIDDLE_NOTE = (
    " (Note the new taint source {function} and the {parameter} parameter "
    "marked as the taint label.)"
)

END_TEMPLATE = (
    "Based on the above taint analysis results, analyze whether the code has "
    "vulnerabilities. If there is a vulnerability, please explain what kind "
    "of vulnerability according to CWE."
)

START_ANCHOR = "marked as the taint label"
MIDDLE_ANCHOR = "Continue to analyze function"
END_ANCHOR = "according to CWE"


class PromptBuildError(Exception):
    pass


_ORDINALS = {
    1: "first", 2: "second", 3: "third", 4: "fourth", 5: "fifth", 6: "sixth",
    7: "seventh", 8: "eighth", 9: "ninth", 10: "tenth", 11: "eleventh",
    12: "twelfth",
}


def ordinal(n: int) -> str:
    if n in _ORDINALS:
        return _ORDINALS[n]
    if n % 100 in (11, 12, 13):
        return f"{n}th"
    return f"{n}{ {1: 'st', 2: 'nd', 3: 'rd'}.get(n % 10, 'th') }"


def _parameter_phrase(sc: SourceCall) -> str:
    """Ordinal words for the tainted parameter positions at this call."""
    if sc.spec.selector.is_return:
        return "return value"
    wanted = max(1, len(sc.tainted_args))
    present: list[int] = []
    i = 1
    while len(present) < wanted and i < 1000:
        if sc.spec.selector.matches(i):
            present.append(i)
        i += 1
    return " and ".join(ordinal(i) for i in present)


def build_prompt_sequence(df: DangerousFlow, export: ProgramExport) -> PromptSequence:
    bodies = {}
    for fid in df.funcs:
        f = export.function_by_id(fid)
        if f is None or f.body_text is None:
            raise PromptBuildError(f"function {fid!r} has no body to analyze")
        bodies[fid] = f.body_text

    head_sources = df.sources_in(df.funcs[0])
    if not head_sources:
        raise PromptBuildError("flow head hosts no source call")
    first = head_sources[0]
    prompts = [Prompt(START, START_TEMPLATE.format(
        function=first.spec.name,
        parameter=_parameter_phrase(first),
        code=bodies[df.funcs[0]],
    ))]
    for fid in df.funcs[1:]:
        here = df.sources_in(fid)
        if here:
            note = MIDDLE_NOTE.format(function=here[0].spec.name,
                                      parameter=_parameter_phrase(here[0]))
        else:
            note = ""
        prompts.append(Prompt(MIDDLE, MIDDLE_TEMPLATE.format(
            note=note, code=bodies[fid])))
    prompts.append(Prompt(END, END_TEMPLATE))
    return PromptSequence(df=df, prompts=tuple(prompts))


# ---------------------------------------------------------------------------
# backends

class TransportError(Exception):
    pass


class OversizeError(Exception):
    pass


EPOCH = "1970-01-01T00:00:00Z"


class MockBackend:
    """Scripted backend: every conversation replays the same reply list in
    order, so runs are reproducible regardless of concurrency.

    Script entries are reply strings or {"error": "transport"|"oversize"}
    markers; each send (including retried sends) consumes one entry.
    """

    kind = "mock"

    def __init__(self, replies=(), default_reply: str = "Acknowledged.",
                 model: str = "mock", temperature: float = 0.5,
                 retries: int = 2, backoff_s: float = 0.0):
        self.replies = list(replies)
        self.default_reply = default_reply
        self.model = model
        self.temperature = temperature
        self.retries = retries
        self.backoff_s = backoff_s

    @classmethod
    def from_script(cls, path, **kwargs) -> "MockBackend":
        """Load replies from a script file: {"replies": [...]}, or a recorded
        transcript ({"messages": [...]} or a persisted verdict file's
        {"transcript": [...]}) whose assistant turns are replayed."""
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
        if isinstance(obj, list):
            return cls(replies=obj, **kwargs)
        if "replies" in obj:
            replies = obj["replies"]
        elif "messages" in obj or "transcript" in obj:
            rows = obj.get("messages", obj.get("transcript"))
            replies = [m["content"] for m in rows if m.get("role") == "assistant"]
        else:
            raise ValueError(f"{path}: expected 'replies', 'messages' or 'transcript'")
        if "default_reply" in obj:
            kwargs.setdefault("default_reply", obj["default_reply"])
        return cls(replies=replies, **kwargs)

    def timestamp(self) -> str:
        return EPOCH

    def start(self) -> "_MockConversation":
        return _MockConversation(self)


class _MockConversation:
    def __init__(self, backend: MockBackend):
        self.backend = backend
        self._next = 0

    def send(self, messages) -> str:
        if self._next < len(self.backend.replies):
            entry = self.backend.replies[self._next]
            self._next += 1
        else:
            entry = self.backend.default_reply
        if isinstance(entry, dict):
            err = entry.get("error", "transport")
            if err == "oversize":
                raise OversizeError("scripted oversize rejection")
            raise TransportError(f"scripted {err} failure")
        return str(entry)


class _RateLimiter:
    def __init__(self, min_interval_s: float):
        self.min_interval_s = min_interval_s
        self._lock = threading.Lock()
        self._last = 0.0

    def wait(self) -> None:
        if self.min_interval_s <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._last + self.min_interval_s - now
            if delay > 0:
                time.sleep(delay)
                now = time.monotonic()
            self._last = now


_OVERSIZE_RE = re.compile(r"context.length|maximum.context|too many tokens", re.I)


class HttpBackend:
    """Chat-completion style HTTP backend.

    POSTs {"model", "temperature", "messages": [{"role", "content"}, ...]}
    to ``base_url`` and reads choices[0].message.content back.  The API key
    comes from the environment (``api_key_env``).
    """

    kind = "http"

    def __init__(self, base_url: str, model: str, temperature: float = 0.5,
                 retries: int = 2, backoff_s: float = 1.0,
                 api_key_env: str = "LLM_API_KEY", timeout_s: float = 120.0,
                 min_interval_s: float = 0.0):
        if not 0.0 <= temperature <= 1.0:
            raise ValueError("temperature must be between 0 and 1")
        self.base_url = base_url
        self.model = model
        self.temperature = temperature
        self.retries = retries
        self.backoff_s = backoff_s
        self.api_key_env = api_key_env
        self.timeout_s = timeout_s
        self._limiter = _RateLimiter(min_interval_s)

    def timestamp(self) -> str:
        return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def start(self) -> "_HttpConversation":
        return _HttpConversation(self)


class _HttpConversation:
    def __init__(self, backend: HttpBackend):
        self.backend = backend

    def send(self, messages) -> str:
        import requests

        b = self.backend
        b._limiter.wait()
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(b.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": b.model,
            "temperature": b.temperature,
            "messages": [{"role": r, "content": c} for r, c in messages],
        }
        try:
            resp = requests.post(b.base_url, json=payload, headers=headers,
                                 timeout=b.timeout_s)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 400:
            body = resp.text[:2000]
            if resp.status_code == 400 and _OVERSIZE_RE.search(body):
                raise OversizeError(body)
            raise TransportError(f"HTTP {resp.status_code}: {body}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


def make_backend(kind: str, **kwargs):
    if kind == "mock":
        return MockBackend(**kwargs)
    if kind == "http":
        return HttpBackend(**kwargs)
    raise ValueError(f"unknown backend kind {kind!r}")


# ---------------------------------------------------------------------------
# conversation driver

def send_with_retry(conversation, backend, messages) -> tuple[str, int]:
    """Reply text plus how many retries it took; raises after the policy
    is exhausted."""
    attempts = 0
    while True:
        try:
            return conversation.send(messages), attempts
        except OversizeError:
            raise
        except TransportError:
            attempts += 1
            if attempts > backend.retries:
                raise
            if backend.backoff_s > 0:
                time.sleep(backend.backoff_s * attempts)


def run_conversation(ps: PromptSequence, backend, df_id: str = "df0000") -> Verdict:
    """Drive the prompts in order within one conversation and extract the
    verdict from the final reply.  Failures never raise; they come back as
    indeterminate verdicts with a note."""
    conv = backend.start()
    messages: list[tuple[str, str]] = []
    retries_total = 0
    params = ModelParams(model=backend.model, temperature=backend.temperature,
                         timestamp=backend.timestamp())

    for prompt in ps.prompts:
        messages.append(("user", prompt.text))
        try:
            reply, retries = send_with_retry(conv, backend, list(messages))
        except OversizeError:
            return Verdict(df_id=df_id, vulnerable="indeterminate", cwe_tags=(),
                           transcript=tuple(messages), model_params=params,
                           note="oversize", retries=retries_total)
        except TransportError as exc:
            return Verdict(df_id=df_id, vulnerable="indeterminate", cwe_tags=(),
                           transcript=tuple(messages), model_params=params,
                           note=f"transport failure: {exc}",
                           retries=retries_total + backend.retries)
        retries_total += retries
        messages.append(("assistant", reply))

    flag, tags = extract_verdict(messages[-1][1])
    return Verdict(df_id=df_id, vulnerable=flag, cwe_tags=tags,
                   transcript=tuple(messages), model_params=params,
                   retries=retries_total)


# ---------------------------------------------------------------------------
# verdict extraction

_CWE_RE = re.compile(r"\bCWE[-_ ]?(\d+)\b", re.I)

_NEGATION_PHRASES = (
    "no vulnerability",
    "no vulnerabilities",
    "not vulnerable",
    "no security vulnerability",
    "does not have a vulnerability",
    "does not contain",
    "doesn't contain",
    "does not introduce",
    "does not inherently introduce",
    "no exploitable",
    "is safe",
    "are safe",
    "there is no vulnerability",
    "not exploitable",
    "free of vulnerabilities",
)


def extract_verdict(final_reply: str) -> tuple[str, tuple[str, ...]]:
    """(flag, cwe_tags): CWE tokens mean yes; explicit negation phrases
    without a token mean no; anything else is indeterminate."""
    tags: list[str] = []
    for m in _CWE_RE.finditer(final_reply):
        tag = f"CWE-{int(m.group(1))}"
        if tag not in tags:
            tags.append(tag)
    if tags:
        return "yes", tuple(tags)
    lowered = final_reply.lower()
    if any(p in lowered for p in _NEGATION_PHRASES):
        return "no", ()
    return "indeterminate", ()
