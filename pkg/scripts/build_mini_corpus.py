#!/usr/bin/env python3
"""Regenerate the labeled mini corpus under tests/fixtures/corpus/.

Twenty single-binary subjects, each planting one known source-to-sink
pattern (chain lengths 1 to 4, five source kinds, three sink kinds).
Subject 20 routes the tainted data through a function-pointer call on
purpose: indirect calls terminate slicing, so its flow is expected to be
missed.  Output is deterministic; run it after changing the templates.
"""

from __future__ import annotations

import json
from pathlib import Path

CORPUS_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "corpus"

SOURCE_CALLS = {
    "fgets": "fgets(buf, 63, stdin);",
    "recv": "recv(sock, buf, 63, 0);",
    "fscanf": 'fscanf(stdin, "%63s", buf);',
    "read": "read(0, buf, 63);",
}

SINKS = {
    "system": ("CWE-78", "system({arg});"),
    "printf": ("CWE-134", "printf({arg});"),
    "strcpy": ("CWE-120", "strcpy(out, {arg});"),
}

IMPORTS = ["fgets", "recv", "fscanf", "read", "getenv",
           "system", "printf", "strcpy", "sprintf", "snprintf"]


def fn(fid, body, params=()):
    return {"id": fid, "name": fid,
            "params": [{"name": n, "type": t} for n, t in params],
            "body": body}


def _sink_lines(sink, arg):
    lines = []
    if sink == "strcpy":
        lines.append("  char out [32];")
    lines.append("  " + SINKS[sink][1].format(arg=arg))
    return lines


def one_function(source, sink):
    lines = ["void top(void) {", "  char buf [64];"]
    lines += _sink_lines(sink, "buf")[:-1]  # the out decl, when present
    lines += ["  " + SOURCE_CALLS[source], _sink_lines(sink, "buf")[-1],
              "  return;", "}"]
    return [fn("top", "\n".join(lines))], ["top"]


def two_functions(source, sink):
    top = "\n".join([
        "void top(void) {",
        "  char buf [64];",
        "  " + SOURCE_CALLS[source],
        "  worker(buf);",
        "  return;",
        "}"])
    worker_lines = ["void worker(char *data) {", "  char msg [96];"]
    worker_lines += _sink_lines(sink, "msg")[:-1]
    worker_lines += ['  sprintf(msg, "%s", data);', _sink_lines(sink, "msg")[-1],
                     "  return;", "}"]
    return [fn("top", top), fn("worker", "\n".join(worker_lines),
                               [("data", "char *")])], ["top", "worker"]


def env_two_functions(sink):
    top = "\n".join([
        "void top(void) {",
        "  char *val;",
        '  val = getenv("TARGET_PATH");',
        "  launch(val);",
        "  return;",
        "}"])
    launch_lines = ["void launch(char *path) {", "  char cmd [128];"]
    launch_lines += _sink_lines(sink, "cmd")[:-1]
    launch_lines += ['  sprintf(cmd, "ls %s", path);', _sink_lines(sink, "cmd")[-1],
                     "  return;", "}"]
    return [fn("top", top), fn("launch", "\n".join(launch_lines),
                               [("path", "char *")])], ["top", "launch"]


def three_functions(source, sink):
    top = "\n".join([
        "void top(void) {",
        "  char buf [64];",
        "  " + SOURCE_CALLS[source],
        "  mid(buf);",
        "  return;",
        "}"])
    mid = "\n".join([
        "void mid(char *data) {",
        "  char msg [128];",
        '  sprintf(msg, "cmd %s", data);',
        "  bottom(msg);",
        "  return;",
        "}"])
    bottom_lines = ["void bottom(char *carried) {"]
    bottom_lines += _sink_lines(sink, "carried") + ["  return;", "}"]
    return [fn("top", top), fn("mid", mid, [("data", "char *")]),
            fn("bottom", "\n".join(bottom_lines), [("carried", "char *")])], \
        ["top", "mid", "bottom"]


def four_functions(source, sink):
    top = "\n".join([
        "void top(void) {",
        "  char buf [64];",
        "  " + SOURCE_CALLS[source],
        "  stage3(buf);",
        "  return;",
        "}"])
    stage3 = "\n".join([
        "void stage3(char *a) {",
        "  char b [96];",
        "  strcpy(b, a);",
        "  stage2(b);",
        "  return;",
        "}"])
    stage2 = "\n".join([
        "void stage2(char *c) {",
        "  char d [112];",
        '  snprintf(d, 112, "%s!", c);',
        "  stage1(d);",
        "  return;",
        "}"])
    stage1_lines = ["void stage1(char *m) {"]
    stage1_lines += _sink_lines(sink, "m") + ["  return;", "}"]
    return [fn("top", top), fn("stage3", stage3, [("a", "char *")]),
            fn("stage2", stage2, [("c", "char *")]),
            fn("stage1", "\n".join(stage1_lines), [("m", "char *")])], \
        ["top", "stage3", "stage2", "stage1"]


def indirect_call(source, sink):
    deliver_lines = ["void deliver(char *x) {"]
    deliver_lines += _sink_lines(sink, "x") + ["  return;", "}"]
    top = "\n".join([
        "void top(void) {",
        "  char buf [64];",
        "  " + SOURCE_CALLS[source],
        "  handler = deliver;",
        "  (*handler)(buf);",
        "  return;",
        "}"])
    return [fn("top", top), fn("deliver", "\n".join(deliver_lines),
                               [("x", "char *")])], ["top", "deliver"]


SUBJECTS = [
    ("subject_01", one_function, "fgets", "system"),
    ("subject_02", one_function, "recv", "printf"),
    ("subject_03", one_function, "fscanf", "strcpy"),
    ("subject_04", one_function, "read", "system"),
    ("subject_05", one_function, "fgets", "printf"),
    ("subject_06", two_functions, "recv", "system"),
    ("subject_07", two_functions, "fgets", "strcpy"),
    ("subject_08", two_functions, "fscanf", "printf"),
    ("subject_09", two_functions, "read", "system"),
    ("subject_10", env_two_functions, None, "system"),
    ("subject_11", three_functions, "fgets", "system"),
    ("subject_12", three_functions, "recv", "printf"),
    ("subject_13", three_functions, "fscanf", "system"),
    ("subject_14", three_functions, "read", "strcpy"),
    ("subject_15", four_functions, "fgets", "printf"),
    ("subject_16", four_functions, "recv", "system"),
    ("subject_17", four_functions, "fscanf", "printf"),
    ("subject_18", four_functions, "read", "system"),
    ("subject_19", env_two_functions, None, "system"),
    ("subject_20", indirect_call, "fgets", "system"),
]


def build() -> None:
    CORPUS_DIR.mkdir(parents=True, exist_ok=True)
    labels = {}
    planted = {}
    for subject, template, source, sink in SUBJECTS:
        if template is env_two_functions:
            functions, path = template(sink)
            source_name = "getenv"
        else:
            functions, path = template(source, sink)
            source_name = source
        export = {
            "name": subject,
            "schema_version": 1,
            "functions": functions,
            "imports": [{"name": n, "kind": "dynamic"} for n in IMPORTS],
            "call_edges": [],
        }
        out = CORPUS_DIR / f"{subject}.json"
        out.write_text(json.dumps(export, indent=2, sort_keys=True) + "\n",
                       encoding="utf-8")
        labels[subject] = {"cwe": SINKS[sink][0], "vulnerable": True}
        planted[subject] = {
            "path": path,
            "source": source_name,
            "sink": sink,
            "extractable": template is not indirect_call,
        }

    (CORPUS_DIR / "labels.json").write_text(
        json.dumps(labels, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (CORPUS_DIR / "planted.json").write_text(
        json.dumps(planted, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (CORPUS_DIR / "sinks.txt").write_text(
        "system; 1\nprintf; >0\nstrcpy; 2\n", encoding="utf-8")
    (CORPUS_DIR / "sources.txt").write_text(
        "fgets; 1\nrecv; 2\nfscanf; >2\nread; 2\ngetenv; 0\n", encoding="utf-8")
    print(f"wrote {len(SUBJECTS)} subjects to {CORPUS_DIR}")


if __name__ == "__main__":
    build()
