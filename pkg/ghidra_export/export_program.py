# Headless decompiler export: walks the loaded program and writes the
# schema_version-1 JSON consumed by the taintslice pipeline.
#
# Run inside Ghidra (Ghidrathon, after auto-analysis):
#   analyzeHeadless <proj_dir> <proj> -import <binary> -postScript export_program.py <out.json>
#
# The emitted body text is this script's own pretty-printed rendering of the
# decompiler output, so call-edge line numbers always index into body lines.
# Everything that talks to the Ghidra API lives in GhidraApi; the assembly
# logic below it is plain data-in/data-out and is what the tests exercise.

from __future__ import annotations

import json

SCHEMA_VERSION = 1
DECOMPILE_TIMEOUT_S = 60


class DecompiledFunction:
    """One function as the decompiler sees it.

    body_lines[0] is the signature line; ``calls`` holds (callee name,
    1-based line into body_lines) pairs for every call operation.
    """

    def __init__(self, name, entry, params, body_lines, calls):
        self.name = name
        self.entry = entry
        self.params = list(params)
        self.body_lines = list(body_lines)
        self.calls = list(calls)


class FailedFunction:
    """Decompilation failed; only the identity survives."""

    def __init__(self, name, entry, reason):
        self.name = name
        self.entry = entry
        self.reason = reason


class GhidraApi:
    """Thin seam over the Ghidra scripting API (constructed only in Ghidra)."""

    def __init__(self, program, monitor=None):
        from ghidra.app.decompiler import DecompInterface
        from ghidra.util.task import ConsoleTaskMonitor

        self.program = program
        self.monitor = monitor or ConsoleTaskMonitor()
        self._decomp = DecompInterface()
        self._decomp.openProgram(program)

    def program_name(self):
        return self.program.getName()

    def internal_functions(self):
        return [f for f in self.program.getFunctionManager().getFunctions(True)
                if not f.isExternal() and not f.isThunk()]

    def external_functions(self):
        # dynamic imports: external symbols keep their names in the table
        out = []
        seen = set()
        it = self.program.getFunctionManager().getExternalFunctions()
        while it.hasNext():
            name = it.next().getName()
            if name not in seen:
                seen.add(name)
                out.append((name, "dynamic"))
        return out

    def decompile(self, func):
        from ghidra.app.decompiler import PrettyPrinter
        from ghidra.program.model.pcode import PcodeOp

        res = self._decomp.decompileFunction(func, DECOMPILE_TIMEOUT_S, self.monitor)
        entry = "0x" + func.getEntryPoint().toString()
        if res is None or not res.decompileCompleted():
            reason = res.getErrorMessage() if res is not None else "no result"
            return FailedFunction(func.getName(), entry, reason)

        high = res.getHighFunction()
        params = []
        if high is not None:
            proto = high.getFunctionPrototype()
            for i in range(proto.getNumParams()):
                p = proto.getParam(i)
                params.append((p.getName(), p.getDataType().getDisplayName()))

        printer = PrettyPrinter(func, res.getCCodeMarkup(), None)
        body_lines = []
        calls = []
        for line in printer.getLines():
            text = "".join(tok.getText() for tok in line.getAllTokens())
            body_lines.append(text.rstrip())
            lineno = line.getLineNumber()
            for tok in line.getAllTokens():
                op = tok.getPcodeOp()
                if op is None or op.getOpcode() != PcodeOp.CALL:
                    continue
                callee = self._callee_name(op)
                if callee and (callee, lineno) not in calls:
                    calls.append((callee, lineno))
        return DecompiledFunction(func.getName(), entry, params, body_lines, calls)

    def _callee_name(self, op):
        addr = op.getInput(0).getAddress()
        func = self.program.getFunctionManager().getFunctionAt(addr)
        if func is not None:
            thunked = func.getThunkedFunction(True) if func.isThunk() else None
            return (thunked or func).getName()
        sym = self.program.getSymbolTable().getPrimarySymbol(addr)
        return sym.getName() if sym is not None else None


# ---------------------------------------------------------------------------
# export assembly (pure; tested against a fake api)

def unique_ids(decompiled):
    """Function ids: the name, disambiguated with the entry address when a
    stripped binary reuses names."""
    counts = {}
    for d in decompiled:
        counts[d.name] = counts.get(d.name, 0) + 1
    ids = []
    for d in decompiled:
        ids.append(d.name if counts[d.name] == 1 else f"{d.name}_{d.entry}")
    return ids


def build_export(api):
    """(export dict, diagnostics list) for the program behind ``api``."""
    decompiled = [api.decompile(f) for f in api.internal_functions()]
    ids = unique_ids(decompiled)
    diagnostics = []

    functions = []
    call_edges = []
    for fid, d in zip(ids, decompiled):
        record = {"id": fid, "name": d.name, "params": [], "entry_address": d.entry}
        if isinstance(d, FailedFunction):
            diagnostics.append({"severity": "warning", "location": fid,
                                "message": f"decompilation failed: {d.reason}"})
            functions.append(record)
            continue
        record["params"] = [{"name": n, "type": t} for n, t in d.params]
        record["body"] = "\n".join(d.body_lines)
        functions.append(record)
        for callee, line in d.calls:
            call_edges.append({"caller": fid, "callee": callee, "line": line})

    imports = [{"name": name, "kind": kind}
               for name, kind in sorted(api.external_functions())]

    export = {
        "name": api.program_name(),
        "schema_version": SCHEMA_VERSION,
        "functions": functions,
        "imports": imports,
        "call_edges": call_edges,
    }
    return export, diagnostics


def write_export(export, diagnostics, out_path):
    with open(out_path, "w") as fh:
        json.dump(export, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if diagnostics:
        diag_path = out_path + ".diagnostics.json"
        with open(diag_path, "w") as fh:
            json.dump(diagnostics, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _in_ghidra():
    try:
        currentProgram  # noqa: F821 - injected by the script environment
        return True
    except NameError:
        return False


def run_script():
    args = list(getScriptArgs())  # noqa: F821 - injected
    out_path = args[0] if args else "export.json"
    program = currentProgram() if callable(currentProgram) else currentProgram  # noqa: F821
    api = GhidraApi(program)
    export, diagnostics = build_export(api)
    write_export(export, diagnostics, out_path)
    print("exported %d functions, %d imports, %d call edges -> %s" % (
        len(export["functions"]), len(export["imports"]),
        len(export["call_edges"]), out_path))
    for d in diagnostics:
        print("warning: %s: %s" % (d["location"], d["message"]))


# Ghidrathon runs scripts with the flat-API names injected rather than as
# __main__, so gate on the environment, not the module name.
if _in_ghidra():
    run_script()
