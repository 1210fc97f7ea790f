"""Vulnerable-destination location and backward interprocedural slicing."""

from __future__ import annotations

from . import pseudoc
from .dataflow import BindingError, EffectTable, bind_arguments, seed_idents
from .ingest import CallGraph, ProgramIndex
from .model import (
    CallChain, ChainHop, Diagnostic, FuncSpec, ProgramExport, SiteBinding,
    VulnerableDestination, WARNING,
)

DEFAULT_DEPTH_LIMIT = 50


def locate_vds(export: ProgramExport, graph: CallGraph, sinks: list[FuncSpec],
               index: ProgramIndex | None = None,
               diags: list[Diagnostic] | None = None) -> list[VulnerableDestination]:
    """One VD per sink call site whose selected arguments are not all
    literal constants (constants need no check; outer casts are peeled
    when the argument text is recorded)."""
    if index is None:
        index = ProgramIndex(export)
    out: list[VulnerableDestination] = []
    seen: set[tuple] = set()
    for f in export.functions:
        ir = index.ir(f.id)
        if ir is None:
            continue
        for spec in sinks:
            if spec.role != "sink":
                continue
            for line, args in pseudoc.call_sites(ir, spec.name):
                kept = []
                for _idx, arg in spec.selector.select(list(args)):
                    if pseudoc.is_literal(arg):
                        continue
                    kept.append(pseudoc.expr_text(pseudoc.strip_casts(arg)))
                if not kept:
                    continue
                vd = VulnerableDestination(
                    function_id=f.id, site_line=line,
                    sink_name=spec.name, args=tuple(kept))
                if vd.key() not in seen:
                    seen.add(vd.key())
                    out.append(vd)
    out.sort(key=lambda v: v.key())
    return out


def backward_slice(export: ProgramExport, graph: CallGraph,
                   vd: VulnerableDestination,
                   depth_limit: int = DEFAULT_DEPTH_LIMIT,
                   index: ProgramIndex | None = None,
                   effects: EffectTable | None = None,
                   diags: list[Diagnostic] | None = None) -> list[CallChain]:
    """Depth-first backward traversal from the VD's function.

    A path stops extending when the current seeds no longer depend on the
    function's parameters, there is no caller, the chain is depth_limit
    long, or the next caller already sits on the chain (cycle cut).  Every
    maximal path yields one chain.
    """
    if index is None:
        index = ProgramIndex(export, effects=effects)
    if diags is None:
        diags = []

    vd_fn = index.function(vd.function_id)
    if vd_fn is None:
        raise ValueError(f"VD names unknown function {vd.function_id!r}")
    ir = index.ir(vd.function_id)
    if ir is None:
        diags.append(Diagnostic(WARNING, vd.function_id,
                                "VD function is unparseable, no chains"))
        return []

    seeds = _vd_seeds(ir, vd)
    chains: list[CallChain] = []
    emitted: set[tuple[str, ...]] = set()

    def emit(funcs, hops, reach) -> None:
        key = tuple(funcs)
        if key in emitted:
            return
        emitted.add(key)
        chains.append(CallChain(
            funcs=key, vd=vd, hops=tuple(hops),
            reach=tuple((f, tuple(sorted(r))) for f, r in reach)))

    def extend(funcs: list[str], hops: list[ChainHop],
               reach: list[tuple[str, frozenset[str]]],
               cur_seeds: frozenset[str]) -> None:
        fid = funcs[0]
        dep = index.deps(fid)
        if dep is None:
            emit(funcs, hops, reach)
            return
        reach_here = dep.backward_closure(cur_seeds)
        reach = [(fid, reach_here)] + reach
        params = dep.depends_on_params(cur_seeds)
        if not params or len(funcs) >= depth_limit:
            emit(funcs, hops, reach)
            return

        callers = _internal_callers(graph, fid, index)
        if not callers:
            emit(funcs, hops, reach)
            return

        for caller_id in sorted(callers):
            if caller_id in funcs:
                emit(funcs, hops, reach)  # cycle cut ends this path
                continue
            caller_ir = index.ir(caller_id)
            if caller_ir is None:
                diags.append(Diagnostic(
                    WARNING, caller_id,
                    f"unparseable caller truncates a chain to {vd.function_id}"))
                emit(funcs, hops, reach)
                continue
            sites = sorted(set(callers[caller_id]))
            site_bindings = []
            new_seeds: set[str] = set()
            callee_params = index.params_of(fid)
            for line in sites:
                try:
                    bound = _bind(caller_ir, line, callee_params, fid, index)
                except BindingError as exc:
                    diags.append(Diagnostic(WARNING, f"{caller_id}:{line}", str(exc)))
                    continue
                pairs = []
                for pname in sorted(params):
                    arg = bound.get(pname)
                    if arg is None:
                        continue
                    pairs.append((pname, pseudoc.expr_text(arg)))
                    new_seeds |= seed_idents(arg)
                site_bindings.append(SiteBinding(site_line=line, bindings=tuple(pairs)))
            if not site_bindings:
                emit(funcs, hops, reach)
                continue
            hop = ChainHop(caller=caller_id, callee=fid, sites=tuple(site_bindings))
            extend([caller_id] + funcs, [hop] + hops, list(reach), frozenset(new_seeds))

    extend([vd.function_id], [], [], seeds)
    chains.sort(key=lambda c: c.funcs)
    return chains


def _vd_seeds(ir: pseudoc.FunctionIR, vd: VulnerableDestination) -> frozenset[str]:
    """Seed identifiers of the VD: the reads of its recorded arguments at
    the actual call site."""
    seeds: set[str] = set()
    for line, args in pseudoc.call_sites(ir, vd.sink_name):
        if line != vd.site_line:
            continue
        for arg in args:
            text = pseudoc.expr_text(pseudoc.strip_casts(arg))
            if text in vd.args:
                seeds |= seed_idents(arg)
    return frozenset(seeds)


def _internal_callers(graph: CallGraph, fid: str,
                      index: ProgramIndex) -> dict[str, list[int]]:
    callers: dict[str, list[int]] = {}
    for caller, line in graph.callers_of(fid):
        if index.function(caller) is None:
            continue
        callers.setdefault(caller, []).append(line)
    return callers


def _bind(caller_ir, line, callee_params, callee_id, index):
    f = index.function(callee_id)
    callee_name = f.name if f is not None else callee_id
    return bind_arguments(caller_ir, line, callee_params, callee=callee_name)
