"""Source matching into call chains and dangerous-flow deduplication."""

from __future__ import annotations

from . import pseudoc
from .dataflow import EffectTable, seed_idents
from .ingest import ProgramIndex
from .model import CallChain, DangerousFlow, FuncSpec, ProgramExport, SourceCall


def _source_calls_in(index: ProgramIndex, fid: str,
                     sources: list[FuncSpec]) -> list[SourceCall]:
    ir = index.ir(fid)
    if ir is None:
        return []
    out: list[SourceCall] = []
    for spec in sources:
        if spec.role != "source":
            continue
        for line, args in pseudoc.call_sites(ir, spec.name):
            if spec.selector.is_return:
                lhs = _call_lhs(ir, line, spec.name)
                if lhs is None:
                    continue
                tainted = (pseudoc.expr_text(lhs),)
            else:
                selected = [a for _i, a in spec.selector.select(list(args))]
                if not selected:
                    continue
                tainted = tuple(pseudoc.expr_text(a) for a in selected)
            out.append(SourceCall(function_id=fid, site_line=line,
                                  spec=spec, tainted_args=tainted))
    out.sort(key=lambda sc: (sc.site_line, sc.spec.name))
    return out


def _call_lhs(ir, line: int, callee: str):
    for row_line, name, _args, lhs in pseudoc.all_call_sites(ir):
        if row_line == line and name == callee:
            return lhs
    return None


def _tainted_idents(index: ProgramIndex, sc: SourceCall) -> frozenset[str]:
    ir = index.ir(sc.function_id)
    dep = index.deps(sc.function_id)
    idents: set[str] = set()
    if ir is None:
        return frozenset()
    if sc.spec.selector.is_return:
        lhs = _call_lhs(ir, sc.site_line, sc.spec.name)
        if lhs is not None:
            base = pseudoc._base_ident(lhs)
            if base:
                idents.add(base)
    else:
        for line, args in pseudoc.call_sites(ir, sc.spec.name):
            if line != sc.site_line:
                continue
            for _i, arg in sc.spec.selector.select(list(args)):
                idents |= seed_idents(arg)
    if dep is not None:
        return dep.alias_closure(idents)
    return frozenset(idents)


def match_sources(export: ProgramExport, chains: list[CallChain],
                  sources: list[FuncSpec], index: ProgramIndex | None = None,
                  effects: EffectTable | None = None) -> list[DangerousFlow]:
    """Candidate dangerous flows: per chain, the longest suffix headed by a
    function whose source-call data overlaps the chain's recorded
    backward-reachable set for that function."""
    if index is None:
        index = ProgramIndex(export, effects=effects)
    candidates: list[DangerousFlow] = []
    for chain in chains:
        overlapping: dict[int, list[SourceCall]] = {}
        for pos, fid in enumerate(chain.funcs):
            reach = chain.reach_of(fid)
            for sc in _source_calls_in(index, fid, sources):
                if _tainted_idents(index, sc) & reach:
                    overlapping.setdefault(pos, []).append(sc)
        if not overlapping:
            continue
        start = min(overlapping)  # earliest hosting function: longest suffix
        flow_chain = chain.suffix(start)
        calls = tuple(sc for pos in sorted(overlapping) if pos >= start
                      for sc in overlapping[pos])
        candidates.append(DangerousFlow(chain=flow_chain, source_calls=calls))
    return candidates


def is_subchain(a: DangerousFlow, b: DangerousFlow) -> bool:
    """a is a suffix-aligned contiguous subsequence of b ending at the same
    vulnerable destination (a shorter tail of b)."""
    if a.vd.key() != b.vd.key():
        return False
    la, lb = len(a.funcs), len(b.funcs)
    if la > lb:
        return False
    return b.funcs[lb - la:] == a.funcs


def dedup(candidates: list[DangerousFlow]) -> list[DangerousFlow]:
    """Drop flows that are subchains of other candidates (identical flows
    collapse to one); survivors come back ordered by VD then chain."""
    ordered = sorted(candidates, key=_flow_key)
    survivors: list[DangerousFlow] = []
    for i, flow in enumerate(ordered):
        dominated = False
        for j, other in enumerate(ordered):
            if i == j:
                continue
            if not is_subchain(flow, other):
                continue
            if len(flow.funcs) < len(other.funcs):
                dominated = True
                break
            # equal sequences at the same VD: keep only the first occurrence
            if flow.funcs == other.funcs and j < i:
                dominated = True
                break
        if not dominated:
            survivors.append(flow)
    return survivors


def _flow_key(flow: DangerousFlow) -> tuple:
    return (flow.vd.key(), flow.funcs)
