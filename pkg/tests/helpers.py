"""Shared helpers for the test suite."""

from pathlib import Path

from taintslice import ingest
from taintslice.dataflow import EffectTable
from taintslice.ingest import ProgramIndex

FIXTURES = Path(__file__).parent / "fixtures"


def analysis_for(export, sources):
    """(index, graph) pair with source effects folded in."""
    effects = EffectTable.builtin().with_sources(sources)
    index = ProgramIndex(export, effects=effects)
    graph = ingest.build_call_graph(export, index=index)
    return index, graph


def minimal_export(name="prog", functions=(), imports=(), call_edges=()):
    return {
        "name": name,
        "schema_version": 1,
        "functions": list(functions),
        "imports": list(imports),
        "call_edges": list(call_edges),
    }
