import pytest
from hypothesis import given, strategies as st

from taintslice.model import (
    CallChain, CallEdgeDecl, FuncSpec, FunctionRecord, ImportEntry,
    ParamSelector, ProgramExport, Verdict, ModelParams, VulnerableDestination,
    chain_is_adjacent, decode_export, encode_export, validate_export,
)


class TestParamSelector:
    def test_parse_single(self):
        sel = ParamSelector.parse("1")
        assert sel.matches(1) and not sel.matches(2)

    def test_parse_set(self):
        sel = ParamSelector.parse("2, 3")
        assert sel.matches(2) and sel.matches(3) and not sel.matches(4)

    def test_parse_open_ended(self):
        sel = ParamSelector.parse("2, 3, ...")
        assert not sel.matches(1)
        assert all(sel.matches(i) for i in (2, 3, 9))

    def test_parse_greater_than(self):
        sel = ParamSelector.parse(">2")
        assert not sel.matches(2) and sel.matches(3) and sel.matches(7)

    def test_parse_return(self):
        assert ParamSelector.parse("0").is_return

    def test_zero_index_reserved_for_return(self):
        with pytest.raises(ValueError):
            ParamSelector(indices=frozenset({0, 2}))

    def test_union_collapses_to_all_from(self):
        merged = ParamSelector.of(1).union(ParamSelector.all_from(2))
        assert merged == ParamSelector.all_from(1)

    def test_render_round_trip(self):
        for text in ("1", "1, 3", ">2", "0"):
            sel = ParamSelector.parse(text)
            assert ParamSelector.parse(sel.render()) == sel

    def test_select_is_one_based(self):
        sel = ParamSelector.of(1)
        assert sel.select(["a", "b"]) == [(1, "a")]


class TestFuncSpec:
    def test_sink_cannot_use_return_selector(self):
        with pytest.raises(ValueError):
            FuncSpec("system", "sink", ParamSelector.return_value())

    def test_str_form(self):
        assert str(FuncSpec("system", "sink", ParamSelector.of(1))) == "(system; 1)"


def _export(functions=(), imports=(), call_edges=()):
    return ProgramExport(name="prog", functions=tuple(functions),
                         imports=tuple(imports), call_edges=tuple(call_edges))


def _fn(fid, body="void f(void) { return; }", name=None):
    return FunctionRecord(id=fid, name=name or fid, params=(), body_text=body)


class TestValidateExport:
    def test_duplicate_function_ids(self):
        export = _export(functions=[_fn("f1"), _fn("f1")])
        errors = [d for d in validate_export(export) if d.is_fatal()]
        assert any("f1" in d.message for d in errors)

    def test_well_formed_export_is_clean(self):
        export = _export(
            functions=[_fn("f1"), _fn("f2")],
            call_edges=[CallEdgeDecl("f1", "f2", 1)])
        assert validate_export(export) == []

    def test_unresolved_callee_is_a_warning(self):
        export = _export(functions=[_fn("f1")],
                         call_edges=[CallEdgeDecl("f1", "frobnicate", 1)])
        diags = validate_export(export)
        assert [d.severity for d in diags] == ["warning"]
        assert "unresolved callee" in diags[0].message

    def test_unknown_caller_is_fatal(self):
        export = _export(functions=[_fn("f1")],
                         call_edges=[CallEdgeDecl("f9", "f1", 1)])
        assert any(d.is_fatal() for d in validate_export(export))

    def test_dynamic_import_with_body_is_fatal(self):
        export = _export(imports=[ImportEntry("puts", "dynamic", "void puts() {}")])
        assert any(d.is_fatal() for d in validate_export(export))


_ident = st.from_regex(r"[a-z][a-z0-9_]{0,8}", fullmatch=True)


@st.composite
def exports(draw):
    n = draw(st.integers(min_value=0, max_value=4))
    fids = [f"f{i}" for i in range(n)]
    functions = []
    for fid in fids:
        body = draw(st.sampled_from(
            [None, "void x(void) { return; }", "void x(void) { a = b; }"]))
        params = draw(st.lists(st.tuples(_ident, st.sampled_from(["int", "char *"])),
                               max_size=2))
        entry = draw(st.one_of(st.none(), st.just("0x1000")))
        functions.append(FunctionRecord(id=fid, name=draw(_ident), params=tuple(params),
                                        body_text=body, entry_address=entry))
    imports = [ImportEntry(name=nm, kind="dynamic")
               for nm in draw(st.lists(_ident, max_size=3, unique=True))]
    edges = []
    if fids:
        for _ in range(draw(st.integers(min_value=0, max_value=4))):
            edges.append(CallEdgeDecl(
                caller=draw(st.sampled_from(fids)),
                callee=draw(_ident),
                line=draw(st.integers(min_value=1, max_value=30))))
    return ProgramExport(name=draw(_ident), functions=tuple(functions),
                         imports=tuple(imports), call_edges=tuple(edges))


@given(exports())
def test_encode_decode_round_trip(export):
    assert decode_export(encode_export(export)) == export


@st.composite
def graph_and_walk(draw):
    nodes = [f"n{i}" for i in range(draw(st.integers(min_value=2, max_value=6)))]
    edges = []
    seen = set()
    for _ in range(draw(st.integers(min_value=1, max_value=10))):
        a, b = draw(st.sampled_from(nodes)), draw(st.sampled_from(nodes))
        if (a, b) not in seen:
            seen.add((a, b))
            edges.append(CallEdgeDecl(a, b, draw(st.integers(min_value=1, max_value=9))))
    # random walk along real edges, ending anywhere
    start = draw(st.sampled_from(edges)).caller
    walk = [start]
    for _ in range(draw(st.integers(min_value=0, max_value=4))):
        nxt = [e.callee for e in edges if e.caller == walk[-1]]
        if not nxt:
            break
        walk.append(draw(st.sampled_from(nxt)))
    return nodes, edges, walk


@given(graph_and_walk(), st.randoms())
def test_chain_adjacency_accepts_walks_rejects_fabrications(data, rnd):
    nodes, edges, walk = data
    vd = VulnerableDestination(function_id=walk[-1], site_line=1,
                               sink_name="s", args=("x",))
    chain = CallChain(funcs=tuple(walk), vd=vd,
                      hops=tuple(_hop(a, b) for a, b in zip(walk, walk[1:])))
    assert chain_is_adjacent(chain, edges)

    if len(walk) >= 2:
        fake = list(walk)
        fake[0] = "zz_not_a_node"
        fake_vd = VulnerableDestination(function_id=fake[-1], site_line=1,
                                        sink_name="s", args=("x",))
        fake_chain = CallChain(funcs=tuple(fake), vd=fake_vd,
                               hops=tuple(_hop(a, b) for a, b in zip(fake, fake[1:])))
        assert not chain_is_adjacent(fake_chain, edges)


def _hop(a, b):
    from taintslice.model import ChainHop, SiteBinding
    return ChainHop(caller=a, callee=b,
                    sites=(SiteBinding(site_line=1, bindings=()),))


class TestVerdictInvariants:
    def test_cwe_tags_require_yes(self):
        params = ModelParams("m", 0.5, "t")
        with pytest.raises(ValueError):
            Verdict(df_id="d", vulnerable="no", cwe_tags=("CWE-78",),
                    transcript=(), model_params=params)

    def test_chain_must_end_at_vd_function(self):
        vd = VulnerableDestination("f2", 3, "system", ("x",))
        with pytest.raises(ValueError):
            CallChain(funcs=("f1",), vd=vd)
