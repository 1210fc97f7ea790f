import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from helpers import analysis_for
from taintslice import flowgen, promptchat, slicer
from taintslice.model import (
    CallChain, ChainHop, DangerousFlow, FuncSpec, FunctionRecord,
    ParamSelector, ProgramExport, SiteBinding, SourceCall,
    VulnerableDestination,
)
from taintslice.promptchat import (
    END_ANCHOR, HttpBackend, MIDDLE_ANCHOR, MockBackend, PromptBuildError,
    START_ANCHOR, build_prompt_sequence, extract_verdict, ordinal,
    run_conversation,
)


def _flows(export, sources, sinks):
    index, graph = analysis_for(export, sources)
    vds = slicer.locate_vds(export, graph, sinks, index=index)
    chains = []
    for vd in vds:
        chains.extend(slicer.backward_slice(export, graph, vd, index=index))
    return flowgen.dedup(flowgen.match_sources(export, chains, sources,
                                               index=index))


class TestBuildPromptSequence:
    def test_single_function_flow(self, overflow_export, printf_sink, fscanf_source):
        flows = _flows(overflow_export, [fscanf_source], [printf_sink])
        ps = build_prompt_sequence(flows[0], overflow_export)
        kinds = [p.kind for p in ps.prompts]
        assert kinds == ["start", "end"]
        assert "using fscanf as the taint source" in ps.prompts[0].text
        assert "the third parameter" in ps.prompts[0].text
        assert overflow_export.functions[0].body_text in ps.prompts[0].text

    def test_two_function_flow_has_no_note(self, chain_export, fgets_source,
                                           system_sink):
        flows = _flows(chain_export, [fgets_source], [system_sink])
        two = next(f for f in flows if f.funcs == ("fun2", "fun1"))
        ps = build_prompt_sequence(two, chain_export)
        assert [p.kind for p in ps.prompts] == ["start", "middle", "end"]
        assert "using fgets as the taint source" in ps.prompts[0].text
        assert "the first parameter" in ps.prompts[0].text
        assert "Note the new taint source" not in ps.prompts[1].text

    def test_middle_note_appears_only_where_a_source_lives(self, chain_export,
                                                           fgets_source,
                                                           system_sink):
        flows = _flows(chain_export, [fgets_source], [system_sink])
        four = next(f for f in flows if len(f.funcs) == 4)
        ps = build_prompt_sequence(four, chain_export)
        notes = ["Note the new taint source" in p.text for p in ps.prompts]
        # prompts: start(fun6), middle(fun4 with its own fgets), middle(fun3),
        # middle(fun1), end
        assert notes == [False, True, False, False, False]

    def test_length_four_flow_with_a_source_in_element_three(self):
        funcs = ("f4", "f3", "f2", "f1")
        export = ProgramExport(
            name="p",
            functions=tuple(FunctionRecord(
                id=f, name=f, params=(),
                body_text=f"void {f}(void) {{ return; }}") for f in funcs),
            imports=(), call_edges=())
        df = _manual_flow(funcs)
        extra = SourceCall(function_id="f2", site_line=1,
                           spec=FuncSpec("recv", "source", ParamSelector.of(2)),
                           tainted_args=("buf",))
        df = DangerousFlow(chain=df.chain,
                           source_calls=df.source_calls + (extra,))
        ps = build_prompt_sequence(df, export)
        assert len(ps.prompts) == 5
        notes = ["Note the new taint source" in p.text for p in ps.prompts]
        # the third prompt covers chain element three (f2), where recv lives
        assert notes == [False, False, True, False, False]
        assert "recv" in ps.prompts[2].text
        assert "the second parameter" in ps.prompts[2].text

    def test_prompt_count_law(self, chain_export, fgets_source, system_sink):
        for f in _flows(chain_export, [fgets_source], [system_sink]):
            ps = build_prompt_sequence(f, chain_export)
            assert len(ps.prompts) == len(f.funcs) + 1

    def test_anchor_phrases(self, chain_export, fgets_source, system_sink):
        for f in _flows(chain_export, [fgets_source], [system_sink]):
            ps = build_prompt_sequence(f, chain_export)
            assert START_ANCHOR in ps.prompts[0].text
            for p in ps.prompts[1:-1]:
                assert MIDDLE_ANCHOR in p.text
            assert END_ANCHOR in ps.prompts[-1].text

    def test_missing_body_raises_naming_the_function(self):
        export = ProgramExport(
            name="p",
            functions=(FunctionRecord(id="f1", name="f1", params=(),
                                      body_text=None),),
            imports=(), call_edges=())
        df = _manual_flow(("f1",))
        with pytest.raises(PromptBuildError) as err:
            build_prompt_sequence(df, export)
        assert "f1" in str(err.value)


def _manual_flow(funcs):
    vd = VulnerableDestination(function_id=funcs[-1], site_line=1,
                               sink_name="system", args=("x",))
    hops = tuple(ChainHop(caller=a, callee=b,
                          sites=(SiteBinding(site_line=1, bindings=()),))
                 for a, b in zip(funcs, funcs[1:]))
    sc = SourceCall(function_id=funcs[0], site_line=1,
                    spec=FuncSpec("fgets", "source", ParamSelector.of(1)),
                    tainted_args=("buf",))
    return DangerousFlow(chain=CallChain(funcs=funcs, vd=vd, hops=hops),
                         source_calls=(sc,))


class TestOrdinal:
    @pytest.mark.parametrize("n,word", [
        (1, "first"), (2, "second"), (3, "third"), (4, "fourth"),
        (13, "13th"), (21, "21st"), (22, "22nd"), (101, "101st"),
    ])
    def test_words(self, n, word):
        assert ordinal(n) == word


class TestRunConversation:
    def test_scripted_verdict(self, overflow_export, printf_sink, fscanf_source):
        flows = _flows(overflow_export, [fscanf_source], [printf_sink])
        ps = build_prompt_sequence(flows[0], overflow_export)
        backend = MockBackend(replies=[
            "Data flow: stdin -> a (line 4) -> b (line 5) -> e (line 8), "
            "and b -> c (line 14) -> d (line 17).",
            "Yes: d = c + 1 can wrap a signed char, an integer overflow "
            "related to CWE-190 (Integer Overflow or Wraparound).",
        ])
        verdict = run_conversation(ps, backend, df_id="df0001")
        assert verdict.vulnerable == "yes"
        assert verdict.cwe_tags == ("CWE-190",)
        assert len(verdict.transcript) == 2 * len(ps.prompts)
        assert verdict.model_params.timestamp == promptchat.EPOCH

    def test_negative_script(self):
        df = _manual_flow(("f1",))
        export = ProgramExport(
            name="p",
            functions=(FunctionRecord(id="f1", name="f1", params=(),
                                      body_text="void f1(void) { return; }"),),
            imports=(), call_edges=())
        ps = build_prompt_sequence(df, export)
        backend = MockBackend(replies=["flow noted", "no vulnerability found"])
        verdict = run_conversation(ps, backend)
        assert verdict.vulnerable == "no"
        assert verdict.cwe_tags == ()

    def test_transport_errors_then_success_records_retries(self):
        df = _manual_flow(("f1",))
        export = ProgramExport(
            name="p",
            functions=(FunctionRecord(id="f1", name="f1", params=(),
                                      body_text="void f1(void) { return; }"),),
            imports=(), call_edges=())
        ps = build_prompt_sequence(df, export)
        backend = MockBackend(replies=[
            {"error": "transport"}, {"error": "transport"}, "flow noted",
            "contains CWE-78 (OS Command Injection)"], retries=2)
        verdict = run_conversation(ps, backend)
        assert verdict.vulnerable == "yes"
        assert verdict.retries == 2

    def test_exhausted_retries_give_indeterminate(self):
        df = _manual_flow(("f1",))
        export = ProgramExport(
            name="p",
            functions=(FunctionRecord(id="f1", name="f1", params=(),
                                      body_text="void f1(void) { return; }"),),
            imports=(), call_edges=())
        ps = build_prompt_sequence(df, export)
        backend = MockBackend(replies=[{"error": "transport"}] * 9, retries=2)
        verdict = run_conversation(ps, backend)
        assert verdict.vulnerable == "indeterminate"
        assert "transport" in verdict.note

    def test_oversize_is_loud_not_truncated(self):
        df = _manual_flow(("f1",))
        export = ProgramExport(
            name="p",
            functions=(FunctionRecord(id="f1", name="f1", params=(),
                                      body_text="void f1(void) { return; }"),),
            imports=(), call_edges=())
        ps = build_prompt_sequence(df, export)
        backend = MockBackend(replies=[{"error": "oversize"}])
        verdict = run_conversation(ps, backend)
        assert verdict.vulnerable == "indeterminate"
        assert verdict.note == "oversize"

    def test_replaying_a_persisted_verdict_file(self, tmp_path, overflow_export,
                                                printf_sink, fscanf_source):
        from taintslice import report
        flows = _flows(overflow_export, [fscanf_source], [printf_sink])
        ps = build_prompt_sequence(flows[0], overflow_export)
        backend = MockBackend(replies=["flow", "contains CWE-190"])
        verdict = run_conversation(ps, backend, df_id="df0001")
        path = tmp_path / "df0001.json"
        report.write_json(path, report.verdict_to_json(verdict))

        replayed = run_conversation(ps, MockBackend.from_script(path),
                                    df_id="df0001")
        assert replayed.cwe_tags == verdict.cwe_tags
        assert replayed.transcript == verdict.transcript

    def test_mock_is_deterministic_across_runs(self, overflow_export, printf_sink,
                                               fscanf_source):
        flows = _flows(overflow_export, [fscanf_source], [printf_sink])
        ps = build_prompt_sequence(flows[0], overflow_export)
        backend = MockBackend(replies=["a", "contains CWE-190"])
        first = run_conversation(ps, backend)
        second = run_conversation(ps, backend)
        assert first == second


class TestExtractVerdict:
    @pytest.mark.parametrize("text,flag,tags", [
        ("contains ... CWE-190 (Integer Overflow", "yes", ("CWE-190",)),
        ("does not inherently introduce a classic buffer overflow", "no", ()),
        ("classified under CWE-120: Buffer Copy without Checking", "yes", ("CWE-120",)),
        ("This scenario can lead to CWE-120 and also CWE-787.", "yes",
         ("CWE-120", "CWE-787")),
        ("no vulnerability found", "no", ()),
        ("needs more context to tell", "indeterminate", ()),
    ])
    def test_extraction(self, text, flag, tags):
        assert extract_verdict(text) == (flag, tags)

    def test_duplicate_tags_collapse(self):
        flag, tags = extract_verdict("CWE-78 ... again CWE-78")
        assert flag == "yes" and tags == ("CWE-78",)


class _FakeChat(BaseHTTPRequestHandler):
    requests_seen = []
    fail_once = False

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        type(self).requests_seen.append(
            {"payload": payload, "auth": self.headers.get("Authorization")})
        if type(self).fail_once:
            type(self).fail_once = False
            self.send_response(503)
            self.end_headers()
            return
        reply = {"choices": [{"message": {
            "role": "assistant",
            "content": f"echo {len(payload['messages'])} messages"}}]}
        body = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture()
def fake_chat_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _FakeChat)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _FakeChat.requests_seen = []
    _FakeChat.fail_once = False
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


class TestHttpBackend:
    def test_wire_shape_and_context_accumulation(self, fake_chat_server,
                                                 monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "sk-test")
        backend = HttpBackend(base_url=fake_chat_server, model="anymodel",
                              temperature=0.5, backoff_s=0.0)
        conv = backend.start()
        first = conv.send([("user", "hello")])
        second = conv.send([("user", "hello"), ("assistant", first),
                            ("user", "again")])
        assert first == "echo 1 messages"
        assert second == "echo 3 messages"
        seen = _FakeChat.requests_seen
        assert seen[0]["payload"]["model"] == "anymodel"
        assert seen[0]["payload"]["temperature"] == 0.5
        assert seen[0]["payload"]["messages"][0] == {"role": "user",
                                                     "content": "hello"}
        assert seen[0]["auth"] == "Bearer sk-test"
        assert [m["role"] for m in seen[1]["payload"]["messages"]] == \
               ["user", "assistant", "user"]

    def test_retry_on_5xx(self, fake_chat_server):
        _FakeChat.fail_once = True
        backend = HttpBackend(base_url=fake_chat_server, model="m",
                              retries=2, backoff_s=0.0)
        conv = backend.start()
        reply, retries = promptchat.send_with_retry(conv, backend,
                                                    [("user", "x")])
        assert reply == "echo 1 messages"
        assert retries == 1

    def test_temperature_bounds(self):
        with pytest.raises(ValueError):
            HttpBackend(base_url="http://x", model="m", temperature=1.5)
