import pytest
from hypothesis import given, strategies as st

from taintslice import pseudoc
from taintslice.pseudoc import (
    Assign, Call, FunctionParseError, Loop, Opaque, parse_function,
)

FOO_BODY = """void foo(void) {
  signed char a, b, c, d;
  int e;
  fscanf(stdin, "%d", &a);
  b = a;
  c = 0;
  a = 1;
  e = b + 1;
  printf("%d", (ulong)e);
  if (b == 127) {
    printLine("Data value is too large");
  }
  else {
    c = b + 1;
    printf("Result is %d", (int)c);
  }
  d = c + 1;
  printf("Result is %d", (int)d);
  return;
}"""


class TestParseFunction:
    def test_statement_count_of_the_overflow_demo(self):
        ir = parse_function(FOO_BODY)
        assert pseudoc.statement_count(ir) == 18

    def test_input_call_writes_through_address_of(self):
        ir = parse_function(FOO_BODY)
        call = next(s for s in pseudoc.walk(ir.statements)
                    if isinstance(s, Call) and s.callee == "fscanf")
        assert call.line == 4
        assert [pseudoc.expr_text(a) for a in call.args] == ['stdin', '"%d"', '&a']
        assert pseudoc.stmt_writes(call) == {"a"}

    def test_empty_function(self):
        ir = parse_function("void f(void){}")
        assert ir.statements == ()

    def test_unbalanced_braces_mark_unparseable(self):
        with pytest.raises(FunctionParseError):
            parse_function("void f(void) { if (x) {")

    def test_signature_params_are_recovered(self):
        ir = parse_function("void g(int para1, char *para2) { return; }")
        assert ir.params == (("para1", "int"), ("para2", "char *"))

    def test_inline_asm_becomes_one_opaque_with_textual_idents(self):
        ir = parse_function(
            "void f(void) {\n  x = 1;\n  __asm { mov eax, ebx };\n  y = x;\n}")
        opaques = [s for s in pseudoc.walk(ir.statements) if isinstance(s, Opaque)]
        assert len(opaques) == 1
        # oracle: hand token scan of the raw text
        assert pseudoc.stmt_reads(opaques[0]) == {"__asm", "mov", "eax", "ebx"}
        assert pseudoc.stmt_reads(opaques[0]) == pseudoc.stmt_writes(opaques[0])

    def test_goto_and_switch_become_opaque(self):
        ir = parse_function(
            "void f(void) { switch (x) { case 1: g(); } goto done; }")
        kinds = [type(s).__name__ for s in ir.statements]
        assert kinds == ["Opaque", "Opaque"]

    def test_statement_lines_follow_source_lines(self):
        ir = parse_function(FOO_BODY)
        lines = [s.line for s in pseudoc.walk(ir.statements)]
        assert lines == sorted(lines)

    def test_for_loop_with_decl_init(self):
        ir = parse_function(
            "void f(void) { for (int i = 0; i < n; i++) { s = s + i; } }")
        kinds = [type(s).__name__ for s in ir.statements]
        assert kinds == ["Decl", "Loop"]
        loop = ir.statements[1]
        assert loop.kind == "for"
        assert [type(s).__name__ for s in loop.init] == ["Assign"]
        assert [type(s).__name__ for s in loop.step] == ["Assign"]
        t1 = pseudoc.print_ir(ir)
        assert pseudoc.print_ir(parse_function(t1)) == t1

    def test_do_while_loop(self):
        ir = parse_function(
            "void f(void) { do { n = n - 1; } while (n > 0); }")
        loop = ir.statements[0]
        assert isinstance(loop, Loop) and loop.kind == "do"
        t1 = pseudoc.print_ir(ir)
        assert pseudoc.print_ir(parse_function(t1)) == t1


class TestCallSites:
    def test_printf_sites_in_line_order(self):
        ir = parse_function(FOO_BODY)
        assert [line for line, _ in pseudoc.call_sites(ir, "printf")] == [9, 15, 18]

    def test_absent_callee(self):
        ir = parse_function(FOO_BODY)
        assert pseudoc.call_sites(ir, "system") == []

    def test_nested_call_listed_once_under_each_name(self):
        ir = parse_function('void f(void) { printf("%d", atoi(x)); }')
        printf_sites = pseudoc.call_sites(ir, "printf")
        atoi_sites = pseudoc.call_sites(ir, "atoi")
        assert len(printf_sites) == 1
        assert len(atoi_sites) == 1
        assert [pseudoc.expr_text(a) for a in atoi_sites[0][1]] == ["x"]

    def test_call_in_condition_is_found(self):
        ir = parse_function("void f(void) { if (recv(s, buf, n, 0) > 0) { use(buf); } }")
        assert len(pseudoc.call_sites(ir, "recv")) == 1

    def test_indirect_call_gets_the_indirect_name(self):
        ir = parse_function("void f(void) { (*fp)(x); }")
        assert len(pseudoc.call_sites(ir, "<indirect>")) == 1


class TestExprAccounting:
    def test_assign_write_set_is_the_lhs_base(self):
        ir = parse_function("void f(void) { arr[i].field = x + y; }")
        stmt = ir.statements[0]
        assert pseudoc.stmt_writes(stmt) == {"arr"}
        assert pseudoc.stmt_reads(stmt) == {"i", "x", "y"}

    def test_call_lhs_is_in_write_set(self):
        ir = parse_function("void f(void) { n = read(fd, buf, 10); }")
        stmt = ir.statements[0]
        assert isinstance(stmt, Call)
        assert "n" in pseudoc.stmt_writes(stmt)

    def test_deref_assign_writes_pointee_token(self):
        ir = parse_function("void f(void) { *p = y; }")
        assert pseudoc.stmt_writes(ir.statements[0]) == {"*p"}

    def test_sizeof_is_a_constant(self):
        ir = parse_function("void f(void) { fgets(a, sizeof(a), stdin); }")
        call = ir.statements[0]
        assert pseudoc.stmt_reads(call) == {"a", "stdin"}
        assert pseudoc.is_literal(call.args[1])

    def test_literals(self):
        ir = parse_function('void f(void) { g("s", 12, \'c\', (int)3, x); }')
        args = ir.statements[0].args
        assert [pseudoc.is_literal(a) for a in args] == [True, True, True, True, False]

    def test_strip_casts(self):
        ir = parse_function("void f(void) { g((ulong)e); }")
        arg = ir.statements[0].args[0]
        assert pseudoc.expr_text(pseudoc.strip_casts(arg)) == "e"


_idents = st.sampled_from(["a", "b", "c", "x", "y", "buf", "n"])


@st.composite
def subset_bodies(draw):
    """Random programs drawn from the parseable subset, one statement per
    construct, to exercise the printer/parser loop."""
    stmts = []
    depth = draw(st.integers(min_value=1, max_value=6))
    for _ in range(depth):
        kind = draw(st.sampled_from(["assign", "call", "if", "while", "return", "decl"]))
        a, b = draw(_idents), draw(_idents)
        if kind == "assign":
            stmts.append(f"{a} = {b} + 1;")
        elif kind == "call":
            stmts.append(f"{a} = helper({b}, 3);")
        elif kind == "if":
            stmts.append(f"if ({a} == 0) {{ {b} = {a}; }} else {{ {b} = 1; }}")
        elif kind == "while":
            stmts.append(f"while ({a} < 10) {{ {a} = {a} + 1; }}")
        elif kind == "return":
            stmts.append(f"return {a};")
        else:
            stmts.append(f"int {a};")
    body = "void f(void) {\n" + "\n".join("  " + s for s in stmts) + "\n}"
    return body


@given(subset_bodies())
def test_reprint_reparse_is_idempotent(body):
    ir = parse_function(body)
    t1 = pseudoc.print_ir(ir)
    t2 = pseudoc.print_ir(parse_function(t1))
    assert t1 == t2
    assert parse_function(t1) == parse_function(t2)


@given(subset_bodies())
def test_assign_write_sets_are_lhs_bases(body):
    ir = parse_function(body)
    for s in pseudoc.walk(ir.statements):
        if isinstance(s, Assign):
            assert len(pseudoc.stmt_writes(s)) == 1
        if isinstance(s, Call) and s.lhs is not None:
            assert pseudoc.stmt_writes(s) >= {pseudoc.expr_text(s.lhs)}
