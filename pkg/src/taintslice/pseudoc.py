"""Parser for the decompiled pseudo-C subset.

The accepted subset covers what decompilers emit for ordinary C code:
declarations, assignments (including field/array/deref lvalues and the
compound operators), calls, if/else, while/for/do, return, casts,
address-of, dereference and the ternary operator.  Anything else (goto,
switch, labels, inline asm, function-pointer declarators, ...) becomes an
Opaque statement carrying the raw text, so parsing is total for any body
with balanced braces.  Only unbalanced braces at the top level abort the
parse and mark the whole function unparseable.

Every statement records the 1-based source line of its first token;
statement order preserves line order.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class FunctionParseError(Exception):
    """The body cannot be lexed into a statement list (function unparseable)."""


# ---------------------------------------------------------------------------
# lexer

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<num>0[xX][0-9a-fA-F]+[uUlL]*|\d+\.\d+[fFlL]?|\.\d+[fFlL]?|\d+[uUlL]*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<char>'(?:[^'\\]|\\.)*')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<=|>>=|->|\+\+|--|&&|\|\||==|!=|<=|>=|\+=|-=|\*=|/=|%=|&=|\|=|\^=|<<|>>|\.\.\.|[-+*/%&|^~!<>=?:.,;(){}\[\]])
""", re.VERBOSE | re.DOTALL)


@dataclass(frozen=True)
class Token:
    kind: str  # num | str | char | ident | op
    value: str
    line: int


def lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line = 1
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            # unknown byte: skip it, decompilers occasionally emit stray glyphs
            pos += 1
            continue
        kind = m.lastgroup or ""
        value = m.group()
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, value, line))
        line += value.count("\n")
        pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# expressions

@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class Lit:
    text: str


@dataclass(frozen=True)
class Str:
    text: str  # includes the quotes


@dataclass(frozen=True)
class CallE:
    callee: "Node"
    args: tuple["Node", ...]


@dataclass(frozen=True)
class Un:
    op: str
    operand: "Node"
    postfix: bool = False


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Tern:
    cond: "Node"
    then: "Node"
    orelse: "Node"


@dataclass(frozen=True)
class Cast:
    type_text: str
    operand: "Node"


@dataclass(frozen=True)
class Idx:
    base: "Node"
    index: "Node"


@dataclass(frozen=True)
class Fld:
    base: "Node"
    name: str
    arrow: bool


@dataclass(frozen=True)
class Asn:
    op: str  # '=', '+=', ...
    lhs: "Node"
    rhs: "Node"


Node = Name | Lit | Str | CallE | Un | Bin | Tern | Cast | Idx | Fld | Asn


_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5,
    "==": 6, "!=": 6,
    "<": 7, ">": 7, "<=": 7, ">=": 7,
    "<<": 8, ">>": 8,
    "+": 9, "-": 9,
    "*": 10, "/": 10, "%": 10,
}

_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}

# type names a decompiler is likely to spell; *_t and undefinedN are matched
# by pattern instead of enumeration
_TYPE_WORDS = {
    "void", "char", "short", "int", "long", "float", "double", "signed",
    "unsigned", "bool", "_Bool", "byte", "uchar", "ushort", "uint", "ulong",
    "ulonglong", "longlong", "code", "FILE", "const", "static", "struct",
    "union", "enum", "volatile", "register",
}

_TYPEISH_RE = re.compile(r"^(undefined\d*|u?int\d+_t|__u?int\d+|[A-Za-z_]\w*_t)$")


def _is_type_word(word: str) -> bool:
    return word in _TYPE_WORDS or bool(_TYPEISH_RE.match(word))


_KEYWORDS = {
    "if", "else", "while", "for", "do", "return", "goto", "switch", "case",
    "default", "break", "continue", "sizeof",
} | _TYPE_WORDS


# ---------------------------------------------------------------------------
# statements

@dataclass(frozen=True)
class Decl:
    line: int
    name: str
    type_text: str


@dataclass(frozen=True)
class Assign:
    line: int
    lhs: Node
    rhs: Node


@dataclass(frozen=True)
class Call:
    line: int
    callee: str  # "<indirect>" when called through a non-identifier
    args: tuple[Node, ...]
    lhs: Node | None = None


@dataclass(frozen=True)
class If:
    line: int
    cond: Node
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...]


@dataclass(frozen=True)
class Loop:
    line: int
    kind: str  # while | for | do
    cond: Node | None
    body: tuple["Stmt", ...]
    init: tuple["Stmt", ...] = ()
    step: tuple["Stmt", ...] = ()


@dataclass(frozen=True)
class Return:
    line: int
    value: Node | None


@dataclass(frozen=True)
class Opaque:
    line: int
    text: str


Stmt = Decl | Assign | Call | If | Loop | Return | Opaque


@dataclass(frozen=True)
class FunctionIR:
    name: str | None
    params: tuple[tuple[str, str], ...]  # (name, type text) from the signature
    statements: tuple[Stmt, ...]


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    # --- token plumbing ---
    def peek(self, k: int = 0) -> Token | None:
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else None

    def at(self, value: str) -> bool:
        t = self.peek()
        return t is not None and t.value == value

    def take(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, value: str) -> Token:
        t = self.peek()
        if t is None or t.value != value:
            raise _StmtError(f"expected {value!r}")
        return self.take()

    # --- expressions (precedence climbing) ---
    def expr(self) -> Node:
        return self.assignment()

    def assignment(self) -> Node:
        left = self.ternary()
        t = self.peek()
        if t is not None and t.value in _ASSIGN_OPS:
            op = self.take().value
            right = self.assignment()
            return Asn(op, left, right)
        return left

    def ternary(self) -> Node:
        cond = self.binary(1)
        if self.at("?"):
            self.take()
            then = self.assignment()
            self.expect(":")
            orelse = self.assignment()
            return Tern(cond, then, orelse)
        return cond

    def binary(self, min_prec: int) -> Node:
        left = self.unary()
        while True:
            t = self.peek()
            if t is None or t.value not in _PREC or _PREC[t.value] < min_prec:
                return left
            op = self.take().value
            right = self.binary(_PREC[op] + 1)
            left = Bin(op, left, right)

    def unary(self) -> Node:
        t = self.peek()
        if t is None:
            raise _StmtError("unexpected end of expression")
        if t.value in ("-", "+", "!", "~", "&", "*", "++", "--"):
            self.take()
            return Un(t.value, self.unary())
        if t.value == "sizeof":
            # compile-time constant: swallow the operand, keep no reads
            self.take()
            if self.at("("):
                text = self._balanced("(", ")")
            else:
                text = _to_text(self.unary())
            return Lit(f"sizeof{text}")
        if t.value == "(" and self._looks_like_cast():
            self.take()
            type_text = self._take_type_text()
            self.expect(")")
            return Cast(type_text, self.unary())
        return self.postfix()

    def _looks_like_cast(self) -> bool:
        # '(' IDENT+ '*'* ')' followed by the start of a unary expression
        i = self.pos + 1
        words = 0
        while i < len(self.toks) and self.toks[i].kind == "ident":
            words += 1
            i += 1
        if words == 0:
            return False
        stars = 0
        while i < len(self.toks) and self.toks[i].value == "*":
            stars += 1
            i += 1
        if i >= len(self.toks) or self.toks[i].value != ")":
            return False
        first = self.toks[self.pos + 1].value
        if not (_is_type_word(first) or stars > 0):
            return False
        nxt = self.toks[i + 1] if i + 1 < len(self.toks) else None
        if nxt is None:
            return False
        return nxt.kind in ("ident", "num", "str", "char") or nxt.value in ("(", "&", "*", "-", "+", "!", "~")

    def _take_type_text(self) -> str:
        parts = []
        while self.peek() is not None and self.peek().kind == "ident":
            parts.append(self.take().value)
        while self.at("*"):
            self.take()
            parts.append("*")
        return " ".join(parts)

    def _balanced(self, open_: str, close: str) -> str:
        depth = 0
        parts = []
        while True:
            t = self.peek()
            if t is None:
                raise _StmtError(f"unbalanced {open_!r}")
            self.take()
            parts.append(t.value)
            if t.value == open_:
                depth += 1
            elif t.value == close:
                depth -= 1
                if depth == 0:
                    return "".join(parts)

    def postfix(self) -> Node:
        node = self.primary()
        while True:
            t = self.peek()
            if t is None:
                return node
            if t.value == "(":
                self.take()
                args: list[Node] = []
                if not self.at(")"):
                    args.append(self.assignment())
                    while self.at(","):
                        self.take()
                        args.append(self.assignment())
                self.expect(")")
                node = CallE(node, tuple(args))
            elif t.value == "[":
                self.take()
                idx = self.expr()
                self.expect("]")
                node = Idx(node, idx)
            elif t.value in (".", "->"):
                self.take()
                fld = self.take()
                node = Fld(node, fld.value, arrow=(t.value == "->"))
            elif t.value in ("++", "--"):
                self.take()
                node = Un(t.value, node, postfix=True)
            else:
                return node

    def primary(self) -> Node:
        t = self.peek()
        if t is None:
            raise _StmtError("unexpected end of expression")
        if t.value == "(":
            self.take()
            inner = self.expr()
            self.expect(")")
            return inner
        if t.kind == "ident":
            if t.value in _KEYWORDS and not _is_type_word(t.value):
                raise _StmtError(f"keyword {t.value!r} in expression")
            self.take()
            return Name(t.value)
        if t.kind == "num":
            self.take()
            return Lit(t.value)
        if t.kind == "str":
            self.take()
            return Str(t.value)
        if t.kind == "char":
            self.take()
            return Lit(t.value)
        raise _StmtError(f"unexpected token {t.value!r}")

    # --- statements ---
    def block(self) -> list[Stmt]:
        self.expect("{")
        stmts: list[Stmt] = []
        while not self.at("}"):
            if self.peek() is None:
                raise _StmtError("unbalanced '{'")
            stmts.extend(self.statement())
        self.expect("}")
        return stmts

    def body_or_stmt(self) -> list[Stmt]:
        if self.at("{"):
            return self.block()
        return list(self.statement())

    def statement(self) -> list[Stmt]:
        t = self.peek()
        assert t is not None
        start = self.pos
        try:
            if t.value == ";":
                self.take()
                return []
            if t.value == "{":
                return self.block()
            if t.value == "if":
                return [self._if_stmt()]
            if t.value in ("while", "for", "do"):
                return self._loop_stmt()
            if t.value == "return":
                self.take()
                value = None if self.at(";") else self.expr()
                self.expect(";")
                return [Return(t.line, value)]
            if t.value in ("break", "continue"):
                self.take()
                self.expect(";")
                return [Opaque(t.line, t.value + ";")]
            if self._looks_like_decl():
                return self._decl_stmt()
            return self._expr_stmt()
        except _StmtError:
            self.pos = start
            return [self._opaque_stmt()]

    def _if_stmt(self) -> If:
        t = self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.body_or_stmt()
        orelse: list[Stmt] = []
        if self.at("else"):
            self.take()
            if self.at("if"):
                orelse = [self._if_stmt()]
            else:
                orelse = self.body_or_stmt()
        return If(t.line, cond, tuple(then), tuple(orelse))

    def _loop_stmt(self) -> list[Stmt]:
        t = self.take()
        if t.value == "while":
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            body = self.body_or_stmt()
            return [Loop(t.line, "while", cond, tuple(body))]
        if t.value == "do":
            body = self.body_or_stmt()
            self.expect("while")
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            self.expect(";")
            return [Loop(t.line, "do", cond, tuple(body))]
        # for (init; cond; step); declarations in the init are hoisted in
        # front of the loop so the canonical rendering stays in-subset
        self.expect("(")
        init: list[Stmt] = []
        if not self.at(";"):
            if self._looks_like_decl():
                init = self._decl_stmt(terminator=";")
            else:
                init = [self._expr_to_stmt(self.expr(), t.line)]
                self.expect(";")
        else:
            self.take()
        hoisted = [s for s in init if isinstance(s, Decl)]
        init = [s for s in init if not isinstance(s, Decl)]
        cond = None if self.at(";") else self.expr()
        self.expect(";")
        step: list[Stmt] = []
        if not self.at(")"):
            step.append(self._expr_to_stmt(self.expr(), t.line))
            while self.at(","):
                self.take()
                step.append(self._expr_to_stmt(self.expr(), t.line))
        self.expect(")")
        body = self.body_or_stmt()
        loop = Loop(t.line, "for", cond, tuple(body), init=tuple(init), step=tuple(step))
        return hoisted + [loop]

    def _looks_like_decl(self) -> bool:
        t = self.peek()
        if t is None or t.kind != "ident" or not _is_type_word(t.value):
            return False
        i = self.pos
        # skip type words (e.g. "unsigned long long", "struct sockaddr")
        while i < len(self.toks) and self.toks[i].kind == "ident" and (
                _is_type_word(self.toks[i].value) or
                (i > self.pos and self.toks[i - 1].value in ("struct", "union", "enum"))):
            i += 1
        while i < len(self.toks) and self.toks[i].value == "*":
            i += 1
        if i >= len(self.toks) or self.toks[i].kind != "ident":
            return False
        nxt = self.toks[i + 1] if i + 1 < len(self.toks) else None
        return nxt is not None and nxt.value in (";", ",", "=", "[")

    def _decl_stmt(self, terminator: str = ";") -> list[Stmt]:
        t = self.peek()
        assert t is not None
        base_parts = []
        while self.peek() is not None and self.peek().kind == "ident" and (
                _is_type_word(self.peek().value) or
                (base_parts and base_parts[-1] in ("struct", "union", "enum"))):
            base_parts.append(self.take().value)
        base_type = " ".join(base_parts)
        out: list[Stmt] = []
        while True:
            stars = ""
            while self.at("*"):
                self.take()
                stars += "*"
            name_tok = self.peek()
            if name_tok is None or name_tok.kind != "ident":
                raise _StmtError("bad declarator")
            self.take()
            suffix = ""
            while self.at("["):
                suffix += self._balanced("[", "]")
            type_text = (base_type + " " + stars).strip() + (" " + suffix if suffix else "")
            out.append(Decl(name_tok.line, name_tok.value, type_text))
            if self.at("="):
                self.take()
                rhs = self.assignment()
                out.append(self._assign_like(Name(name_tok.value), rhs, name_tok.line))
            if self.at(","):
                self.take()
                continue
            break
        self.expect(terminator)
        return out

    def _expr_stmt(self) -> list[Stmt]:
        t = self.peek()
        assert t is not None
        node = self.expr()
        self.expect(";")
        return [self._expr_to_stmt(node, t.line)]

    def _expr_to_stmt(self, node: Node, line: int) -> Stmt:
        if isinstance(node, Asn):
            lhs = node.lhs
            rhs = node.rhs
            if node.op != "=":
                rhs = Bin(node.op[:-1], lhs, rhs)
            return self._assign_like(lhs, rhs, line)
        if isinstance(node, CallE):
            return Call(line, _callee_name(node.callee), node.args)
        if isinstance(node, Un) and node.op in ("++", "--"):
            one = Lit("1")
            op = "+" if node.op == "++" else "-"
            return Assign(line, node.operand, Bin(op, node.operand, one))
        return Opaque(line, _to_text(node) + ";")

    def _assign_like(self, lhs: Node, rhs: Node, line: int) -> Stmt:
        if isinstance(rhs, CallE):
            return Call(line, _callee_name(rhs.callee), rhs.args, lhs=lhs)
        return Assign(line, lhs, rhs)

    def _opaque_stmt(self) -> Opaque:
        # consume to ';' at depth 0, or a balanced brace block, whichever ends first
        t0 = self.peek()
        assert t0 is not None
        parts: list[str] = []
        depth = 0
        while True:
            t = self.peek()
            if t is None:
                break
            if depth == 0 and t.value == "}":
                break
            self.take()
            parts.append(t.value)
            if t.value in ("(", "[", "{"):
                depth += 1
            elif t.value in (")", "]", "}"):
                depth -= 1
                if depth == 0 and t.value == "}":
                    break
            elif t.value == ";" and depth == 0:
                break
        return Opaque(t0.line, " ".join(parts))


class _StmtError(Exception):
    pass


def _callee_name(node: Node) -> str:
    return node.id if isinstance(node, Name) else "<indirect>"


# ---------------------------------------------------------------------------
# public API

def parse_function(body_text: str) -> FunctionIR:
    """Parse a function (with or without its signature line) into an IR.

    Raises FunctionParseError only when the top-level braces do not balance;
    every in-subset failure degrades to Opaque statements instead.
    """
    tokens = lex(body_text)
    if not tokens:
        raise FunctionParseError("empty body")
    depth = 0
    first_open = None
    for i, t in enumerate(tokens):
        if t.value == "{":
            if first_open is None:
                first_open = i
            depth += 1
        elif t.value == "}":
            depth -= 1
            if depth < 0:
                raise FunctionParseError("unbalanced braces")
    if depth != 0 or first_open is None:
        raise FunctionParseError("unbalanced braces")

    name, params = _parse_signature(tokens[:first_open])
    parser = _Parser(tokens[first_open:])
    try:
        stmts = parser.block()
    except _StmtError as exc:  # block() itself only fails on brace imbalance
        raise FunctionParseError(str(exc)) from exc
    if parser.peek() is not None:
        raise FunctionParseError("trailing tokens after function body")
    return FunctionIR(name=name, params=tuple(params), statements=tuple(stmts))


def _parse_signature(tokens: list[Token]) -> tuple[str | None, list[tuple[str, str]]]:
    """Best-effort (name, params) from "ret name(type a, type *b)"."""
    if not tokens:
        return None, []
    try:
        close = max(i for i, t in enumerate(tokens) if t.value == ")")
        open_ = next(i for i, t in enumerate(tokens) if t.value == "(")
    except (ValueError, StopIteration):
        return None, []
    if open_ == 0 or tokens[open_ - 1].kind != "ident":
        return None, []
    name = tokens[open_ - 1].value
    params: list[tuple[str, str]] = []
    group: list[Token] = []
    for t in tokens[open_ + 1:close]:
        if t.value == ",":
            _append_param(group, params)
            group = []
        else:
            group.append(t)
    _append_param(group, params)
    return name, params


def _append_param(group: list[Token], params: list[tuple[str, str]]) -> None:
    idents = [t for t in group if t.kind == "ident"]
    if not idents:
        return
    if len(idents) == 1 and _is_type_word(idents[0].value):
        return  # "void" or a bare type
    pname = idents[-1].value
    ptype = " ".join(t.value for t in group[:-1]) if len(group) > 1 else ""
    params.append((pname, ptype))


def walk(stmts) -> list[Stmt]:
    """All statements in the tree, in source order (If/Loop count once each)."""
    out: list[Stmt] = []
    for s in stmts:
        out.append(s)
        if isinstance(s, If):
            out.extend(walk(s.then))
            out.extend(walk(s.orelse))
        elif isinstance(s, Loop):
            out.extend(walk(s.init))
            out.extend(walk(s.body))
            out.extend(walk(s.step))
    return out


def statement_count(ir: FunctionIR) -> int:
    return len(walk(ir.statements))


def calls_in_expr(node: Node | None) -> list[CallE]:
    if node is None:
        return []
    out: list[CallE] = []
    if isinstance(node, CallE):
        out.append(node)
        out.extend(c for a in node.args for c in calls_in_expr(a))
        # callee expressions can nest calls too (rare)
        out.extend(calls_in_expr(node.callee) if not isinstance(node.callee, Name) else [])
    elif isinstance(node, Un):
        out.extend(calls_in_expr(node.operand))
    elif isinstance(node, Bin):
        out.extend(calls_in_expr(node.left) + calls_in_expr(node.right))
    elif isinstance(node, Tern):
        out.extend(calls_in_expr(node.cond) + calls_in_expr(node.then) + calls_in_expr(node.orelse))
    elif isinstance(node, Cast):
        out.extend(calls_in_expr(node.operand))
    elif isinstance(node, Idx):
        out.extend(calls_in_expr(node.base) + calls_in_expr(node.index))
    elif isinstance(node, Fld):
        out.extend(calls_in_expr(node.base))
    elif isinstance(node, Asn):
        out.extend(calls_in_expr(node.lhs) + calls_in_expr(node.rhs))
    return out


def stmt_exprs(s: Stmt) -> list[Node]:
    if isinstance(s, Assign):
        return [s.lhs, s.rhs]
    if isinstance(s, Call):
        out = list(s.args)
        if s.lhs is not None:
            out.append(s.lhs)
        return out
    if isinstance(s, If):
        return [s.cond]
    if isinstance(s, Loop):
        return [s.cond] if s.cond is not None else []
    if isinstance(s, Return):
        return [s.value] if s.value is not None else []
    return []


def call_records(s: Stmt) -> list[tuple[str, tuple[Node, ...], Node | None]]:
    """(callee, args, lhs) for the statement's own call plus embedded calls."""
    out: list[tuple[str, tuple[Node, ...], Node | None]] = []
    if isinstance(s, Call):
        out.append((s.callee, s.args, s.lhs))
        for e in s.args:
            out.extend((_callee_name(c.callee), c.args, None) for c in calls_in_expr(e))
        if s.lhs is not None:
            out.extend((_callee_name(c.callee), c.args, None) for c in calls_in_expr(s.lhs))
    else:
        for e in stmt_exprs(s):
            out.extend((_callee_name(c.callee), c.args, None) for c in calls_in_expr(e))
    return out


def call_sites(ir: FunctionIR, callee: str) -> list[tuple[int, tuple[Node, ...]]]:
    """All call sites of ``callee`` as (line, args), in line order."""
    out = []
    for s in walk(ir.statements):
        for name, args, _lhs in call_records(s):
            if name == callee:
                out.append((s.line, args))
    out.sort(key=lambda pair: pair[0])
    return out


def all_call_sites(ir: FunctionIR) -> list[tuple[int, str, tuple[Node, ...], Node | None]]:
    out = []
    for s in walk(ir.statements):
        for name, args, lhs in call_records(s):
            out.append((s.line, name, args, lhs))
    out.sort(key=lambda rec: rec[0])
    return out


# --- identifier read/write/addr extraction ---------------------------------

_IDENT_SCAN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _base_ident(node: Node) -> str | None:
    """The identifier an lvalue ultimately writes (field-insensitive)."""
    if isinstance(node, Name):
        return node.id
    if isinstance(node, (Idx, Fld)):
        return _base_ident(node.base)
    if isinstance(node, Cast):
        return _base_ident(node.operand)
    if isinstance(node, Un) and node.op == "*":
        inner = _base_ident(node.operand)
        return f"*{inner}" if inner else None
    return None


def expr_reads(node: Node | None) -> frozenset[str]:
    """Identifiers whose values the expression reads.

    Address-of operands are not value reads; an explicit deref *p reads both
    the pointer p and the pointee token "*p".
    """
    if node is None:
        return frozenset()
    if isinstance(node, Name):
        return frozenset({node.id})
    if isinstance(node, (Lit, Str)):
        return frozenset()
    if isinstance(node, Un):
        if node.op == "&":
            # reads inside subscripts still count: &a[i] reads i
            return _subscript_reads(node.operand)
        if node.op == "*":
            base = _base_ident(node.operand)
            inner = expr_reads(node.operand)
            return inner | ({f"*{base}"} if base else frozenset())
        return expr_reads(node.operand)
    if isinstance(node, Bin):
        return expr_reads(node.left) | expr_reads(node.right)
    if isinstance(node, Tern):
        return expr_reads(node.cond) | expr_reads(node.then) | expr_reads(node.orelse)
    if isinstance(node, Cast):
        return expr_reads(node.operand)
    if isinstance(node, Idx):
        return expr_reads(node.base) | expr_reads(node.index)
    if isinstance(node, Fld):
        return expr_reads(node.base)
    if isinstance(node, CallE):
        out = frozenset()
        for a in node.args:
            out |= expr_reads(a)
        return out
    if isinstance(node, Asn):
        return expr_reads(node.rhs)
    return frozenset()


def _subscript_reads(node: Node) -> frozenset[str]:
    if isinstance(node, Idx):
        return _subscript_reads(node.base) | expr_reads(node.index)
    if isinstance(node, (Fld, Cast)):
        inner = node.base if isinstance(node, Fld) else node.operand
        return _subscript_reads(inner)
    return frozenset()


def expr_addr_of(node: Node | None) -> frozenset[str]:
    """Base identifiers whose address the expression takes."""
    if node is None:
        return frozenset()
    if isinstance(node, Un):
        if node.op == "&":
            base = _base_ident(node.operand)
            return (frozenset({base}) if base else frozenset()) | expr_addr_of(node.operand)
        return expr_addr_of(node.operand)
    if isinstance(node, Bin):
        return expr_addr_of(node.left) | expr_addr_of(node.right)
    if isinstance(node, Tern):
        return expr_addr_of(node.cond) | expr_addr_of(node.then) | expr_addr_of(node.orelse)
    if isinstance(node, Cast):
        return expr_addr_of(node.operand)
    if isinstance(node, Idx):
        return expr_addr_of(node.base) | expr_addr_of(node.index)
    if isinstance(node, Fld):
        return expr_addr_of(node.base)
    if isinstance(node, CallE):
        out = frozenset()
        for a in node.args:
            out |= expr_addr_of(a)
        return out
    if isinstance(node, Asn):
        return expr_addr_of(node.rhs)
    return frozenset()


def is_literal(node: Node) -> bool:
    """Literal constants need no taint check: numbers, strings, chars,
    casts/sign flips of literals."""
    if isinstance(node, (Lit, Str)):
        return True
    if isinstance(node, Cast):
        return is_literal(node.operand)
    if isinstance(node, Un) and node.op in ("-", "+", "~", "!") and not node.postfix:
        return is_literal(node.operand)
    return False


def strip_casts(node: Node) -> Node:
    while isinstance(node, Cast):
        node = node.operand
    return node


def opaque_idents(text: str) -> frozenset[str]:
    return frozenset(w for w in _IDENT_SCAN.findall(text) if w not in _KEYWORDS)


def stmt_reads(s: Stmt) -> frozenset[str]:
    if isinstance(s, Assign):
        return expr_reads(s.rhs) | _subscript_reads(s.lhs)
    if isinstance(s, Call):
        out = frozenset()
        for a in s.args:
            out |= expr_reads(a)
        if s.lhs is not None:
            out |= _subscript_reads(s.lhs)
        return out
    if isinstance(s, If):
        return expr_reads(s.cond)
    if isinstance(s, Loop):
        return expr_reads(s.cond)
    if isinstance(s, Return):
        return expr_reads(s.value)
    if isinstance(s, Opaque):
        return opaque_idents(s.text)
    return frozenset()


def stmt_writes(s: Stmt) -> frozenset[str]:
    if isinstance(s, Assign):
        base = _base_ident(s.lhs)
        return frozenset({base}) if base else frozenset()
    if isinstance(s, Call):
        out = set()
        if s.lhs is not None:
            base = _base_ident(s.lhs)
            if base:
                out.add(base)
        for a in s.args:
            out |= expr_addr_of(a)
        return frozenset(out)
    if isinstance(s, Opaque):
        return opaque_idents(s.text)
    return frozenset()


# ---------------------------------------------------------------------------
# printer (canonical re-rendering; parse(print(ir)) is stable)

def _to_text(node: Node | None, parent_prec: int = 0) -> str:
    if node is None:
        return ""
    if isinstance(node, Name):
        return node.id
    if isinstance(node, (Lit, Str)):
        return node.text
    if isinstance(node, Un):
        if node.postfix:
            return f"{_to_text(node.operand, 11)}{node.op}"
        return f"{node.op}{_to_text(node.operand, 11)}"
    if isinstance(node, Bin):
        prec = _PREC[node.op]
        text = f"{_to_text(node.left, prec)} {node.op} {_to_text(node.right, prec + 1)}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(node, Tern):
        text = f"{_to_text(node.cond, 1)} ? {_to_text(node.then)} : {_to_text(node.orelse)}"
        return f"({text})" if parent_prec > 0 else text
    if isinstance(node, Cast):
        return f"({node.type_text}){_to_text(node.operand, 11)}"
    if isinstance(node, Idx):
        return f"{_to_text(node.base, 11)}[{_to_text(node.index)}]"
    if isinstance(node, Fld):
        sep = "->" if node.arrow else "."
        return f"{_to_text(node.base, 11)}{sep}{node.name}"
    if isinstance(node, CallE):
        args = ", ".join(_to_text(a) for a in node.args)
        return f"{_to_text(node.callee, 11)}({args})"
    if isinstance(node, Asn):
        return f"{_to_text(node.lhs)} {node.op} {_to_text(node.rhs)}"
    raise TypeError(f"unknown node {node!r}")


def expr_text(node: Node | None) -> str:
    return _to_text(node)


def _stmt_lines(s: Stmt, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(s, Decl):
        base, _, arr = s.type_text.partition("[")
        decl = f"{base.strip()} {s.name}" + (f"[{arr}" if arr else "")
        return [f"{pad}{decl};"]
    if isinstance(s, Assign):
        return [f"{pad}{_to_text(s.lhs)} = {_to_text(s.rhs)};"]
    if isinstance(s, Call):
        call = f"{s.callee}({', '.join(_to_text(a) for a in s.args)})"
        if s.lhs is not None:
            return [f"{pad}{_to_text(s.lhs)} = {call};"]
        return [f"{pad}{call};"]
    if isinstance(s, Return):
        return [f"{pad}return {_to_text(s.value)};" if s.value is not None else f"{pad}return;"]
    if isinstance(s, If):
        out = [f"{pad}if ({_to_text(s.cond)}) {{"]
        for c in s.then:
            out.extend(_stmt_lines(c, indent + 1))
        out.append(f"{pad}}}")
        if s.orelse:
            out.append(f"{pad}else {{")
            for c in s.orelse:
                out.extend(_stmt_lines(c, indent + 1))
            out.append(f"{pad}}}")
        return out
    if isinstance(s, Loop):
        if s.kind == "do":
            out = [f"{pad}do {{"]
            for c in s.body:
                out.extend(_stmt_lines(c, indent + 1))
            out.append(f"{pad}}} while ({_to_text(s.cond)});")
            return out
        if s.kind == "for":
            init = "; ".join(line.strip().rstrip(";") for c in s.init for line in _stmt_lines(c, 0))
            step = ", ".join(line.strip().rstrip(";") for c in s.step for line in _stmt_lines(c, 0))
            head = f"{pad}for ({init}; {_to_text(s.cond)}; {step}) {{"
            out = [head]
            for c in s.body:
                out.extend(_stmt_lines(c, indent + 1))
            out.append(f"{pad}}}")
            return out
        out = [f"{pad}while ({_to_text(s.cond)}) {{"]
        for c in s.body:
            out.extend(_stmt_lines(c, indent + 1))
        out.append(f"{pad}}}")
        return out
    if isinstance(s, Opaque):
        return [f"{pad}{s.text}"]
    raise TypeError(f"unknown statement {s!r}")


def print_ir(ir: FunctionIR) -> str:
    """Canonical text form of the IR (signature included when known)."""
    if ir.name is not None:
        params = ", ".join(f"{t} {n}".strip() for n, t in ir.params) or "void"
        head = f"void {ir.name}({params}) {{"
    else:
        head = "{"
    lines = [head]
    for s in ir.statements:
        lines.extend(_stmt_lines(s, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"
