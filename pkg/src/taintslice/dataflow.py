"""Flow-insensitive, path-insensitive intraprocedural dependency analysis.

Each function gets a DepGraph: directed edges a -> b meaning "b depends on
a", plus alias classes from a light pointer heuristic (p = &x puts the
pointee of p and x into one region; pointer-to-pointer assignment merges
regions).  Statements contribute edges exactly once each, so loop nesting
never changes the result.  Strong updates are deliberately not modeled:
assigning a constant does not erase earlier edges, because sanitization
judgment is left to the conversation stage.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import pseudoc
from .model import FuncSpec, ParamSelector
from .pseudoc import (
    Assign, Call, Decl, FunctionIR, If, Loop, Name, Node, Opaque, Return, Un,
)


class BindingError(Exception):
    def __init__(self, callee: str, wanted: int, got: int) -> None:
        super().__init__(f"{callee} expects {wanted} arguments, call site has {got}")
        self.wanted = wanted
        self.got = got


# ---------------------------------------------------------------------------
# external-function write effects

_BUILTIN_EFFECTS = (
    ("memcpy", ParamSelector.of(1)),
    ("strcpy", ParamSelector.of(1)),
    ("snprintf", ParamSelector.of(1)),
    ("sprintf", ParamSelector.of(1)),
)


@dataclass(frozen=True)
class EffectTable:
    """Which argument positions an external callee writes through."""

    entries: tuple[tuple[str, ParamSelector], ...] = ()

    @classmethod
    def builtin(cls) -> "EffectTable":
        return cls(entries=_BUILTIN_EFFECTS)

    @classmethod
    def from_config_text(cls, text: str) -> "EffectTable":
        """One effect per line: "name writes_arg <selector>"; '#' comments."""
        entries = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 2)
            if len(parts) != 3 or parts[1] != "writes_arg":
                raise ValueError(f"bad effect line {raw!r}")
            entries.append((parts[0], ParamSelector.parse(parts[2])))
        return cls(entries=tuple(entries))

    def merged(self, other: "EffectTable") -> "EffectTable":
        merged: dict[str, ParamSelector] = {}
        for name, sel in self.entries + other.entries:
            merged[name] = merged[name].union(sel) if name in merged else sel
        return EffectTable(entries=tuple(sorted(merged.items())))

    def with_sources(self, sources) -> "EffectTable":
        """Add the out-parameter selectors of source specs (return-value
        sources have no out-parameter effect)."""
        extra = tuple((s.name, s.selector) for s in sources
                      if isinstance(s, FuncSpec) and not s.selector.is_return)
        return self.merged(EffectTable(entries=extra))

    def selector_for(self, name: str) -> ParamSelector | None:
        found = None
        for n, sel in self.entries:
            if n == name:
                found = sel if found is None else found.union(sel)
        return found


# ---------------------------------------------------------------------------
# alias partition

class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra

    def classes(self) -> tuple[frozenset[str], ...]:
        groups: dict[str, set[str]] = {}
        for x in self.parent:
            groups.setdefault(self.find(x), set()).add(x)
        return tuple(sorted((frozenset(g) for g in groups.values() if len(g) > 1),
                            key=sorted))


def deref_token(ident: str) -> str:
    return f"*{ident}"


@dataclass(frozen=True)
class DepGraph:
    params: tuple[str, ...]
    nodes: frozenset[str]
    edges: frozenset[tuple[str, str, int]]  # (src, dst, line): dst depends on src
    alias_classes: tuple[frozenset[str], ...]

    def class_of(self, token: str) -> frozenset[str]:
        for cls in self.alias_classes:
            if token in cls:
                return cls
        return frozenset({token})

    def alias_closure(self, tokens) -> frozenset[str]:
        out: set[str] = set()
        for t in tokens:
            out |= self.class_of(t)
        return frozenset(out)

    def has_dep(self, src: str, dst: str) -> bool:
        """Edge src -> dst, closed over alias classes on both ends."""
        srcs = self.class_of(src)
        dsts = self.class_of(dst)
        return any(s in srcs and d in dsts for s, d, _ in self.edges)

    def backward_closure(self, seeds) -> frozenset[str]:
        """Everything the seeds (transitively) depend on, alias-closed."""
        into: dict[str, set[str]] = {}
        for s, d, _ in self.edges:
            into.setdefault(d, set()).add(s)
        reached: set[str] = set()
        work = list(self.alias_closure(seeds))
        while work:
            cur = work.pop()
            if cur in reached:
                continue
            reached.add(cur)
            preds: set[str] = set()
            for member in self.class_of(cur):
                reached.add(member)
                preds |= into.get(member, set())
            for p in preds:
                for member in self.alias_closure([p]):
                    if member not in reached:
                        work.append(member)
        return frozenset(reached)

    def depends_on_params(self, seeds) -> frozenset[str]:
        reach = self.backward_closure(seeds)
        return frozenset(p for p in self.params if p in reach)


def seed_idents(node: Node | None) -> frozenset[str]:
    """Identifiers through which data can arrive in an argument expression:
    plain value reads plus address-of bases (&x passes x by reference)."""
    return pseudoc.expr_reads(node) | pseudoc.expr_addr_of(node)


def _pointerish(ir: FunctionIR, params: tuple[str, ...] | None,
                param_types: dict[str, str]) -> set[str]:
    pointers: set[str] = set()
    for name, t in param_types.items():
        if "*" in t or "[" in t:
            pointers.add(name)
    for s in pseudoc.walk(ir.statements):
        if isinstance(s, Decl) and ("*" in s.type_text or "[" in s.type_text):
            pointers.add(s.name)
        if isinstance(s, Assign):
            rhs = pseudoc.strip_casts(s.rhs)
            if isinstance(rhs, Un) and rhs.op == "&" and isinstance(s.lhs, Name):
                pointers.add(s.lhs.id)
    return pointers


def build_deps(ir: FunctionIR, params=None, effects: EffectTable | None = None) -> DepGraph:
    """Build the dependency graph of one parsed function."""
    if params is None:
        params = ir.params
    if params and isinstance(params[0], tuple):
        param_names = tuple(n for n, _ in params)
        param_types = dict(params)
    else:
        param_names = tuple(params)
        param_types = {}
    effects = effects if effects is not None else EffectTable.builtin()

    pointers = _pointerish(ir, param_names, param_types)
    uf = _UnionFind()
    edges: set[tuple[str, str, int]] = set()
    nodes: set[str] = set(param_names)

    def note(tokens) -> None:
        nodes.update(tokens)

    def add_edges(srcs, dst: str, line: int) -> None:
        note(srcs)
        note([dst])
        for s in srcs:
            if s != dst:
                edges.add((s, dst, line))

    def written_token(node: Node) -> str | None:
        stripped = pseudoc.strip_casts(node)
        if isinstance(stripped, Un) and stripped.op == "&":
            # &x as an out-argument writes x itself
            return pseudoc._base_ident(stripped.operand)
        direct = pseudoc._base_ident(stripped)
        if direct is not None:
            return direct
        # pointer arithmetic like (char *)(&buf + off): write lands in buf
        addr = pseudoc.expr_addr_of(node)
        if len(addr) == 1:
            return next(iter(addr))
        return None

    def handle_call(callee: str, args, lhs: Node | None, line: int) -> None:
        arg_reads = [seed_idents(a) for a in args]
        if lhs is not None:
            base = pseudoc._base_ident(lhs)
            if base:
                all_reads = frozenset().union(*arg_reads) if arg_reads else frozenset()
                add_edges(all_reads, base, line)
        sel = effects.selector_for(callee)
        if sel is None:
            return
        for idx, arg in sel.select(list(args)):
            target = written_token(arg)
            if target is None:
                continue
            others = [r for i, r in enumerate(arg_reads, start=1) if i != idx]
            other = frozenset().union(*others) if others else frozenset()
            add_edges(other, target, line)

    def visit(s) -> None:
        if isinstance(s, Decl):
            note([s.name])
            return
        if isinstance(s, Assign):
            lhs_base = pseudoc._base_ident(s.lhs)
            rhs = pseudoc.strip_casts(s.rhs)
            if lhs_base is not None and not lhs_base.startswith("*"):
                # alias heuristics: p = &x, and pointer-to-pointer p = q
                if isinstance(rhs, Un) and rhs.op == "&":
                    pointee = pseudoc._base_ident(rhs.operand)
                    if pointee is not None:
                        note([lhs_base, pointee])
                        uf.union(deref_token(lhs_base), pointee)
                        pointers.add(lhs_base)
                elif isinstance(rhs, Name) and rhs.id in pointers and lhs_base in pointers:
                    uf.union(deref_token(lhs_base), deref_token(rhs.id))
            reads = pseudoc.expr_reads(s.rhs) | pseudoc._subscript_reads(s.lhs)
            if lhs_base is not None:
                add_edges(reads, lhs_base, s.line)
            for callee, args, lhs in pseudoc.call_records(s):
                handle_call(callee, args, lhs, s.line)
            return
        if isinstance(s, Call):
            for callee, args, lhs in pseudoc.call_records(s):
                handle_call(callee, args, lhs, s.line)
            return
        if isinstance(s, Opaque):
            idents = pseudoc.opaque_idents(s.text)
            # conservative: an opaque statement may move data any which way
            note(idents)
            for dst in idents:
                for src in idents:
                    if src != dst:
                        edges.add((src, dst, s.line))
            return
        if isinstance(s, (If, Loop, Return)):
            # data dependencies only; conditions guard, they do not flow.
            # embedded calls in the condition still have effects
            for callee, args, lhs in pseudoc.call_records(s):
                handle_call(callee, args, lhs, s.line)
            return

    for s in pseudoc.walk(ir.statements):
        visit(s)

    classes = uf.classes()
    for cls in classes:
        nodes.update(cls)
    return DepGraph(
        params=param_names,
        nodes=frozenset(nodes),
        edges=frozenset(edges),
        alias_classes=classes,
    )


# ---------------------------------------------------------------------------
# argument/parameter binding

def bind_arguments(caller_ir: FunctionIR, site_line: int, callee_params,
                   variadic: bool = False, callee: str | None = None) -> dict[str, Node]:
    """Positional param -> argument map for the call at ``site_line``.

    ``callee_params`` is the callee's ordered parameter names; a trailing
    "..." entry (or variadic=True) maps extra arguments to vararg_k.
    ``callee`` disambiguates when several calls share a line.
    """
    names = [p[0] if isinstance(p, tuple) else p for p in callee_params]
    if names and names[-1].strip() == "...":
        names = names[:-1]
        variadic = True

    call = None
    for line, name, args, lhs in pseudoc.all_call_sites(caller_ir):
        if line == site_line and (callee is None or name == callee):
            call = Call(line, name, args, lhs)
            break
    if call is None:
        raise BindingError(callee or "<no call>", len(names), 0)

    args = list(call.args)
    if len(args) < len(names) or (len(args) > len(names) and not variadic):
        raise BindingError(call.callee, len(names), len(args))

    bound: dict[str, Node] = {}
    for name, arg in zip(names, args):
        bound[name] = arg
    for k, arg in enumerate(args[len(names):], start=1):
        bound[f"vararg_{k}"] = arg
    return bound
