"""Per-function type dependency graphs.

Every variable occurrence becomes a symbol node (SSA-style: ``name`` plus an
occurrence order plus the line, rendered ``pt0(9)``). Every typed expression
becomes an expression node carrying a rule id. isinstance-guarded forks fork
the variable map through a branch node; joins create merge nodes.

Two merge flavors exist: structured if/elif merges are strict (a blank input
leaves the join blank), loop-entry merges union their non-blank inputs so
loop-carried container growth can seed itself. Post-loop reads take the
body-final definition.

Container mutators (list.append/extend, set.add, dict subscript-store) write
a synthetic occurrence of the container variable fed by a mutator expression
node, so element refinement flows through the ordinary forward pass.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable

from .frontend import FunctionAst, ModuleAst, UserTypeSet
from .types_core import (
    NONE_TYPE,
    CandidateSet,
    PyType,
    TypeParseError,
    elementary,
    generic,
    parse_type_expr,
    user,
)


class NodeKind(Enum):
    SYMBOL = "symbol"
    EXPR = "expr"
    BRANCH = "branch"
    MERGE = "merge"


#: Expression ops whose result does not require any input to be known.
PREMISELESS_OPS = frozenset(
    {"Constant", "ClassInstantiation", "Lambda", "FunctionRef", "ClassRef", "NoneValue"}
)

#: Ops with no rule at all; their output stays blank forever.
OPAQUE_OPS = frozenset({"Opaque", "ExternalName"})

MUTATOR_METHODS = {"append": "add_element", "add": "add_element", "extend": "extend_elements"}


@dataclass
class TdgNode:
    id: str
    kind: NodeKind
    cands: CandidateSet = field(default_factory=CandidateSet.blank)
    # symbol fields
    var: str | None = None
    occurrence: int | None = None
    ctx: str | None = None  # param | read | write
    # expr fields
    op: str | None = None
    info: dict[str, Any] = field(default_factory=dict)
    # branch fields
    guard: tuple[str, tuple[PyType, ...]] | None = None
    # merge fields
    loop: bool = False
    line: int = 0
    axiom: bool = False  # pre-typed; rejection never removes from it

    @property
    def is_slot(self) -> bool:
        return self.kind is NodeKind.SYMBOL


@dataclass
class Tdg:
    qname: str
    nodes: dict[str, TdgNode] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)
    preds: dict[str, list[str]] = field(default_factory=dict)
    succs: dict[str, list[str]] = field(default_factory=dict)
    arg_slots: dict[str, str] = field(default_factory=dict)
    return_slots: list[str] = field(default_factory=list)
    call_sites: list["CallSite"] = field(default_factory=list)
    self_attr_stores: list[tuple[str, str, str]] = field(default_factory=list)  # (cls, attr, node)

    def add_node(self, node: TdgNode) -> TdgNode:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        self.preds.setdefault(node.id, [])
        self.succs.setdefault(node.id, [])
        return node

    def add_edge(self, src: str, dst: str) -> None:
        self.edges.append((src, dst))
        self.succs.setdefault(src, []).append(dst)
        self.preds.setdefault(dst, []).append(src)

    def slots(self) -> list[TdgNode]:
        return [n for n in self.nodes.values() if n.is_slot]


@dataclass
class CallSite:
    caller: str
    node_id: str
    callee_name: str
    arg_ids: tuple[str, ...]
    resolved: str | None = None  # qualified name of an in-file callee


@dataclass
class ProgramTdg:
    tdgs: dict[str, Tdg] = field(default_factory=dict)
    links: list[CallSite] = field(default_factory=list)
    deferred: list[CallSite] = field(default_factory=list)
    user_types: UserTypeSet | None = None
    class_attr_feeds: dict[tuple[str, str], list[tuple[str, str]]] = field(default_factory=dict)

    def node(self, ref: tuple[str, str]) -> TdgNode:
        fn, node_id = ref
        return self.tdgs[fn].nodes[node_id]


def _guard_types(node: ast.expr, user_types: UserTypeSet | None) -> tuple[PyType, ...] | None:
    names: list[str] = []
    if isinstance(node, ast.Name):
        names = [node.id]
    elif isinstance(node, ast.Tuple) and all(isinstance(e, ast.Name) for e in node.elts):
        names = [e.id for e in node.elts]
    else:
        return None
    out: list[PyType] = []
    for name in names:
        if user_types is not None and name in user_types:
            out.append(user(name, user_types.overloads(name)))
            continue
        try:
            out.append(parse_type_expr(name))
        except TypeParseError:
            out.append(user(name))
    return tuple(out)


_CONST_TYPES = (
    (bool, elementary("bool")),
    (int, elementary("int")),
    (float, elementary("float")),
    (str, elementary("str")),
    (bytes, elementary("bytes")),
)


def _constant_type(value: Any) -> PyType | None:
    if value is None:
        return NONE_TYPE
    for pytype, t in _CONST_TYPES:
        if isinstance(value, pytype):
            return t
    return None


def _walk_shallow(stmts: Iterable[ast.stmt]) -> Iterable[ast.AST]:
    """All nodes in the statements, not descending into nested definitions."""
    stack: list[ast.AST] = list(stmts)
    while stack:
        node = stack.pop()
        yield node
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                yield child  # the binding itself still counts
                continue
            stack.append(child)


def _assigned_names(stmts: Iterable[ast.stmt]) -> set[str]:
    names: set[str] = set()
    for node in _walk_shallow(stmts):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            names.add(node.name)
        elif isinstance(node, ast.Name) and isinstance(node.ctx, (ast.Store, ast.Del)):
            names.add(node.id)
    return names


def _mutated_names(stmts: Iterable[ast.stmt]) -> set[str]:
    names: set[str] = set()
    for node in _walk_shallow(stmts):
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Attribute):
            base = node.func.value
            if isinstance(base, ast.Name) and node.func.attr in MUTATOR_METHODS:
                names.add(base.id)
        elif isinstance(node, ast.Assign):
            for t in node.targets:
                if isinstance(t, ast.Subscript) and isinstance(t.value, ast.Name):
                    names.add(t.value.id)
    return names


def _always_returns(stmts: list[ast.stmt]) -> bool:
    if not stmts:
        return False
    last = stmts[-1]
    if isinstance(last, (ast.Return, ast.Raise)):
        return True
    if isinstance(last, ast.If):
        return bool(last.orelse) and _always_returns(last.body) and _always_returns(last.orelse)
    if isinstance(last, ast.Try):
        blocks = [last.body] + [h.body for h in last.handlers]
        return all(_always_returns(b) for b in blocks)
    return False


class _Builder:
    def __init__(self, func: FunctionAst, user_types: UserTypeSet, module: ModuleAst) -> None:
        self.func = func
        self.user_types = user_types
        self.module = module
        self.tdg = Tdg(qname=func.qualified_name)
        self.defs: dict[str, str] = {}
        self.orders: dict[str, int] = {}
        self.counter = 0
        self.locals = set(func.params) | _assigned_names(func.node.body)
        # Bare callee names resolve to nested functions first, then module level.
        self.local_functions = {
            f.name: f.qualified_name
            for f in module.functions
            if "." not in f.qualified_name
        }
        self.local_functions.update(
            {
                f.name: f.qualified_name
                for f in module.functions
                if f.qualified_name.startswith(func.qualified_name + ".")
            }
        )

    # --- node helpers -----------------------------------------------------

    def _symbol(self, var: str, line: int, ctx: str) -> TdgNode:
        order = self.orders.get(var, 0)
        self.orders[var] = order + 1
        node = TdgNode(
            id=f"{var}{order}({line})",
            kind=NodeKind.SYMBOL,
            var=var,
            occurrence=order,
            ctx=ctx,
            line=line,
        )
        return self.tdg.add_node(node)

    def _expr(self, op: str, line: int, info: dict[str, Any] | None = None,
              cands: CandidateSet | None = None, axiom: bool = False) -> TdgNode:
        self.counter += 1
        node = TdgNode(
            id=f"e{self.counter}:{op}({line})",
            kind=NodeKind.EXPR,
            op=op,
            info=info or {},
            line=line,
            axiom=axiom,
        )
        if cands is not None:
            node.cands = cands
        return self.tdg.add_node(node)

    def _merge(self, line: int, loop: bool, var: str) -> TdgNode:
        self.counter += 1
        node = TdgNode(
            id=f"m{self.counter}:{var}({line})", kind=NodeKind.MERGE, loop=loop, line=line, var=var
        )
        return self.tdg.add_node(node)

    def _branch(self, line: int, var: str, types: tuple[PyType, ...],
                assertive: bool = False) -> TdgNode:
        self.counter += 1
        node = TdgNode(
            id=f"b{self.counter}:{var}({line})",
            kind=NodeKind.BRANCH,
            guard=(var, types),
            line=line,
            var=var,
            info={"assertive": assertive} if assertive else {},
        )
        return self.tdg.add_node(node)

    def _opaque(self, line: int) -> TdgNode:
        return self._expr("Opaque", line)

    def _read(self, name: str, line: int) -> TdgNode:
        node = self._symbol(name, line, "read")
        prev = self.defs.get(name)
        if prev is not None:
            self.tdg.add_edge(prev, node.id)
        self.defs[name] = node.id
        return node

    def _write(self, name: str, line: int, source: TdgNode) -> TdgNode:
        node = self._symbol(name, line, "write")
        self.tdg.add_edge(source.id, node.id)
        self.defs[name] = node.id
        return node

    # --- expressions --------------------------------------------------------

    def visit_expr(self, node: ast.expr) -> TdgNode:
        line = getattr(node, "lineno", 0)
        if isinstance(node, ast.Constant):
            t = _constant_type(node.value)
            if t is None:
                return self._opaque(line)
            return self._expr(
                "Constant", line, {"value": repr(node.value)},
                CandidateSet.of([t]), axiom=True,
            )
        if isinstance(node, ast.JoinedStr):
            for v in node.values:
                if isinstance(v, ast.FormattedValue):
                    self.visit_expr(v.value)
            return self._expr("Constant", line, {"value": "f-string"},
                              CandidateSet.of([elementary("str")]), axiom=True)
        if isinstance(node, ast.Name):
            if node.id in self.locals:
                return self._read(node.id, line)
            if node.id in self.user_types:
                return self._expr("ClassRef", line, {"name": node.id})
            return self._expr("ExternalName", line, {"name": node.id})
        if isinstance(node, ast.BinOp):
            return self._binop(node)
        if isinstance(node, ast.UnaryOp):
            operand = self.visit_expr(node.operand)
            op = {
                ast.Not: "Not", ast.Invert: "Invert",
                ast.USub: "UnaryNumeric", ast.UAdd: "UnaryNumeric",
            }[type(node.op)]
            out = self._expr(op, line)
            self.tdg.add_edge(operand.id, out.id)
            return out
        if isinstance(node, ast.BoolOp):
            inputs = [self.visit_expr(v) for v in node.values]
            out = self._expr("BoolOp", line)
            for i in inputs:
                self.tdg.add_edge(i.id, out.id)
            return out
        if isinstance(node, ast.Compare):
            ops = {
                ast.Lt: "OrderCompare", ast.LtE: "OrderCompare",
                ast.Gt: "OrderCompare", ast.GtE: "OrderCompare",
                ast.Eq: "EqCompare", ast.NotEq: "EqCompare",
                ast.Is: "EqCompare", ast.IsNot: "EqCompare",
                ast.In: "Membership", ast.NotIn: "Membership",
            }
            op = ops.get(type(node.ops[0]), "EqCompare")
            inputs = [self.visit_expr(node.left)] + [self.visit_expr(c) for c in node.comparators]
            out = self._expr(op, line)
            for i in inputs:
                self.tdg.add_edge(i.id, out.id)
            return out
        if isinstance(node, (ast.Tuple, ast.List, ast.Set)):
            op = {ast.Tuple: "TupleLit", ast.List: "ListLit", ast.Set: "SetLit"}[type(node)]
            inputs = [self.visit_expr(e) for e in node.elts if not isinstance(e, ast.Starred)]
            out = self._expr(op, line, {"size": len(inputs)})
            for i in inputs:
                self.tdg.add_edge(i.id, out.id)
            return out
        if isinstance(node, ast.Dict):
            out = self._expr("DictLit", line, {"size": len(node.keys)})
            for k, v in zip(node.keys, node.values):
                if k is None:  # **expansion
                    continue
                kn = self.visit_expr(k)
                vn = self.visit_expr(v)
                self.tdg.add_edge(kn.id, out.id)
                self.tdg.add_edge(vn.id, out.id)
            return out
        if isinstance(node, (ast.ListComp, ast.SetComp, ast.GeneratorExp)):
            op = {
                ast.ListComp: "ListComp", ast.SetComp: "SetComp",
                ast.GeneratorExp: "GeneratorComp",
            }[type(node)]
            self._comprehension_generators(node.generators)
            elt = self.visit_expr(node.elt)
            out = self._expr(op, line)
            self.tdg.add_edge(elt.id, out.id)
            return out
        if isinstance(node, ast.DictComp):
            self._comprehension_generators(node.generators)
            k = self.visit_expr(node.key)
            v = self.visit_expr(node.value)
            out = self._expr("DictComp", line)
            self.tdg.add_edge(k.id, out.id)
            self.tdg.add_edge(v.id, out.id)
            return out
        if isinstance(node, ast.Call):
            return self._call(node)
        if isinstance(node, ast.Subscript):
            return self._subscript(node)
        if isinstance(node, ast.Attribute):
            return self._attribute(node)
        if isinstance(node, ast.Lambda):
            return self._expr("Lambda", line, cands=CandidateSet.of([generic("Callable")]),
                              axiom=True)
        if isinstance(node, ast.IfExp):
            self.visit_expr(node.test)
            a = self.visit_expr(node.body)
            b = self.visit_expr(node.orelse)
            out = self._expr("IfExp", line)
            self.tdg.add_edge(a.id, out.id)
            self.tdg.add_edge(b.id, out.id)
            return out
        if isinstance(node, ast.NamedExpr):
            value = self.visit_expr(node.value)
            self._write(node.target.id, line, value)
            return value
        if isinstance(node, ast.Starred):
            return self.visit_expr(node.value)
        return self._opaque(line)

    def _binop(self, node: ast.BinOp) -> TdgNode:
        ops = {
            ast.Add: "Add", ast.Sub: "Sub", ast.Mult: "Mult",
            ast.Div: "Numeric", ast.Mod: "Numeric", ast.FloorDiv: "Numeric",
            ast.LShift: "Shift", ast.RShift: "Shift",
            ast.BitOr: "Bitwise", ast.BitAnd: "Bitwise", ast.BitXor: "Bitwise",
        }
        op = ops.get(type(node.op), "Opaque")
        left = self.visit_expr(node.left)
        right = self.visit_expr(node.right)
        out = self._expr(op, node.lineno)
        self.tdg.add_edge(left.id, out.id)
        self.tdg.add_edge(right.id, out.id)
        return out

    def _comprehension_generators(self, generators: list[ast.comprehension]) -> None:
        for gen in generators:
            iter_node = self.visit_expr(gen.iter)
            elem = self._expr("ForElement", getattr(gen.iter, "lineno", 0))
            self.tdg.add_edge(iter_node.id, elem.id)
            self._bind_target(gen.target, elem)
            for cond in gen.ifs:
                self.visit_expr(cond)

    def _bind_target(self, target: ast.expr, source: TdgNode) -> None:
        line = getattr(target, "lineno", source.line)
        if isinstance(target, ast.Name):
            self._write(target.id, line, source)
        elif isinstance(target, (ast.Tuple, ast.List)):
            for idx, elt in enumerate(target.elts):
                unpack = self._expr("Unpack", line, {"index": idx, "size": len(target.elts)})
                self.tdg.add_edge(source.id, unpack.id)
                self._bind_target(elt, unpack)
        elif isinstance(target, ast.Subscript):
            self._subscript_store(target, source)
        elif isinstance(target, ast.Attribute):
            self._attribute_store(target, source)
        # Starred and stranger targets fall through silently.

    def _callee_name(self, func: ast.expr) -> tuple[str, str | None]:
        """Classify a callee: ('name'|'dotted'|'method'|'other', text)."""
        if isinstance(func, ast.Name):
            return ("name", func.id)
        if isinstance(func, ast.Attribute):
            base = func.value
            if isinstance(base, ast.Name):
                if base.id in self.locals:
                    return ("method", func.attr)
                mod = (self.user_types.module_aliases.get(base.id, base.id)
                       if self.user_types else base.id)
                return ("dotted", f"{mod}.{func.attr}")
            if isinstance(base, ast.Attribute) and isinstance(base.value, ast.Name):
                return ("dotted", f"{base.value.id}.{base.attr}.{func.attr}")
        return ("other", None)

    def _call(self, node: ast.Call) -> TdgNode:
        line = node.lineno
        kind, name = self._callee_name(node.func)

        # isinstance: always bool; its guard role is handled at the If site.
        # The type argument is not an expression to type, so it is skipped.
        if kind == "name" and name == "isinstance":
            if node.args:
                self.visit_expr(node.args[0])
            return self._expr("Constant", line, {"value": "isinstance"},
                              CandidateSet.of([elementary("bool")]), axiom=True)

        # Container mutators on local variables.
        if kind == "method" and isinstance(node.func, ast.Attribute):
            base = node.func.value
            if (
                isinstance(base, ast.Name)
                and base.id in self.locals
                and node.func.attr in MUTATOR_METHODS
            ):
                base_read = self._read(base.id, line)
                args = [self.visit_expr(a) for a in node.args]
                mut = self._expr(
                    "Mutate", line,
                    {"method": node.func.attr, "mode": MUTATOR_METHODS[node.func.attr]},
                )
                self.tdg.add_edge(base_read.id, mut.id)
                for a in args:
                    self.tdg.add_edge(a.id, mut.id)
                self._write(base.id, line, mut)
                return self._expr("NoneValue", line, cands=CandidateSet.of([NONE_TYPE]),
                                  axiom=True)

        arg_nodes = [self.visit_expr(a) for a in node.args]
        arg_nodes += [self.visit_expr(kw.value) for kw in node.keywords]

        if kind == "name" and name is not None:
            if name in self.user_types:
                out = self._expr("ClassInstantiation", line, {"class": name})
                for a in arg_nodes:
                    self.tdg.add_edge(a.id, out.id)
                return out
            if name in self.locals:
                # Calling a local variable: nested function or callable value.
                callee_q = self.local_functions.get(name)
                base_read = self._read(name, line)
                out = self._expr("Call", line, {"callee": name})
                self.tdg.add_edge(base_read.id, out.id)
                for a in arg_nodes:
                    self.tdg.add_edge(a.id, out.id)
                self.tdg.call_sites.append(
                    CallSite(self.func.qualified_name, out.id, callee_q or name,
                             tuple(a.id for a in arg_nodes))
                )
                return out
            out = self._expr("Call", line, {"callee": name})
            for a in arg_nodes:
                self.tdg.add_edge(a.id, out.id)
            self.tdg.call_sites.append(
                CallSite(self.func.qualified_name, out.id, name, tuple(a.id for a in arg_nodes))
            )
            return out

        if kind == "dotted" and name is not None:
            out = self._expr("Call", line, {"callee": name})
            for a in arg_nodes:
                self.tdg.add_edge(a.id, out.id)
            self.tdg.call_sites.append(
                CallSite(self.func.qualified_name, out.id, name, tuple(a.id for a in arg_nodes))
            )
            return out

        if kind == "method" and isinstance(node.func, ast.Attribute):
            base = node.func.value
            if isinstance(base, ast.Name) and base.id == "self" and self.func.owner_class:
                base_read = self._read(base.id, line)
                callee_q = f"{self.func.owner_class}.{node.func.attr}"
                out = self._expr("Call", line, {"callee": callee_q})
                self.tdg.add_edge(base_read.id, out.id)
                for a in arg_nodes:
                    self.tdg.add_edge(a.id, out.id)
                self.tdg.call_sites.append(
                    CallSite(self.func.qualified_name, out.id, callee_q,
                             tuple(a.id for a in arg_nodes))
                )
                return out
            base_node = self.visit_expr(base)
            out = self._expr("MethodCall", line, {"method": node.func.attr})
            self.tdg.add_edge(base_node.id, out.id)
            for a in arg_nodes:
                self.tdg.add_edge(a.id, out.id)
            return out

        callee_node = self.visit_expr(node.func)
        out = self._expr("Call", line, {"callee": None})
        self.tdg.add_edge(callee_node.id, out.id)
        for a in arg_nodes:
            self.tdg.add_edge(a.id, out.id)
        return out

    def _subscript(self, node: ast.Subscript) -> TdgNode:
        base = self.visit_expr(node.value)
        is_slice = isinstance(node.slice, ast.Slice)
        out = self._expr("Subscript", node.lineno, {"is_slice": is_slice})
        self.tdg.add_edge(base.id, out.id)
        if is_slice:
            for part in (node.slice.lower, node.slice.upper, node.slice.step):
                if part is not None:
                    idx = self.visit_expr(part)
                    self.tdg.add_edge(idx.id, out.id)
        else:
            idx = self.visit_expr(node.slice)
            self.tdg.add_edge(idx.id, out.id)
        return out

    def _attribute(self, node: ast.Attribute) -> TdgNode:
        if (
            isinstance(node.value, ast.Name)
            and node.value.id == "self"
            and self.func.owner_class
        ):
            base = self._read(node.value.id, node.lineno)
            out = self._expr(
                "SelfAttr", node.lineno,
                {"class": self.func.owner_class, "attr": node.attr},
            )
            self.tdg.add_edge(base.id, out.id)
            return out
        if isinstance(node.value, ast.Name) and node.value.id not in self.locals:
            return self._expr("ExternalName", node.lineno,
                              {"name": f"{node.value.id}.{node.attr}"})
        base = self.visit_expr(node.value)
        out = self._expr("Attribute", node.lineno, {"attr": node.attr})
        self.tdg.add_edge(base.id, out.id)
        return out

    def _subscript_store(self, target: ast.Subscript, value: TdgNode) -> None:
        if not isinstance(target.value, ast.Name) or target.value.id not in self.locals:
            self.visit_expr(target.value)
            self.visit_expr(target.slice)
            return
        name = target.value.id
        line = target.lineno
        base_read = self._read(name, line)
        key = self.visit_expr(target.slice)
        mut = self._expr("Mutate", line, {"method": "__setitem__", "mode": "store_pair"})
        self.tdg.add_edge(base_read.id, mut.id)
        self.tdg.add_edge(key.id, mut.id)
        self.tdg.add_edge(value.id, mut.id)
        self._write(name, line, mut)

    def _attribute_store(self, target: ast.Attribute, value: TdgNode) -> None:
        if (
            isinstance(target.value, ast.Name)
            and target.value.id == "self"
            and self.func.owner_class
        ):
            store = self._expr(
                "SelfAttrStore", target.lineno,
                {"class": self.func.owner_class, "attr": target.attr},
            )
            self.tdg.add_edge(value.id, store.id)
            base = self._read(target.value.id, target.lineno)
            self.tdg.add_edge(base.id, store.id)
            self.tdg.self_attr_stores.append((self.func.owner_class, target.attr, store.id))
            return
        if isinstance(target.value, ast.Name) and target.value.id in self.locals:
            self._read(target.value.id, target.lineno)

    # --- statements ---------------------------------------------------------

    def visit_body(self, stmts: list[ast.stmt]) -> None:
        for stmt in stmts:
            self.visit_stmt(stmt)

    def visit_stmt(self, stmt: ast.stmt) -> None:
        line = getattr(stmt, "lineno", 0)
        if isinstance(stmt, ast.Assign):
            value = self.visit_expr(stmt.value)
            for target in stmt.targets:
                self._bind_target(target, value)
        elif isinstance(stmt, ast.AnnAssign):
            if stmt.value is not None:
                value = self.visit_expr(stmt.value)
                self._bind_target(stmt.target, value)
        elif isinstance(stmt, ast.AugAssign):
            if isinstance(stmt.target, ast.Name):
                read = self._read(stmt.target.id, line)
                value = self.visit_expr(stmt.value)
                ops = {
                    ast.Add: "Add", ast.Sub: "Sub", ast.Mult: "Mult",
                    ast.Div: "Numeric", ast.Mod: "Numeric", ast.FloorDiv: "Numeric",
                    ast.LShift: "Shift", ast.RShift: "Shift",
                    ast.BitOr: "Bitwise", ast.BitAnd: "Bitwise", ast.BitXor: "Bitwise",
                }
                out = self._expr(ops.get(type(stmt.op), "Opaque"), line)
                self.tdg.add_edge(read.id, out.id)
                self.tdg.add_edge(value.id, out.id)
                self._write(stmt.target.id, line, out)
            else:
                self.visit_expr(stmt.value)
        elif isinstance(stmt, ast.Return):
            if stmt.value is None:
                value = self._expr("Constant", line, {"value": "None"},
                                   CandidateSet.of([NONE_TYPE]), axiom=True)
            else:
                value = self.visit_expr(stmt.value)
            node = self._write("return", line, value)
            self.tdg.return_slots.append(node.id)
        elif isinstance(stmt, ast.Expr):
            self.visit_expr(stmt.value)
        elif isinstance(stmt, ast.If):
            self._if(stmt)
        elif isinstance(stmt, (ast.For, ast.AsyncFor)):
            self._for(stmt)
        elif isinstance(stmt, ast.While):
            self._while(stmt)
        elif isinstance(stmt, (ast.With, ast.AsyncWith)):
            for item in stmt.items:
                ctx_node = self.visit_expr(item.context_expr)
                if item.optional_vars is not None:
                    self._bind_target(item.optional_vars, self._opaque(line))
                del ctx_node
            self.visit_body(stmt.body)
        elif isinstance(stmt, ast.Try):
            self.visit_body(stmt.body)
            for handler in stmt.handlers:
                if handler.name:
                    self._write(handler.name, handler.lineno, self._opaque(handler.lineno))
                self.visit_body(handler.body)
            self.visit_body(stmt.orelse)
            self.visit_body(stmt.finalbody)
        elif isinstance(stmt, (ast.Raise, ast.Assert)):
            for child in ast.iter_child_nodes(stmt):
                if isinstance(child, ast.expr):
                    self.visit_expr(child)
        elif isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
            node = self._expr("FunctionRef", line, {"name": stmt.name},
                              CandidateSet.of([generic("Callable")]), axiom=True)
            self._write(stmt.name, line, node)
        elif isinstance(stmt, (ast.Pass, ast.Break, ast.Continue, ast.Global,
                               ast.Nonlocal, ast.Import, ast.ImportFrom, ast.ClassDef,
                               ast.Delete)):
            pass
        else:
            # Unsupported statement kinds stay opaque but their expressions
            # are still scanned for reads.
            for child in ast.iter_child_nodes(stmt):
                if isinstance(child, ast.expr):
                    self.visit_expr(child)

    def _extract_guard(self, test: ast.expr) -> tuple[str, tuple[PyType, ...]] | None:
        if (
            isinstance(test, ast.Call)
            and isinstance(test.func, ast.Name)
            and test.func.id == "isinstance"
            and len(test.args) == 2
            and isinstance(test.args[0], ast.Name)
            and test.args[0].id in self.locals
        ):
            types = _guard_types(test.args[1], self.user_types)
            if types:
                return (test.args[0].id, types)
        return None

    def _extract_not_guard(self, test: ast.expr) -> tuple[str, tuple[PyType, ...]] | None:
        if isinstance(test, ast.UnaryOp) and isinstance(test.op, ast.Not):
            return self._extract_guard(test.operand)
        return None

    def _if(self, stmt: ast.If) -> None:
        guard = self._extract_guard(stmt.test)
        self.visit_expr(stmt.test)
        snapshot = dict(self.defs)

        # True context.
        self.defs = dict(snapshot)
        if guard is not None:
            var, types = guard
            prev = self.defs.get(var)
            if prev is not None:
                branch = self._branch(stmt.lineno, var, types)
                self.tdg.add_edge(prev, branch.id)
                self.defs[var] = branch.id
        assigned_true = _assigned_names(stmt.body) | _mutated_names(stmt.body)
        self.visit_body(stmt.body)
        defs_true = dict(self.defs)

        # False context: the guard leaves the variable unchanged.
        self.defs = dict(snapshot)
        assigned_false = _assigned_names(stmt.orelse) | _mutated_names(stmt.orelse)
        self.visit_body(stmt.orelse)
        defs_false = dict(self.defs)

        merged = dict(snapshot)
        for var in sorted(assigned_true | assigned_false):
            t_def = defs_true.get(var) if var in assigned_true else None
            f_def = defs_false.get(var) if var in assigned_false else None
            pre = snapshot.get(var)
            inputs = [d for d in (t_def, f_def) if d]
            if len(inputs) == 1 and pre:
                inputs.append(pre)
            if len(inputs) >= 2:
                merge = self._merge(stmt.lineno, loop=False, var=var)
                for i in inputs:
                    self.tdg.add_edge(i, merge.id)
                merged[var] = merge.id
            elif len(inputs) == 1:
                merged[var] = inputs[0]
        self.defs = merged

        # Guard clause: `if not isinstance(v, T): raise/return` narrows v
        # to T in the continuation (the failing path never falls through).
        not_guard = self._extract_not_guard(stmt.test)
        if not_guard is not None and not stmt.orelse and _always_returns(stmt.body):
            var, types = not_guard
            prev = self.defs.get(var)
            if prev is not None:
                # Assertive: the check types the variable even from blank.
                branch = self._branch(stmt.lineno, var, types, assertive=True)
                self.tdg.add_edge(prev, branch.id)
                self.defs[var] = branch.id

    def _loop_body(self, stmt, bind_target) -> None:
        carried = sorted(
            (_assigned_names(stmt.body) | _mutated_names(stmt.body)) & set(self.defs)
        )
        merges: dict[str, TdgNode] = {}
        for var in carried:
            merge = self._merge(stmt.lineno, loop=True, var=var)
            self.tdg.add_edge(self.defs[var], merge.id)
            merges[var] = merge
            self.defs[var] = merge.id
        bind_target()
        self.visit_body(stmt.body)
        for var, merge in merges.items():
            final = self.defs.get(var)
            if final is not None and final != merge.id:
                self.tdg.add_edge(final, merge.id)
        if getattr(stmt, "orelse", None):
            self.visit_body(stmt.orelse)

    def _for(self, stmt: ast.For | ast.AsyncFor) -> None:
        iter_node = self.visit_expr(stmt.iter)
        elem = self._expr("ForElement", stmt.lineno)
        self.tdg.add_edge(iter_node.id, elem.id)
        self._loop_body(stmt, lambda: self._bind_target(stmt.target, elem))

    def _while(self, stmt: ast.While) -> None:
        def bind() -> None:
            self.visit_expr(stmt.test)

        self._loop_body(stmt, bind)

    # --- top level ----------------------------------------------------------

    def build(self) -> Tdg:
        for param in self.func.params:
            node = self._symbol(param, self.func.line, "param")
            self.tdg.arg_slots[param] = node.id
            self.defs[param] = node.id
        if (
            self.func.owner_class
            and self.func.params
            and self.func.params[0] in ("self", "cls")
        ):
            first = self.tdg.nodes[self.tdg.arg_slots[self.func.params[0]]]
            first.cands = CandidateSet.of(
                [user(self.func.owner_class,
                      self.user_types.overloads(self.func.owner_class))]
            )
            first.axiom = True
        self.visit_body(self.func.node.body)
        if not _always_returns(self.func.node.body):
            none_node = self._expr(
                "Constant", self.func.line, {"value": "implicit None"},
                CandidateSet.of([NONE_TYPE]), axiom=True,
            )
            node = self._write("return", self.func.line, none_node)
            self.tdg.return_slots.append(node.id)
        return self.tdg


def build_tdg(func: FunctionAst, user_types: UserTypeSet,
              module: ModuleAst | None = None) -> Tdg:
    """Build the type dependency graph of one function."""
    module = module or ModuleAst([func], [], [], "<memory>", ast.Module(body=[], type_ignores=[]))
    return _Builder(func, user_types, module).build()


def link_functions(tdgs: dict[str, Tdg], module: ModuleAst) -> ProgramTdg:
    """Wire call sites whose callee is implemented in the same module; calls
    into recursion cycles are deferred and treated as blank."""
    program = ProgramTdg(tdgs=dict(tdgs))
    by_name: dict[str, str] = {}
    for f in module.functions:
        by_name.setdefault(f.qualified_name, f.qualified_name)
        if "." not in f.qualified_name:  # bare names resolve to module level only
            by_name.setdefault(f.name, f.qualified_name)

    resolved_sites: list[CallSite] = []
    call_graph: dict[str, set[str]] = {q: set() for q in tdgs}
    for tdg in tdgs.values():
        for site in tdg.call_sites:
            target = by_name.get(site.callee_name)
            if target is not None and target in tdgs:
                site.resolved = target
                call_graph[tdg.qname].add(target)
                resolved_sites.append(site)
        for store in tdg.self_attr_stores:
            cls, attr, node_id = store
            program.class_attr_feeds.setdefault((cls, attr), []).append((tdg.qname, node_id))

    cyclic = _cyclic_members(call_graph)
    for site in resolved_sites:
        if site.resolved == site.caller or (site.caller in cyclic and site.resolved in cyclic
                                            and _reaches(call_graph, site.resolved, site.caller)):
            program.deferred.append(site)
        else:
            program.links.append(site)
    return program


def _cyclic_members(graph: dict[str, set[str]]) -> set[str]:
    cyclic: set[str] = set()
    for start in graph:
        if _reaches(graph, start, start):
            cyclic.add(start)
    return cyclic


def _reaches(graph: dict[str, set[str]], src: str, dst: str) -> bool:
    seen: set[str] = set()
    stack = list(graph.get(src, ()))
    while stack:
        cur = stack.pop()
        if cur == dst:
            return True
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(graph.get(cur, ()))
    return False


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def export_dot(tdg: Tdg) -> str:
    """Render the graph as a DOT digraph with deterministic ordering."""
    lines = [f'digraph "{_dot_escape(tdg.qname)}" {{']
    shapes = {
        NodeKind.SYMBOL: "ellipse",
        NodeKind.EXPR: "box",
        NodeKind.BRANCH: "diamond",
        NodeKind.MERGE: "invtriangle",
    }
    for node in tdg.nodes.values():
        cands = node.cands.render_slot() or ("blank" if node.cands.is_blank else "empty")
        parts = [node.id, node.kind.value + (f":{node.op}" if node.op else "")]
        if node.guard:
            var, types = node.guard
            parts.append(f"isinstance({var}, {'|'.join(str(t) for t in types)})")
        parts.append(cands)
        label = "\\n".join(_dot_escape(p) for p in parts)
        lines.append(
            f'  "{_dot_escape(node.id)}" [shape={shapes[node.kind]}, label="{label}"];'
        )
    for src, dst in tdg.edges:
        lines.append(f'  "{_dot_escape(src)}" -> "{_dot_escape(dst)}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
