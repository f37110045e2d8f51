"""Source-file frontend: ASTs, user-defined type collection, annotation
stripping for evaluation corpora."""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .types_core import ELEMENTARY_NAMES, GENERIC_CTORS

#: Dunder methods that redefine operator behavior. Arithmetic, bitwise and
#: comparison operators plus their reflected/in-place variants, and the
#: container protocol.
OPERATOR_DUNDERS = frozenset(
    {
        "__add__", "__sub__", "__mul__", "__truediv__", "__floordiv__",
        "__mod__", "__divmod__", "__pow__", "__matmul__",
        "__lshift__", "__rshift__", "__and__", "__or__", "__xor__",
        "__radd__", "__rsub__", "__rmul__", "__rtruediv__", "__rfloordiv__",
        "__rmod__", "__rdivmod__", "__rpow__", "__rmatmul__",
        "__rlshift__", "__rrshift__", "__rand__", "__ror__", "__rxor__",
        "__iadd__", "__isub__", "__imul__", "__itruediv__", "__ifloordiv__",
        "__imod__", "__ipow__", "__imatmul__",
        "__ilshift__", "__irshift__", "__iand__", "__ior__", "__ixor__",
        "__neg__", "__pos__", "__invert__",
        "__lt__", "__le__", "__gt__", "__ge__", "__eq__", "__ne__",
        "__getitem__", "__setitem__", "__delitem__", "__contains__",
        "__len__", "__iter__",
    }
)

_RESERVED_TYPE_NAMES = set(ELEMENTARY_NAMES) | set(GENERIC_CTORS) | {
    c.lower() for c in GENERIC_CTORS
} | {"None", "NoneType", "type", "object", "Any", "Optional"}


@dataclass
class FunctionAst:
    """One function (or method, or nested function) with its raw AST node."""

    name: str
    qualified_name: str
    params: tuple[str, ...]
    node: ast.FunctionDef | ast.AsyncFunctionDef
    line: int
    col: int
    owner_class: str | None = None


@dataclass
class ClassAst:
    name: str
    qualified_name: str
    bases: tuple[str, ...]
    methods: tuple[str, ...]
    node: ast.ClassDef
    line: int
    col: int


@dataclass
class ImportRecord:
    module: str
    names: tuple[tuple[str, str | None], ...]  # (imported name, alias); empty = whole module
    alias: str | None
    line: int


@dataclass
class ModuleAst:
    functions: list[FunctionAst]
    classes: list[ClassAst]
    imports: list[ImportRecord]
    source_path: str
    tree: ast.Module


@dataclass
class ClassInfo:
    name: str
    qualified_name: str
    source_path: str | None  # None: unknown origin
    overloads_operators: bool


@dataclass
class UserTypeSet:
    """All user-defined type names visible to a module, keyed by name."""

    entries: dict[str, ClassInfo] = field(default_factory=dict)
    opaque_modules: set[str] = field(default_factory=set)
    module_aliases: dict[str, str] = field(default_factory=dict)

    def add(self, info: ClassInfo) -> None:
        if info.name in _RESERVED_TYPE_NAMES:
            return
        self.entries[info.name] = info

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def overloads(self, name: str) -> bool:
        info = self.entries.get(name)
        return bool(info and info.overloads_operators)

    def names(self) -> set[str]:
        return set(self.entries)


@dataclass
class GroundTruthRecord:
    function: str  # qualified name of the enclosing scope ("" at module level)
    kind: str  # argument | return | local
    name: str
    annotation: str
    line: int
    frequency_bucket: str | None = None


def _base_name(node: ast.expr) -> str:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        return node.attr
    if isinstance(node, ast.Subscript):
        return _base_name(node.value)
    return ast.dump(node)


def _param_names(args: ast.arguments) -> tuple[str, ...]:
    names = [a.arg for a in args.posonlyargs + args.args]
    if args.vararg:
        names.append(args.vararg.arg)
    names.extend(a.arg for a in args.kwonlyargs)
    if args.kwarg:
        names.append(args.kwarg.arg)
    return tuple(names)


def parse_module(source: str, path: str = "<memory>") -> ModuleAst:
    """Parse a complete file. Top-level syntax errors propagate as the
    built-in SyntaxError (carrying line/column); constructs the TDG builder
    does not understand are simply left for it to treat as opaque."""
    tree = ast.parse(source, filename=path)
    functions: list[FunctionAst] = []
    classes: list[ClassAst] = []
    imports: list[ImportRecord] = []

    def visit(body: Iterable[ast.stmt], prefix: str, owner: str | None) -> None:
        for node in body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                qname = f"{prefix}{node.name}"
                functions.append(
                    FunctionAst(
                        name=node.name,
                        qualified_name=qname,
                        params=_param_names(node.args),
                        node=node,
                        line=node.lineno,
                        col=node.col_offset,
                        owner_class=owner,
                    )
                )
                visit(node.body, f"{qname}.", None)
            elif isinstance(node, ast.ClassDef):
                qname = f"{prefix}{node.name}"
                methods = tuple(
                    n.name
                    for n in node.body
                    if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))
                )
                classes.append(
                    ClassAst(
                        name=node.name,
                        qualified_name=qname,
                        bases=tuple(_base_name(b) for b in node.bases),
                        methods=methods,
                        node=node,
                        line=node.lineno,
                        col=node.col_offset,
                    )
                )
                visit(node.body, f"{qname}.", node.name)
            elif isinstance(node, ast.Import):
                for a in node.names:
                    imports.append(ImportRecord(a.name, (), a.asname, node.lineno))
            elif isinstance(node, ast.ImportFrom):
                mod = "." * node.level + (node.module or "")
                names = tuple((a.name, a.asname) for a in node.names)
                imports.append(ImportRecord(mod, names, None, node.lineno))

    visit(tree.body, "", None)
    return ModuleAst(functions, classes, imports, path, tree)


def detect_operator_overloading(class_def: ClassAst) -> bool:
    """True iff the class defines at least one operator dunder."""
    return any(m in OPERATOR_DUNDERS for m in class_def.methods)


def _is_namedtuple_class(node: ast.ClassDef) -> bool:
    return any(_base_name(b) == "NamedTuple" for b in node.bases)


def _namedtuple_assignments(tree: ast.Module) -> list[str]:
    found = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Assign) and isinstance(node.value, ast.Call):
            callee = _base_name(node.value.func)
            if callee == "namedtuple":
                for target in node.targets:
                    if isinstance(target, ast.Name):
                        found.append(target.id)
    return found


def _resolve_module(module: str, search_paths: list[str]) -> Path | None:
    if module.startswith("."):
        module = module.lstrip(".")
    rel = module.replace(".", "/")
    for base in search_paths:
        for candidate in (Path(base) / f"{rel}.py", Path(base) / rel / "__init__.py"):
            if candidate.is_file():
                return candidate
    return None


def collect_user_types(module: ModuleAst, search_paths: list[str] | None = None) -> UserTypeSet:
    """All user-defined types visible to the module: classes defined in it,
    names imported from packages, and (for resolvable whole-package imports)
    every class and named tuple found in the package source. Unresolvable
    imports never fail; they leave name-only entries or opaque modules."""
    search_paths = list(search_paths or [])
    uts = UserTypeSet()

    def harvest(mod: ModuleAst, path: str | None) -> None:
        for cls in mod.classes:
            uts.add(
                ClassInfo(
                    name=cls.name,
                    qualified_name=cls.qualified_name,
                    source_path=path,
                    overloads_operators=detect_operator_overloading(cls),
                )
            )
        for name in _namedtuple_assignments(mod.tree):
            uts.add(ClassInfo(name, name, path, False))

    harvest(module, module.source_path)

    for imp in module.imports:
        resolved = _resolve_module(imp.module, search_paths)
        target: ModuleAst | None = None
        if resolved is not None:
            try:
                target = parse_module(resolved.read_text(encoding="utf-8"), str(resolved))
            except SyntaxError:
                target = None
        if imp.names:  # from module import name, ...
            for name, asname in imp.names:
                local = asname or name
                info = None
                if target is not None:
                    for cls in target.classes:
                        if cls.name == name:
                            info = ClassInfo(
                                local,
                                cls.qualified_name,
                                str(resolved),
                                detect_operator_overloading(cls),
                            )
                            break
                if info is None:
                    # Heuristic: only capitalized names look like classes when
                    # the source is unresolvable.
                    if target is None and (name[:1].isupper() or name in _RESERVED_TYPE_NAMES):
                        info = ClassInfo(local, f"{imp.module}.{name}", None, False)
                if info is not None:
                    uts.add(info)
        else:  # import module [as alias]
            local = imp.alias or imp.module.split(".")[0]
            uts.module_aliases[local] = imp.module
            if target is not None:
                harvest(target, str(resolved))
            else:
                uts.opaque_modules.add(imp.module)
    return uts


class _AnnotationStripper(ast.NodeTransformer):
    def __init__(self) -> None:
        self.records: list[GroundTruthRecord] = []
        self._scope: list[str] = []

    def _qname(self) -> str:
        return ".".join(self._scope)

    def _record(self, kind: str, name: str, annotation: ast.expr, line: int) -> None:
        # String-literal annotations (forward references) contribute their text.
        if isinstance(annotation, ast.Constant) and isinstance(annotation.value, str):
            text = annotation.value
        else:
            text = ast.unparse(annotation)
        self.records.append(GroundTruthRecord(self._qname(), kind, name, text, line))

    def _strip_args(self, node: ast.FunctionDef | ast.AsyncFunctionDef) -> None:
        args = node.args
        for a in args.posonlyargs + args.args + args.kwonlyargs + list(
            filter(None, [args.vararg, args.kwarg])
        ):
            if a.annotation is not None:
                self._record("argument", a.arg, a.annotation, a.lineno)
                a.annotation = None
        if node.returns is not None:
            self._record("return", "return", node.returns, node.lineno)
            node.returns = None

    def visit_FunctionDef(self, node: ast.FunctionDef):
        return self._function(node)

    def visit_AsyncFunctionDef(self, node: ast.AsyncFunctionDef):
        return self._function(node)

    def _function(self, node):
        self._scope.append(node.name)
        self._strip_args(node)
        self.generic_visit(node)
        self._scope.pop()
        return node

    def visit_ClassDef(self, node: ast.ClassDef):
        self._scope.append(node.name)
        self.generic_visit(node)
        self._scope.pop()
        return node

    def visit_AnnAssign(self, node: ast.AnnAssign):
        name = ast.unparse(node.target)
        self._record("local", name, node.annotation, node.lineno)
        if node.value is None:
            return ast.Pass()
        assign = ast.Assign(targets=[node.target], value=node.value)
        return ast.copy_location(assign, node)


def count_annotations(source: str) -> int:
    """Independent annotation counter used to cross-check strip_annotations."""
    tree = ast.parse(source)
    n = 0
    for node in ast.walk(tree):
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            args = node.args
            for a in args.posonlyargs + args.args + args.kwonlyargs + list(
                filter(None, [args.vararg, args.kwarg])
            ):
                if a.annotation is not None:
                    n += 1
            if node.returns is not None:
                n += 1
        elif isinstance(node, ast.AnnAssign):
            n += 1
    return n


def strip_annotations(source: str) -> tuple[str, list[GroundTruthRecord]]:
    """Remove every parameter/return/assignment annotation, returning the
    cleaned source plus one ground-truth record per removed annotation."""
    tree = ast.parse(source)
    stripper = _AnnotationStripper()
    stripped = stripper.visit(tree)
    ast.fix_missing_locations(stripped)
    return ast.unparse(stripped), stripper.records
