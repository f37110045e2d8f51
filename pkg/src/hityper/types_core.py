"""Type algebra: representation, parsing/rendering, and set operations.

The type universe is deliberately closed: five elementary types, seven
generic constructors, user-defined classes (with an operator-overloading
flag), None and type. There is no Any and no object; "unknown" is expressed
by a blank candidate set, never by a type value.

Generic parameters are ordered and may be heterogeneous: a list that
accumulates ints and Placeholders is ``List[int, Placeholder]``, not
``List[Union[int, Placeholder]]``. Dict parameters alternate key/value.
Callable parameters are the argument types followed by the return type.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum, auto
from typing import Iterable, Iterator, Sequence

ELEMENTARY_NAMES = ("int", "float", "str", "bool", "bytes")
GENERIC_CTORS = ("List", "Tuple", "Dict", "Set", "Callable", "Generator", "Union")

DEPTH_CAP = 5


class TypeAlgebraError(Exception):
    """Base class for type-algebra misuse errors."""


class PrecisionUndefined(TypeAlgebraError):
    """Raised when numeric precedence is asked of a non-numeric type."""


class NotIterable(TypeAlgebraError):
    """Raised when an element type is asked of a non-iterable type."""


class NotADict(TypeAlgebraError):
    """Raised when a value type is asked of a non-Dict type."""


class NotCallable(TypeAlgebraError):
    """Raised when a return type is asked of a non-Callable type."""


class TypeParseError(ValueError):
    """Annotation text that does not fit the bracketed grammar."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} (at position {position})")
        self.position = position


class TypeKind(Enum):
    ELEMENTARY = auto()
    GENERIC = auto()
    USER = auto()
    NONE = auto()
    TYPE = auto()


@dataclass(frozen=True)
class PyType:
    """One immutable type value. Build through the factory functions below;
    they normalize Unions and enforce the nesting depth cap.

    ``overloading`` is import-analysis metadata on user-defined types and is
    excluded from identity: the same class name is the same type whether or
    not its operator dunders were discovered."""

    kind: TypeKind
    name: str
    params: tuple["PyType", ...] = ()
    overloading: bool = field(default=False, compare=False)

    def __str__(self) -> str:
        return render(self)

    def __repr__(self) -> str:
        return f"PyType({render(self)})"

    @property
    def is_elementary(self) -> bool:
        return self.kind is TypeKind.ELEMENTARY

    @property
    def is_generic(self) -> bool:
        return self.kind is TypeKind.GENERIC

    @property
    def is_user(self) -> bool:
        return self.kind is TypeKind.USER

    @property
    def is_none(self) -> bool:
        return self.kind is TypeKind.NONE

    @property
    def is_overloading(self) -> bool:
        return self.kind is TypeKind.USER and self.overloading

    def depth(self) -> int:
        if not self.params:
            return 1
        return 1 + max(p.depth() for p in self.params)


NONE_TYPE = PyType(TypeKind.NONE, "None")
TYPE_TYPE = PyType(TypeKind.TYPE, "type")


def elementary(name: str) -> PyType:
    if name not in ELEMENTARY_NAMES:
        raise TypeAlgebraError(f"not an elementary type name: {name!r}")
    return PyType(TypeKind.ELEMENTARY, name)


def user(name: str, overloading: bool = False) -> PyType:
    return PyType(TypeKind.USER, name, overloading=overloading)


def _sort_key(t: PyType) -> tuple:
    rendered = render(t)
    return (1 if t.is_none else 0, rendered.lower(), rendered)


def _dedupe(params: Iterable[PyType]) -> tuple[PyType, ...]:
    seen: list[PyType] = []
    for p in params:
        if p not in seen:
            seen.append(p)
    return tuple(seen)


def _capped(t: PyType, remaining: int) -> PyType:
    if not t.is_generic or not t.params:
        return t
    if remaining <= 1:
        return PyType(TypeKind.GENERIC, t.name)
    return PyType(
        TypeKind.GENERIC, t.name, tuple(_capped(p, remaining - 1) for p in t.params)
    )


def generic(ctor: str, params: Sequence[PyType] = (), depth_cap: int = DEPTH_CAP) -> PyType:
    """Build a generic type. Union params are flattened, deduplicated and
    order-normalized (None last); set-like containers (List/Set/Generator,
    and Dict key/value pairs) carry their heterogeneous element types as a
    canonically ordered set; Tuple and Callable stay positional. Nesting
    beyond the depth cap truncates to the bare constructor."""
    if ctor not in GENERIC_CTORS:
        raise TypeAlgebraError(f"not a generic constructor: {ctor!r}")
    params = tuple(params)
    if ctor == "Union":
        flat: list[PyType] = []
        for p in params:
            if p.is_generic and p.name == "Union":
                flat.extend(p.params)
            else:
                flat.append(p)
        members = sorted(_dedupe(flat), key=_sort_key)
        if len(members) == 1:
            return members[0]
        params = tuple(members)
    elif ctor in ("List", "Set", "Generator"):
        params = tuple(sorted(_dedupe(params), key=_sort_key))
    elif ctor == "Dict" and len(params) % 2 == 0 and len(params) > 2:
        pairs = sorted(
            set(zip(params[0::2], params[1::2])),
            key=lambda kv: (_sort_key(kv[0]), _sort_key(kv[1])),
        )
        params = tuple(x for pair in pairs for x in pair)
    return _capped(PyType(TypeKind.GENERIC, ctor, params), depth_cap)


def union(members: Sequence[PyType]) -> PyType:
    return generic("Union", tuple(members))


def callable_type(args: Sequence[PyType], ret: PyType) -> PyType:
    return generic("Callable", (*args, ret))


# ---------------------------------------------------------------------------
# Rendering and parsing
# ---------------------------------------------------------------------------


def render(t: PyType) -> str:
    """Annotation text for a type. Union[x, None] renders as Optional[x]."""
    if t.kind is TypeKind.NONE:
        return "None"
    if t.kind is TypeKind.TYPE:
        return "type"
    if t.kind in (TypeKind.ELEMENTARY, TypeKind.USER):
        return t.name
    if t.name == "Union" and len(t.params) == 2 and t.params[1].is_none:
        return f"Optional[{render(t.params[0])}]"
    if t.name == "Callable" and t.params:
        *args, ret = t.params
        inner = ", ".join(render(a) for a in args)
        return f"Callable[[{inner}], {render(ret)}]"
    if not t.params:
        return t.name
    return f"{t.name}[{', '.join(render(p) for p in t.params)}]"


_TOKEN_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*|\[|\]|,")


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens: list[tuple[str, int]] = []
        pos = 0
        for m in _TOKEN_RE.finditer(text):
            between = text[pos : m.start()]
            if between.strip():
                raise TypeParseError(f"unexpected {between.strip()!r}", pos)
            self.tokens.append((m.group(0), m.start()))
            pos = m.end()
        if text[pos:].strip():
            raise TypeParseError(f"unexpected {text[pos:].strip()!r}", pos)
        self.i = 0

    def peek(self) -> tuple[str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def next(self) -> tuple[str, int]:
        tok = self.peek()
        if tok is None:
            raise TypeParseError("unexpected end of annotation", len(self.text))
        self.i += 1
        return tok

    def expect(self, value: str) -> None:
        tok, pos = self.next()
        if tok != value:
            raise TypeParseError(f"expected {value!r}, got {tok!r}", pos)

    def parse_type(self) -> PyType:
        tok, pos = self.next()
        if tok in ("[", "]", ","):
            raise TypeParseError(f"expected a type name, got {tok!r}", pos)
        return self._named(tok, pos)

    def _named(self, name: str, pos: int) -> PyType:
        base = name.split(".")[-1]
        if base in ("None", "NoneType"):
            return NONE_TYPE
        if base == "type" or base == "Type":
            return TYPE_TYPE
        if base in ELEMENTARY_NAMES:
            return elementary(base)
        lowered_ctors = {c.lower(): c for c in GENERIC_CTORS}
        ctor = lowered_ctors.get(base.lower())
        if base == "Optional":
            self.expect("[")
            inner = self.parse_type()
            self.expect("]")
            return union((inner, NONE_TYPE))
        if base == "Callable" or base == "callable":
            return self._callable()
        if ctor is not None:
            params = self._bracket_params()
            return generic(ctor, params)
        # Anything unrecognized is a user-defined name.
        if self.peek() and self.peek()[0] == "[":
            # User-defined generics erase their parameters.
            self._bracket_params()
        return user(name.split(".")[-1])

    def _callable(self) -> PyType:
        if not self.peek() or self.peek()[0] != "[":
            return generic("Callable")
        self.expect("[")
        tok = self.peek()
        if tok is None:
            raise TypeParseError("unexpected end of annotation", len(self.text))
        args: list[PyType] = []
        if tok[0] == "[":
            self.expect("[")
            while self.peek() and self.peek()[0] != "]":
                args.append(self.parse_type())
                if self.peek() and self.peek()[0] == ",":
                    self.next()
            self.expect("]")
            self.expect(",")
            ret = self.parse_type()
        else:
            # Callable[X] shorthand: treat the single parameter as the return.
            ret = self.parse_type()
        self.expect("]")
        return callable_type(args, ret)

    def _bracket_params(self) -> tuple[PyType, ...]:
        if not self.peek() or self.peek()[0] != "[":
            return ()
        self.expect("[")
        params: list[PyType] = []
        while self.peek() and self.peek()[0] != "]":
            params.append(self.parse_type())
            if self.peek() and self.peek()[0] == ",":
                self.next()
        self.expect("]")
        return tuple(params)


def parse_type_expr(text: str) -> PyType:
    """Parse annotation text. Optional[X] is sugar for Union[X, None];
    whitespace is insignificant; dotted names keep their last segment."""
    parser = _Parser(text)
    t = parser.parse_type()
    if parser.peek() is not None:
        tok, pos = parser.peek()
        raise TypeParseError(f"trailing {tok!r}", pos)
    return t


# ---------------------------------------------------------------------------
# Candidate sets
# ---------------------------------------------------------------------------


class CandState(Enum):
    BLANK = "blank"
    INFERRED = "inferred"
    RECOMMENDED = "recommended"
    VALIDATED = "validated"


@dataclass(frozen=True)
class CandidateSet:
    """An ordered, deduplicated set of candidate types for one slot."""

    types: tuple[PyType, ...] = ()
    state: CandState = CandState.BLANK

    @staticmethod
    def blank() -> "CandidateSet":
        return CandidateSet()

    @staticmethod
    def of(types: Iterable[PyType], state: CandState = CandState.INFERRED) -> "CandidateSet":
        return CandidateSet(_dedupe(types), state)

    @property
    def is_blank(self) -> bool:
        return self.state is CandState.BLANK

    @property
    def is_empty(self) -> bool:
        return not self.types

    def __iter__(self) -> Iterator[PyType]:
        return iter(self.types)

    def __len__(self) -> int:
        return len(self.types)

    def __contains__(self, t: PyType) -> bool:
        return t in self.types

    def with_state(self, state: CandState) -> "CandidateSet":
        return CandidateSet(self.types, state)

    def without(self, removed: Iterable[PyType]) -> "CandidateSet":
        gone = tuple(removed)
        return CandidateSet(tuple(t for t in self.types if t not in gone), self.state)

    def render_slot(self) -> str | None:
        """Slot output: None when blank/empty, the single type, or a Union."""
        if self.is_blank or self.is_empty:
            return None
        if len(self.types) == 1:
            return render(self.types[0])
        return render(union(self.types))


def absorb(types: Sequence[PyType]) -> tuple[PyType, ...]:
    """Drop generics shadowed by a same-constructor sibling whose params are
    a superset (List[] is absorbed by List[int]). Tuples are positional and
    never absorbed."""
    kept: list[PyType] = []
    for t in _dedupe(types):
        if t.is_generic and t.name not in ("Tuple", "Callable"):
            shadowed = any(
                o.is_generic
                and o is not t
                and o.name == t.name
                and set(t.params) <= set(o.params)
                and (len(o.params) > len(t.params))
                for o in types
            )
            if shadowed:
                continue
        kept.append(t)
    return tuple(kept)


# ---------------------------------------------------------------------------
# Valid-type specifications
# ---------------------------------------------------------------------------


class Wildcard(Enum):
    ANY_ELEMENTARY = "Γ"
    ANY_GENERIC = "A"
    ANY_USER = "U"
    ANY_OVERLOADING = "O"


@dataclass(frozen=True)
class ValidTypeSpec:
    """A decidable membership test: concrete types, category wildcards and
    bare-constructor wildcards (``List`` matches any List[...])."""

    concrete: frozenset[PyType] = frozenset()
    wildcards: frozenset[Wildcard] = frozenset()
    ctors: frozenset[str] = frozenset()

    @staticmethod
    def of(*atoms: str | PyType) -> "ValidTypeSpec":
        concrete: set[PyType] = set()
        wildcards: set[Wildcard] = set()
        ctors: set[str] = set()
        for atom in atoms:
            if isinstance(atom, PyType):
                if atom.is_generic and not atom.params:
                    ctors.add(atom.name)  # bare generic acts as a constructor wildcard
                else:
                    concrete.add(atom)
            elif atom in ("Γ", "elementary"):
                wildcards.add(Wildcard.ANY_ELEMENTARY)
            elif atom == "A":
                wildcards.add(Wildcard.ANY_GENERIC)
            elif atom == "U":
                wildcards.add(Wildcard.ANY_USER)
            elif atom == "O":
                wildcards.add(Wildcard.ANY_OVERLOADING)
            elif atom in GENERIC_CTORS:
                ctors.add(atom)
            else:
                concrete.add(parse_type_expr(atom))
        return ValidTypeSpec(frozenset(concrete), frozenset(wildcards), frozenset(ctors))

    def matches(self, t: PyType) -> bool:
        if t in self.concrete:
            return True
        if t.is_elementary and Wildcard.ANY_ELEMENTARY in self.wildcards:
            return True
        if t.is_generic and Wildcard.ANY_GENERIC in self.wildcards:
            return True
        if t.is_user and Wildcard.ANY_USER in self.wildcards:
            return True
        if t.is_overloading and Wildcard.ANY_OVERLOADING in self.wildcards:
            return True
        if t.is_generic and t.name in self.ctors:
            return True
        return False


ANY_SPEC = ValidTypeSpec(
    wildcards=frozenset(Wildcard),
    ctors=frozenset(GENERIC_CTORS),
    concrete=frozenset({NONE_TYPE, TYPE_TYPE, *(elementary(n) for n in ELEMENTARY_NAMES)}),
)


def intersect(cands: CandidateSet, spec: ValidTypeSpec) -> CandidateSet:
    """Members of cands matched by spec; order and state preserved. An empty
    result is legal and means contradiction."""
    if cands.is_blank:
        raise TypeAlgebraError("cannot intersect a blank candidate set")
    return CandidateSet(tuple(t for t in cands if spec.matches(t)), cands.state)


# ---------------------------------------------------------------------------
# Projections used by the expression rules
# ---------------------------------------------------------------------------

_NUMERIC_ORDER = {"bool": 0, "int": 1, "float": 2}


def more_precise(t1: PyType, t2: PyType) -> PyType:
    """Numeric precedence float > int > bool; an operator-overloading type
    outranks numerics because it redefines the result."""
    for t in (t1, t2):
        if not (t.is_overloading or (t.is_elementary and t.name in _NUMERIC_ORDER)):
            raise PrecisionUndefined(f"no numeric precedence for {render(t)}")
    if t1.is_overloading:
        return t1
    if t2.is_overloading:
        return t2
    return t1 if _NUMERIC_ORDER[t1.name] >= _NUMERIC_ORDER[t2.name] else t2


def element_type(t: PyType) -> CandidateSet:
    """Types produced by iterating a value of type t. Dict iterates its keys;
    str yields str; bytes yields int; Union distributes over its members."""
    if t.is_elementary and t.name == "str":
        return CandidateSet.of([elementary("str")])
    if t.is_elementary and t.name == "bytes":
        return CandidateSet.of([elementary("int")])
    if t.is_generic and t.name == "Union":
        out: list[PyType] = []
        ok = False
        for member in t.params:
            try:
                out.extend(element_type(member))
                ok = True
            except NotIterable:
                continue
        if not ok:
            raise NotIterable(f"{render(t)} has no iterable member")
        return CandidateSet.of(out)
    if t.is_generic and t.name in ("List", "Tuple", "Set", "Generator"):
        return CandidateSet.of(t.params)
    if t.is_generic and t.name == "Dict":
        return CandidateSet.of(t.params[0::2])
    raise NotIterable(f"{render(t)} is not iterable")


def value_type(t: PyType) -> CandidateSet:
    if t.is_generic and t.name == "Dict":
        return CandidateSet.of(t.params[1::2])
    if t.is_generic and t.name == "Union":
        out: list[PyType] = []
        ok = False
        for member in t.params:
            try:
                out.extend(value_type(member))
                ok = True
            except NotADict:
                continue
        if not ok:
            raise NotADict(f"{render(t)} has no Dict member")
        return CandidateSet.of(out)
    raise NotADict(f"{render(t)} is not a Dict")


def return_type(t: PyType) -> CandidateSet:
    if t.is_generic and t.name == "Callable":
        if not t.params:
            return CandidateSet.of([])
        return CandidateSet.of([t.params[-1]])
    raise NotCallable(f"{render(t)} is not Callable")


def erase_parameters(t: PyType) -> str:
    """The outermost constructor/name with every parameter list removed."""
    if t.is_generic:
        return t.name
    return render(t)
