"""Expression typing rules: forward inference, valid-type sets, relation
constraints for rejection, and the builtin stub table.

Forward functions compute an expression's result from its inputs' candidate
sets; a blank required input leaves the result blank. Rejection intersects
each input with its valid-type set and then applies the expression's
relation constraint; everything removed is reported so the solver can
propagate removals upstream. Operands whose candidate is an
operator-overloading user type skip relation constraints (the overload
redefines the result).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from itertools import product

from .frontend import UserTypeSet
from .tdg import OPAQUE_OPS, TdgNode
from .types_core import (
    TYPE_TYPE,
    CandidateSet,
    PyType,
    TypeParseError,
    ValidTypeSpec,
    absorb,
    elementary,
    element_type,
    generic,
    more_precise,
    parse_type_expr,
    return_type,
    union,
    user,
    value_type,
)


# --- valid-type sets -------------------------------------------------------

SPEC_SHIFT = ValidTypeSpec.of("bool", "int", "O")
SPEC_BITWISE = ValidTypeSpec.of("bool", "int", "Set", "O")
SPEC_NUMERIC = ValidTypeSpec.of("bool", "int", "float", "O")
SPEC_ADD = ValidTypeSpec.of("Γ", "List", "Tuple", "O")
SPEC_SUB = ValidTypeSpec.of("Γ", "Set", "O")
SPEC_MULT = ValidTypeSpec.of("Γ", "List", "Tuple", "O")
SPEC_ORDER = ValidTypeSpec.of("Γ", "List", "Tuple", "O")
SPEC_ITERABLE = ValidTypeSpec.of("A", "str", "bytes")
SPEC_CONTAINER = ValidTypeSpec.of("str", "bytes", "List", "Tuple", "Set", "Dict", "Generator")
SPEC_INDEX = ValidTypeSpec.of("int", "bool")
SPEC_SUBSCRIPTABLE = ValidTypeSpec.of("A", "str", "bytes")

_MUTATE_SPECS = {
    "add_element": {"append": ValidTypeSpec.of("List"), "add": ValidTypeSpec.of("Set")},
    "extend_elements": {"extend": ValidTypeSpec.of("List")},
    "store_pair": {"__setitem__": ValidTypeSpec.of("Dict", "List")},
}

_NUMERIC_NAMES = ("bool", "int", "float")
_SEQUENCE_NAMES = ("str", "bytes")


def _is_numeric(t: PyType) -> bool:
    return t.is_elementary and t.name in _NUMERIC_NAMES


def _is_sequence(t: PyType) -> bool:
    return (t.is_elementary and t.name in _SEQUENCE_NAMES) or (
        t.is_generic and t.name in ("List", "Tuple")
    )


def _is_count(t: PyType) -> bool:
    return t.is_elementary and t.name in ("int", "bool")


def _meet(a: PyType, b: PyType) -> PyType | None:
    """Same-type intersection; a bare generic meets any parametrization of
    the same constructor."""
    if a == b:
        return a if (a.params or not b.params) else b
    if a.is_generic and b.is_generic and a.name == b.name:
        if not a.params:
            return b
        if not b.params:
            return a
    return None


def _members(t: PyType) -> tuple[PyType, ...]:
    """A Union distributes: rules apply per member."""
    if t.is_generic and t.name == "Union":
        return t.params
    return (t,)


def _spec_match(spec: ValidTypeSpec, t: PyType) -> bool:
    return any(spec.matches(m) for m in _members(t))


# --- stub table --------------------------------------------------------------

X_PLACEHOLDER = user("X")
Y_PLACEHOLDER = user("Y")


@dataclass(frozen=True)
class StubEntry:
    name: str
    signature: PyType  # Callable[[...], ...], possibly containing X/Y

    @property
    def arg_types(self) -> tuple[PyType, ...]:
        return self.signature.params[:-1]

    @property
    def ret_type(self) -> PyType:
        return self.signature.params[-1]


@dataclass
class StubTable:
    entries: dict[str, StubEntry] = field(default_factory=dict)

    def merge(self, other: "StubTable") -> None:
        self.entries.update(other.entries)


def load_stub_text(text: str, source: str = "<text>") -> StubTable:
    """One entry per line: ``qualified.name : Callable[[...], ...]``.
    '#' starts a comment; later entries override earlier ones."""
    table = StubTable()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise TypeParseError(f"{source}:{lineno}: missing ':'", 0)
        name, _, sig_text = line.partition(":")
        sig = parse_type_expr(sig_text.strip())
        if not (sig.is_generic and sig.name == "Callable" and sig.params):
            raise TypeParseError(f"{source}:{lineno}: stub must be a Callable", 0)
        name = name.strip()
        table.entries[name] = StubEntry(name, sig)
    return table


def builtin_stubs() -> StubTable:
    text = resources.files("hityper.data").joinpath("stubs.txt").read_text(encoding="utf-8")
    return load_stub_text(text, "builtin stubs")


def lookup_stub(name: str, table: StubTable) -> PyType | None:
    entry = table.entries.get(name)
    return entry.signature if entry else None


def _contains_placeholder(t: PyType, placeholder: PyType) -> bool:
    if t == placeholder and t.is_user:
        return True
    return any(_contains_placeholder(p, placeholder) for p in t.params)


def _substitute(t: PyType, binding: dict[str, PyType]) -> PyType:
    if t.is_user and t.name in binding:
        return binding[t.name]
    if not t.params:
        return t
    return generic(t.name, tuple(_substitute(p, binding) for p in t.params))


def _element_types(cands: CandidateSet) -> list[PyType]:
    out: list[PyType] = []
    for t in cands:
        try:
            out.extend(element_type(t))
        except Exception:
            continue
    seen: list[PyType] = []
    for t in out:
        if t not in seen:
            seen.append(t)
    return seen


def _value_types(cands: CandidateSet) -> list[PyType]:
    out: list[PyType] = []
    for t in cands:
        try:
            out.extend(value_type(t))
        except Exception:
            continue
    return out


def _instantiate_return(entry: StubEntry, x_values: list[PyType],
                        y_values: list[PyType]) -> list[PyType]:
    ret = entry.ret_type
    needs_x = _contains_placeholder(ret, X_PLACEHOLDER)
    needs_y = _contains_placeholder(ret, Y_PLACEHOLDER)
    if not needs_x and not needs_y:
        return [ret]
    xs = x_values if needs_x else [None]
    ys = y_values if needs_y else [None]
    if (needs_x and not x_values) or (needs_y and not y_values):
        return []
    results = []
    for x in xs:
        for y in ys:
            binding = {}
            if x is not None:
                binding["X"] = x
            if y is not None:
                binding["Y"] = y
            results.append(_substitute(ret, binding))
    return results


# --- rule environment --------------------------------------------------------


@dataclass
class RuleEnv:
    """Context the rules need beyond the node's own inputs."""

    stubs: StubTable = field(default_factory=StubTable)
    user_types: UserTypeSet = field(default_factory=UserTypeSet)
    class_attrs: dict[tuple[str, str], CandidateSet] = field(default_factory=dict)
    linked_returns: dict[str, CandidateSet] = field(default_factory=dict)


_CROSS_CAP = 64


def _cross(inputs: list[CandidateSet]) -> list[tuple[PyType, ...]] | None:
    total = 1
    for c in inputs:
        total *= max(len(c), 1)
        if total > _CROSS_CAP:
            return None
    return list(product(*[list(c) for c in inputs]))


def _collapse(inputs: list[CandidateSet]) -> tuple[PyType, ...]:
    return tuple(union(list(c)) if len(c) > 1 else c.types[0] for c in inputs)


def _binary_pairs(op: str, a: PyType, b: PyType) -> PyType | None:
    """Result of a binary arithmetic rule for one concrete operand pair, or
    None when the pair violates the rule."""
    if a.is_overloading:
        return a
    if b.is_overloading:
        return b
    if op in ("Numeric",):
        if _is_numeric(a) and _is_numeric(b):
            return more_precise(a, b)
        return None
    if op == "Add":
        if _is_numeric(a) and _is_numeric(b):
            return more_precise(a, b)
        m = _meet(a, b)
        if m is not None and SPEC_ADD.matches(m):
            return m
        return None
    if op == "Sub":
        if _is_numeric(a) and _is_numeric(b):
            return more_precise(a, b)
        m = _meet(a, b)
        if m is not None and SPEC_SUB.matches(m):
            return m
        return None
    if op == "Mult":
        if _is_numeric(a) and _is_numeric(b):
            return more_precise(a, b)
        if _is_sequence(a) and _is_count(b):
            return a
        if _is_count(a) and _is_sequence(b):
            return b
        return None
    if op == "OrderCompare":
        if _is_numeric(a) and _is_numeric(b):
            return elementary("bool")
        m = _meet(a, b)
        if m is not None and SPEC_ORDER.matches(m):
            return elementary("bool")
        return None
    return None


def _pairwise_result(op: str, left: CandidateSet, right: CandidateSet) -> list[PyType]:
    results: list[PyType] = []
    for a0 in left:
        for b0 in right:
            for a in _members(a0):
                for b in _members(b0):
                    r = _binary_pairs(op, a, b)
                    if r is not None and r not in results:
                        results.append(r)
    return results


def _subscript_forward(node: TdgNode, inputs: list[CandidateSet]) -> list[PyType]:
    base = inputs[0]
    out: list[PyType] = []
    if node.info.get("is_slice"):
        for t in base:
            if SPEC_SUBSCRIPTABLE.matches(t) and t not in out:
                out.append(t)
        return out
    for t in base:
        try:
            got = value_type(t) if (t.is_generic and t.name == "Dict") else element_type(t)
        except Exception:
            continue
        for r in got:
            if r not in out:
                out.append(r)
    return out


def _mutate_forward(node: TdgNode, inputs: list[CandidateSet]) -> list[PyType]:
    container, args = inputs[0], inputs[1:]
    mode = node.info["mode"]
    out: list[PyType] = []
    for c in container:
        if not c.is_generic:
            continue
        if mode == "add_element" and c.name in ("List", "Set"):
            elems = [t for arg in args for t in arg]
            refined = generic(c.name, _dedupe_ordered((*c.params, *elems)))
        elif mode == "extend_elements" and c.name == "List":
            elems = [t for arg in args for t in _element_types(arg)]
            if not elems and args and not args[0].is_empty:
                continue
            refined = generic("List", _dedupe_ordered((*c.params, *elems)))
        elif mode == "store_pair" and c.name == "Dict" and len(args) >= 2:
            pairs = list(zip(c.params[0::2], c.params[1::2]))
            for k in args[0]:
                for v in args[1]:
                    if (k, v) not in pairs:
                        pairs.append((k, v))
            refined = generic("Dict", tuple(x for pair in pairs for x in pair))
        elif mode == "store_pair" and c.name == "List" and len(args) >= 2:
            refined = generic("List", _dedupe_ordered((*c.params, *args[1])))
        else:
            continue
        if refined not in out:
            out.append(refined)
    return out


def _dedupe_ordered(types: tuple[PyType, ...]) -> tuple[PyType, ...]:
    seen: list[PyType] = []
    for t in types:
        if t not in seen:
            seen.append(t)
    return tuple(seen)


def _call_forward(node: TdgNode, inputs: list[CandidateSet], env: RuleEnv) -> list[PyType]:
    callee = node.info.get("callee")
    linked = node.info.get("linked")
    if node.info.get("deferred"):
        return []
    if linked is not None:
        linked_set = env.linked_returns.get(linked)
        if linked_set is None or linked_set.is_blank:
            return []
        return list(linked_set)
    if callee is None:
        # Calling a computed value: first input is the callee's candidates.
        out: list[PyType] = []
        for t in inputs[0] if inputs else ():
            if t.is_generic and t.name == "Callable" and t.params:
                for r in return_type(t):
                    if r not in out:
                        out.append(r)
        return out
    entry = env.stubs.entries.get(callee)
    if entry is None:
        return []
    x_values: list[PyType] = []
    for i, declared in enumerate(entry.arg_types):
        if _contains_placeholder(declared, X_PLACEHOLDER) and i < len(inputs):
            x_values.extend(
                t for t in _element_types(inputs[i]) if t not in x_values
            )
    return _instantiate_return(entry, x_values, [])


def _method_call_forward(node: TdgNode, inputs: list[CandidateSet], env: RuleEnv) -> list[PyType]:
    method = node.info["method"]
    base = inputs[0]
    out: list[PyType] = []
    for t in base:
        if t.is_user:
            linked = env.linked_returns.get(f"{t.name}.{method}")
            if linked is not None and not linked.is_blank:
                for r in linked:
                    if r not in out:
                        out.append(r)
            continue
        owner = t.name.lower() if (t.is_elementary or t.is_generic) else None
        if owner is None:
            continue
        entry = env.stubs.entries.get(f"{owner}.{method}")
        if entry is None:
            continue
        xs = _element_types(CandidateSet.of([t]))
        ys = _value_types(CandidateSet.of([t]))
        for r in _instantiate_return(entry, xs, ys):
            if r not in out:
                out.append(r)
    return out


def forward_apply(node: TdgNode, inputs: list[CandidateSet], env: RuleEnv) -> CandidateSet:
    """Result candidate set of one expression node. Blank required inputs
    leave the result blank; contradiction shows as an empty non-blank set."""
    op = node.op
    if op in OPAQUE_OPS:
        return CandidateSet.blank()
    if op == "Constant" or op == "NoneValue" or op == "Lambda" or op == "FunctionRef":
        return node.cands
    if op == "ClassRef":
        return CandidateSet.of([TYPE_TYPE])
    if op == "ClassInstantiation":
        name = node.info["class"]
        return CandidateSet.of([user(name, env.user_types.overloads(name))])
    if op == "SelfAttr":
        resolved = env.class_attrs.get((node.info["class"], node.info["attr"]))
        return resolved if resolved is not None else CandidateSet.blank()
    if op == "Call" and node.info.get("linked") is not None:
        types = _call_forward(node, inputs, env)
        return CandidateSet.of(types) if types else CandidateSet.blank()

    if any(c.is_blank for c in inputs):
        return CandidateSet.blank()

    if op == "BoolOp":
        members = [t for c in inputs for t in c]
        return CandidateSet.of([union(members)]) if members else CandidateSet.of([])
    if op == "Not":
        return CandidateSet.of([elementary("bool")])
    if op in ("OrderCompare", "EqCompare", "Membership"):
        return CandidateSet.of([elementary("bool")])
    if op in ("Shift", "Bitwise"):
        spec = SPEC_SHIFT if op == "Shift" else SPEC_BITWISE
        out: list[PyType] = []
        for c in inputs:
            matched = [
                t for t0 in c for t in _members(t0) if spec.matches(t)
            ]
            if not matched:
                return CandidateSet.of([])  # one operand has no valid member
            for t in matched:
                if t not in out:
                    out.append(t)
        return CandidateSet.of(out)
    if op in ("Numeric", "Add", "Sub", "Mult"):
        return CandidateSet.of(_pairwise_result(op, inputs[0], inputs[1]))
    if op == "UnaryNumeric":
        out = []
        for t in inputs[0]:
            if t.is_overloading:
                out.append(t)
            elif _is_numeric(t):
                out.append(elementary("int") if t.name == "bool" else t)
        return CandidateSet.of(out)
    if op == "Invert":
        out = []
        for t in inputs[0]:
            if t.is_overloading:
                out.append(t)
            elif t.is_elementary and t.name in ("bool", "int"):
                out.append(elementary("int"))
        return CandidateSet.of(_dedupe_ordered(tuple(out)))
    if op == "TupleLit":
        if not inputs:
            return CandidateSet.of([generic("Tuple")])
        combos = _cross(inputs)
        if combos is None:
            return CandidateSet.of([generic("Tuple", _collapse(inputs))])
        return CandidateSet.of([generic("Tuple", combo) for combo in combos])
    if op in ("ListLit", "SetLit"):
        ctor = "List" if op == "ListLit" else "Set"
        if not inputs:
            return CandidateSet.of([generic(ctor)])
        combos = _cross(inputs)
        if combos is None:
            return CandidateSet.of([generic(ctor, _dedupe_ordered(_collapse(inputs)))])
        return CandidateSet.of([generic(ctor, _dedupe_ordered(combo)) for combo in combos])
    if op == "DictLit":
        if not inputs:
            return CandidateSet.of([generic("Dict")])
        combos = _cross(inputs)
        if combos is None:
            combos = [_collapse(inputs)]
        out = []
        for combo in combos:
            pairs: list[tuple[PyType, PyType]] = []
            for k, v in zip(combo[0::2], combo[1::2]):
                if (k, v) not in pairs:
                    pairs.append((k, v))
            t = generic("Dict", tuple(x for pair in pairs for x in pair))
            if t not in out:
                out.append(t)
        return CandidateSet.of(out)
    if op == "ForElement":
        elems = _element_types(CandidateSet.of([t for t in inputs[0] if SPEC_ITERABLE.matches(t)]))
        return CandidateSet.of(elems) if elems else CandidateSet.blank()
    if op == "Unpack":
        idx, size = node.info["index"], node.info["size"]
        out = []
        for t in inputs[0]:
            if t.is_generic and t.name == "Tuple" and t.params:
                if len(t.params) == size:
                    if t.params[idx] not in out:
                        out.append(t.params[idx])
                continue
            try:
                for r in element_type(t):
                    if r not in out:
                        out.append(r)
            except Exception:
                continue
        return CandidateSet.of(out) if out else CandidateSet.blank()
    if op in ("ListComp", "SetComp", "GeneratorComp"):
        ctor = {"ListComp": "List", "SetComp": "Set", "GeneratorComp": "Generator"}[op]
        return CandidateSet.of([generic(ctor, _dedupe_ordered(tuple(inputs[0])))])
    if op == "DictComp":
        combos = _cross(inputs) or [_collapse(inputs)]
        return CandidateSet.of(
            _dedupe_ordered(tuple(generic("Dict", combo) for combo in combos))
        )
    if op == "IfExp":
        merged = _dedupe_ordered(tuple(t for c in inputs for t in c))
        return CandidateSet.of(absorb(merged))
    if op == "Subscript":
        out = _subscript_forward(node, inputs)
        return CandidateSet.of(out) if out else CandidateSet.blank()
    if op == "Mutate":
        out = _mutate_forward(node, inputs)
        return CandidateSet.of(out) if out else CandidateSet.blank()
    if op == "Call":
        out = _call_forward(node, inputs, env)
        return CandidateSet.of(out) if out else CandidateSet.blank()
    if op == "MethodCall":
        out = _method_call_forward(node, inputs, env)
        return CandidateSet.of(out) if out else CandidateSet.blank()
    if op == "SelfAttrStore":
        return inputs[0]
    if op == "Attribute":
        return CandidateSet.blank()
    return CandidateSet.blank()


# --- rejection ----------------------------------------------------------------


def _input_specs(node: TdgNode, inputs: list[CandidateSet], env: RuleEnv) -> list[ValidTypeSpec | None]:
    op = node.op
    n = len(inputs)
    if op == "Shift":
        return [SPEC_SHIFT] * n
    if op == "Bitwise":
        return [SPEC_BITWISE] * n
    if op == "Numeric":
        return [SPEC_NUMERIC] * n
    if op == "UnaryNumeric":
        return [SPEC_NUMERIC] * n
    if op == "Invert":
        return [SPEC_SHIFT] * n
    if op == "Add":
        return [SPEC_ADD] * n
    if op == "Sub":
        return [SPEC_SUB] * n
    if op == "Mult":
        return [SPEC_MULT] * n
    if op == "OrderCompare":
        return [SPEC_ORDER] * n
    if op == "Membership":
        # Only the container (last input) is constrained.
        return [None] * (n - 1) + [SPEC_CONTAINER]
    if op == "ForElement":
        return [SPEC_ITERABLE] * n
    if op == "Subscript":
        if node.info.get("is_slice"):
            return [SPEC_SUBSCRIPTABLE] + [SPEC_INDEX] * (n - 1)
        specs: list[ValidTypeSpec | None] = [ValidTypeSpec.of("A", "str", "bytes", "Dict")]
        if n > 1:
            base = inputs[0]
            all_seq = not base.is_blank and all(
                not (t.is_generic and t.name == "Dict") for t in base
            ) and not base.is_empty
            specs += [SPEC_INDEX if all_seq else None] * (n - 1)
        return specs
    if op == "Mutate":
        spec = _MUTATE_SPECS[node.info["mode"]].get(node.info["method"])
        return [spec] + [None] * (n - 1)
    if op == "Call":
        callee = node.info.get("callee")
        if callee is None or node.info.get("linked") is not None:
            return [None] * n
        entry = env.stubs.entries.get(callee)
        if entry is None:
            return [None] * n
        specs = []
        for i in range(n):
            if i < len(entry.arg_types):
                declared = entry.arg_types[i]
                if _contains_placeholder(declared, X_PLACEHOLDER):
                    specs.append(SPEC_ITERABLE)
                elif declared.is_generic and declared.name == "Union":
                    specs.append(ValidTypeSpec.of(*declared.params))
                else:
                    specs.append(ValidTypeSpec.of(declared))
            else:
                specs.append(None)
        return specs
    if op == "MethodCall":
        method = node.info["method"]
        owners = [
            name.split(".")[0]
            for name in env.stubs.entries
            if name.endswith(f".{method}") and name.count(".") == 1
        ]
        if not owners:
            return [None] * n
        atoms: list[str] = []
        for owner in owners:
            atoms.append(owner if owner in ("str", "bytes") else owner.capitalize())
        spec = ValidTypeSpec.of(*atoms, "U", "O")
        return [spec] + [None] * (n - 1)
    return [None] * n


_RELATION_OPS = {"Add", "Sub", "Mult", "Numeric", "OrderCompare"}


def reject_apply(
    node: TdgNode, inputs: list[CandidateSet], env: RuleEnv | None = None
) -> tuple[list[CandidateSet], list[tuple[int, PyType]]]:
    """Validated inputs plus the (index, type) removals. Blank inputs pass
    through untouched; validated[i] is always a subset of inputs[i]."""
    env = env or RuleEnv()
    removed: list[tuple[int, PyType]] = []
    validated: list[CandidateSet] = list(inputs)

    specs = _input_specs(node, inputs, env)
    for i, (cands, spec) in enumerate(zip(inputs, specs)):
        if spec is None or cands.is_blank:
            continue
        keep = CandidateSet(tuple(t for t in cands if _spec_match(spec, t)), cands.state)
        for t in cands:
            if t not in keep:
                removed.append((i, t))
        validated[i] = keep

    if node.op in _RELATION_OPS and len(validated) >= 2:
        for i, j in ((0, 1), (1, 0)) if len(validated) == 2 else _adjacent_pairs(len(validated)):
            left, right = validated[i], validated[j]
            if left.is_blank or right.is_blank:
                continue
            keep_types = []
            for a0 in left:
                if any(
                    a.is_overloading
                    or any(
                        _binary_pairs(node.op, a, b) is not None
                        for b0 in right
                        for b in _members(b0)
                    )
                    for a in _members(a0)
                ):
                    keep_types.append(a0)
            for t in left:
                if t not in keep_types:
                    removed.append((i, t))
            validated[i] = CandidateSet(tuple(keep_types), left.state)
    return validated, removed


def _adjacent_pairs(n: int) -> list[tuple[int, int]]:
    pairs = []
    for i in range(n - 1):
        pairs.append((i, i + 1))
        pairs.append((i + 1, i))
    return pairs
