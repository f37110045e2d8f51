import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hityper.frontend import ClassInfo, UserTypeSet
from hityper.rules import (
    RuleEnv,
    builtin_stubs,
    forward_apply,
    load_stub_text,
    lookup_stub,
    reject_apply,
)
from hityper.tdg import NodeKind, TdgNode
from hityper.types_core import (
    NONE_TYPE,
    CandidateSet,
    PyType,
    elementary,
    generic,
    render,
    union,
    user,
)

INT = elementary("int")
FLOAT = elementary("float")
STR = elementary("str")
BOOL = elementary("bool")
BYTES = elementary("bytes")


def expr(op, **info) -> TdgNode:
    return TdgNode(id=f"test:{op}", kind=NodeKind.EXPR, op=op, info=info)


def cs(*types: PyType) -> CandidateSet:
    return CandidateSet.of(types)


@pytest.fixture(scope="module")
def env() -> RuleEnv:
    uts = UserTypeSet()
    uts.add(ClassInfo("Placeholder", "Placeholder", None, False))
    uts.add(ClassInfo("Vec", "Vec", None, True))
    return RuleEnv(stubs=builtin_stubs(), user_types=uts)


# --- forward -------------------------------------------------------------------

def test_add_int_int(env):
    assert forward_apply(expr("Add"), [cs(INT), cs(INT)], env).types == (INT,)


def test_lt_yields_bool(env):
    out = forward_apply(expr("OrderCompare"), [cs(INT), cs(FLOAT)], env)
    assert out.types == (BOOL,)


def test_class_instantiation(env):
    out = forward_apply(expr("ClassInstantiation", **{"class": "Placeholder"}), [], env)
    assert out.types == (user("Placeholder"),)


def test_boolop_unions_inputs(env):
    out = forward_apply(expr("BoolOp"), [cs(INT), cs(STR)], env)
    assert out.types == (union([INT, STR]),)


def test_dict_literal(env):
    out = forward_apply(expr("DictLit", size=1), [cs(STR), cs(user("Placeholder"))], env)
    assert [render(t) for t in out.types] == ["Dict[str, Placeholder]"]


def test_blank_input_keeps_blank(env):
    out = forward_apply(expr("Add"), [CandidateSet.blank(), cs(INT)], env)
    assert out.is_blank


def test_numeric_more_precise(env):
    out = forward_apply(expr("Numeric"), [cs(INT, FLOAT), cs(INT)], env)
    assert set(out.types) == {INT, FLOAT}


def test_mult_sequence_by_count(env):
    out = forward_apply(expr("Mult"), [cs(generic("List", [INT])), cs(INT)], env)
    assert out.types == (generic("List", [INT]),)
    out = forward_apply(expr("Mult"), [cs(INT), cs(STR)], env)
    assert out.types == (STR,)


def test_add_overloading_wins(env):
    vec = user("Vec", True)
    out = forward_apply(expr("Add"), [cs(vec), cs(INT)], env)
    assert out.types == (vec,)


def test_shift_intersects(env):
    out = forward_apply(expr("Shift"), [cs(INT, STR), cs(INT)], env)
    assert out.types == (INT,)


def test_comparisons_always_bool(env):
    for op in ("OrderCompare", "EqCompare", "Membership"):
        for pair in ([cs(INT), cs(INT)], [cs(STR), cs(generic("List", [STR]))]):
            out = forward_apply(expr(op), pair, env)
            assert out.types == (BOOL,), op


def test_subscript_dict_value(env):
    d = generic("Dict", [STR, user("Placeholder")])
    out = forward_apply(expr("Subscript", is_slice=False), [cs(d), cs(STR)], env)
    assert out.types == (user("Placeholder"),)


def test_subscript_slice_keeps_container(env):
    xs = generic("List", [INT])
    out = forward_apply(expr("Subscript", is_slice=True), [cs(xs), cs(INT)], env)
    assert out.types == (xs,)


def test_mutate_append(env):
    out = forward_apply(
        expr("Mutate", method="append", mode="add_element"),
        [cs(generic("List")), cs(INT)],
        env,
    )
    assert [render(t) for t in out.types] == ["List[int]"]


def test_for_element_over_union(env):
    u = union([STR, BYTES, INT])
    out = forward_apply(expr("ForElement"), [cs(u)], env)
    assert set(out.types) == {STR, INT}


# --- rejection -----------------------------------------------------------------

def test_reject_add_mutual_intersection(env):
    validated, removed = reject_apply(expr("Add"), [cs(INT, STR), cs(INT)], env)
    assert validated[0].types == (INT,)
    assert validated[1].types == (INT,)
    assert removed == [(0, STR)]


def test_reject_membership_container_only(env):
    right = cs(INT, generic("List", [INT]))
    validated, removed = reject_apply(expr("Membership"), [cs(INT), right], env)
    assert validated[0].types == (INT,)
    assert validated[1].types == (generic("List", [INT]),)
    assert removed == [(1, INT)]


def test_reject_eq_no_constraint(env):
    validated, removed = reject_apply(expr("EqCompare"), [cs(INT), cs(STR)], env)
    assert validated[0].types == (INT,)
    assert validated[1].types == (STR,)
    assert removed == []


def test_reject_never_adds(env):
    inputs = [cs(INT, STR, generic("List", [INT])), cs(FLOAT, BYTES)]
    validated, _ = reject_apply(expr("Add"), inputs, env)
    for before, after in zip(inputs, validated):
        assert set(after.types) <= set(before.types)


def test_reject_overloading_short_circuits(env):
    vec = user("Vec", True)
    validated, removed = reject_apply(expr("Add"), [cs(vec), cs(STR)], env)
    assert vec in validated[0]


def test_reject_blank_inputs_skipped(env):
    validated, removed = reject_apply(expr("Add"), [CandidateSet.blank(), cs(INT)], env)
    assert validated[0].is_blank and removed == []


# --- stub table ------------------------------------------------------------------

def test_lookup_len(env):
    sig = lookup_stub("len", env.stubs)
    assert sig is not None
    assert render(sig) == "Callable[[Union[bytes, Dict, Generator, List, Set, str, Tuple]], int]"


def test_lookup_enumerate_instantiates_element(env):
    node = expr("Call", callee="enumerate")
    out = forward_apply(node, [cs(generic("List", [STR]))], env)
    assert [render(t) for t in out.types] == ["Generator[Tuple[int, str]]"]


def test_lookup_missing(env):
    assert lookup_stub("no.such.fn", env.stubs) is None
    out = forward_apply(expr("Call", callee="no.such.fn"), [cs(INT)], env)
    assert out.is_blank


def test_stub_text_roundtrip_and_override():
    table = load_stub_text("f : Callable[[int], str]\n")
    table.merge(load_stub_text("f : Callable[[], bool]  # override\n"))
    assert render(table.entries["f"].signature) == "Callable[[], bool]"


def test_stub_args_validated(env):
    node = expr("Call", callee="len")
    validated, removed = reject_apply(node, [cs(INT, generic("List", [INT]))], env)
    assert validated[0].types == (generic("List", [INT]),)
    assert removed == [(0, INT)]


# --- soundness properties ---------------------------------------------------------

_POOL = [INT, FLOAT, STR, BOOL, BYTES, NONE_TYPE,
         generic("List", [INT]), generic("Set", [INT]),
         generic("Tuple", [INT, STR]), generic("Dict", [STR, INT]),
         user("Placeholder"), user("Vec", True)]

_BINARY_OPS = ["Add", "Sub", "Mult", "Numeric", "Shift", "Bitwise",
               "OrderCompare", "EqCompare", "Membership"]


@settings(max_examples=300, deadline=None)
@given(
    st.sampled_from(_BINARY_OPS),
    st.lists(st.sampled_from(_POOL), min_size=1, max_size=3, unique=True),
    st.lists(st.sampled_from(_POOL), min_size=1, max_size=3, unique=True),
)
def test_rejection_sound_by_replay(op, left, right):
    """Every removed candidate, forced as the sole type of its input, yields
    an empty forward result; and rejection never invents candidates."""
    env = RuleEnv(stubs=builtin_stubs())
    node = expr(op)
    inputs = [cs(*left), cs(*right)]
    validated, removed = reject_apply(node, inputs, env)
    for i, v in enumerate(validated):
        assert set(v.types) <= set(inputs[i].types)
    for idx, t in removed:
        probe = [validated[j] if j != idx else cs(t) for j in range(2)]
        if any(p.is_empty for p in probe):
            probe = [inputs[j] if j != idx else cs(t) for j in range(2)]
        image = forward_apply(node, probe, env)
        _, re_removed = reject_apply(node, probe, env)
        violates_relation = (idx, t) in re_removed
        assert image.is_empty or image.is_blank or violates_relation, (op, t, image.types)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["Add", "Sub", "Mult", "Numeric", "OrderCompare"]),
    st.lists(st.sampled_from(_POOL), min_size=1, max_size=3, unique=True),
    st.lists(st.sampled_from(_POOL), min_size=1, max_size=3, unique=True),
)
def test_forward_nonempty_on_validated_singletons(op, left, right):
    """Singleton assignments drawn from validated sets always satisfy the
    forward rule (agreement between rejection and inference)."""
    env = RuleEnv(stubs=builtin_stubs())
    node = expr(op)
    validated, _ = reject_apply(node, [cs(*left), cs(*right)], env)
    if any(v.is_empty for v in validated):
        return
    for a, b in itertools.product(validated[0], validated[1]):
        keep_a = forward_apply(node, [cs(a), validated[1]], env)
        keep_b = forward_apply(node, [validated[0], cs(b)], env)
        assert not keep_a.is_empty or not keep_b.is_empty
