import ast
import textwrap

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hityper.frontend import (
    OPERATOR_DUNDERS,
    collect_user_types,
    count_annotations,
    detect_operator_overloading,
    parse_module,
    strip_annotations,
)

LISTING = textwrap.dedent(
    """\
    import ast

    def parse(text):
        normalized_text = _normalize_text(text)
        tmp = ast.literal_eval(normalized_text)
        shape = []
        placeholders = {}
        for i, t in enumerate(tmp):
            if isinstance(t, str):
                pt = Placeholder(label=t)
                placeholders[t] = pt
            elif isinstance(t, int):
                pt = t
            shape.append(pt)
        return shape, placeholders
    """
)


def test_parse_minimal_function():
    mod = parse_module("def f():\n    return 1")
    assert len(mod.functions) == 1
    assert mod.functions[0].qualified_name == "f"
    assert mod.classes == []


def test_parse_listing_one():
    mod = parse_module(LISTING)
    fn = [f for f in mod.functions if f.name == "parse"]
    assert len(fn) == 1
    assert fn[0].params == ("text",)


def test_parse_syntax_error():
    with pytest.raises(SyntaxError) as err:
        parse_module("def f(")
    assert err.value.lineno == 1


def test_parse_spans_and_unique_qnames():
    mod = parse_module("class C:\n    def m(self):\n        pass\n\ndef m():\n    pass\n")
    qnames = [f.qualified_name for f in mod.functions]
    assert qnames == ["C.m", "m"]
    assert len(set(qnames)) == len(qnames)
    assert all(f.line > 0 for f in mod.functions)


# --- operator overloading ----------------------------------------------------

def test_detect_add_overload():
    mod = parse_module("class Vec:\n    def __add__(self, o):\n        return o\n")
    assert detect_operator_overloading(mod.classes[0]) is True


def test_plain_class_not_overloading():
    mod = parse_module(
        "class P:\n    def __init__(self):\n        pass\n    def run(self):\n        pass\n"
    )
    assert detect_operator_overloading(mod.classes[0]) is False


def test_lshift_is_operator_dunder():
    # Oracle: the interpreter dispatches << to __lshift__, so the name belongs
    # in the fixed dunder list.
    class C:
        def __lshift__(self, other):
            return "hit"

    assert (C() << 1) == "hit"
    assert "__lshift__" in OPERATOR_DUNDERS
    mod = parse_module("class S:\n    def __lshift__(self, o):\n        return o\n")
    assert detect_operator_overloading(mod.classes[0]) is True


def test_reflected_operators_count():
    mod = parse_module("class R:\n    def __radd__(self, o):\n        return o\n")
    assert detect_operator_overloading(mod.classes[0]) is True


# --- user-type collection ------------------------------------------------------

def test_collect_in_file_class():
    mod = parse_module("class Placeholder:\n    pass\n")
    uts = collect_user_types(mod, [])
    assert "Placeholder" in uts


def test_collect_unresolvable_from_import():
    mod = parse_module("from pkg import Node\n")
    uts = collect_user_types(mod, [])
    assert "Node" in uts
    assert uts.entries["Node"].source_path is None
    assert uts.entries["Node"].overloads_operators is False


def test_collect_empty_module():
    uts = collect_user_types(parse_module(""), [])
    assert uts.entries == {}


def test_collect_resolvable_package(tmp_path):
    (tmp_path / "pkg.py").write_text(
        "from collections import namedtuple\n"
        "class Inner:\n"
        "    def __add__(self, o):\n"
        "        return o\n"
        "Point = namedtuple('Point', 'x y')\n"
    )
    mod = parse_module("import pkg\n")
    uts = collect_user_types(mod, [str(tmp_path)])
    assert "Inner" in uts and uts.overloads("Inner")
    assert "Point" in uts and not uts.overloads("Point")


def test_collect_import_alias_tracked(tmp_path):
    (tmp_path / "models.py").write_text("class Net:\n    pass\n")
    mod = parse_module("import models as m\n")
    uts = collect_user_types(mod, [str(tmp_path)])
    assert "Net" in uts
    assert uts.module_aliases["m"] == "models"


def test_collect_excludes_builtin_names(tmp_path):
    (tmp_path / "weird.py").write_text("class int:\n    pass\nclass List:\n    pass\n")
    mod = parse_module("import weird\n")
    uts = collect_user_types(mod, [str(tmp_path)])
    assert "int" not in uts and "List" not in uts


def test_collect_idempotent(tmp_path):
    (tmp_path / "pkg.py").write_text("class A:\n    pass\n")
    mod = parse_module("import pkg\nclass B:\n    pass\n")
    a = collect_user_types(mod, [str(tmp_path)])
    b = collect_user_types(mod, [str(tmp_path)])
    assert a.names() == b.names()
    assert {n: i.overloads_operators for n, i in a.entries.items()} == {
        n: i.overloads_operators for n, i in b.entries.items()
    }


# --- annotation stripping ------------------------------------------------------

def test_strip_parameter_and_return():
    src = "def f(x: int) -> str:\n    return 'a'\n"
    out, truths = strip_annotations(src)
    assert [(t.function, t.kind, t.name, t.annotation) for t in truths] == [
        ("f", "argument", "x", "int"),
        ("f", "return", "return", "str"),
    ]
    assert ": int" not in out and "-> str" not in out
    parse_module(out)


def test_strip_nothing_to_strip():
    src = "def g():\n    pass\n"
    out, truths = strip_annotations(src)
    assert truths == []
    assert ast.dump(ast.parse(out)) == ast.dump(ast.parse(src))


def test_strip_local_annotation():
    src = "def f():\n    v: List[int] = []\n    return v\n"
    out, truths = strip_annotations(src)
    assert [(t.function, t.kind, t.name, t.annotation) for t in truths] == [
        ("f", "local", "v", "List[int]")
    ]
    assert count_annotations(out) == 0
    parse_module(out)


def test_strip_bare_annotation_keeps_body_valid():
    src = "def f():\n    v: int\n    return 1\n"
    out, truths = strip_annotations(src)
    assert len(truths) == 1
    parse_module(out)


def test_strip_class_attribute_annotation():
    src = "class C:\n    size: int = 0\n"
    out, truths = strip_annotations(src)
    assert truths[0].kind == "local"
    assert truths[0].function == "C"
    parse_module(out)


_ANNOTATIONS = ["int", "str", "List[int]", "Optional[str]", "Dict[str, int]"]


@given(
    st.lists(st.sampled_from(_ANNOTATIONS), min_size=0, max_size=3),
    st.booleans(),
    st.booleans(),
)
def test_strip_count_matches_independent_counter(arg_anns, annotate_return, local_ann):
    params = ", ".join(
        f"a{i}: {ann}" if ann else f"a{i}" for i, ann in enumerate(arg_anns)
    )
    ret = " -> bool" if annotate_return else ""
    body = "    v: float = 1.0\n" if local_ann else "    v = 1.0\n"
    src = f"def f({params}){ret}:\n{body}    return v\n"
    out, truths = strip_annotations(src)
    assert len(truths) == count_annotations(src)
    assert count_annotations(out) == 0
    parse_module(out)
