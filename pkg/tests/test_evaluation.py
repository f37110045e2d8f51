import json
import random

from hypothesis import given, settings
from hypothesis import strategies as st

from hityper.evaluation import (
    Report,
    evaluate,
    exact_match,
    load_truths_jsonl,
    match_to_parametric,
    render_figures,
)
from hityper.frontend import GroundTruthRecord
from hityper.types_core import (
    NONE_TYPE,
    callable_type,
    elementary,
    generic,
    parse_type_expr,
    union,
    user,
)

INT, STR = elementary("int"), elementary("str")


def rec(function, kind, name, annotation):
    return GroundTruthRecord(function, kind, name, annotation, 1)


# --- matching ---------------------------------------------------------------------

def test_exact_match_equal_lists():
    assert exact_match(parse_type_expr("List[int]"), parse_type_expr("List[int]"))


def test_exact_match_differs_on_params():
    assert not exact_match(parse_type_expr("List[int]"), parse_type_expr("List[str]"))


def test_exact_match_optional_normalization():
    assert exact_match(parse_type_expr("Optional[str]"), parse_type_expr("Union[str, None]"))


def test_parametric_ignores_params():
    assert match_to_parametric(parse_type_expr("List[int]"), parse_type_expr("List[str]"))


def test_parametric_distinct_names():
    assert not match_to_parametric(INT, STR)


def test_parametric_erasure_oracle():
    # Independent erasure: drop bracketed text entirely and compare heads.
    def erase_text(text: str) -> str:
        return text.split("[", 1)[0]

    cases = ["Dict[str,int]", "Dict", "List[List[int]]", "Tuple[int, str]", "int"]
    for a in cases:
        for b in cases:
            expected = erase_text(a.replace(" ", "")) == erase_text(b.replace(" ", ""))
            got = match_to_parametric(parse_type_expr(a), parse_type_expr(b))
            assert got == expected, (a, b)


leaves = st.sampled_from([INT, STR, elementary("float"), elementary("bool"),
                          NONE_TYPE, user("Widget")])
types = st.recursive(
    leaves,
    lambda ch: st.one_of(
        st.tuples(st.sampled_from(["List", "Set", "Tuple", "Generator"]),
                  st.lists(ch, min_size=1, max_size=3)).map(lambda p: generic(*p)),
        st.tuples(ch, ch).map(lambda p: generic("Dict", p)),
        st.lists(ch, min_size=2, max_size=3).map(union),
        st.tuples(st.lists(ch, max_size=2), ch).map(lambda p: callable_type(*p)),
    ),
    max_leaves=6,
)


@settings(max_examples=500)
@given(types, types)
def test_exact_implies_parametric(a, b):
    if exact_match(a, b):
        assert match_to_parametric(a, b)


# --- evaluate -----------------------------------------------------------------------

def test_evaluate_single_hit():
    truths = [rec("f", "argument", "x", "int")]
    report = evaluate({"f:argument:x": ["int"]}, truths)
    for k in (1, 3, 5):
        assert report.fractions["argument"][k]["exact_match"] == 1.0
        assert report.fractions["all"][k]["match_to_parametric"] == 1.0


def test_evaluate_rank_arithmetic():
    truths = [rec("f", "argument", "x", "int")]
    report = evaluate({"f:argument:x": ["str", "int"]}, truths)
    assert report.fractions["argument"][1]["exact_match"] == 0.0
    assert report.fractions["argument"][3]["exact_match"] == 1.0


def test_evaluate_missing_prediction_is_miss():
    truths = [rec("f", "return", "return", "int")]
    report = evaluate({}, truths)
    assert report.fractions["return"][5]["exact_match"] == 0.0


def test_evaluate_rare_bucket_thresholds():
    truths = [rec("f", "local", f"v{i}", "int") for i in range(9)]
    truths.append(rec("f", "local", "z", "Zebra"))
    report = evaluate({}, truths, rare_threshold=0.001)
    assert "rare" not in report.fractions  # 10% is not rare at 0.1%
    report = evaluate({}, truths, rare_threshold=0.2)
    assert report.counts["rare"] == 1  # only Zebra (10%) falls below 20%
    assert report.counts["common"] == 9


def test_evaluate_user_defined_bucket():
    truths = [rec("f", "return", "return", "Widget"), rec("g", "return", "return", "int")]
    report = evaluate(
        {"f:return:return": ["Widget"]}, truths, user_type_names={"Widget"}
    )
    assert report.counts["user-defined"] == 1
    assert report.fractions["user-defined"][1]["exact_match"] == 1.0


def test_evaluate_key_mismatch_reported():
    truths = [rec("f", "argument", "x", "int")]
    report = evaluate({"f:argument:x": ["int"], "zzz:return:return": ["str"]}, truths)
    assert report.key_mismatches == ["zzz:return:return"]


def test_evaluate_topk_nondecreasing():
    rng = random.Random(0)
    pool = ["int", "str", "List[int]", "bool"]
    truths = [rec("f", "local", f"v{i}", rng.choice(pool)) for i in range(30)]
    preds = {
        f"f:local:v{i}": rng.sample(pool, 3) for i in range(30)
    }
    report = evaluate(preds, truths)
    for cat in report.fractions:
        for metric in ("exact_match", "match_to_parametric"):
            values = [report.fractions[cat][k][metric] for k in (1, 3, 5)]
            assert values == sorted(values), (cat, metric)


def test_evaluate_permutation_invariant():
    rng = random.Random(1)
    truths = [rec("f", "local", f"v{i}", rng.choice(["int", "str"])) for i in range(12)]
    preds = {f"f:local:v{i}": ["int"] for i in range(12)}
    a = evaluate(preds, list(truths))
    shuffled = list(truths)
    rng.shuffle(shuffled)
    b = evaluate(preds, shuffled)
    assert a.fractions == b.fractions and a.counts == b.counts


# --- report emission -------------------------------------------------------------------

def _small_report() -> Report:
    truths = [rec("f", "argument", "x", "int"), rec("f", "return", "return", "List[str]")]
    preds = {"f:argument:x": ["int"], "f:return:return": ["List[int]"]}
    return evaluate(preds, truths)


def test_report_json_roundtrip():
    payload = json.loads(_small_report().to_json())
    assert payload["metrics"]["argument"]["top1"]["exact_match"] == 1.0
    assert payload["metrics"]["return"]["top1"]["match_to_parametric"] == 1.0
    assert payload["metrics"]["return"]["top1"]["exact_match"] == 0.0


def test_report_text_table_aligned():
    text = _small_report().to_text()
    lines = text.splitlines()
    assert lines[0].startswith("Category")
    assert len({len(line) for line in lines[:2]}) == 1  # header and rule align


def test_report_csv_delimited():
    csv_text = _small_report().to_csv()
    header = csv_text.splitlines()[0].split(",")
    assert header[:2] == ["category", "n"]
    assert "top1_exact_match" in header


def test_render_figures_writes_png(tmp_path):
    out = tmp_path / "report.png"
    render_figures(_small_report(), str(out))
    assert out.exists() and out.stat().st_size > 0


def test_load_truths_jsonl():
    text = '{"function": "f", "kind": "return", "name": "return", "annotation": "int"}\n'
    records = load_truths_jsonl(text)
    assert records[0].function == "f" and records[0].annotation == "int"
