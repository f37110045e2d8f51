import json
import shutil
import sys
from pathlib import Path

from hityper.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
MOTIVATING_RETURN = "Tuple[List[int, Placeholder], Dict[str, Placeholder]]"


def _motivating_dir(tmp_path: Path) -> Path:
    workdir = tmp_path / "src"
    workdir.mkdir()
    for name in ("shape_parse.py", "placeholder.py"):
        shutil.copy(FIXTURES / "motivating" / name, workdir / name)
    return workdir


def test_infer_motivating_example(tmp_path, capsys):
    workdir = _motivating_dir(tmp_path)
    out = tmp_path / "out.json"
    code = main([
        "infer", str(workdir / "shape_parse.py"),
        "--recommender", "file",
        "--predictions", str(FIXTURES / "motivating" / "predictions.json"),
        "--out", str(out),
    ])
    assert code == 0
    document = json.loads(out.read_text())
    by_fn = document[str(workdir / "shape_parse.py")]
    assert by_fn["parse"]["arguments"]["text"] == "str"
    assert by_fn["parse"]["return"] == MOTIVATING_RETURN
    assert by_fn["parse"]["status"]["arguments"]["text"] == "recommended+validated"
    assert document["rejections"] == []


def test_infer_empty_directory(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    code = main(["infer", str(empty)])
    assert code == 0
    document = json.loads(capsys.readouterr().out)
    assert document == {"rejections": []}


def test_infer_missing_path_exit_2(capsys):
    assert main(["infer", "/no/such/file.py"]) == 2


def test_infer_config_error_exit_3(tmp_path):
    f = tmp_path / "a.py"
    f.write_text("def f():\n    pass\n")
    assert main(["infer", str(f), "--recommender", "file"]) == 3
    assert main(["infer", str(f), "--k", "2"]) == 3


def test_infer_syntax_error_skipped(tmp_path, capsys):
    bad = tmp_path / "bad.py"
    bad.write_text("def f(\n")
    good = tmp_path / "good.py"
    good.write_text("def g():\n    return 1\n")
    code = main(["infer", str(tmp_path)])
    assert code == 0
    captured = capsys.readouterr()
    assert "syntax error" in captured.err
    document = json.loads(captured.out)
    assert str(good) in document
    assert str(bad) not in document


def test_infer_output_nulls_for_blanks(tmp_path, capsys):
    f = tmp_path / "a.py"
    f.write_text("def f(x):\n    return unknown_call(x)\n")
    code = main(["infer", str(f)])
    assert code == 0
    document = json.loads(capsys.readouterr().out)
    fn = document[str(f)]["f"]
    assert fn["arguments"]["x"] is None
    assert fn["return"] is None


def test_infer_deterministic_bytes(tmp_path):
    workdir = _motivating_dir(tmp_path)
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    args = [
        "infer", str(workdir),
        "--recommender", "file",
        "--predictions", str(FIXTURES / "motivating" / "predictions.json"),
        "--seed", "7",
    ]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_infer_poisoned_rejection_key(tmp_path):
    workdir = _motivating_dir(tmp_path)
    out = tmp_path / "out.json"
    code = main([
        "infer", str(workdir / "shape_parse.py"),
        "--recommender", "file",
        "--predictions", str(FIXTURES / "motivating" / "predictions_poisoned.json"),
        "--out", str(out),
    ])
    assert code == 0
    document = json.loads(out.read_text())
    assert document[str(workdir / "shape_parse.py")]["parse"]["arguments"]["text"] is None
    assert any("text" in r["slot"] for r in document["rejections"])


def test_infer_sidecar_backend(tmp_path):
    workdir = _motivating_dir(tmp_path)
    out = tmp_path / "out.json"
    cmd = f"{sys.executable} {FIXTURES / 'sidecar_echo.py'} str"
    code = main([
        "infer", str(workdir / "shape_parse.py"),
        "--recommender", "sidecar",
        "--sidecar-cmd", cmd,
        "--out", str(out),
    ])
    assert code == 0
    document = json.loads(out.read_text())
    assert document[str(workdir / "shape_parse.py")]["parse"]["return"] == MOTIVATING_RETURN


def test_eval_sources_mode(tmp_path, capsys):
    corpus = FIXTURES / "static_corpus"
    out = tmp_path / "report.json"
    code = main([
        "eval", str(corpus / "arithmetic.py"),
        "--out", str(out),
    ])
    assert code == 0
    table = capsys.readouterr().out
    assert "Top-1 Exact" in table
    payload = json.loads(out.read_text())
    assert payload["metrics"]["local"]["top1"]["exact_match"] == 1.0
    assert out.with_suffix(".csv").exists()
    assert out.with_suffix(".png").exists()


def test_eval_truths_mode(tmp_path, capsys):
    truths = tmp_path / "truths.jsonl"
    truths.write_text(
        '{"function": "f", "kind": "argument", "name": "x", "annotation": "int"}\n'
    )
    preds = tmp_path / "preds.json"
    preds.write_text('{"f:argument:x": ["int"]}')
    out = tmp_path / "report.json"
    code = main([
        "eval", "--truths", str(truths), "--pred-file", str(preds),
        "--out", str(out), "--no-figures",
    ])
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["metrics"]["argument"]["top1"]["exact_match"] == 1.0
    assert not out.with_suffix(".png").exists()


def test_eval_missing_truths_exit_2(tmp_path):
    assert main(["eval", "--truths", str(tmp_path / "nope.jsonl")]) == 2


def test_dump_tdg_writes_dot_files(tmp_path):
    workdir = _motivating_dir(tmp_path)
    outdir = tmp_path / "dots"
    code = main(["dump-tdg", str(workdir / "shape_parse.py"), "--out", str(outdir)])
    assert code == 0
    dots = sorted(p.name for p in outdir.glob("*.dot"))
    assert dots == ["shape_parse._normalize_text.dot", "shape_parse.parse.dot"]
    content = (outdir / "shape_parse.parse.dot").read_text()
    assert content.startswith("digraph") and "isinstance" in content


def test_dump_tdg_stdout(tmp_path, capsys):
    f = tmp_path / "a.py"
    f.write_text("def f():\n    a = 1\n")
    assert main(["dump-tdg", str(f)]) == 0
    assert "digraph" in capsys.readouterr().out


def test_dump_tdg_missing_input(capsys):
    assert main(["dump-tdg", "/definitely/not/here.py"]) == 2


def test_train_embeddings(tmp_path):
    src = tmp_path / "a.py"
    src.write_text("def tokenize_text(raw_text):\n    clean_text = raw_text\n    return clean_text\n")
    out = tmp_path / "vecs.npz"
    code = main(["train-embeddings", str(src), "--out", str(out),
                 "--dim", "16", "--epochs", "1"])
    assert code == 0
    assert out.exists()


def test_infer_corrects_misspelled_user_type(tmp_path, capsys):
    (tmp_path / "stockroom.py").write_text(
        "class Bin:\n    def __init__(self, tag=None):\n        self.tag = tag\n"
    )
    src = tmp_path / "pick.py"
    src.write_text("from stockroom import Bin\n\n\ndef pick(box):\n    return box\n")
    preds = tmp_path / "preds.json"
    preds.write_text('{"pick:arg:box": ["Binn"]}')
    vectors = tmp_path / "v.npz"
    assert main(["train-embeddings", str(tmp_path), "--out", str(vectors),
                 "--dim", "16", "--epochs", "1"]) == 0
    capsys.readouterr()
    code = main(["infer", str(src), "--recommender", "file",
                 "--predictions", str(preds), "--embeddings", str(vectors),
                 "--penalty", "-0.1"])
    assert code == 0
    document = json.loads(capsys.readouterr().out)
    assert document[str(src)]["pick"]["arguments"]["box"] == "Bin"


def test_stubs_flag_and_env_default(tmp_path, monkeypatch, capsys):
    stub_file = tmp_path / "extra.txt"
    stub_file.write_text("mystery_fn : Callable[[], str]\n")
    f = tmp_path / "a.py"
    f.write_text("def f():\n    return mystery_fn()\n")

    code = main(["infer", str(f), "--stubs", str(stub_file)])
    assert code == 0
    document = json.loads(capsys.readouterr().out)
    assert document[str(f)]["f"]["return"] == "str"

    monkeypatch.setenv("HITYPER_STUBS", str(stub_file))
    code = main(["infer", str(f)])
    assert code == 0
    document = json.loads(capsys.readouterr().out)
    assert document[str(f)]["f"]["return"] == "str"
