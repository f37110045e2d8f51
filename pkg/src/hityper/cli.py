"""Command-line surface.

Subcommands: ``infer`` (JSON type assignments), ``eval`` (Top-k report with
text table, CSV and figures), ``dump-tdg`` (DOT per function), and
``train-embeddings`` (offline skip-gram over identifier subtokens).

Exit codes: 0 success, 2 unreadable input, 3 configuration error. Per-file
syntax errors are reported on stderr and the file is skipped."""

from __future__ import annotations

import argparse
import ast
import json
import os
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import api
from .evaluation import evaluate, load_truths_jsonl, render_figures
from .frontend import strip_annotations
from .recommend import (
    FileRecommender,
    FrequencyTable,
    NaiveRecommender,
    NullRecommender,
    SidecarRecommender,
    subtokenize,
)
from .rules import StubTable, builtin_stubs, load_stub_text
from .solver import InferenceConfig
from .tdg import export_dot

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3


class ConfigError(Exception):
    pass


def _collect_inputs(paths: list[str]) -> list[Path]:
    files: list[Path] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            files.extend(sorted(p.rglob("*.py")))
        elif p.is_file():
            files.append(p)
        else:
            raise FileNotFoundError(raw)
    return files


def _load_stubs(paths: list[str]) -> StubTable:
    table = builtin_stubs()
    env_default = os.environ.get("HITYPER_STUBS")
    ordered = ([env_default] if env_default and not paths else []) + list(paths)
    for path in ordered:
        with open(path, encoding="utf-8") as fh:
            table.merge(load_stub_text(fh.read(), path))
    return table


def _make_recommender(args: argparse.Namespace):
    kind = args.recommender
    if kind == "none":
        return NullRecommender()
    if kind == "naive":
        if not args.table:
            raise ConfigError("--recommender naive requires --table")
        return NaiveRecommender(
            FrequencyTable.load(args.table), sampling=args.sample, seed=args.seed
        )
    if kind == "file":
        if not args.predictions:
            raise ConfigError("--recommender file requires --predictions")
        return FileRecommender.load(args.predictions)
    if kind == "sidecar":
        if not args.sidecar_cmd:
            raise ConfigError("--recommender sidecar requires --sidecar-cmd")
        return SidecarRecommender(args.sidecar_cmd)
    raise ConfigError(f"unknown recommender {kind!r}")


def _config(args: argparse.Namespace) -> InferenceConfig:
    if args.k not in (1, 3, 5):
        raise ConfigError("--k must be one of 1, 3, 5")
    return InferenceConfig(
        max_outer_iterations=args.max_iters,
        top_k=args.k,
        deterministic=True,
        correction_penalty=args.penalty,
        embeddings_path=args.embeddings,
    )


def _assignments_payload(assignments) -> dict:
    payload: dict = {}
    for fn, fa in sorted(assignments.functions.items()):
        payload[fn] = {
            "arguments": {n: s.rendered for n, s in sorted(fa.arguments.items())},
            "return": fa.return_value.rendered,
            "locals": {n: s.rendered for n, s in sorted(fa.locals.items())},
            "status": {
                "arguments": {n: s.status for n, s in sorted(fa.arguments.items())},
                "return": fa.return_value.status,
                "locals": {n: s.status for n, s in sorted(fa.locals.items())},
            },
        }
    return payload


class _LockedRecommender:
    """Serializes backend calls; the sidecar client in particular owns a
    single connection that concurrent file workers must not interleave."""

    def __init__(self, backend) -> None:
        self._backend = backend
        self._lock = threading.Lock()

    def recommend_batch(self, slots, k):
        with self._lock:
            return self._backend.recommend_batch(slots, k)


def cmd_infer(args: argparse.Namespace) -> int:
    try:
        files = _collect_inputs(args.inputs)
    except FileNotFoundError as err:
        print(f"error: no such input: {err}", file=sys.stderr)
        return EXIT_INPUT
    try:
        stubs = _load_stubs(args.stubs)
        recommender = _LockedRecommender(_make_recommender(args))
        config = _config(args)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    def analyze(path: Path):
        """Returns (path, payload, rejections) or an error marker tuple."""
        search = sorted({str(path.parent), *args.search_path})
        try:
            source = path.read_text(encoding="utf-8")
        except OSError as err:
            return (path, "unreadable", str(err))
        try:
            solver = api.make_solver(source, str(path), search, config, stubs)
        except SyntaxError as err:
            return (path, "syntax", f"{err.lineno}:{err.offset}: syntax error: {err.msg}")
        assignments = solver.infer(recommender)
        return (path, "ok", assignments)

    # Files are independent; solve them in a worker pool and assemble the
    # document single-threaded in input order.
    document: dict = {}
    rejections: list[dict] = []
    if files:
        with ThreadPoolExecutor(max_workers=min(8, len(files))) as pool:
            results = list(pool.map(analyze, files))
    else:
        results = []
    for path, status, payload in results:
        if status == "unreadable":
            print(f"error: cannot read {path}: {payload}", file=sys.stderr)
            return EXIT_INPUT
        if status == "syntax":
            print(f"{path}:{payload}", file=sys.stderr)
            continue
        document[str(path)] = _assignments_payload(payload)
        rejections.extend(
            {"function": r.function, "slot": r.slot, "removed": list(r.removed)}
            for r in payload.rejections
        )
    document["rejections"] = rejections
    text = json.dumps(document, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        stubs = _load_stubs(args.stubs)
        recommender = _make_recommender(args)
        config = _config(args)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    truths = []
    preds: dict[str, list[str]] = {}
    user_names: set[str] = set()
    if args.truths:
        try:
            truths = load_truths_jsonl(Path(args.truths).read_text(encoding="utf-8"))
            if args.pred_file:
                preds = json.loads(Path(args.pred_file).read_text(encoding="utf-8"))
        except OSError as err:
            print(f"error: {err}", file=sys.stderr)
            return EXIT_INPUT
    else:
        try:
            files = _collect_inputs(args.inputs)
        except FileNotFoundError as err:
            print(f"error: no such input: {err}", file=sys.stderr)
            return EXIT_INPUT
        for path in files:
            source = path.read_text(encoding="utf-8")
            try:
                stripped, records = strip_annotations(source)
            except SyntaxError as err:
                print(f"{path}:{err.lineno}: syntax error: {err.msg}", file=sys.stderr)
                continue
            search = sorted({str(path.parent), *args.search_path})
            solver = api.make_solver(stripped, str(path), search, config, stubs)
            solver.infer(recommender)
            preds.update(api.ranked_predictions(solver))
            truths.extend(records)
            user_names |= (solver.program.user_types.names()
                           if solver.program.user_types else set())

    report = evaluate(
        preds,
        truths,
        ks=tuple(args.ks),
        rare_threshold=args.rare_threshold,
        user_type_names=user_names,
    )
    print(report.to_text())
    if args.out:
        out = Path(args.out)
        out.write_text(report.to_json() + "\n", encoding="utf-8")
        out.with_suffix(".csv").write_text(report.to_csv(), encoding="utf-8")
        if not args.no_figures:
            render_figures(report, str(out.with_suffix(".png")))
    return EXIT_OK


def cmd_dump_tdg(args: argparse.Namespace) -> int:
    try:
        files = _collect_inputs(args.inputs)
    except FileNotFoundError as err:
        print(f"error: no such input: {err}", file=sys.stderr)
        return EXIT_INPUT
    outdir = Path(args.out) if args.out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    for path in files:
        try:
            source = path.read_text(encoding="utf-8")
        except OSError as err:
            print(f"error: cannot read {path}: {err}", file=sys.stderr)
            return EXIT_INPUT
        try:
            _, program = api.build_program(source, str(path), [str(path.parent)])
        except SyntaxError as err:
            print(f"{path}:{err.lineno}: syntax error: {err.msg}", file=sys.stderr)
            continue
        for qname, tdg in sorted(program.tdgs.items()):
            dot = export_dot(tdg)
            if outdir:
                (outdir / f"{path.stem}.{qname}.dot").write_text(dot, encoding="utf-8")
            else:
                print(dot)
    return EXIT_OK


def _identifier_sentences(files: list[Path]) -> list[list[str]]:
    sentences = []
    for path in files:
        try:
            tree = ast.parse(path.read_text(encoding="utf-8"))
        except (OSError, SyntaxError):
            continue
        tokens: list[str] = []
        for node in ast.walk(tree):
            name = None
            if isinstance(node, ast.Name):
                name = node.id
            elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                name = node.name
            elif isinstance(node, ast.arg):
                name = node.arg
            if name:
                tokens.extend(subtokenize(name))
        if tokens:
            sentences.append(tokens)
    return sentences


def cmd_train_embeddings(args: argparse.Namespace) -> int:
    from .embeddings import train_skipgram

    try:
        files = _collect_inputs(args.inputs)
    except FileNotFoundError as err:
        print(f"error: no such input: {err}", file=sys.stderr)
        return EXIT_INPUT
    sentences = _identifier_sentences(files)
    provider = train_skipgram(
        sentences,
        dim=args.dim,
        window=args.window,
        epochs=args.epochs,
        seed=args.seed,
    )
    provider.save(args.out)
    print(f"trained {len(provider.vectors)} token vectors -> {args.out}")
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("inputs", nargs="*", help="source files or directories")
    parser.add_argument("--stubs", action="append", default=[],
                        help="extra stub table file (repeatable; later override)")
    parser.add_argument("--search-path", action="append", default=[],
                        help="directory for resolving imports (repeatable)")
    parser.add_argument("--recommender", choices=["none", "naive", "file", "sidecar"],
                        default="none")
    parser.add_argument("--predictions", help="predictions JSON for the file backend")
    parser.add_argument("--table", help="frequency table for the naive backend")
    parser.add_argument("--sidecar-cmd", help="command line spawning the sidecar")
    parser.add_argument("--sample", action="store_true",
                        help="naive backend samples instead of taking the prefix")
    parser.add_argument("--k", type=int, default=1, help="candidates per hot slot (1/3/5)")
    parser.add_argument("--max-iters", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--penalty", type=float, default=-0.1,
                        help="discount applied to name-vs-type similarity in correction")
    parser.add_argument("--embeddings", help="trained token vectors (npz) for correction")
    parser.add_argument("--out", help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hityper")
    sub = parser.add_subparsers(dest="command", required=True)

    p_infer = sub.add_parser("infer", help="infer types, write a JSON assignment map")
    _add_common(p_infer)
    p_infer.set_defaults(func=cmd_infer)

    p_eval = sub.add_parser("eval", help="score predictions against ground truth")
    _add_common(p_eval)
    p_eval.add_argument("--truths", help="ground-truth JSONL (skip engine run)")
    p_eval.add_argument("--pred-file", help="ranked predictions JSON map")
    p_eval.add_argument("--ks", type=int, nargs="+", default=[1, 3, 5])
    p_eval.add_argument("--rare-threshold", type=float, default=0.001)
    p_eval.add_argument("--no-figures", action="store_true")
    p_eval.set_defaults(func=cmd_eval)

    p_dump = sub.add_parser("dump-tdg", help="emit DOT graphs per function")
    _add_common(p_dump)
    p_dump.set_defaults(func=cmd_dump_tdg)

    p_train = sub.add_parser("train-embeddings", help="train identifier embeddings")
    p_train.add_argument("inputs", nargs="+")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--dim", type=int, default=256)
    p_train.add_argument("--window", type=int, default=10)
    p_train.add_argument("--epochs", type=int, default=5)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(func=cmd_train_embeddings)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
