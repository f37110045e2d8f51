"""One-call helpers tying the frontend, graph builder and solver together."""

from __future__ import annotations

from .frontend import ModuleAst, collect_user_types, parse_module
from .rules import StubTable, builtin_stubs
from .solver import Assignments, InferenceConfig, Solver
from .tdg import ProgramTdg, build_tdg, link_functions


def build_program(
    source: str,
    path: str = "<memory>",
    search_paths: list[str] | None = None,
) -> tuple[ModuleAst, ProgramTdg]:
    module = parse_module(source, path)
    user_types = collect_user_types(module, search_paths or [])
    tdgs = {f.qualified_name: build_tdg(f, user_types, module) for f in module.functions}
    program = link_functions(tdgs, module)
    program.user_types = user_types
    return module, program


def make_solver(
    source: str,
    path: str = "<memory>",
    search_paths: list[str] | None = None,
    config: InferenceConfig | None = None,
    stubs: StubTable | None = None,
) -> Solver:
    _, program = build_program(source, path, search_paths)
    return Solver(program, config=config, stubs=stubs)


def infer_source(
    source: str,
    path: str = "<memory>",
    recommender=None,
    search_paths: list[str] | None = None,
    config: InferenceConfig | None = None,
    stubs: StubTable | None = None,
) -> Assignments:
    solver = make_solver(source, path, search_paths, config, stubs)
    return solver.infer(recommender)


def ranked_predictions(solver: Solver) -> dict[str, list[str]]:
    """Ranked per-slot predictions for evaluation: recommended slots rank
    their surviving candidates; static slots contribute their single
    rendered type (a Union when the set is heterogeneous). A local variable
    is represented by its last non-blank occurrence, the most refined one."""
    from .types_core import CandState, render

    preds: dict[str, list[str]] = {}

    def put(key: str, node) -> None:
        if node.cands.is_blank or node.cands.is_empty:
            return
        if node.cands.state in (CandState.RECOMMENDED, CandState.VALIDATED):
            preds[key] = [render(t) for t in node.cands]
        else:
            rendered = node.cands.render_slot()
            if rendered:
                preds[key] = [rendered]

    assignments = solver.extract_assignments()
    for fn, tdg in solver.program.tdgs.items():
        for param, node_id in tdg.arg_slots.items():
            put(f"{fn}:argument:{param}", tdg.nodes[node_id])
        if assignments.functions[fn].return_value.rendered is not None:
            preds[f"{fn}:return:return"] = [assignments.functions[fn].return_value.rendered]
        for node in tdg.nodes.values():
            if not node.is_slot or node.ctx == "param" or node.var == "return":
                continue
            put(f"{fn}:local:{node.var}", node)  # later occurrences overwrite
    return preds


__all__ = [
    "build_program",
    "make_solver",
    "infer_source",
    "ranked_predictions",
    "builtin_stubs",
]
