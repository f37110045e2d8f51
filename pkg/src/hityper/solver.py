"""Inference orchestration over a linked program graph.

The loop alternates a forward sweep (rule conclusions flow from inputless
nodes toward returns) with a backward sweep (valid-type and relation
constraints remove candidates, and removals replay upstream through the
rules that produced them) until a fixed point. Remaining blank slots are
narrowed to hot slots (blank slots not dominated by other blank slots,
computed with semi-NCA dominators), recommendations are installed there,
and the fixpoint revalidates them.

Removed types are tombstoned per node so a forward recompute can never
resurrect them; that is what makes the alternation terminate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .frontend import UserTypeSet
from .rules import RuleEnv, builtin_stubs, forward_apply, reject_apply
from .tdg import NodeKind, ProgramTdg, TdgNode
from .types_core import (
    DEPTH_CAP,
    CandidateSet,
    CandState,
    PyType,
    absorb,
    parse_type_expr,
    user,
)


class IterationOverflow(RuntimeError):
    """The solver swept more than 10x the node count; an engine bug."""


@dataclass
class InferenceConfig:
    max_outer_iterations: int = 3
    top_k: int = 1
    depth_cap: int = DEPTH_CAP
    deterministic: bool = True
    correction_penalty: float = -0.1
    embeddings_path: str | None = None  # trained vectors for the correction scan

    def __post_init__(self) -> None:
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")


@dataclass
class RejectionRecord:
    function: str
    slot: str
    removed: tuple[str, ...]


@dataclass
class SlotAssignment:
    rendered: str | None
    status: str  # static | recommended+validated | blank


@dataclass
class FunctionAssignments:
    arguments: dict[str, SlotAssignment] = field(default_factory=dict)
    return_value: SlotAssignment = field(default_factory=lambda: SlotAssignment(None, "blank"))
    locals: dict[str, SlotAssignment] = field(default_factory=dict)


@dataclass
class Assignments:
    functions: dict[str, FunctionAssignments] = field(default_factory=dict)
    rejections: list[RejectionRecord] = field(default_factory=list)


NodeKey = tuple[str, str]  # (function qname, node id)


class Solver:
    """Owns one ProgramTdg exclusively while solving."""

    def __init__(
        self,
        program: ProgramTdg,
        config: InferenceConfig | None = None,
        stubs=None,
    ) -> None:
        self.program = program
        self.config = config or InferenceConfig()
        self.env = RuleEnv(
            stubs=stubs if stubs is not None else builtin_stubs(),
            user_types=program.user_types or UserTypeSet(),
        )
        self.tombstones: dict[NodeKey, set[PyType]] = {}
        self.rejections: list[RejectionRecord] = []
        self._order: list[NodeKey] = []
        self._extra_preds: dict[NodeKey, list[NodeKey]] = {}
        self._extra_succs: dict[NodeKey, list[NodeKey]] = {}
        self._sweeps = 0
        self._wire()

    # --- graph assembly -----------------------------------------------------

    def _wire(self) -> None:
        for fn, tdg in self.program.tdgs.items():
            for node_id in tdg.nodes:
                self._order.append((fn, node_id))
        for site in self.program.deferred:
            node = self.program.tdgs[site.caller].nodes[site.node_id]
            node.info["deferred"] = True
        for site in self.program.links:
            callee = self.program.tdgs[site.resolved]
            call_node = self.program.tdgs[site.caller].nodes[site.node_id]
            call_node.info["linked"] = site.resolved
            params = list(callee.arg_slots.values())
            if params and callee.nodes[params[0]].axiom:
                params = params[1:]  # bound self/cls is pre-typed
            for arg_id, param_id in zip(site.arg_ids, params):
                src = (site.caller, arg_id)
                dst = (site.resolved, param_id)
                self._extra_succs.setdefault(src, []).append(dst)
                self._extra_preds.setdefault(dst, []).append(src)
            for ret_id in callee.return_slots:
                src = (site.resolved, ret_id)
                dst = (site.caller, site.node_id)
                self._extra_succs.setdefault(src, []).append(dst)
                self._extra_preds.setdefault(dst, []).append(src)

    def node(self, key: NodeKey) -> TdgNode:
        return self.program.tdgs[key[0]].nodes[key[1]]

    def preds(self, key: NodeKey) -> list[NodeKey]:
        fn, node_id = key
        local = [(fn, p) for p in self.program.tdgs[fn].preds.get(node_id, ())]
        return local + self._extra_preds.get(key, [])

    def succs(self, key: NodeKey) -> list[NodeKey]:
        fn, node_id = key
        local = [(fn, s) for s in self.program.tdgs[fn].succs.get(node_id, ())]
        return local + self._extra_succs.get(key, [])

    # --- forward ------------------------------------------------------------

    def _apply_tombstones(self, key: NodeKey, cands: CandidateSet) -> CandidateSet:
        dead = self.tombstones.get(key)
        if not dead or cands.is_blank:
            return cands
        return cands.without(dead)

    def _refresh_env(self) -> None:
        returns: dict[str, CandidateSet] = {}
        for fn, tdg in self.program.tdgs.items():
            sets = [tdg.nodes[r].cands for r in tdg.return_slots]
            if sets and all(not s.is_blank for s in sets):
                merged = absorb(tuple(t for s in sets for t in s))
                returns[fn] = CandidateSet.of(merged)
            else:
                returns[fn] = CandidateSet.blank()
        self.env.linked_returns = returns
        attrs: dict[tuple[str, str], CandidateSet] = {}
        for (cls, attr), feeds in self.program.class_attr_feeds.items():
            # Attribute types come from constructor assignments only.
            sets = [
                self.program.tdgs[f].nodes[n].cands
                for f, n in feeds
                if f.endswith(".__init__")
            ]
            live = [t for s in sets if not s.is_blank for t in s]
            if live:
                attrs[(cls, attr)] = CandidateSet.of(absorb(tuple(live)))
        self.env.class_attrs = attrs

    def _compute_symbol(self, key: NodeKey, node: TdgNode) -> CandidateSet:
        preds = self.preds(key)
        if node.axiom:
            return node.cands
        if not preds:
            return node.cands  # parameter or first read: blank or recommended
        sets = [self.node(p).cands for p in preds]
        if node.ctx == "param":
            live = [t for s in sets if not s.is_blank for t in s]
            computed = (
                CandidateSet.of(absorb(tuple(live)))
                if live
                else CandidateSet.blank()
            )
        elif len(sets) == 1:
            computed = sets[0].with_state(CandState.INFERRED) if not sets[0].is_blank \
                else CandidateSet.blank()
        else:
            live = [t for s in sets if not s.is_blank for t in s]
            computed = (
                CandidateSet.of(absorb(tuple(live))) if live else CandidateSet.blank()
            )
        if computed.is_blank and node.cands.state in (CandState.RECOMMENDED, CandState.VALIDATED):
            return node.cands  # an installed recommendation fills this blank
        return computed

    def _compute(self, key: NodeKey) -> CandidateSet:
        node = self.node(key)
        if node.kind is NodeKind.SYMBOL:
            return self._compute_symbol(key, node)
        if node.kind is NodeKind.BRANCH:
            assert node.guard is not None
            if node.info.get("assertive"):
                # A guard clause (`if not isinstance(v, T): raise`) types its
                # continuation even when v itself is still blank.
                return CandidateSet.of(node.guard[1])
            preds = self.preds(key)
            incoming = self.node(preds[0]).cands if preds else CandidateSet.blank()
            if incoming.is_blank:
                return CandidateSet.blank()
            return CandidateSet.of(node.guard[1])
        if node.kind is NodeKind.MERGE:
            sets = [self.node(p).cands for p in self.preds(key)]
            if not sets:
                return CandidateSet.blank()
            if node.loop:
                live = [t for s in sets if not s.is_blank for t in s]
                return CandidateSet.of(absorb(tuple(live))) if live else CandidateSet.blank()
            if any(s.is_blank for s in sets):
                return CandidateSet.blank()
            return CandidateSet.of(absorb(tuple(t for s in sets for t in s)))
        # expression node
        inputs = [self.node(p).cands for p in self.preds(key)]
        return forward_apply(node, inputs, self.env)

    def forward_pass(self) -> bool:
        """Sweep forward until quiescent; True when anything changed."""
        changed_any = False
        while True:
            self._bump()
            self._refresh_env()
            changed = False
            for key in self._order:
                node = self.node(key)
                if node.axiom:
                    continue
                new = self._apply_tombstones(key, self._compute(key))
                if new.types != node.cands.types or new.state != node.cands.state:
                    node.cands = new
                    changed = True
            changed_any = changed_any or changed
            if not changed:
                return changed_any

    # --- backward -----------------------------------------------------------

    def _remove_types(self, key: NodeKey, gone: list[PyType],
                      emptied_log: list[NodeKey]) -> None:
        node = self.node(key)
        if node.axiom:
            return
        gone = [t for t in gone if t in node.cands]
        if not gone:
            return
        self.tombstones.setdefault(key, set()).update(gone)
        before_empty = node.cands.is_empty
        node.cands = node.cands.without(gone)
        if node.cands.is_empty and not before_empty:
            emptied_log.append(key)
        self._propagate_removal(key, gone, emptied_log)

    def _propagate_removal(self, key: NodeKey, gone: list[PyType],
                           emptied_log: list[NodeKey]) -> None:
        node = self.node(key)
        for pred in self.preds(key):
            pnode = self.node(pred)
            if pnode.axiom:
                continue
            if node.kind is NodeKind.SYMBOL or node.kind is NodeKind.MERGE:
                # Occurrence copies and merges are identity images.
                if pnode.kind is NodeKind.EXPR and pnode.op == "Call" \
                        and pnode.info.get("linked"):
                    continue  # other call sites may still produce the type
                hit = [t for t in gone if t in pnode.cands]
                if hit:
                    self._remove_types(pred, hit, emptied_log)
            elif node.kind is NodeKind.BRANCH:
                continue  # narrowing replaced the set; nothing maps upstream
            elif node.kind is NodeKind.EXPR:
                self._replay_expr(key, emptied_log)

    def _replay_expr(self, key: NodeKey, emptied_log: list[NodeKey]) -> None:
        """Remove input candidates whose entire forward image is tombstoned."""
        node = self.node(key)
        if node.op == "Call" and node.info.get("linked"):
            return
        pred_keys = self.preds(key)
        inputs = [self.node(p).cands for p in pred_keys]
        if any(c.is_blank for c in inputs):
            return
        dead = self.tombstones.get(key, set())
        if not dead:
            return
        for i, pred in enumerate(pred_keys):
            pnode = self.node(pred)
            if pnode.axiom or pnode.kind is NodeKind.BRANCH:
                continue
            doomed: list[PyType] = []
            for cand in list(inputs[i]):
                probe = list(inputs)
                probe[i] = CandidateSet.of([cand], inputs[i].state)
                image = forward_apply(node, probe, self.env)
                if image.is_blank:
                    continue
                if image.is_empty or all(t in dead for t in image):
                    doomed.append(cand)
            if doomed:
                self._remove_types(pred, doomed, emptied_log)

    def backward_pass(self) -> bool:
        """Reverse sweep applying rejection rules; True when anything was
        removed. Empty-set events on recommended slots reset them to blank
        and are collected into the rejection report."""
        self._bump()
        self._refresh_env()
        emptied: list[NodeKey] = []
        removed_any = False
        for key in reversed(self._order):
            node = self.node(key)
            if node.kind is not NodeKind.EXPR:
                continue
            pred_keys = self.preds(key)
            if not pred_keys:
                continue
            inputs = [self.node(p).cands for p in pred_keys]
            if all(c.is_blank for c in inputs):
                continue
            _, removals = reject_apply(node, inputs, self.env)
            by_input: dict[int, list[PyType]] = {}
            for idx, t in removals:
                by_input.setdefault(idx, []).append(t)
            for idx, gone in by_input.items():
                pnode = self.node(pred_keys[idx])
                if pnode.axiom:
                    continue
                before = pnode.cands.types
                self._remove_types(pred_keys[idx], gone, emptied)
                if pnode.cands.types != before:
                    removed_any = True
        for key in emptied:
            node = self.node(key)
            removed = tuple(sorted(str(t) for t in self.tombstones.get(key, ())))
            if node.kind is NodeKind.SYMBOL:
                self.rejections.append(RejectionRecord(key[0], key[1], removed))
            if node.cands.state in (CandState.RECOMMENDED, CandState.VALIDATED):
                node.cands = CandidateSet.blank()
        return removed_any

    # --- fixpoint -------------------------------------------------------------

    def _bump(self) -> None:
        self._sweeps += 1
        if self._sweeps > 10 * max(len(self._order), 1):
            raise IterationOverflow(f"exceeded {10 * len(self._order)} sweeps")

    def run_fixpoint(self) -> None:
        while True:
            changed_fwd = self.forward_pass()
            changed_bwd = self.backward_pass()
            if not changed_fwd and not changed_bwd:
                return

    # --- hot slots ------------------------------------------------------------

    def _blank_subgraph(self) -> tuple[list[NodeKey], dict[NodeKey, list[NodeKey]]]:
        blanks = [k for k in self._order if self.node(k).cands.is_blank]
        blankset = set(blanks)
        succs = {
            k: [s for s in self.succs(k) if s in blankset] for k in blanks
        }
        return blanks, succs

    def find_hot_slots(self) -> list[NodeKey]:
        """Blank slots not dominated by any other blank slot, in source order."""
        blanks, succs = self._blank_subgraph()
        slots = {k for k in blanks if self.node(k).is_slot}
        preds = {
            k: [p for p in self.preds(k) if self.node(p).cands.is_blank] for k in blanks
        }
        return hot_slots_in_subgraph(blanks, succs, preds, slots)

    # --- recommendations --------------------------------------------------------

    def slot_meta(self, key: NodeKey) -> tuple[str, str, str]:
        """(function, kind, name) for a slot node."""
        fn, node_id = key
        tdg = self.program.tdgs[fn]
        node = tdg.nodes[node_id]
        if node.var == "return":
            return (fn, "return", "return")
        if node.ctx == "param":
            return (fn, "argument", node.var or node_id)
        return (fn, "local", node.var or node_id)

    def install_recommendation(self, key: NodeKey, types: list[PyType]) -> bool:
        node = self.node(key)
        dead = self.tombstones.get(key, set())
        kept = [t for t in types if t not in dead]
        if not kept:
            return False
        node.cands = CandidateSet.of(kept, CandState.RECOMMENDED)
        return True

    def infer(self, recommender=None) -> Assignments:
        from .embeddings import EmbeddingProvider
        from .recommend import correct_type

        embeddings = (
            EmbeddingProvider.load(self.config.embeddings_path)
            if self.config.embeddings_path
            else None
        )
        self.run_fixpoint()
        for _ in range(self.config.max_outer_iterations):
            hot = self.find_hot_slots()
            if not hot or recommender is None:
                break
            metas = [self.slot_meta(k) for k in hot]
            recs = recommender.recommend_batch(metas, self.config.top_k)
            installed = False
            uts = self.env.user_types
            valid_names = uts.names()
            for key, meta, rec in zip(hot, metas, recs):
                types: list[PyType] = []
                for type_text, _score in rec.candidates:
                    corrected = correct_type(
                        meta[2], valid_names, type_text,
                        penalty=self.config.correction_penalty,
                        emb=embeddings,
                    )
                    try:
                        t = parse_type_expr(corrected)
                    except Exception:
                        continue
                    if t.is_user:
                        t = user(t.name, uts.overloads(t.name))
                    if t not in types:
                        types.append(t)
                if types and self.install_recommendation(key, types):
                    installed = True
            if not installed:
                break
            self.run_fixpoint()
        self._finalize_states()
        return self.extract_assignments()

    def _finalize_states(self) -> None:
        for key in self._order:
            node = self.node(key)
            if node.cands.state is CandState.RECOMMENDED and not node.cands.is_empty:
                node.cands = node.cands.with_state(CandState.VALIDATED)

    # --- consistency ----------------------------------------------------------

    def replay_violations(self) -> list[str]:
        """Re-derive every node from its inputs and re-run rejection; any
        difference from the settled state is a violation. Empty at a true
        fixed point."""
        self._refresh_env()
        problems: list[str] = []
        for key in self._order:
            node = self.node(key)
            if node.axiom:
                continue
            recomputed = self._apply_tombstones(key, self._compute(key))
            if recomputed.is_blank and node.cands.state in (
                CandState.RECOMMENDED, CandState.VALIDATED,
            ):
                continue
            if recomputed.types != node.cands.types:
                problems.append(
                    f"{key[0]}::{key[1]}: settled {node.cands.types} != "
                    f"recomputed {recomputed.types}"
                )
            if node.kind is not NodeKind.EXPR:
                continue
            pred_keys = self.preds(key)
            if not pred_keys:
                continue
            inputs = [self.node(p).cands for p in pred_keys]
            if all(c.is_blank for c in inputs):
                continue
            _, removals = reject_apply(node, inputs, self.env)
            for idx, t in removals:
                if not self.node(pred_keys[idx]).axiom:
                    problems.append(
                        f"{key[0]}::{key[1]}: rejection still removes "
                        f"{t} from input {idx}"
                    )
        return problems

    # --- output ---------------------------------------------------------------

    def _slot_assignment(self, node: TdgNode) -> SlotAssignment:
        rendered = node.cands.render_slot()
        if rendered is None:
            return SlotAssignment(None, "blank")
        status = (
            "recommended+validated"
            if node.cands.state in (CandState.RECOMMENDED, CandState.VALIDATED)
            else "static"
        )
        return SlotAssignment(rendered, status)

    def extract_assignments(self) -> Assignments:
        out = Assignments(rejections=list(self.rejections))
        for fn, tdg in self.program.tdgs.items():
            fa = FunctionAssignments()
            for param, node_id in tdg.arg_slots.items():
                fa.arguments[param] = self._slot_assignment(tdg.nodes[node_id])
            ret_sets = [tdg.nodes[r].cands for r in tdg.return_slots]
            if ret_sets and all(not s.is_blank and not s.is_empty for s in ret_sets):
                merged = CandidateSet.of(absorb(tuple(t for s in ret_sets for t in s)))
                recommended = any(
                    s.state in (CandState.RECOMMENDED, CandState.VALIDATED)
                    for s in ret_sets
                )
                fa.return_value = SlotAssignment(
                    merged.render_slot(),
                    "recommended+validated" if recommended else "static",
                )
            else:
                fa.return_value = SlotAssignment(None, "blank")
            for node in tdg.nodes.values():
                if not node.is_slot or node.ctx == "param" or node.var == "return":
                    continue
                fa.locals[f"{node.var}${node.occurrence}"] = self._slot_assignment(node)
            out.functions[fn] = fa
        return out


_VIRTUAL_ROOT: NodeKey = ("", "@root")


def _reachable(roots: list[NodeKey], succs: dict[NodeKey, list[NodeKey]]) -> set[NodeKey]:
    seen: set[NodeKey] = set()
    stack = list(roots)
    while stack:
        cur = stack.pop()
        if cur in seen:
            continue
        seen.add(cur)
        stack.extend(succs.get(cur, ()))
    return seen


def hot_slots_in_subgraph(
    nodes: list[NodeKey],
    succs: dict[NodeKey, list[NodeKey]],
    preds: dict[NodeKey, list[NodeKey]],
    slots: set[NodeKey],
) -> list[NodeKey]:
    """Slots not strictly dominated by another slot, computed with semi-NCA
    from the subgraph's entry nodes. A rootless cycle (every member has a
    predecessor inside the subgraph) gets its first node promoted to a root
    so the region is still addressable."""
    if not nodes:
        return []
    roots = [k for k in nodes if not preds.get(k)]
    reached = _reachable(roots, succs)
    for k in nodes:
        if k not in reached:
            roots.append(k)
            reached = _reachable(roots, succs)
    idom = semi_nca(nodes, succs, roots)
    hot: list[NodeKey] = []
    for key in nodes:
        if key not in slots or key not in idom:
            continue
        cur = idom[key]
        dominated = False
        while cur != _VIRTUAL_ROOT:
            if cur in slots:
                dominated = True
                break
            cur = idom[cur]
        if not dominated:
            hot.append(key)
    return hot


def semi_nca(
    nodes: list[NodeKey],
    succs: dict[NodeKey, list[NodeKey]],
    roots: list[NodeKey],
) -> dict[NodeKey, NodeKey]:
    """Immediate dominators via semi-NCA: one DFS, semidominators with
    path-compressed forest lookups, then a nearest-common-ancestor pass that
    intersects each vertex's DFS parent with its semidominator. Multiple
    roots hang off a virtual super-root; unreachable nodes are absent from
    the result."""
    graph: dict[NodeKey, list[NodeKey]] = {_VIRTUAL_ROOT: list(roots)}
    for n in nodes:
        graph[n] = list(succs.get(n, ()))
    preds: dict[NodeKey, list[NodeKey]] = {}
    for src, dsts in graph.items():
        for dst in dsts:
            preds.setdefault(dst, []).append(src)

    dfn: dict[NodeKey, int] = {}
    order: list[NodeKey] = []
    parent: dict[NodeKey, NodeKey] = {}
    stack: list[tuple[NodeKey, NodeKey | None]] = [(_VIRTUAL_ROOT, None)]
    while stack:
        node, par = stack.pop()
        if node in dfn:
            continue
        dfn[node] = len(order)
        order.append(node)
        if par is not None:
            parent[node] = par
        for s in reversed(graph.get(node, ())):
            if s not in dfn:
                stack.append((s, node))

    semi: dict[NodeKey, int] = {n: dfn[n] for n in order}
    ancestor: dict[NodeKey, NodeKey] = {}
    label: dict[NodeKey, NodeKey] = {n: n for n in order}

    def eval_(v: NodeKey) -> NodeKey:
        """Vertex with minimum semidominator on the linked path above v."""
        if v not in ancestor:
            return v
        chain = [v]
        while ancestor[chain[-1]] in ancestor:
            chain.append(ancestor[chain[-1]])
        anchor = ancestor[chain[-1]]
        for x in reversed(chain[:-1]):
            a = ancestor[x]
            if semi[label[a]] < semi[label[x]]:
                label[x] = label[a]
            ancestor[x] = anchor
        return label[v]

    # Reverse preorder: vertices with higher numbers are processed (and
    # linked) first, so eval_ sees exactly the already-processed region.
    for w in reversed(order[1:]):
        for v in preds.get(w, ()):
            if v not in dfn:
                continue
            u = eval_(v)
            if semi[u] < semi[w]:
                semi[w] = semi[u]
        ancestor[w] = parent[w]

    idom: dict[NodeKey, NodeKey] = {}
    for w in order[1:]:
        cand = parent[w]
        while dfn[cand] > semi[w]:
            cand = idom[cand]
        idom[w] = cand
    return idom


def naive_dominators(
    nodes: list[NodeKey],
    succs: dict[NodeKey, list[NodeKey]],
    roots: list[NodeKey],
) -> dict[NodeKey, set[NodeKey]]:
    """Iterative-dataflow dominators: Dom(n) = {n} ∪ ⋂ Dom(preds). The
    independent oracle for semi-NCA."""
    preds: dict[NodeKey, list[NodeKey]] = {n: [] for n in nodes}
    preds[_VIRTUAL_ROOT] = []
    for n in nodes:
        for s in succs.get(n, ()):
            preds.setdefault(s, []).append(n)
    for r in roots:
        preds.setdefault(r, []).append(_VIRTUAL_ROOT)
    universe = set(nodes) | {_VIRTUAL_ROOT}
    dom: dict[NodeKey, set[NodeKey]] = {n: set(universe) for n in universe}
    dom[_VIRTUAL_ROOT] = {_VIRTUAL_ROOT}
    changed = True
    while changed:
        changed = False
        for n in nodes:
            ps = [p for p in preds.get(n, ()) if p in universe]
            if not ps:
                new = {n}
            else:
                inter = set.intersection(*(dom[p] for p in ps)) if ps else set()
                new = {n} | inter
            if new != dom[n]:
                dom[n] = new
                changed = True
    return dom
