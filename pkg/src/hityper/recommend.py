"""Recommender backends and similarity-based correction of user-defined
type recommendations.

A recommendation is never trusted: the solver installs it and lets backward
rejection prune it. Backends: a frequency-table baseline (the top-ten type
distribution), an offline predictions file, and a sidecar child process
speaking line-delimited JSON over stdin/stdout."""

from __future__ import annotations

import json
import re
import shlex
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingProvider
from .types_core import TypeParseError, parse_type_expr

SlotMeta = tuple[str, str, str]  # (function qname, kind, name)


class SidecarUnavailable(Exception):
    """The sidecar process could not be spawned or its pipe broke."""


class ProtocolError(Exception):
    """The sidecar answered with something that is not a valid response."""


@dataclass
class Recommendation:
    """Ranked candidates for one slot; entries are annotation strings with
    non-increasing scores in [0, 1]."""

    slot: str
    candidates: list[tuple[str, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        scores = [s for _, s in self.candidates]
        if any(b > a for a, b in zip(scores, scores[1:])):
            self.candidates = sorted(self.candidates, key=lambda c: -c[1])


@dataclass
class FrequencyTable:
    """(type string, count) pairs ordered by count desc, ties lexicographic."""

    entries: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.entries = sorted(self.entries, key=lambda e: (-e[1], e[0]))

    def top(self, n: int = 10) -> list[tuple[str, int]]:
        return self.entries[:n]

    @staticmethod
    def parse(text: str) -> "FrequencyTable":
        entries = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            name, _, count = line.rpartition(" ")
            entries.append((name.strip(), int(count)))
        return FrequencyTable(entries)

    @staticmethod
    def load(path: str) -> "FrequencyTable":
        with open(path, encoding="utf-8") as fh:
            return FrequencyTable.parse(fh.read())


def naive_recommend(
    slot: str,
    k: int,
    table: FrequencyTable,
    sampling: bool = False,
    seed: int = 0,
) -> Recommendation:
    """Top-k of the ten most frequent types. Deterministic mode takes the
    prefix with normalized-count scores; sampling mode draws k without
    replacement proportionally to the counts."""
    top10 = table.top(10)
    if not top10:
        return Recommendation(slot, [])
    total = 0.0
    for _, count in top10:
        total += float(count)
    if not sampling:
        chosen = top10[:k]
        return Recommendation(slot, [(name, count / total) for name, count in chosen])
    rng = np.random.default_rng(seed)
    names = [n for n, _ in top10]
    weights = np.asarray([c for _, c in top10], dtype=np.float64)
    picked: list[tuple[str, float]] = []
    available = list(range(len(names)))
    for _ in range(min(k, len(names))):
        w = weights[available]
        idx = rng.choice(available, p=w / w.sum())
        available.remove(int(idx))
        picked.append((names[int(idx)], float(weights[int(idx)] / total)))
    picked.sort(key=lambda c: -c[1])
    return Recommendation(slot, picked)


# --- identifier similarity ----------------------------------------------------

_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z0-9])|[A-Z]?[a-z0-9]+|[A-Z]+|\d+")


def subtokenize(ident: str, merges: list[tuple[str, str]] | None = None) -> list[str]:
    """Lowercased subtokens split on underscores and camel-case boundaries.
    A learned merge table, when given, re-segments tokens bottom-up from
    characters by applying merges in rank order."""
    tokens: list[str] = []
    for part in ident.replace(".", "_").split("_"):
        tokens.extend(m.group(0).lower() for m in _CAMEL_RE.finditer(part))
    if not tokens:
        tokens = [ident.lower() or "_"]
    if merges:
        ranks = {pair: i for i, pair in enumerate(merges)}
        tokens = [seg for tok in tokens for seg in _bpe_segment(tok, ranks)]
    return tokens


def _bpe_segment(token: str, ranks: dict[tuple[str, str], int]) -> list[str]:
    pieces = list(token)
    while len(pieces) > 1:
        best = None
        best_rank = None
        for i in range(len(pieces) - 1):
            rank = ranks.get((pieces[i], pieces[i + 1]))
            if rank is not None and (best_rank is None or rank < best_rank):
                best, best_rank = i, rank
        if best is None:
            break
        pieces[best : best + 2] = [pieces[best] + pieces[best + 1]]
    return pieces


def similarity(a: list[str], b: list[str], emb: EmbeddingProvider | None = None) -> float:
    """Cosine similarity of mean-pooled token vectors, clamped to [0, 1]."""
    if not a or not b:
        raise ValueError("similarity requires non-empty token lists")
    emb = emb or EmbeddingProvider.lexical()
    va = np.mean([emb.vector(t) for t in a], axis=0)
    vb = np.mean([emb.vector(t) for t in b], axis=0)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(min(1.0, max(0.0, float(va @ vb) / (na * nb))))


def is_builtin_type(text: str) -> bool:
    """True when the annotation denotes a builtin (non-user-defined) type."""
    try:
        t = parse_type_expr(text)
    except TypeParseError:
        return False
    return not t.is_user


def correct_type(
    name: str,
    valid_user_types: set[str],
    t: str,
    penalty: float = -0.1,
    emb: EmbeddingProvider | None = None,
    merges: list[tuple[str, str]] | None = None,
) -> str:
    """Replace an explicitly incorrect user-defined recommendation with the
    most similar collected user-defined type.

    The scan keeps the larger of type-vs-type similarity and penalized
    name-vs-type similarity as the running comparison but records the
    unpenalized value when the latter wins, so later candidates compete
    against the raw similarity. When no candidate scores above zero the
    recommendation is returned unchanged."""
    if t in valid_user_types or is_builtin_type(t):
        return t
    if not valid_user_types:
        return t
    largest_sim = 0.0
    largest_type: str | None = None
    tw = subtokenize(t, merges)
    namew = subtokenize(name, merges)
    for pt in sorted(valid_user_types):
        ptw = subtokenize(pt, merges)
        sim_type = similarity(ptw, tw, emb)
        if sim_type > largest_sim:
            largest_sim = sim_type
            largest_type = pt
        sim_name = similarity(ptw, namew, emb)
        if sim_name + penalty > largest_sim:
            largest_sim = sim_name
            largest_type = pt
    return largest_type if largest_type is not None else t


# --- backends -------------------------------------------------------------------


class NullRecommender:
    """No recommendations; static inference only."""

    def recommend_batch(self, slots: list[SlotMeta], k: int) -> list[Recommendation]:
        return [Recommendation(_slot_key(m), []) for m in slots]


class NaiveRecommender:
    def __init__(self, table: FrequencyTable, sampling: bool = False, seed: int = 0) -> None:
        self.table = table
        self.sampling = sampling
        self.seed = seed

    def recommend_batch(self, slots: list[SlotMeta], k: int) -> list[Recommendation]:
        return [
            naive_recommend(_slot_key(m), k, self.table, self.sampling, self.seed + i)
            for i, m in enumerate(slots)
        ]


def _slot_key(meta: SlotMeta) -> str:
    fn, kind, name = meta
    short = {"argument": "arg", "return": "return", "local": "local"}.get(kind, kind)
    return f"{fn}:{short}:{name}"


class FileRecommender:
    """Reads a predictions document: JSON map "func:kind:name" -> ordered
    list of type strings. Both short (arg) and long (argument) kind spellings
    are accepted; locals match with or without the $order suffix."""

    def __init__(self, mapping: dict[str, list[str]]) -> None:
        self.mapping = mapping

    @staticmethod
    def load(path: str) -> "FileRecommender":
        with open(path, encoding="utf-8") as fh:
            return FileRecommender(json.load(fh))

    def _lookup(self, meta: SlotMeta) -> list[str]:
        fn, kind, name = meta
        kinds = {"argument": ["arg", "argument"], "return": ["return"],
                 "local": ["local"]}.get(kind, [kind])
        names = [name]
        if kind == "local" and "$" in name:
            names.append(name.split("$", 1)[0])
        for k in kinds:
            for n in names:
                hit = self.mapping.get(f"{fn}:{k}:{n}")
                if hit is not None:
                    return hit
        return []

    def recommend_batch(self, slots: list[SlotMeta], k: int) -> list[Recommendation]:
        out = []
        for meta in slots:
            ranked = self._lookup(meta)[:k]
            scores = [(t, 1.0 / (i + 1)) for i, t in enumerate(ranked)]
            out.append(Recommendation(_slot_key(meta), scores))
        return out


class SidecarRecommender:
    """Speaks the line-delimited JSON protocol with a spawned child process:
    one request object per line, one response per request, matched by id
    (responses may arrive out of order). Failures degrade the affected slot
    to an empty candidate list."""

    def __init__(self, command: str, timeout: float = 10.0) -> None:
        self.command = command
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._next_id = 0
        self._pending: dict[int, dict] = {}

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    shlex.split(self.command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as err:
                raise SidecarUnavailable(str(err)) from err
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=self.timeout)
        self._proc = None

    def _roundtrip(self, request: dict) -> dict:
        proc = self._ensure()
        rid = request["id"]
        if rid in self._pending:
            return self._pending.pop(rid)
        try:
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as err:
            raise SidecarUnavailable(str(err)) from err
        while True:
            line = proc.stdout.readline()
            if not line:
                raise SidecarUnavailable("sidecar closed its output")
            try:
                response = json.loads(line)
            except json.JSONDecodeError as err:
                raise ProtocolError(f"unparseable response line: {line!r}") from err
            if not isinstance(response, dict):
                raise ProtocolError("response is not an object")
            got = response.get("id")
            if got == rid:
                return response
            if isinstance(got, int):
                self._pending[got] = response  # out-of-order: keep for later
                continue
            if "error" in response:
                raise ProtocolError(str(response["error"]))
            raise ProtocolError(f"response with unknown id {got!r}")

    def recommend_batch(self, slots: list[SlotMeta], k: int) -> list[Recommendation]:
        out = []
        for fn, kind, name in slots:
            self._next_id += 1
            request = {
                "id": self._next_id,
                "function": fn,
                "kind": kind,
                "name": name,
                "k": k,
                "context": subtokenize(f"{fn}_{name}"),
            }
            key = _slot_key((fn, kind, name))
            try:
                response = self._roundtrip(request)
                raw = response.get("candidates", [])
                if not isinstance(raw, list):
                    raise ProtocolError("candidates is not a list")
                cands = []
                for item in raw[:k]:
                    cands.append((str(item["type"]), float(item.get("score", 0.0))))
                out.append(Recommendation(key, cands))
            except (SidecarUnavailable, ProtocolError):
                out.append(Recommendation(key, []))
        return out


def recommend_batch(slots: list[SlotMeta], k: int, backend) -> list[Recommendation]:
    """Uniform entry point over any backend object."""
    return backend.recommend_batch(slots, k)
