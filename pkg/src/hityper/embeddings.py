"""Identifier embeddings: a deterministic lexical fallback plus an optional
small-corpus skip-gram trainer.

The lexical fallback hashes character trigrams of a token into a fixed-size
vector, so related identifiers (place/placeholder) overlap while unrelated
ones are near-orthogonal. Trained vectors, when present, take precedence."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

LEXICAL_DIM = 512


def _trigrams(token: str) -> list[str]:
    padded = f"^{token}$"
    if len(padded) <= 3:
        return [padded]
    return [padded[i : i + 3] for i in range(len(padded) - 2)]


def lexical_vector(token: str, dim: int = LEXICAL_DIM) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.float64)
    for gram in _trigrams(token.lower()):
        vec[zlib.crc32(gram.encode("utf-8")) % dim] += 1.0
    return vec


@dataclass
class EmbeddingProvider:
    """Token-to-vector lookup. Every token has a vector: trained if known,
    lexical-fallback otherwise (fallback vectors live in their own slice of
    the dimension space so the two sources never falsely overlap)."""

    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    dim: int = LEXICAL_DIM
    provenance: str = "lexical-fallback"

    def vector(self, token: str) -> np.ndarray:
        token = token.lower()
        if token in self.vectors:
            return self.vectors[token]
        return lexical_vector(token, self.dim)

    @staticmethod
    def lexical() -> "EmbeddingProvider":
        return EmbeddingProvider()

    @staticmethod
    def load(path: str) -> "EmbeddingProvider":
        data = np.load(path, allow_pickle=False)
        vectors = {name: data[name] for name in data.files}
        dim = next(iter(vectors.values())).shape[0] if vectors else LEXICAL_DIM
        return EmbeddingProvider(vectors, dim, provenance="trained small-corpus skip-gram")

    def save(self, path: str) -> None:
        np.savez_compressed(path, **self.vectors)


def train_skipgram(
    sentences: list[list[str]],
    dim: int = 256,
    window: int = 10,
    epochs: int = 5,
    negatives: int = 5,
    learning_rate: float = 0.05,
    seed: int = 0,
) -> EmbeddingProvider:
    """Skip-gram with negative sampling over subtoken sentences. Sized for
    small identifier corpora, not general text."""
    rng = np.random.default_rng(seed)
    vocab: dict[str, int] = {}
    counts: list[int] = []
    for sent in sentences:
        for tok in sent:
            tok = tok.lower()
            if tok not in vocab:
                vocab[tok] = len(vocab)
                counts.append(0)
            counts[vocab[tok]] += 1
    if not vocab:
        return EmbeddingProvider.lexical()

    n = len(vocab)
    w_in = (rng.random((n, dim)) - 0.5) / dim
    w_out = np.zeros((n, dim))
    freq = np.asarray(counts, dtype=np.float64) ** 0.75
    noise = freq / freq.sum()

    pairs: list[tuple[int, int]] = []
    for sent in sentences:
        ids = [vocab[t.lower()] for t in sent]
        for i, center in enumerate(ids):
            lo = max(0, i - window)
            hi = min(len(ids), i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    pairs.append((center, ids[j]))
    if not pairs:
        vectors = {tok: w_in[idx].copy() for tok, idx in vocab.items()}
        return EmbeddingProvider(vectors, dim, "trained small-corpus skip-gram")

    pair_arr = np.asarray(pairs)
    for _ in range(epochs):
        rng.shuffle(pair_arr)
        for center, context in pair_arr:
            targets = np.concatenate(
                ([context], rng.choice(n, size=negatives, p=noise))
            )
            labels = np.zeros(len(targets))
            labels[0] = 1.0
            v = w_in[center]
            scores = 1.0 / (1.0 + np.exp(-(w_out[targets] @ v)))
            grad = (scores - labels)[:, None]
            w_in[center] -= learning_rate * (grad * w_out[targets]).sum(axis=0)
            w_out[targets] -= learning_rate * grad * v
    vectors = {tok: w_in[idx].copy() for tok, idx in vocab.items()}
    return EmbeddingProvider(vectors, dim, "trained small-corpus skip-gram")


def save_merge_table(merges: list[tuple[str, str]], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(merges, fh)


def load_merge_table(path: str) -> list[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        return [tuple(pair) for pair in json.load(fh)]
