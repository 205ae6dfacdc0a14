"""Fact distances and similarities under the edit and embedding geometries."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from ..corpus import FactTriple, RelationCatalog, fact_tokens, normalize_ws, tokenize

GEOMETRIES = ("edit", "embedding")


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Edit distance over arbitrary token sequences (unit costs)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def fact_words(k: FactTriple, catalog: RelationCatalog) -> list[str]:
    if k.relation in catalog:
        return fact_tokens(k, catalog)
    return tokenize(k.head) + tokenize(k.relation) + tokenize(k.tail)


def fact_key(k: FactTriple, catalog: RelationCatalog) -> str:
    """Lookup key for external vectors: the lowercased rendered fact."""
    return " ".join(fact_words(k, catalog))


def edit_distance_norm(w1: Sequence[str], w2: Sequence[str]) -> float:
    longest = max(len(w1), len(w2))
    if longest == 0:
        return 0.0
    return levenshtein(w1, w2) / longest


class EmbeddingProvider(Protocol):
    def vector(self, fact: FactTriple) -> np.ndarray: ...


class MissingVector(KeyError):
    pass


class VectorTable:
    """Vectors keyed by rendered fact string (``vectors.tsv``: fact TAB floats)."""

    def __init__(self, table: dict[str, np.ndarray], catalog: RelationCatalog):
        self.table = {normalize_ws(k.lower()): np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.catalog = catalog
        dims = {v.shape for v in self.table.values()}
        if len(dims) > 1:
            raise ValueError(f"inconsistent vector dimensions {sorted(dims)}")

    @classmethod
    def load(cls, path: str | Path, catalog: RelationCatalog) -> "VectorTable":
        table = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                key, values = line.split("\t", 1)
                table[key] = np.array([float(x) for x in values.split()])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'fact<TAB>floats'") from None
        return cls(table, catalog)

    def vector(self, fact: FactTriple) -> np.ndarray:
        key = fact_key(fact, self.catalog)
        try:
            return self.table[key]
        except KeyError:
            raise MissingVector(f"no vector for fact {key!r}") from None


class EmbedderVectors:
    """Vectors from a trained fact-level embedder."""

    def __init__(self, embedder):
        self.embedder = embedder
        self._cache: dict[FactTriple, np.ndarray] = {}

    def vector(self, fact: FactTriple) -> np.ndarray:
        if fact not in self._cache:
            import torch

            with torch.no_grad():
                self._cache[fact] = self.embedder.embed([fact])[0].double().numpy()
        return self._cache[fact]


@dataclass
class SimilarityConfig:
    geometry: str = "edit"
    catalog: RelationCatalog = field(default_factory=RelationCatalog.atomic)
    provider: EmbeddingProvider | None = None
    scorer: object | None = None

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ValueError(f"unknown geometry {self.geometry!r}")
        if self.geometry == "embedding" and self.provider is None:
            raise ValueError("embedding geometry needs an embedding provider")


def edit_similarity(k1: FactTriple, k2: FactTriple, catalog: RelationCatalog | None = None) -> float:
    catalog = catalog or RelationCatalog.atomic()
    return 1.0 - edit_distance_norm(fact_words(k1, catalog), fact_words(k2, catalog))


def cosine(v1: np.ndarray, v2: np.ndarray) -> float:
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        return 0.0
    return float(np.dot(v1, v2) / (n1 * n2))


def embedding_similarity(k1: FactTriple, k2: FactTriple, cfg: SimilarityConfig) -> float:
    return max(cosine(cfg.provider.vector(k1), cfg.provider.vector(k2)), 0.0)


def similarity(k1: FactTriple, k2: FactTriple, cfg: SimilarityConfig) -> float:
    if cfg.geometry == "edit":
        return edit_similarity(k1, k2, cfg.catalog)
    return embedding_similarity(k1, k2, cfg)


def similarity_matrix(a: Sequence[FactTriple], b: Sequence[FactTriple], cfg: SimilarityConfig) -> np.ndarray:
    if not a or not b:
        return np.zeros((len(a), len(b)))
    if cfg.geometry == "edit":
        wa = [fact_words(k, cfg.catalog) for k in a]
        wb = [fact_words(k, cfg.catalog) for k in b]
        return np.array([[1.0 - edit_distance_norm(x, y) for y in wb] for x in wa])
    va = _unit(np.stack([cfg.provider.vector(k) for k in a]))
    vb = _unit(np.stack([cfg.provider.vector(k) for k in b]))
    return np.maximum(va @ vb.T, 0.0)


def _unit(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=1, keepdims=True)
    return v / np.where(norms == 0, 1.0, norms)


def distance_matrix(facts: Sequence[FactTriple], cfg: SimilarityConfig) -> np.ndarray:
    """Clustering distances: normalized edit distance, or Euclidean distance of embeddings."""
    n = len(facts)
    if n == 0:
        return np.zeros((0, 0))
    if cfg.geometry == "edit":
        words = [fact_words(k, cfg.catalog) for k in facts]
        dist = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                dist[i, j] = dist[j, i] = edit_distance_norm(words[i], words[j])
        return dist
    vecs = np.stack([cfg.provider.vector(k) for k in facts])
    diff = vecs[:, None, :] - vecs[None, :, :]
    return np.sqrt((diff ** 2).sum(-1))
