"""Pluggable fact-to-context relevance scorers, all returning values in [0, 1]."""

from __future__ import annotations

import json
import random
from pathlib import Path
from typing import Protocol, Sequence

from ..corpus import FactTriple, NarrativeSample, RelationCatalog, normalize_ws, tokenize
from .similarity import fact_key

STOPWORDS = frozenset("""a an the of to in on at for and or but is are was were be been it its he she
they them his her their x person others by with as from that this then about up out
""".split())


class RelevanceScorer(Protocol):
    def score(self, fact: FactTriple, context: str, context_id: int) -> float: ...


def content_words(text: str) -> set[str]:
    return {t for t in tokenize(text) if t.isalnum() and t not in STOPWORDS}


class TokenOverlapScorer:
    """Jaccard overlap between a fact's head/tail content words and the context's."""

    def score(self, fact: FactTriple, context: str, context_id: int = -1) -> float:
        fw = content_words(f"{fact.head} {fact.tail}")
        cw = content_words(context)
        if not fw or not cw:
            return 0.0
        return len(fw & cw) / len(fw | cw)


class PrecomputedScorer:
    """Scores read from ``scores.jsonl`` lines ``{"context_id", "fact", "score"}``."""

    def __init__(self, table: dict[tuple[int, str], float], catalog: RelationCatalog, default: float | None = None):
        self.table = table
        self.catalog = catalog
        self.default = default

    @classmethod
    def load(cls, path: str | Path, catalog: RelationCatalog, default: float | None = None) -> "PrecomputedScorer":
        table = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                score = float(obj["score"])
                if not 0.0 <= score <= 1.0:
                    raise ValueError(f"{path}:{lineno}: score {score} outside [0, 1]")
                table[(int(obj["context_id"]), normalize_ws(obj["fact"].lower()))] = score
        return cls(table, catalog, default)

    def score(self, fact: FactTriple, context: str, context_id: int) -> float:
        key = (context_id, fact_key(fact, self.catalog))
        if key in self.table:
            return self.table[key]
        if self.default is None:
            raise KeyError(f"no relevance score for context {context_id}, fact {key[1]!r}")
        return self.default


class ClassifierScorer:
    """Binary relevance classifier over ``context <fsep> fact`` (encoder + linear head)."""

    def __init__(self, model, catalog: RelationCatalog):
        self.model = model
        self.catalog = catalog

    def text(self, fact: FactTriple, context: str) -> str:
        return f"{context} <fsep> {fact_key(fact, self.catalog)}"

    def score(self, fact: FactTriple, context: str, context_id: int = -1) -> float:
        probs = self.model.probabilities([self.text(fact, context)])[0]
        return float(probs[self.model.labels.index("relevant")])


def train_classifier_scorer(samples: Sequence[NarrativeSample], catalog: RelationCatalog, vocab, cfg,
                            train=None, negatives_per_fact: int = 1, seed: int = 0) -> ClassifierScorer:
    """Gold facts are positives; facts from other contexts serve as negatives."""
    from ..entitypipe import train_classifier

    rng = random.Random(seed)
    scorer = ClassifierScorer(None, catalog)
    texts, targets = [], []
    pool = [(i, f) for i, s in enumerate(samples) for f in s.gold]
    for i, s in enumerate(samples):
        own = set(s.gold.facts)
        for f in s.gold:
            texts.append(scorer.text(f, s.context))
            targets.append(1)
            for _ in range(negatives_per_fact):
                others = [g for j, g in pool if j != i and g not in own]
                if others:
                    texts.append(scorer.text(rng.choice(others), s.context))
                    targets.append(0)
    scorer.model = train_classifier(texts, targets, cfg, vocab, ["irrelevant", "relevant"], train)
    return scorer
