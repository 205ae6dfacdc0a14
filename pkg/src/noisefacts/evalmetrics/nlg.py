"""Surface-form metrics: multi-reference sentence BLEU, ROUGE-L and Distinct-4."""

from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

import numpy as np

from ..corpus import RelationCatalog
from .similarity import fact_words

MAX_ORDER = 4


def ngrams(words: Sequence[str], n: int) -> Counter:
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def sentence_bleu(hyp: Sequence[str], refs: Sequence[Sequence[str]], max_order: int = MAX_ORDER) -> float:
    """BLEU with clipped counts over all references and add-one smoothing for orders above 1."""
    if not hyp or not refs:
        return 0.0
    log_p = 0.0
    for n in range(1, max_order + 1):
        counts = ngrams(hyp, n)
        best: Counter = Counter()
        for ref in refs:
            best |= ngrams(ref, n)
        matched = sum(min(c, best[g]) for g, c in counts.items())
        total = max(len(hyp) - n + 1, 0)
        if n == 1:
            if matched == 0:
                return 0.0
            log_p += math.log(matched / total)
        else:
            log_p += math.log((matched + 1) / (total + 1))
    c = len(hyp)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_p / max_order)


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_prf(hyp: Sequence[str], ref: Sequence[str]) -> tuple[float, float, float]:
    """(precision, recall, F) of the longest common subsequence, F with beta = 1."""
    if not hyp or not ref:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(hyp, ref)
    if lcs == 0:
        return 0.0, 0.0, 0.0
    p, r = lcs / len(hyp), lcs / len(ref)
    return p, r, 2 * p * r / (p + r)


def rouge_l(hyp: Sequence[str], refs: Sequence[Sequence[str]]) -> float:
    return max((rouge_l_prf(hyp, ref)[2] for ref in refs), default=0.0)


def distinct_n(sentences: Sequence[Sequence[str]], n: int = 4) -> float:
    """Distinct n-grams over total n-grams pooled across sentences (0 when there are none)."""
    pooled: Counter = Counter()
    for words in sentences:
        pooled.update(ngrams(words, n))
    total = sum(pooled.values())
    return len(pooled) / total if total else 0.0


def nlg_scores(gen_sets, gold_sets, catalog: RelationCatalog | None = None) -> dict:
    """Per-fact scores against the context's gold facts, averaged over facts then contexts."""
    if len(gen_sets) != len(gold_sets):
        raise ValueError(f"misaligned inputs: {len(gen_sets)} generated vs {len(gold_sets)} gold")
    catalog = catalog or RelationCatalog.atomic()
    rows = []
    for cid, (gen, gold) in enumerate(zip(gen_sets, gold_sets)):
        hyps = [fact_words(k, catalog) for k in gen]
        refs = [fact_words(k, catalog) for k in gold]
        if not hyps:
            rows.append({"context_id": cid, "bleu": 0.0, "rouge_l": 0.0, "distinct_4": 0.0})
            continue
        rows.append({
            "context_id": cid,
            "bleu": float(np.mean([sentence_bleu(h, refs) for h in hyps])),
            "rouge_l": float(np.mean([rouge_l(h, refs) for h in hyps])),
            "distinct_4": distinct_n(hyps, 4),
        })
    out = {k: float(np.mean([r[k] for r in rows])) if rows else 0.0 for k in ("bleu", "rouge_l", "distinct_4")}
    out["per_context"] = rows
    return out

