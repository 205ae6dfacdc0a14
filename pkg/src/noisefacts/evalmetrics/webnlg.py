"""WebNLG-style triple matching: exact, partial and strict element matches under an optimal pairing.

Each triple contributes three elements (subject, predicate, object).  For a
generated/gold pair the matched-element count is

* strict: elements equal at the same position,
* exact: elements equal, position ignored (best one-to-one element matching),
* partial: elements sharing at least one token, position ignored.

Strict matches are a valid exact matching and equal strings share tokens, so
per pair strict <= exact <= partial, and the ordering survives the optimal
pairing.  Precision is matched elements over generated elements, recall over
gold elements.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..corpus import FactTriple, normalize_ws, tokenize

KINDS = ("exact", "partial", "strict")
ENUMERATION_LIMIT = 40320
_ELEMENT_PERMS = list(itertools.permutations(range(3)))


def _elements(k: FactTriple) -> tuple[str, str, str]:
    return tuple(normalize_ws(x.replace("_", " ").lower()) for x in (k.head, k.relation, k.tail))


def element_matches(gen: FactTriple, gold: FactTriple, kind: str) -> int:
    g, r = _elements(gen), _elements(gold)
    if kind == "strict":
        return sum(a == b for a, b in zip(g, r))
    if kind == "exact":
        ok = [[a == b for b in r] for a in g]
    elif kind == "partial":
        gt, rt = [set(tokenize(a)) for a in g], [set(tokenize(b)) for b in r]
        ok = [[bool(a & b) for b in rt] for a in gt]
    else:
        raise ValueError(f"unknown match kind {kind!r}")
    return max(sum(ok[i][p[i]] for i in range(3)) for p in _ELEMENT_PERMS)


def match_matrix(gen: Sequence[FactTriple], gold: Sequence[FactTriple], kind: str) -> np.ndarray:
    rows = [[element_matches(a, b, kind) for b in gold] for a in gen]
    return np.array(rows, dtype=np.int64).reshape(len(gen), len(gold))


def n_pairings(n_gen: int, n_gold: int) -> int:
    small, large = sorted((n_gen, n_gold))
    return math.perm(large, small)


def enumerate_best(weights: np.ndarray) -> int:
    """Best total weight over all one-to-one pairings, by exhaustive enumeration."""
    n, m = weights.shape
    if n == 0 or m == 0:
        return 0
    if n > m:
        weights, n, m = weights.T, m, n
    return max(int(sum(weights[i, p[i]] for i in range(n))) for p in itertools.permutations(range(m), n))


def assignment_best(weights: np.ndarray) -> int:
    if weights.size == 0:
        return 0
    rows, cols = linear_sum_assignment(weights, maximize=True)
    return int(weights[rows, cols].sum())


def best_pairing_matches(weights: np.ndarray, limit: int = ENUMERATION_LIMIT) -> int:
    """Enumerate pairings when there are few of them, otherwise solve the assignment problem."""
    if n_pairings(*weights.shape) <= limit:
        return enumerate_best(weights)
    return assignment_best(weights)


def prf(matched: int, n_gen_elems: int, n_gold_elems: int) -> dict:
    p = matched / n_gen_elems if n_gen_elems else 0.0
    r = matched / n_gold_elems if n_gold_elems else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return {"precision": p, "recall": r, "f1": f}


def score_instance(gen: Sequence[FactTriple], gold: Sequence[FactTriple]) -> dict:
    """Matched-element counts and P/R/F1 per match kind for one context."""
    gen, gold = list(gen), list(gold)
    out = {"n_gen_elements": 3 * len(gen), "n_gold_elements": 3 * len(gold)}
    for kind in KINDS:
        matched = best_pairing_matches(match_matrix(gen, gold, kind))
        out[kind] = {"matched": matched, **prf(matched, 3 * len(gen), 3 * len(gold))}
    return out


def webnlg_scores(gen_sets, gold_sets) -> dict:
    """Micro-averaged scores: matched elements and element totals are summed over contexts."""
    if len(gen_sets) != len(gold_sets):
        raise ValueError(f"misaligned inputs: {len(gen_sets)} generated vs {len(gold_sets)} gold")
    per_context = [score_instance(g, r) for g, r in zip(gen_sets, gold_sets)]
    n_gen = sum(c["n_gen_elements"] for c in per_context)
    n_gold = sum(c["n_gold_elements"] for c in per_context)
    out: dict = {kind: prf(sum(c[kind]["matched"] for c in per_context), n_gen, n_gold) for kind in KINDS}
    out["per_context"] = per_context
    return out
