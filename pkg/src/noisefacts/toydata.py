"""Deterministic synthetic knowledge graphs and narratives for desk-scale runs."""

from __future__ import annotations

import random

from .corpus import FactTriple, KnowledgeSet, NarrativeSample, RelationCatalog

NOUNS = """cap ball bat glove field park beach towel paper gift ribbon box cake candle oven
kitchen bread butter knife garden shovel flower seed rain umbrella coat boot road car tire map
phone letter stamp desk lamp book shelf pencil guitar song drum stage ticket train station bag
coin wallet store shirt button needle thread river boat fish net kite wind cloud hill""".split()
VERBS = """wear throw catch carry wrap open bake cut plant water hold drive fix read write
play sing buy sell sew sail pull fly climb paint clean find lose share borrow""".split()
ADJS = """red old small heavy bright quiet warm wooden broken shiny soft tall""".split()
NAMES = """hank mia omar lena raj tara ben ivy noah zoe leo ada sam kai eva max nina tom ruby finn""".split()


def _heads(rng: random.Random, n: int) -> list[str]:
    out: list[str] = []
    while len(out) < n:
        h = f"{rng.choice(ADJS)} {rng.choice(NOUNS)}"
        if h not in out:
            out.append(h)
    return out


def toy_kg(n_facts: int = 200, n_heads: int = 40, seed: int = 0,
           catalog: RelationCatalog | None = None) -> KnowledgeSet:
    """``n_facts`` distinct triples; every (head, tail) pair carries one relation."""
    catalog = catalog or RelationCatalog.atomic()
    rng = random.Random(seed)
    heads = _heads(rng, n_heads)
    labels = catalog.labels()
    facts, pairs = [], set()
    while len(facts) < n_facts:
        head = heads[len(facts) % n_heads]
        tail = f"{rng.choice(VERBS)} the {rng.choice(NOUNS)}"
        if (head, tail) in pairs:
            continue
        pairs.add((head, tail))
        facts.append(FactTriple(head, rng.choice(labels), tail))
    return KnowledgeSet(facts)


def toy_narratives(kg: KnowledgeSet, n_contexts: int = 20, heads_per_context: int = 2,
                   tails_per_head: tuple[int, int] = (1, 2), seed: int = 0) -> list[NarrativeSample]:
    """Short stories mentioning a few KG heads, each annotated with some of their facts."""
    rng = random.Random(seed + 1)
    by_head: dict[str, list[FactTriple]] = {}
    for f in kg.facts:
        by_head.setdefault(f.head, []).append(f)
    heads = list(by_head)
    samples, used = [], set()
    while len(samples) < n_contexts:
        chosen = tuple(rng.sample(heads, heads_per_context))
        if chosen in used:
            continue
        used.add(chosen)
        name = NAMES[len(samples) % len(NAMES)]
        gold = []
        for h in chosen:
            options = by_head[h]
            gold += rng.sample(options, min(len(options), rng.randint(*tails_per_head)))
        hint = gold[0].tail.split()[-1]
        sentences = [f"{name.title()} found the {chosen[0]} at home."]
        sentences += [f"Then {name} took the {h} outside." for h in chosen[1:]]
        sentences.append(f"It was a day about the {hint}.")
        samples.append(NarrativeSample(" ".join(sentences), KnowledgeSet(gold)))
    return samples
