"""Narratives, knowledge triples, tokenization and the relation catalog."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

log = logging.getLogger(__name__)

BOS, EOS, PAD, UNK, FSEP, EOK = "<s>", "</s>", "<pad>", "<unk>", "<fsep>", "<eok>"
SPECIALS = (PAD, BOS, EOS, UNK, FSEP, EOK)
BLANK = "___"
GROUPS = ("physical", "event", "social")

_TOKEN_RE = re.compile(r"<[a-z]+>|\w+(?:'\w+)*|[^\w\s]")


class CorpusError(ValueError):
    """Malformed input file."""


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


def tokenize(text: str) -> list[str]:
    """Lowercased word-level tokens; punctuation marks become their own tokens."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens: Sequence[str]) -> str:
    text = " ".join(tokens)
    text = re.sub(r" ([,.!?;:)])", r"\1", text)
    text = re.sub(r"([(]) ", r"\1", text)
    text = re.sub(r" ?/ ?", "/", text)
    return text


@dataclass(frozen=True)
class FactTriple:
    head: str
    relation: str
    tail: str

    def __post_init__(self):
        for name in ("head", "tail"):
            value = normalize_ws(getattr(self, name))
            if not value:
                raise ValueError(f"empty {name} in fact {self!r}")
            object.__setattr__(self, name, value)

    def to_json(self) -> dict:
        return {"head": self.head, "relation": self.relation, "tail": self.tail}

    @classmethod
    def from_json(cls, obj: dict) -> "FactTriple":
        return cls(str(obj["head"]), str(obj["relation"]), str(obj["tail"]))


@dataclass(frozen=True)
class Relation:
    phrase: str
    group: str


class RelationCatalog:
    """Relation label -> (surface phrase, group).

    An *open* catalog admits any label, verbalized as itself with group
    ``physical``; this is how RDF predicates are handled.
    """

    def __init__(self, relations: dict[str, Relation] | None = None, open_world: bool = False):
        self.relations = dict(relations or {})
        self.open_world = open_world
        for label, rel in self.relations.items():
            if rel.group not in GROUPS:
                raise ValueError(f"relation {label}: unknown group {rel.group!r}")
            if not rel.phrase.strip():
                raise ValueError(f"relation {label}: empty phrase")

    @classmethod
    def atomic(cls) -> "RelationCatalog":
        text = resources.files("noisefacts.data").joinpath("atomic2020_relations.json").read_text()
        return cls.from_dict(json.loads(text))

    @classmethod
    def open(cls) -> "RelationCatalog":
        return cls({}, open_world=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "RelationCatalog":
        return cls({k: Relation(v["phrase"], v["group"]) for k, v in obj.items()})

    @classmethod
    def load(cls, path: str | Path) -> "RelationCatalog":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {k: {"phrase": r.phrase, "group": r.group} for k, r in self.relations.items()}

    def __contains__(self, label: str) -> bool:
        return self.open_world or label in self.relations

    def __iter__(self) -> Iterator[str]:
        return iter(self.relations)

    def __len__(self) -> int:
        return len(self.relations)

    def labels(self) -> list[str]:
        return list(self.relations)

    def phrase(self, label: str) -> str:
        if label in self.relations:
            return self.relations[label].phrase
        if self.open_world:
            return label
        raise KeyError(label)

    def group(self, label: str) -> str | None:
        if label in self.relations:
            return self.relations[label].group
        return "physical" if self.open_world else None

    def admit(self, label: str) -> None:
        """Register a label seen in an open catalog so it gets a vocabulary id."""
        if label not in self.relations:
            if not self.open_world:
                raise KeyError(label)
            self.relations[label] = Relation(label, "physical")


@dataclass
class KnowledgeSet:
    facts: list[FactTriple] = field(default_factory=list)
    dropped: Counter = field(default_factory=Counter)

    @property
    def heads(self) -> list[str]:
        return list(dict.fromkeys(f.head for f in self.facts))

    @property
    def relations(self) -> list[str]:
        return list(dict.fromkeys(f.relation for f in self.facts))

    @property
    def tails(self) -> list[str]:
        return list(dict.fromkeys(f.tail for f in self.facts))

    def tails_of(self, head: str) -> list[str]:
        return list(dict.fromkeys(f.tail for f in self.facts if f.head == head))

    def __len__(self) -> int:
        return len(self.facts)

    def __iter__(self) -> Iterator[FactTriple]:
        return iter(self.facts)


@dataclass
class NarrativeSample:
    context: str
    gold: KnowledgeSet

    def __post_init__(self):
        if not self.context.strip():
            raise ValueError("empty narrative context")


def _filter_reason(obj: dict, catalog: RelationCatalog) -> str | None:
    head, rel, tail = (str(obj.get(k, "")) for k in ("head", "relation", "tail"))
    if not normalize_ws(head) or not normalize_ws(tail):
        return "empty_field"
    if tail.strip().lower() == "none":
        return "none_tail"
    if BLANK in head or BLANK in rel or BLANK in tail:
        return "blank"
    if rel not in catalog:
        return "unknown_relation"
    return None


def filter_facts(objs: Iterable[dict], catalog: RelationCatalog) -> KnowledgeSet:
    out = KnowledgeSet()
    for obj in objs:
        reason = _filter_reason(obj, catalog)
        if reason:
            out.dropped[reason] += 1
            continue
        fact = FactTriple.from_json(obj)
        if catalog.open_world:
            catalog.admit(fact.relation)
        out.facts.append(fact)
    if out.dropped.get("unknown_relation"):
        log.warning("dropped %d facts with unknown relations", out.dropped["unknown_relation"])
    return out


def _read_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({err.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def ingest_kg(path: str | Path, catalog: RelationCatalog) -> KnowledgeSet:
    """Read kg.jsonl, dropping "none" tails, blank-marker facts and unknown relations.

    Drop counts per reason are kept on ``KnowledgeSet.dropped``.
    """
    objs = []
    for lineno, obj in _read_jsonl(path):
        missing = {"head", "relation", "tail"} - obj.keys()
        if missing:
            raise CorpusError(f"{path}:{lineno}: missing keys {sorted(missing)}")
        objs.append(obj)
    return filter_facts(objs, catalog)


def ingest_narratives(path: str | Path, catalog: RelationCatalog) -> list[NarrativeSample]:
    samples = []
    for lineno, obj in _read_jsonl(path):
        if "context" not in obj or "facts" not in obj:
            raise CorpusError(f"{path}:{lineno}: narrative needs 'context' and 'facts'")
        for fact in obj["facts"]:
            if not isinstance(fact, dict) or {"head", "relation", "tail"} - fact.keys():
                raise CorpusError(f"{path}:{lineno}: fact missing head/relation/tail")
        try:
            samples.append(NarrativeSample(str(obj["context"]), filter_facts(obj["facts"], catalog)))
        except ValueError as err:
            raise CorpusError(f"{path}:{lineno}: {err}") from None
    return samples


def write_kg(path: str | Path, facts: Iterable[FactTriple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in facts:
            fh.write(json.dumps(f.to_json()) + "\n")


def write_narratives(path: str | Path, samples: Iterable[NarrativeSample]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps({"context": s.context, "facts": [f.to_json() for f in s.gold]}) + "\n")


class Vocabulary:
    """Bijective token <-> id map with fixed special ids 0..5."""

    def __init__(self, tokens: Sequence[str], relation_labels: Sequence[str] = ()):
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")
        for s in SPECIALS:
            if s not in self.stoi:
                raise ValueError(f"vocabulary lacks special token {s}")
        self.relation_labels = list(relation_labels)

    pad_id = property(lambda self: self.stoi[PAD])
    bos_id = property(lambda self: self.stoi[BOS])
    eos_id = property(lambda self: self.stoi[EOS])
    unk_id = property(lambda self: self.stoi[UNK])
    fsep_id = property(lambda self: self.stoi[FSEP])
    eok_id = property(lambda self: self.stoi[EOK])

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def relation_token(self, label: str) -> str:
        return f"<rel:{label}>"

    def encode(self, tokens: Iterable[str]) -> list[int]:
        unk = self.unk_id
        return [self.stoi.get(t, unk) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_json(self) -> dict:
        return {"tokens": self.itos, "relation_labels": self.relation_labels}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(obj["tokens"], obj.get("relation_labels", ()))


def fact_text(k: FactTriple, catalog: RelationCatalog) -> str:
    return f"{k.head} {catalog.phrase(k.relation)} {k.tail}"


def fact_tokens(k: FactTriple, catalog: RelationCatalog) -> list[str]:
    """Head, relation phrase and tail tokens, no specials."""
    return tokenize(k.head) + tokenize(catalog.phrase(k.relation)) + tokenize(k.tail)


def build_vocab(
    samples: Sequence[NarrativeSample],
    kg: KnowledgeSet,
    min_count: int = 1,
    catalog: RelationCatalog | None = None,
) -> Vocabulary:
    """Word-level vocabulary, ordered by descending frequency then lexicographically.

    Relation labels get dedicated ``<rel:Label>`` tokens regardless of
    frequency; catalog phrases are always counted.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    catalog = catalog or RelationCatalog.atomic()
    counts: Counter = Counter()
    facts = list(kg.facts)
    for s in samples:
        counts.update(tokenize(s.context))
        facts.extend(s.gold.facts)
    for f in facts:
        counts.update(tokenize(f.head))
        counts.update(tokenize(f.tail))
    labels = sorted(set(catalog.labels()) | {f.relation for f in facts})
    for label in labels:
        counts.update({t: min_count for t in tokenize(catalog.phrase(label))})
    words = sorted((t for t, c in counts.items() if c >= min_count and t not in SPECIALS),
                   key=lambda t: (-counts[t], t))
    rel_tokens = [f"<rel:{label}>" for label in labels]
    return Vocabulary(list(SPECIALS) + rel_tokens + words, labels)


def verbalize_fact(k: FactTriple, catalog: RelationCatalog, vocab: Vocabulary) -> list[int]:
    if k.relation not in catalog:
        raise KeyError(f"relation {k.relation!r} not in catalog")
    return [vocab.bos_id, *vocab.encode(fact_tokens(k, catalog)), vocab.eos_id]


def verbalize_entity(entity: str, vocab: Vocabulary) -> list[int]:
    return [vocab.bos_id, *vocab.encode(tokenize(entity)), vocab.eos_id]


def eok_sequence(vocab: Vocabulary) -> list[int]:
    return [vocab.bos_id, vocab.eok_id, vocab.eos_id]


def strip_specials(tokens: Sequence[str]) -> list[str]:
    out = []
    for t in tokens:
        if t == EOS:
            break
        if t not in (BOS, PAD):
            out.append(t)
    return out


class FactParser:
    """Recover (head, relation, tail) from a decoded word sequence.

    Scans left to right for the first catalog phrase that leaves a non-empty
    head and tail; at a given start the longest phrase wins.
    """

    def __init__(self, catalog: RelationCatalog):
        self.catalog = catalog
        phrases = [(tuple(tokenize(catalog.phrase(lb))), lb) for lb in catalog.labels()]
        self.phrases = sorted(phrases, key=lambda p: -len(p[0]))

    def parse(self, tokens: Sequence[str]) -> FactTriple | None:
        toks = list(tokens)
        for start in range(1, len(toks)):
            for phrase, label in self.phrases:
                end = start + len(phrase)
                if end < len(toks) and tuple(toks[start:end]) == phrase:
                    return FactTriple(detokenize(toks[:start]), label, detokenize(toks[end:]))
        return None


def join_context(sentences: Sequence[str] | str) -> str:
    if isinstance(sentences, str):
        return normalize_ws(sentences)
    return " ".join(normalize_ws(s) for s in sentences)
