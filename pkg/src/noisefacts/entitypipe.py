"""Entity-level pipeline: head diffusion, tail diffusion per head, relation classification."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .corpus import FSEP, FactTriple, NarrativeSample, RelationCatalog, Vocabulary
from .diffuser import (ContextDiffuser, DiffusionTrainConfig, GenerationConfig, TrainingExample, context_ids,
                       expand_context, train_diffuser)
from .embedder import Embedder
from .numkernel import (Encoder, ModelConfig, Optimizer, load_checkpoint, load_prefixed, pad_batch,
                        prefixed_state, save_checkpoint)
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)


def pair_context(context: str, head: str, tail: str) -> str:
    return f"{context} {FSEP} {head} {FSEP} {tail}"


class SequenceClassifier(nn.Module):
    """Encoder plus a linear softmax head over the ``<s>`` state."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, labels: Sequence[str]):
        super().__init__()
        self.cfg, self.vocab, self.labels = cfg, vocab, list(labels)
        self.encoder = Encoder(cfg)
        self.head = nn.Linear(cfg.d, len(self.labels))

    def logits(self, texts: Sequence[str]) -> Tensor:
        ids, mask = pad_batch([context_ids(t, self.vocab) for t in texts], self.vocab.pad_id)
        return self.head(self.encoder(ids, mask)[:, 0])

    @torch.no_grad()
    def probabilities(self, texts: Sequence[str]) -> Tensor:
        self.eval()
        return torch.softmax(self.logits(texts), dim=-1)

    def save(self, directory: str | Path, prefix: str = "rel.") -> Path:
        tensors = {**prefixed_state(prefix + "enc.", self.encoder), **prefixed_state(prefix + "head.", self.head)}
        extra = {"vocab": self.vocab.to_json(), "labels": self.labels, "prefix": prefix}
        return save_checkpoint(directory, tensors, self.cfg.to_json(), extra)

    @classmethod
    def load(cls, directory: str | Path) -> "SequenceClassifier":
        tensors, manifest = load_checkpoint(directory)
        extra = manifest["extra"]
        model = cls(ModelConfig(**manifest["config"]), Vocabulary.from_json(extra["vocab"]), extra["labels"])
        load_prefixed(model.encoder, tensors, extra["prefix"] + "enc.")
        load_prefixed(model.head, tensors, extra["prefix"] + "head.")
        return model.eval()


@dataclass
class ClassifierTrainConfig:
    steps: int = 1500
    batch_size: int = 16
    lr: float = 1e-3
    warmup: int = 100
    seed: int = 0


def train_classifier(texts: Sequence[str], targets: Sequence[int], cfg: ModelConfig, vocab: Vocabulary,
                     labels: Sequence[str], train: ClassifierTrainConfig | None = None) -> SequenceClassifier:
    train = train or ClassifierTrainConfig()
    torch.manual_seed(train.seed)
    rng = random.Random(train.seed)
    model = SequenceClassifier(cfg, vocab, labels)
    opt = Optimizer(model.parameters(), train.lr, train.warmup, train.steps)
    model.train()
    for step in range(train.steps):
        idx = [rng.randrange(len(texts)) for _ in range(train.batch_size)]
        loss = F.cross_entropy(model.logits([texts[i] for i in idx]), torch.tensor([targets[i] for i in idx]))
        loss.backward()
        opt.step()
    return model.eval()


def head_examples(samples: Sequence[NarrativeSample]) -> list[TrainingExample]:
    return [TrainingExample(s.context, s.gold.heads) for s in samples]


def tail_examples(samples: Sequence[NarrativeSample]) -> list[TrainingExample]:
    return [TrainingExample(expand_context(s.context, h), s.gold.tails_of(h))
            for s in samples for h in s.gold.heads]


def relation_examples(samples: Sequence[NarrativeSample]) -> tuple[list[str], list[str]]:
    texts, labels = [], []
    for s in samples:
        for f in s.gold.facts:
            texts.append(pair_context(s.context, f.head, f.tail))
            labels.append(f.relation)
    return texts, labels


@dataclass
class EntityPipeline:
    """Head and tail diffusers sharing one frozen entity embedder, plus a relation classifier."""

    embedder: Embedder
    heads: ContextDiffuser
    tails: ContextDiffuser
    relation: SequenceClassifier
    catalog: RelationCatalog

    def generate_heads(self, context: str, gen_cfg: GenerationConfig) -> list[str]:
        out = self.heads.generate(context, self.embedder, gen_cfg)
        return list(dict.fromkeys(out.items))

    def generate_tails(self, context: str, head: str, gen_cfg: GenerationConfig) -> list[str]:
        out = self.tails.generate(expand_context(context, head), self.embedder, gen_cfg)
        return list(dict.fromkeys(out.items))

    def relation_scores(self, context: str, head: str, tail: str) -> dict[str, float]:
        probs = self.relation.probabilities([pair_context(context, head, tail)])[0]
        return dict(zip(self.relation.labels, probs.tolist()))

    def predict_relation(self, context: str, head: str, tail: str) -> str:
        probs = self.relation.probabilities([pair_context(context, head, tail)])[0]
        return self.relation.labels[int(probs.argmax())]

    def generate_fact_graph(self, context: str, gen_cfg: GenerationConfig) -> tuple[list[FactTriple], dict]:
        """Compose heads -> tails -> relations; returns triples and bookkeeping for the output record."""
        heads = self.generate_heads(context, gen_cfg)
        facts, pairs = [], 0
        for i, head in enumerate(heads):
            tail_cfg = replace(gen_cfg, seed=gen_cfg.seed * 1009 + i + 1, max_items=None)
            for tail in self.generate_tails(context, head, tail_cfg):
                pairs += 1
                facts.append(FactTriple(head, self.predict_relation(context, head, tail), tail))
        facts = list(dict.fromkeys(facts))
        if gen_cfg.max_items is not None:
            facts = facts[: gen_cfg.max_items]
        return facts, {"heads": heads, "pairs_scored": pairs}

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        self.heads.save(directory / "heads", {"role": "heads"})
        self.tails.save(directory / "tails", {"role": "tails"})
        self.relation.save(directory / "relation")

    @classmethod
    def load(cls, directory: str | Path, embedder: Embedder) -> "EntityPipeline":
        directory = Path(directory)
        heads, _ = ContextDiffuser.load(directory / "heads")
        tails, _ = ContextDiffuser.load(directory / "tails")
        return cls(embedder, heads, tails, SequenceClassifier.load(directory / "relation"), embedder.catalog)


def train_entity_pipeline(
    samples: Sequence[NarrativeSample],
    embedder: Embedder,
    sched: NoiseSchedule,
    cfg: ModelConfig,
    train: DiffusionTrainConfig | None = None,
    classifier: ClassifierTrainConfig | None = None,
    catalog: RelationCatalog | None = None,
) -> tuple[EntityPipeline, dict]:
    if embedder.level != "entity":
        raise ValueError("entity pipeline needs an entity-level embedder")
    train = train or DiffusionTrainConfig()
    catalog = catalog or embedder.catalog
    heads, head_log = train_diffuser(head_examples(samples), embedder, sched, cfg, train)
    tails, tail_log = train_diffuser(tail_examples(samples), embedder, sched, cfg,
                                     replace(train, seed=train.seed + 1))
    texts, rels = relation_examples(samples)
    labels = sorted(set(catalog.labels()) | set(rels))
    clf_cfg = replace(cfg, max_slots=1)
    relation = train_classifier(texts, [labels.index(r) for r in rels], clf_cfg, embedder.vocab, labels,
                                classifier)
    return EntityPipeline(embedder, heads, tails, relation, catalog), {"heads": head_log, "tails": tail_log}
