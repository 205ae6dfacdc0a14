"""Context-free fact (or entity) embeddings and their reconstruction decoder."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .corpus import (EOK, FactParser, detokenize, FactTriple, RelationCatalog, Vocabulary, eok_sequence,
                     strip_specials, verbalize_entity, verbalize_fact)
from .numkernel import (Encoder, FactDecoder, ModelConfig, Optimizer, load_checkpoint, load_prefixed,
                        pad_batch, prefixed_state, save_checkpoint, state_digest)
from .schedule import NoiseSchedule

log = logging.getLogger(__name__)


class SlotOverflow(ValueError):
    pass


class Embedder(nn.Module):
    """Encoder mapping a verbalized item to the ``<s>`` hidden state, plus a decoder inverting it.

    ``level`` is ``"fact"`` (verbalized triples) or ``"entity"`` (bare entity strings).
    """

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, catalog: RelationCatalog, level: str = "fact"):
        super().__init__()
        if level not in ("fact", "entity"):
            raise ValueError(f"unknown embedder level {level!r}")
        self.cfg, self.vocab, self.catalog, self.level = cfg, vocab, catalog, level
        self.enc = Encoder(cfg)
        self.dec = FactDecoder(cfg)
        self.frozen = False
        self._parser = FactParser(catalog)

    # -- verbalization ---------------------------------------------------------

    def verbalize(self, item) -> list[int]:
        if item == EOK:
            return eok_sequence(self.vocab)
        if self.level == "fact":
            return verbalize_fact(item, self.catalog, self.vocab)
        return verbalize_entity(item, self.vocab)

    def interpret(self, ids: Sequence[int]):
        """Decoded ids -> FactTriple / entity string / EOK, or None if unparseable."""
        words = strip_specials(self.vocab.decode(ids))
        if words == [EOK]:
            return EOK
        if not words or EOK in words:
            return None
        if self.level == "entity":
            return detokenize(words)
        return self._parser.parse(words)

    # -- encode / decode -------------------------------------------------------

    def embed_ids(self, seqs: Sequence[Sequence[int]]) -> Tensor:
        ids, mask = pad_batch(seqs, self.vocab.pad_id)
        return self.enc(ids, mask)[:, 0]

    def embed(self, items: Sequence) -> Tensor:
        """``(len(items), d)`` embeddings; items are facts/entities or EOK."""
        return self.embed_ids([self.verbalize(it) for it in items])

    def reconstruction_loss(self, vectors: Tensor, seqs: Sequence[Sequence[int]], reduction: str = "mean") -> Tensor:
        """Token cross-entropy of decoding ``seqs`` from ``vectors`` (teacher forcing).

        ``reduction="sum_per_item"`` returns one summed NLL per sequence.
        """
        ids, mask = pad_batch(seqs, self.vocab.pad_id)
        logits = self.dec(ids[:, :-1], vectors[:, None, :], mask[:, :-1])
        target = ids[:, 1:].masked_fill(~mask[:, 1:], -100)
        nll = F.cross_entropy(logits.transpose(1, 2), target, ignore_index=-100, reduction="none")
        if reduction == "mean":
            return nll.sum() / mask[:, 1:].sum()
        return nll.sum(dim=1)

    @torch.no_grad()
    def decode_ids(self, vectors: Tensor, max_len: int = 32) -> list[list[int]]:
        """Greedy decoding; each output starts with ``<s>`` and stops at ``</s>`` or ``max_len`` tokens."""
        was_training = self.training
        self.eval()
        B = vectors.shape[0]
        memory = vectors[:, None, :]
        out = torch.full((B, 1), self.vocab.bos_id, dtype=torch.long)
        done = torch.zeros(B, dtype=torch.bool)
        while out.shape[1] < max_len and not bool(done.all()):
            logits = self.dec(out, memory)[:, -1]
            nxt = logits.argmax(-1).masked_fill(done, self.vocab.pad_id)
            out = torch.cat([out, nxt[:, None]], dim=1)
            done |= nxt == self.vocab.eos_id
        self.train(was_training)
        seqs = []
        for row in out.tolist():
            if self.vocab.eos_id in row:
                row = row[: row.index(self.vocab.eos_id) + 1]
            seqs.append([i for i in row if i != self.vocab.pad_id])
        return seqs

    def decode(self, vectors: Tensor, max_len: int = 32) -> list:
        return [self.interpret(s) for s in self.decode_ids(vectors, max_len)]

    # -- freezing / checkpoints ------------------------------------------------

    def freeze(self) -> "Embedder":
        self.frozen = True
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)
        return self

    def digest(self) -> str:
        return state_digest(self)

    def save(self, directory: str | Path) -> Path:
        tensors = {**prefixed_state("embed.enc.", self.enc), **prefixed_state("embed.dec.", self.dec)}
        extra = {"vocab": self.vocab.to_json(), "catalog": self.catalog.to_dict(),
                 "open_catalog": self.catalog.open_world, "level": self.level}
        return save_checkpoint(directory, tensors, self.cfg.to_json(), extra)

    @classmethod
    def load(cls, directory: str | Path) -> "Embedder":
        tensors, manifest = load_checkpoint(directory)
        extra = manifest["extra"]
        catalog = RelationCatalog.from_dict(extra["catalog"])
        catalog.open_world = extra.get("open_catalog", False)
        emb = cls(ModelConfig(**manifest["config"]), Vocabulary.from_json(extra["vocab"]), catalog, extra["level"])
        load_prefixed(emb.enc, tensors, "embed.enc.")
        load_prefixed(emb.dec, tensors, "embed.dec.")
        return emb.freeze()


def embed_fact(embedder: Embedder, k) -> Tensor:
    with torch.no_grad():
        return embedder.embed([k])[0]


def decode_fact(embedder: Embedder, e: Tensor, max_len: int = 32) -> list[str]:
    """Greedy decode of one vector to a token string list (specials included)."""
    if e.shape[-1] != embedder.cfg.d:
        raise ValueError(f"vector has {e.shape[-1]} dims, embedder expects {embedder.cfg.d}")
    ids = embedder.decode_ids(e.reshape(1, -1), max_len)[0]
    return embedder.vocab.decode(ids)


@dataclass
class PretrainConfig:
    epochs: int = 200
    batch_size: int = 32
    lr: float = 3e-3
    warmup: int = 100
    weight_decay: float = 0.0
    seed: int = 0


def pretrain_items(items: Sequence) -> list:
    """Deduplicated training items with the ``<eok>`` pseudo-item appended."""
    if not items:
        raise ValueError("cannot pretrain an embedder on an empty knowledge set")
    return list(dict.fromkeys(items)) + [EOK]


def pretrain_embedder(
    items: Sequence,
    cfg: ModelConfig,
    vocab: Vocabulary,
    catalog: RelationCatalog,
    level: str = "fact",
    train: PretrainConfig | None = None,
) -> tuple[Embedder, list[float]]:
    """Jointly fit encoder and decoder by reconstruction NLL; returns the frozen embedder.

    ``items`` are facts (level ``fact``) or entity strings (level ``entity``).
    The returned history holds the loss at initialization followed by one
    average per epoch.
    """
    train = train or PretrainConfig()
    torch.manual_seed(train.seed)
    rng = random.Random(train.seed)
    items = pretrain_items(items)
    emb = Embedder(cfg, vocab, catalog, level)
    seqs = [emb.verbalize(it) for it in items]
    steps_per_epoch = -(-len(seqs) // train.batch_size)
    opt = Optimizer(emb.parameters(), train.lr, train.warmup, train.epochs * steps_per_epoch, train.weight_decay)

    def full_loss() -> float:
        emb.eval()
        with torch.no_grad():
            return float(emb.reconstruction_loss(emb.embed_ids(seqs), seqs))

    history = [full_loss()]
    order = list(range(len(seqs)))
    for epoch in range(train.epochs):
        emb.train()
        rng.shuffle(order)
        total, n = 0.0, 0
        for start in range(0, len(order), train.batch_size):
            batch = [seqs[i] for i in order[start:start + train.batch_size]]
            loss = emb.reconstruction_loss(emb.embed_ids(batch), batch)
            loss.backward()
            opt.step()
            total += loss.item() * len(batch)
            n += len(batch)
        history.append(total / n)
        if epoch % 50 == 0:
            log.info("embedder epoch %d loss %.4f", epoch, history[-1])
    return emb.freeze(), history


def reconstruction_rate(embedder: Embedder, items: Sequence, batch_size: int = 256) -> float:
    """Fraction of items whose greedy decode reproduces the verbalization exactly."""
    hits = 0
    for start in range(0, len(items), batch_size):
        chunk = items[start:start + batch_size]
        seqs = [embedder.verbalize(it) for it in chunk]
        with torch.no_grad():
            vecs = embedder.embed_ids(seqs)
        decoded = embedder.decode_ids(vecs, max_len=max(len(s) for s in seqs) + 2)
        hits += sum(d == s for d, s in zip(decoded, seqs))
    return hits / len(items)


def nearest_neighbor_rate(embedder: Embedder, items: Sequence) -> float:
    with torch.no_grad():
        vecs = embedder.embed(items)
    dist = torch.cdist(vecs, vecs)
    return float((dist.argmin(dim=1) == torch.arange(len(items))).float().mean())


@dataclass
class EmbeddingBlock:
    """Column embeddings ``(N, d)`` of one knowledge set, ``<eok>`` last."""

    matrix: Tensor
    n_items: int

    @property
    def width(self) -> int:
        return self.matrix.shape[0]


def build_block(embedder: Embedder, items: Sequence, max_slots: int, width: int | None = None,
                label: str = "") -> EmbeddingBlock:
    """Embed items and append ``<eok>``; optionally repeat ``<eok>`` up to ``width`` columns."""
    if len(items) + 1 > max_slots:
        raise SlotOverflow(f"sample {label!r}: {len(items)} items + <eok> exceed max_slots={max_slots}")
    cols = list(items) + [EOK]
    if width is not None:
        cols += [EOK] * (width - len(cols))
    with torch.no_grad():
        return EmbeddingBlock(embedder.embed(cols), len(items))


def sample_z0(block: EmbeddingBlock | Tensor, sched: NoiseSchedule, gen: torch.Generator | None = None,
              max_slots: int | None = None) -> Tensor:
    """z_0 ~ N(e, beta_0 I), column-wise."""
    e = block.matrix if isinstance(block, EmbeddingBlock) else block
    if max_slots is not None and e.shape[-2] > max_slots:
        raise SlotOverflow(f"block of {e.shape[-2]} columns exceeds max_slots={max_slots}")
    beta0 = torch.as_tensor(sched.betas[0], dtype=e.dtype)
    if sched.positions > 1:
        beta0 = beta0[: e.shape[-2], None]
    noise = torch.randn(e.shape, generator=gen, dtype=e.dtype)
    return e + torch.sqrt(beta0) * noise
