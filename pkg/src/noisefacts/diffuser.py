"""Context-conditioned diffusion over fact (or entity) embeddings."""

from __future__ import annotations

import logging
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .corpus import EOK, FSEP, Vocabulary, tokenize
from .embedder import Embedder, SlotOverflow, build_block, sample_z0
from .numkernel import (Denoiser, Encoder, ModelConfig, Optimizer, load_checkpoint, load_prefixed,
                        pad_batch, prefixed_state, save_checkpoint)
from .schedule import AdaptiveState, NoiseSchedule, adapt_schedule, forward_jump

log = logging.getLogger(__name__)


class NumericFailure(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class DiffusionTrainConfig:
    steps: int = 5000
    batch_size: int = 8
    lr: float = 1e-3
    warmup: int = 200
    weight_decay: float = 0.0
    gamma: float = 1.0
    self_cond_prob: float = 0.5
    adapt_every: int = 2000
    log_every: int = 50
    seed: int = 0


@dataclass
class GenerationConfig:
    inference_steps: int
    n_slots: int | None = None
    seed: int = 0
    max_items: int | None = None

    def __post_init__(self):
        if self.inference_steps < 1:
            raise ValueError("inference_steps must be >= 1")


@dataclass
class Generation:
    items: list
    n_dropped: int
    columns: list = field(default_factory=list)


def step_sequence(T: int, k: int) -> list[int]:
    """``k`` descending steps spread uniformly over T..1 (just ``[T]`` when k == 1)."""
    k = min(k, T)
    if k == 1:
        return [T]
    return [int(round(x)) for x in np.linspace(T, 1, k)]


def expand_context(context: str, head: str) -> str:
    if not head.strip():
        raise ValueError("cannot expand a context with an empty head")
    return f"{context} {FSEP} {head}"


def context_ids(text: str, vocab: Vocabulary) -> list[int]:
    ids = vocab.encode(tokenize(text))
    if not ids:
        raise ValueError(f"context {text!r} has no tokens")
    return [vocab.bos_id, *ids, vocab.eos_id]


class ContextDiffuser(nn.Module):
    """Context encoder plus self-conditioned denoiser over ``width`` latent slots."""

    def __init__(self, cfg: ModelConfig, vocab: Vocabulary, sched: NoiseSchedule):
        super().__init__()
        self.cfg, self.vocab, self.sched = cfg, vocab, sched
        self.ctx_encoder = Encoder(cfg)
        self.denoiser = Denoiser(cfg)
        self._ctx_cache: dict[str, Tensor] = {}

    @property
    def width(self) -> int:
        return self.cfg.max_slots

    def encode_contexts(self, texts: Sequence[str]) -> tuple[Tensor, Tensor]:
        ids, mask = pad_batch([context_ids(t, self.vocab) for t in texts], self.vocab.pad_id)
        return self.ctx_encoder(ids, mask), mask

    @torch.no_grad()
    def encode_context(self, text: str) -> Tensor:
        """Hidden states ``(len, d)`` of one context; cached per text in eval mode."""
        if self.training:
            return self.encode_contexts([text])[0][0]
        if text not in self._ctx_cache:
            self._ctx_cache[text] = self.encode_contexts([text])[0][0]
        return self._ctx_cache[text]

    def denoise_step(self, z0_prev: Tensor, z_t: Tensor, t, ctx: Tensor, ctx_mask: Tensor | None = None) -> Tensor:
        """Self-conditioned clean-latent prediction; batched ``(B, N, d)`` or single ``(N, d)``."""
        if z0_prev.shape != z_t.shape:
            raise ValueError(f"shape mismatch: {tuple(z0_prev.shape)} vs {tuple(z_t.shape)}")
        if z_t.dim() == 2:
            return self.denoiser(z_t[None], z0_prev[None], torch.as_tensor([t]), ctx[None])[0]
        return self.denoiser(z_t, z0_prev, t, ctx, ctx_mask)

    def train(self, mode: bool = True):
        self._ctx_cache.clear()
        return super().train(mode)

    # -- generation ------------------------------------------------------------

    @torch.no_grad()
    def generate_latents(self, context: str, gen_cfg: GenerationConfig,
                         on_step: Callable[[int, Tensor], None] | None = None) -> Tensor:
        self.eval()
        n = gen_cfg.n_slots or self.width
        if n > self.width:
            raise ValueError(f"n_slots={n} exceeds model width {self.width}")
        gen = torch.Generator().manual_seed(gen_cfg.seed)
        ctx = self.encode_context(context)
        steps = step_sequence(self.sched.T, gen_cfg.inference_steps)
        z = torch.randn((n, self.cfg.d), generator=gen) * self.sched.amp
        x0 = torch.zeros_like(z)
        for i, t in enumerate(steps):
            x0 = self.denoise_step(x0, z, t, ctx)
            if on_step is not None:
                on_step(t, x0)
            if i + 1 < len(steps):
                z = forward_jump(x0, steps[i + 1], self.sched, gen)
        return x0

    def generate(self, context: str, embedder: Embedder, gen_cfg: GenerationConfig) -> Generation:
        """Decode every slot, keep items before the first ``<eok>``, drop unparseable ones."""
        latents = self.generate_latents(context, gen_cfg)
        columns = embedder.decode(latents)
        items, dropped = [], 0
        for item in columns:
            if item == EOK:
                break
            if item is None:
                dropped += 1
                continue
            items.append(item)
        if gen_cfg.max_items is not None:
            items = items[: gen_cfg.max_items]
        return Generation(items, dropped, columns)

    # -- checkpoints -------------------------------------------------------------

    def save(self, directory: str | Path, extra: dict | None = None) -> Path:
        tensors = {**prefixed_state("diff.ctx.", self.ctx_encoder), **prefixed_state("diff.den.", self.denoiser)}
        meta = {"vocab": self.vocab.to_json(), "schedule": self.sched.to_json(), **(extra or {})}
        return save_checkpoint(directory, tensors, self.cfg.to_json(), meta)

    @classmethod
    def load(cls, directory: str | Path) -> tuple["ContextDiffuser", dict]:
        tensors, manifest = load_checkpoint(directory)
        extra = manifest["extra"]
        model = cls(ModelConfig(**manifest["config"]), Vocabulary.from_json(extra["vocab"]),
                    NoiseSchedule.from_json(extra["schedule"]))
        load_prefixed(model.ctx_encoder, tensors, "diff.ctx.")
        load_prefixed(model.denoiser, tensors, "diff.den.")
        return model.eval(), extra


@dataclass
class TrainingExample:
    context: str
    items: list


def _prepare(examples: Sequence[TrainingExample], embedder: Embedder, width: int):
    prepared = []
    for i, ex in enumerate(examples):
        try:
            block = build_block(embedder, ex.items, width, width=width, label=ex.context[:40])
        except SlotOverflow as err:
            log.warning("skipping sample %d: %s", i, err)
            continue
        seqs = [embedder.verbalize(it) for it in list(ex.items) + [EOK] * (width - len(ex.items))]
        prepared.append((ex.context, block.matrix, seqs))
    if not prepared:
        raise ValueError("no trainable samples")
    return prepared


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)
    schedules: list[NoiseSchedule] = field(default_factory=list)

    def column(self, key: str) -> list[float]:
        return [r[key] for r in self.rows]


def diffusion_loss(model: ContextDiffuser, embedder: Embedder, batch, gamma: float, self_cond_prob: float,
                   gen: torch.Generator, rng: random.Random) -> tuple[Tensor, dict, Tensor, Tensor]:
    """MSE on the clean-latent prediction plus gamma-weighted anchor NLL through the frozen decoder.

    The stage predicting from t=1 regresses to the embeddings themselves,
    every other stage to the sampled z_0.
    """
    contexts, e, seqs = zip(*batch)
    e = torch.stack(e)
    B, N, d = e.shape
    ctx, ctx_mask = model.encode_contexts(contexts)
    t = torch.randint(1, model.sched.T + 1, (B,), generator=gen)
    z0 = sample_z0(e, model.sched, gen)
    z_t = forward_jump(z0, t, model.sched, gen)
    sc = torch.zeros_like(z_t)
    if rng.random() < self_cond_prob:
        with torch.no_grad():
            sc = model.denoise_step(sc, z_t, t, ctx, ctx_mask)
    pred = model.denoise_step(sc, z_t, t, ctx, ctx_mask)
    target = torch.where((t == 1)[:, None, None], e, z0)
    per_slot = ((pred - target) ** 2).mean(-1)
    mse = per_slot.mean()
    flat_seqs = [s for row in seqs for s in row]
    anchor = embedder.reconstruction_loss(pred.reshape(B * N, d), flat_seqs) if gamma > 0 else pred.new_zeros(())
    loss = mse + gamma * anchor
    record = ((pred.detach() - z0) ** 2).mean(-1)
    return loss, {"mse": mse.item(), "anchor": anchor.item()}, t, record


def train_diffuser(
    examples: Sequence[TrainingExample],
    embedder: Embedder,
    sched: NoiseSchedule,
    cfg: ModelConfig,
    train: DiffusionTrainConfig | None = None,
    on_adapt: Callable[[int, NoiseSchedule], None] | None = None,
) -> tuple[ContextDiffuser, TrainingLog]:
    """Fit context encoder and denoiser against a frozen embedder.

    Gold sets are padded with ``<eok>`` columns to the model width.
    """
    train = train or DiffusionTrainConfig()
    if not embedder.frozen:
        raise ValueError("embedder must be frozen before diffusion training")
    if cfg.d != embedder.cfg.d:
        raise ValueError(f"diffuser d={cfg.d} differs from embedder d={embedder.cfg.d}")
    torch.manual_seed(train.seed)
    gen = torch.Generator().manual_seed(train.seed)
    rng = random.Random(train.seed)
    model = ContextDiffuser(cfg, embedder.vocab, sched)
    data = _prepare(examples, embedder, cfg.max_slots)
    opt = Optimizer(model.parameters(), train.lr, train.warmup, train.steps, train.weight_decay)
    state = AdaptiveState(sched.T, cfg.max_slots)
    history = TrainingLog()

    def evaluate_init():
        model.eval()
        with torch.no_grad():
            batch = data[: min(len(data), 32)]
            _, parts, _, _ = diffusion_loss(model, embedder, batch, 1.0, 0.0,
                                            torch.Generator().manual_seed(train.seed + 1), random.Random(0))
        model.train()
        return parts

    init = evaluate_init()
    history.rows.append({"step": 0, "loss": init["mse"] + train.gamma * init["anchor"], **init})
    model.train()
    acc = {"loss": 0.0, "mse": 0.0, "anchor": 0.0}
    n_acc = 0
    for step in range(1, train.steps + 1):
        batch = [data[rng.randrange(len(data))] for _ in range(train.batch_size)]
        loss, parts, t, record = diffusion_loss(model, embedder, batch, train.gamma, train.self_cond_prob, gen, rng)
        if not torch.isfinite(loss):
            raise NumericFailure(f"non-finite loss at step {step}")
        loss.backward()
        opt.step()
        state.record(t.numpy(), record.numpy())
        acc["loss"] += loss.item()
        acc["mse"] += parts["mse"]
        acc["anchor"] += parts["anchor"]
        n_acc += 1
        if step % train.log_every == 0 or step == train.steps:
            history.rows.append({"step": step, **{k: v / n_acc for k, v in acc.items()}})
            acc = dict.fromkeys(acc, 0.0)
            n_acc = 0
        if train.adapt_every and step % train.adapt_every == 0:
            model.sched = adapt_schedule(state, model.sched)
            state.reset()
            history.schedules.append(model.sched)
            if on_adapt is not None:
                on_adapt(step, model.sched)
    model.eval()
    return model, history


def fact_examples(samples) -> list[TrainingExample]:
    return [TrainingExample(s.context, list(s.gold.facts)) for s in samples]


def train_config_dict(train: DiffusionTrainConfig) -> dict:
    return asdict(train)
