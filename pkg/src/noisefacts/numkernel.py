"""Transformer building blocks, optimizer, gradient checking and checkpoints.

Torch supplies tensors and autograd. Everything the embedder and diffuser
networks are made of lives here. Latent blocks are stored slot-major,
shape ``(N, d)`` (or ``(B, N, d)`` batched).
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
import torch
from torch import Tensor, nn

FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    vocab_size: int
    d: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_slots: int = 16
    dropout: float = 0.1
    max_len: int = 256

    def __post_init__(self):
        if self.d % self.n_heads:
            raise ValueError(f"d={self.d} not divisible by n_heads={self.n_heads}")
        if self.max_slots < 1:
            raise ValueError("max_slots must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")

    def to_json(self) -> dict:
        return asdict(self)


def sinusoidal(positions: Tensor, d: int) -> Tensor:
    """Transformer positional encoding of (possibly fractional) positions."""
    positions = positions.to(torch.get_default_dtype()) if not positions.is_floating_point() else positions
    half = d // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=positions.dtype) / half)
    angles = positions[..., None] * freqs
    emb = torch.cat([torch.sin(angles), torch.cos(angles)], dim=-1)
    if d % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[..., :1])], dim=-1)
    return emb


class MultiHeadAttention(nn.Module):
    def __init__(self, d: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        self.n_heads = n_heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.drop = nn.Dropout(dropout)
        self.keep_weights = False
        self.last_weights: Tensor | None = None

    def forward(self, x: Tensor, mem: Tensor, key_mask: Tensor | None = None, causal: bool = False) -> Tensor:
        B, L, d = x.shape
        M = mem.shape[1]
        h = self.n_heads
        q = self.q(x).view(B, L, h, d // h).transpose(1, 2)
        k = self.k(mem).view(B, M, h, d // h).transpose(1, 2)
        v = self.v(mem).view(B, M, h, d // h).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(d // h)
        if key_mask is not None:
            scores = scores.masked_fill(~key_mask[:, None, None, :], float("-inf"))
        if causal:
            tri = torch.ones(L, M, dtype=torch.bool).triu(1)
            scores = scores.masked_fill(tri, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        if self.keep_weights:
            self.last_weights = weights.detach()
        out = (self.drop(weights) @ v).transpose(1, 2).reshape(B, L, d)
        return self.o(out)


class Block(nn.Module):
    """Pre-norm transformer layer: self-attention, optional cross-attention, feed-forward."""

    def __init__(self, d: int, n_heads: int, d_ff: int, dropout: float, cross: bool, causal: bool):
        super().__init__()
        self.causal = causal
        self.ln1 = nn.LayerNorm(d)
        self.attn = MultiHeadAttention(d, n_heads, dropout)
        self.cross = None
        if cross:
            self.ln2 = nn.LayerNorm(d)
            self.cross = MultiHeadAttention(d, n_heads, dropout)
        self.ln3 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, d_ff), nn.GELU(), nn.Linear(d_ff, d))
        self.drop = nn.Dropout(dropout)

    def forward(self, x, mask=None, mem=None, mem_mask=None):
        h = self.ln1(x)
        x = x + self.drop(self.attn(h, h, mask, causal=self.causal))
        if self.cross is not None:
            x = x + self.drop(self.cross(self.ln2(x), mem, mem_mask))
        return x + self.drop(self.ff(self.ln3(x)))


class Encoder(nn.Module):
    """Bidirectional token encoder; returns one hidden state per token."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok = nn.Embedding(cfg.vocab_size, cfg.d)
        self.blocks = nn.ModuleList(
            Block(cfg.d, cfg.n_heads, cfg.d_ff, cfg.dropout, cross=False, causal=False)
            for _ in range(cfg.n_layers)
        )
        self.ln = nn.LayerNorm(cfg.d)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, ids: Tensor, mask: Tensor | None = None) -> Tensor:
        if ids.numel() and (int(ids.max()) >= self.cfg.vocab_size or int(ids.min()) < 0):
            raise IndexError(f"token id out of range for vocabulary of {self.cfg.vocab_size}")
        pos = sinusoidal(torch.arange(ids.shape[1]), self.cfg.d).to(self.tok.weight.dtype)
        x = self.drop(self.tok(ids) + pos)
        for blk in self.blocks:
            x = blk(x, mask)
        return self.ln(x)


class Denoiser(nn.Module):
    """Predicts clean latents from (noisy latents, previous clean estimate, step, context).

    Noisy and self-conditioning columns are concatenated feature-wise and
    projected by an MLP; the sinusoidal step embedding is added to every slot.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d
        self.in_proj = nn.Sequential(nn.Linear(2 * d, d), nn.GELU(), nn.Linear(d, d))
        self.slot = nn.Embedding(cfg.max_slots, d)
        self.blocks = nn.ModuleList(
            Block(d, cfg.n_heads, cfg.d_ff, cfg.dropout, cross=True, causal=False)
            for _ in range(cfg.n_layers)
        )
        self.ln = nn.LayerNorm(d)
        self.out = nn.Linear(d, d)

    def forward(self, z_t, z0_prev, t, ctx, ctx_mask=None, slot_mask=None):
        if z_t.shape != z0_prev.shape:
            raise ValueError(f"shape mismatch: z_t {tuple(z_t.shape)} vs z0_prev {tuple(z0_prev.shape)}")
        B, N, d = z_t.shape
        if N > self.cfg.max_slots:
            raise ValueError(f"{N} slots exceed max_slots={self.cfg.max_slots}")
        t = torch.as_tensor(t).reshape(-1).expand(B)
        temb = sinusoidal(t.to(z_t.dtype), d)[:, None, :]
        x = self.in_proj(torch.cat([z_t, z0_prev], dim=-1)) + temb + self.slot.weight[:N]
        for blk in self.blocks:
            x = blk(x, slot_mask, ctx, ctx_mask)
        return self.out(self.ln(x))


class FactDecoder(nn.Module):
    """Causal token decoder attending to a memory of conditioning vectors."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.tok = nn.Embedding(cfg.vocab_size, cfg.d)
        self.blocks = nn.ModuleList(
            Block(cfg.d, cfg.n_heads, cfg.d_ff, cfg.dropout, cross=True, causal=True)
            for _ in range(cfg.n_layers)
        )
        self.ln = nn.LayerNorm(cfg.d)
        self.head = nn.Linear(cfg.d, cfg.vocab_size)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, ids: Tensor, memory: Tensor, mask: Tensor | None = None) -> Tensor:
        pos = sinusoidal(torch.arange(ids.shape[1]), self.cfg.d).to(self.tok.weight.dtype)
        x = self.drop(self.tok(ids) + pos)
        for blk in self.blocks:
            x = blk(x, mask, memory)
        return self.head(self.ln(x))


# -- functional surface ------------------------------------------------------


def encoder_forward(tokens: Sequence[int], encoder: Encoder) -> Tensor:
    """Hidden states ``(len, d)`` for one unbatched token sequence."""
    ids = torch.as_tensor(list(tokens), dtype=torch.long)[None]
    return encoder(ids)[0]


def denoiser_forward(z_t: Tensor, z0_prev: Tensor, t: int, ctx: Tensor, denoiser: Denoiser) -> Tensor:
    """Unbatched denoiser call: ``(N, d)`` latents, ``(L, d)`` context states."""
    return denoiser(z_t[None], z0_prev[None], torch.tensor([t]), ctx[None])[0]


def backward(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, Tensor]:
    """Gradients of ``loss`` for every named parameter; unreachable ones are zero."""
    if not isinstance(loss, Tensor) or loss.grad_fn is None:
        raise RuntimeError("backward called on a value with no recorded forward computation")
    names = list(params)
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True, retain_graph=True)
    return {n: (g if g is not None else torch.zeros_like(params[n])) for n, g in zip(names, grads)}


def linear_warmup_factor(step: int, warmup: int, total: int) -> float:
    """LR multiplier: linear ramp over ``warmup`` steps, then linear decay to 0 at ``total``."""
    if step < warmup:
        return (step + 1) / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - step) / (total - warmup))


class Optimizer:
    """AdamW with linear warmup/decay; skips steps whose gradients are not finite."""

    def __init__(self, params: Iterable[nn.Parameter], lr: float, warmup: int, total: int,
                 weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params if p.requires_grad]
        self.lr, self.warmup, self.total = lr, warmup, total
        self.opt = torch.optim.AdamW(self.params, lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        self.step_count = 0
        self.skipped = 0

    def current_lr(self) -> float:
        return self.lr * linear_warmup_factor(self.step_count, self.warmup, self.total)

    def step(self) -> bool:
        grads = [p.grad for p in self.params if p.grad is not None]
        if any(not torch.isfinite(g).all() for g in grads):
            self.skipped += 1
            warnings.warn(f"non-finite gradient at step {self.step_count}; update skipped")
            self.opt.zero_grad(set_to_none=True)
            return False
        for group in self.opt.param_groups:
            group["lr"] = self.current_lr()
        self.opt.step()
        self.opt.zero_grad(set_to_none=True)
        self.step_count += 1
        return True

    def zero_grad(self):
        self.opt.zero_grad(set_to_none=True)


def optimizer_step(opt: Optimizer, grads: Mapping[str, Tensor], named: Mapping[str, nn.Parameter]) -> bool:
    """Apply explicit gradients ``grads`` (name -> tensor) through ``opt``."""
    for name, g in grads.items():
        p = named[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name}")
        p.grad = g.detach().clone()
    return opt.step()


def grad_check(
    fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    n_coords: int = 20,
    h: float = 1e-5,
    seed: int = 0,
    atol: float = 1e-8,
) -> float:
    """Max relative error between autograd and central differences.

    ``fn`` must be a closure over ``tensors`` returning a scalar; it is called
    repeatedly with single coordinates perturbed in place. Use float64.
    Coordinates where both gradients are below ``atol`` count as agreeing:
    exactly-zero gradients (attention key biases, for one) leave only
    round-off in the numeric estimate.
    """
    rng = np.random.default_rng(seed)
    analytic = torch.autograd.grad(fn(), list(tensors), allow_unused=True)
    worst = 0.0
    for tensor, grad in zip(tensors, analytic):
        grad = torch.zeros_like(tensor) if grad is None else grad
        flat = tensor.data.view(-1)
        coords = rng.choice(flat.numel(), size=min(n_coords, flat.numel()), replace=False)
        for i in coords:
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                plus = fn().item()
                flat[i] = orig - h
                minus = fn().item()
                flat[i] = orig
            numeric = (plus - minus) / (2 * h)
            a = grad.reshape(-1)[i].item()
            if abs(a) < atol and abs(numeric) < atol:
                continue
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


# -- checkpoints ---------------------------------------------------------------


def save_checkpoint(directory: str | Path, tensors: Mapping[str, Tensor], config: dict,
                    extra: dict | None = None) -> Path:
    """Write ``manifest.json`` + ``weights.bin`` (little-endian float32, concatenated)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index, offset, chunks = [], 0, []
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().to(torch.float32).numpy().astype("<f4")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes())
        offset += arr.size * 4
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": config,
        "tensors": index,
        "sha256": hashlib.sha256(blob).hexdigest(),
    }
    if extra:
        manifest["extra"] = extra
    (directory / "weights.bin").write_bytes(blob)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return directory


def load_checkpoint(directory: str | Path) -> tuple[dict[str, Tensor], dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest.get('format_version')}")
    blob = (directory / "weights.bin").read_bytes()
    tensors = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"])
        tensors[entry["name"]] = torch.from_numpy(arr.reshape(entry["shape"]).copy())
    return tensors, manifest


def prefixed_state(prefix: str, module: nn.Module) -> dict[str, Tensor]:
    return {prefix + k: v for k, v in module.state_dict().items()}


def load_prefixed(module: nn.Module, tensors: Mapping[str, Tensor], prefix: str) -> None:
    state = {k[len(prefix):]: v for k, v in tensors.items() if k.startswith(prefix)}
    module.load_state_dict(state)


def state_digest(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def pad_batch(seqs: Sequence[Sequence[int]], pad_id: int) -> tuple[Tensor, Tensor]:
    """Right-pad id sequences; returns ``(ids, mask)`` with mask True on real tokens."""
    L = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), L), pad_id, dtype=torch.long)
    mask = torch.zeros((len(seqs), L), dtype=torch.bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = torch.as_tensor(list(s), dtype=torch.long)
        mask[i, : len(s)] = True
    return ids, mask
