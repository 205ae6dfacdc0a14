"""Noise schedules: sqrt initialization, forward corruption, posterior, adaptive re-fit."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.isotonic import isotonic_regression
from torch import Tensor

BETA_MIN, BETA_MAX = 1e-5, 0.999


def _cumulative(alpha_bar0: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """alpha_bar rows from the step-0 value and betas for steps 1..T (axis 0)."""
    return np.concatenate([alpha_bar0[None], alpha_bar0[None] * np.cumprod(1.0 - betas, axis=0)], axis=0)


def _clamped_betas(alpha_bar: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = alpha_bar[1:] / alpha_bar[:-1]
    betas = 1.0 - np.nan_to_num(ratio, nan=0.0, posinf=0.0, neginf=0.0)
    return np.clip(betas, BETA_MIN, BETA_MAX)


@dataclass
class NoiseSchedule:
    """Cumulative signal retention ``alpha_bar[t, n]`` for t = 0..T.

    ``alpha_bar`` has shape ``(T+1, P)``. P == 1 means one row shared by
    every slot position; adaptive updates widen it to one column per slot.
    """

    T: int
    s: float
    amp: float
    alpha_bar: np.ndarray

    def __post_init__(self):
        if self.amp < 1:
            raise ValueError("noise amplification must be >= 1")
        self.alpha_bar = np.asarray(self.alpha_bar, dtype=np.float64)
        if self.alpha_bar.ndim == 1:
            self.alpha_bar = self.alpha_bar[:, None]
        if self.alpha_bar.shape[0] != self.T + 1:
            raise ValueError(f"alpha_bar has {self.alpha_bar.shape[0]} rows, expected T+1={self.T + 1}")

    @property
    def positions(self) -> int:
        return self.alpha_bar.shape[1]

    @property
    def betas(self) -> np.ndarray:
        """beta[t, n] for t = 0..T; beta_0 = 1 - alpha_bar_0."""
        b = np.empty_like(self.alpha_bar)
        b[0] = 1.0 - self.alpha_bar[0]
        b[1:] = 1.0 - self.alpha_bar[1:] / self.alpha_bar[:-1]
        return b

    def columns(self, n_slots: int) -> np.ndarray:
        """alpha_bar as ``(T+1, n_slots)``; shared schedules broadcast."""
        if self.positions == 1:
            return np.repeat(self.alpha_bar, n_slots, axis=1)
        if n_slots > self.positions:
            raise ValueError(f"schedule has {self.positions} positions, asked for {n_slots}")
        return self.alpha_bar[:, :n_slots]

    def widen(self, n_positions: int) -> "NoiseSchedule":
        return NoiseSchedule(self.T, self.s, self.amp, self.columns(n_positions).copy())

    def check(self) -> None:
        ab = self.alpha_bar
        if not (np.all(ab > 0) and np.all(ab < 1)):
            raise AssertionError("alpha_bar outside (0, 1)")
        if not np.all(np.diff(ab, axis=0) < 0):
            raise AssertionError("alpha_bar not strictly decreasing in t")
        b = self.betas[1:]
        if not (np.all(b >= BETA_MIN * (1 - 1e-9)) and np.all(b <= BETA_MAX * (1 + 1e-9))):
            raise AssertionError("beta outside clamp range")

    def to_json(self) -> dict:
        return {"T": self.T, "s": self.s, "amp": self.amp,
                "alpha_bar": self.alpha_bar.T.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "NoiseSchedule":
        return cls(obj["T"], obj["s"], obj["amp"], np.asarray(obj["alpha_bar"], dtype=np.float64).T)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path: str | Path) -> "NoiseSchedule":
        return cls.from_json(json.loads(Path(path).read_text()))


def sqrt_schedule(T: int = 2000, s: float = 1e-4, amp: float = 1.0) -> NoiseSchedule:
    """alpha_bar_t = 1 - sqrt(t/T + s), with betas clamped and alpha_bar re-accumulated."""
    if T < 1 or s <= 0:
        raise ValueError("need T >= 1 and s > 0")
    t = np.arange(T + 1, dtype=np.float64)
    raw = 1.0 - np.sqrt(t / T + s)
    ab0 = np.clip(np.array([raw[0]]), 1.0 - BETA_MAX, 1.0 - BETA_MIN)
    betas = _clamped_betas(raw)
    return NoiseSchedule(T, s, amp, _cumulative(ab0, betas[:, None]))


def _per_slot(values: np.ndarray, t: Tensor, n_slots: int, like: Tensor) -> Tensor:
    """Gather ``values[t, :n_slots]`` as a ``(B, N, 1)`` tensor matching ``like``."""
    t = torch.as_tensor(t).reshape(-1)
    rows = values[t.numpy()][:, :n_slots]
    return torch.as_tensor(rows, dtype=like.dtype)[..., None]


def _batched(z: Tensor) -> tuple[Tensor, bool]:
    return (z, False) if z.dim() == 3 else (z[None], True)


def forward_step(z_prev: Tensor, t, sched: NoiseSchedule, gen: torch.Generator | None = None) -> Tensor:
    """One forward corruption step: N(sqrt(1-beta_t) z_prev, beta_t A^2 I).

    t = 0 applies beta_0, the step that turns a clean embedding into z_0.
    """
    z, squeeze = _batched(z_prev)
    N = z.shape[1]
    betas = sched.betas if sched.positions > 1 else np.repeat(sched.betas, N, axis=1)
    beta = _per_slot(betas, torch.as_tensor(t), N, z)
    noise = torch.randn(z.shape, generator=gen, dtype=z.dtype)
    out = torch.sqrt(1.0 - beta) * z + torch.sqrt(beta) * sched.amp * noise
    return out[0] if squeeze else out


def jump_coefficients(t, n_slots: int, sched: NoiseSchedule, like: Tensor) -> tuple[Tensor, Tensor]:
    ab = _per_slot(sched.columns(n_slots), torch.as_tensor(t), n_slots, like)
    return torch.sqrt(ab), torch.sqrt(1.0 - ab) * sched.amp


def forward_jump(z0: Tensor, t, sched: NoiseSchedule, gen: torch.Generator | None = None,
                 noise: Tensor | None = None) -> Tensor:
    """Closed-form corruption: N(sqrt(alpha_bar_t) z0, (1 - alpha_bar_t) A^2 I).

    ``t`` is an int or a per-batch tensor of steps.
    """
    z, squeeze = _batched(z0)
    mean_coef, std = jump_coefficients(t, z.shape[1], sched, z)
    if noise is None:
        noise = torch.randn(z.shape, generator=gen, dtype=z.dtype)
    out = mean_coef * z + std * noise.reshape(z.shape)
    return out[0] if squeeze else out


def posterior_params(z_t: Tensor, z0: Tensor, t: int, sched: NoiseSchedule) -> tuple[Tensor, Tensor]:
    """Mean and per-slot variance of q(z_{t-1} | z_t, z_0)."""
    if t < 1:
        raise ValueError("posterior is defined for t >= 1 only")
    N = z_t.shape[-2]
    ab = sched.columns(N)
    a_t, a_prev = ab[t], ab[t - 1]
    beta = 1.0 - a_t / a_prev
    c0 = np.sqrt(a_prev) * beta / (1.0 - a_t)
    ct = np.sqrt(1.0 - beta) * (1.0 - a_prev) / (1.0 - a_t)
    var = (1.0 - a_prev) / (1.0 - a_t) * beta

    def col(x):
        return torch.as_tensor(x, dtype=z_t.dtype)[:, None]

    return col(c0) * z0 + col(ct) * z_t, torch.as_tensor(var, dtype=z_t.dtype)


@dataclass
class AdaptiveState:
    """Per (t, slot) MSE losses recorded during one update window."""

    T: int
    positions: int
    sums: np.ndarray = field(init=False)
    counts: np.ndarray = field(init=False)
    steps_in_window: int = 0

    def __post_init__(self):
        self.reset()

    def reset(self) -> None:
        self.sums = np.zeros((self.T + 1, self.positions))
        self.counts = np.zeros((self.T + 1, self.positions), dtype=np.int64)
        self.steps_in_window = 0

    def record(self, t, losses) -> None:
        """``t``: (B,) steps; ``losses``: (B, N) per-slot MSE (NaN for unused slots)."""
        t = np.asarray(t).reshape(-1)
        losses = np.asarray(losses, dtype=np.float64)
        for b, step in enumerate(t):
            row = losses[b]
            ok = np.isfinite(row)
            n = np.flatnonzero(ok)
            if np.any(row[ok] < 0):
                raise ValueError("losses must be non-negative")
            self.sums[step, n] += row[n]
            self.counts[step, n] += 1

    def mean_losses(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), np.nan)


def _refit_position(losses: np.ndarray, ab: np.ndarray) -> np.ndarray | None:
    """New alpha_bar[1..T] for one slot, or None to leave it alone.

    ``losses`` and ``ab`` are indexed by t = 1..T. Missing losses (NaN) are
    filled by linear interpolation over t.
    """
    t = np.arange(len(losses))
    have = np.isfinite(losses)
    if have.sum() < 2:
        return None
    losses = np.interp(t, t[have], losses[have])
    if np.unique(losses).size < 2:
        return None
    # window noise can make the curve non-monotone; the map needs L increasing in t
    losses = isotonic_regression(losses, increasing=True)
    if np.unique(losses).size < 2:
        return None
    new_losses = np.linspace(losses.min(), losses.max(), len(losses))
    order = np.argsort(losses, kind="stable")
    xs, inverse = np.unique(losses[order], return_inverse=True)
    ys = np.bincount(inverse, weights=ab[order]) / np.bincount(inverse)
    # outside the recorded range np.interp holds the endpoint values
    return np.interp(new_losses, xs, ys)


def adapt_schedule(state: AdaptiveState, sched: NoiseSchedule) -> NoiseSchedule:
    """Re-space recorded losses evenly per slot and map them back to alpha_bar.

    The result is made decreasing in t (isotonic pass), betas are re-clamped
    and alpha_bar re-accumulated, so the schedule invariants always hold.
    """
    P = state.positions
    base = sched.columns(P)
    means = state.mean_losses()
    new = base.copy()
    for n in range(P):
        fitted = _refit_position(means[1:, n], base[1:, n])
        if fitted is None:
            continue
        fitted = isotonic_regression(fitted, increasing=False)
        col = np.concatenate([base[:1, n], fitted])
        betas = _clamped_betas(col)
        new[:, n] = _cumulative(col[0], betas)
    return NoiseSchedule(sched.T, sched.s, sched.amp, new)
