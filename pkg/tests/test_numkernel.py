import json
import math
import warnings

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st

from noisefacts.numkernel import (Block, Denoiser, Encoder, FactDecoder, ModelConfig, MultiHeadAttention, Optimizer,
                                  backward, denoiser_forward, encoder_forward, grad_check, linear_warmup_factor,
                                  load_checkpoint, optimizer_step, pad_batch, save_checkpoint, state_digest)

SMALL = dict(vocab_size=13, d=8, n_layers=1, n_heads=2, d_ff=16, max_slots=4, dropout=0.0)


@pytest.fixture
def f64():
    old = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(old)


def test_model_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(10, d=10, n_heads=3)
    with pytest.raises(ValueError):
        ModelConfig(10, max_slots=0)
    with pytest.raises(ValueError):
        ModelConfig(10, dropout=1.0)


def test_encoder_shapes_and_errors():
    torch.manual_seed(0)
    enc = Encoder(ModelConfig(**SMALL)).eval()
    assert encoder_forward([4], enc).shape == (1, 8)
    with pytest.raises(IndexError):
        encoder_forward([13], enc)


def test_encoder_is_order_sensitive_and_deterministic():
    torch.manual_seed(0)
    enc = Encoder(ModelConfig(**SMALL)).eval()
    a = encoder_forward([1, 7, 9, 2], enc)
    b = encoder_forward([1, 9, 7, 2], enc)
    assert not torch.allclose(a, b)
    assert torch.equal(a, encoder_forward([1, 7, 9, 2], enc))


def test_attention_rows_sum_to_one_and_respect_masks():
    torch.manual_seed(0)
    attn = MultiHeadAttention(8, 2)
    attn.keep_weights = True
    x = torch.randn(2, 5, 8)
    mask = torch.tensor([[True] * 5, [True, True, True, False, False]])
    attn(x, x, mask)
    w = attn.last_weights
    assert torch.allclose(w.sum(-1), torch.ones_like(w.sum(-1)), atol=1e-6)
    assert torch.all(w[1, :, :, 3:] == 0)
    attn(x, x, causal=True)
    assert torch.all(attn.last_weights.triu(1) == 0)


def test_layernorm_statistics_before_affine():
    torch.manual_seed(0)
    blk = Block(8, 2, 16, 0.0, cross=False, causal=False)
    x = torch.randn(3, 4, 8, dtype=torch.float64) * 5 + 2
    ln = blk.ln1.double()
    y = (ln(x) - ln.bias) / ln.weight
    assert y.mean(-1).abs().max() < 1e-6
    assert (y.var(-1, unbiased=False) - 1).abs().max() < 1e-4


def test_denoiser_contracts():
    torch.manual_seed(0)
    den = Denoiser(ModelConfig(**SMALL)).eval()
    z = torch.randn(3, 8)
    ctx = torch.randn(5, 8)
    out = denoiser_forward(z, torch.zeros_like(z), 10, ctx, den)
    assert out.shape == z.shape
    assert not torch.allclose(out, denoiser_forward(z, torch.zeros_like(z), 10, torch.randn(5, 8), den))
    assert not torch.allclose(denoiser_forward(z, z, 0, ctx, den), denoiser_forward(z, z, 2000, ctx, den))
    with pytest.raises(ValueError):
        denoiser_forward(z, torch.zeros(2, 8), 10, ctx, den)
    with pytest.raises(ValueError):
        denoiser_forward(torch.randn(5, 8), torch.zeros(5, 8), 10, ctx, den)


def test_backward_contracts():
    p = torch.randn(4, requires_grad=True)
    q = torch.randn(3, requires_grad=True)
    grads = backward(p.sum(), {"p": p, "q": q})
    assert torch.equal(grads["p"], torch.ones(4))
    assert torch.equal(grads["q"], torch.zeros(3))
    assert torch.equal(backward(F.mse_loss(p, p), {"p": p})["p"], torch.zeros(4))
    with pytest.raises(RuntimeError):
        backward(torch.tensor(1.0), {"p": p})


def test_grad_check_linear_layer(f64):
    torch.manual_seed(0)
    lin = torch.nn.Linear(5, 3)
    x = torch.randn(4, 5, requires_grad=True)
    err = grad_check(lambda: lin(x).pow(2).sum(), [lin.weight, lin.bias, x], n_coords=15)
    assert err < 1e-7


def test_grad_check_softmax_cross_entropy(f64):
    torch.manual_seed(1)
    logits = torch.randn(6, 9, requires_grad=True)
    target = torch.randint(0, 9, (6,))
    assert grad_check(lambda: F.cross_entropy(logits, target), [logits], n_coords=30) < 1e-6


def test_grad_check_two_layer_net(f64):
    torch.manual_seed(2)
    net = torch.nn.Sequential(torch.nn.Linear(4, 6), torch.nn.Tanh(), torch.nn.Linear(6, 2))
    x = torch.randn(5, 4)
    assert grad_check(lambda: net(x).pow(2).mean(), list(net.parameters()), n_coords=10) < 1e-4


def test_grad_check_detects_wrong_gradient(f64):
    # a custom op with a deliberately wrong backward must be caught
    class Bad(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            ctx.save_for_backward(x)
            return x ** 3

        @staticmethod
        def backward(ctx, g):
            (x,) = ctx.saved_tensors
            return g * 2 * x

    x = torch.randn(5, requires_grad=True)
    assert grad_check(lambda: Bad.apply(x).sum(), [x]) > 1e-2


def test_grad_check_denoiser_block(f64):
    torch.manual_seed(3)
    den = Denoiser(ModelConfig(**SMALL)).eval()
    z, sc, ctx = torch.randn(1, 3, 8), torch.randn(1, 3, 8), torch.randn(1, 4, 8)
    z.requires_grad_(True)
    sc.requires_grad_(True)
    tensors = [z, sc, *list(den.parameters())[:6]]
    assert grad_check(lambda: den(z, sc, torch.tensor([7]), ctx).pow(2).sum(), tensors, n_coords=8) < 1e-4


def test_grad_check_exactly_zero_gradient(f64):
    # a key bias shifts every score in a softmax row equally, so its gradient is exactly zero
    torch.manual_seed(4)
    attn = MultiHeadAttention(8, 2)
    x, mem, w = torch.randn(1, 3, 8), torch.randn(1, 5, 8), torch.randn(1, 3, 8)
    grad = torch.autograd.grad((attn(x, mem) * w).sum(), attn.k.bias)[0]
    assert grad.abs().max() < 1e-12
    assert grad_check(lambda: (attn(x, mem) * w).sum(), [attn.k.bias]) == 0.0


def test_warmup_factor_examples():
    assert linear_warmup_factor(0, 2000, 10000) == pytest.approx(1 / 2000)
    assert linear_warmup_factor(1999, 2000, 10000) == pytest.approx(1.0)
    assert linear_warmup_factor(6000, 2000, 10000) == pytest.approx(0.5)
    assert linear_warmup_factor(10000, 2000, 10000) == 0.0


@given(step=st.integers(0, 5000), warmup=st.integers(1, 500), extra=st.integers(1, 5000))
@settings(max_examples=200, deadline=None)
def test_warmup_factor_in_unit_interval(step, warmup, extra):
    f = linear_warmup_factor(step, warmup, warmup + extra)
    assert 0.0 <= f <= 1.0


def test_optimizer_effective_lr_at_step_zero():
    p = torch.nn.Parameter(torch.ones(3))
    opt = Optimizer([p], lr=1e-5, warmup=2000, total=100000)
    assert opt.current_lr() == pytest.approx(1e-5 / 2000)


def test_optimizer_zero_gradient_is_fixed_point():
    p = torch.nn.Parameter(torch.randn(4))
    before = p.detach().clone()
    opt = Optimizer([p], lr=0.1, warmup=1, total=10)
    for _ in range(3):
        optimizer_step(opt, {"p": torch.zeros(4)}, {"p": p})
    assert torch.equal(p.detach(), before)
    assert opt.step_count == 3


def test_optimizer_matches_hand_written_adamw():
    torch.manual_seed(0)
    p = torch.nn.Parameter(torch.randn(5, dtype=torch.float64))
    x = p.detach().clone().numpy()
    lr, wd, b1, b2, eps = 0.05, 0.01, 0.9, 0.999, 1e-8
    opt = Optimizer([p], lr=lr, warmup=3, total=10, weight_decay=wd)
    m, v = np.zeros(5), np.zeros(5)
    for step in range(6):
        g = np.sin(np.arange(5) + step)
        optimizer_step(opt, {"p": torch.as_tensor(g)}, {"p": p})
        rate = lr * linear_warmup_factor(step, 3, 10)
        x = x * (1 - rate * wd)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat, vhat = m / (1 - b1 ** (step + 1)), v / (1 - b2 ** (step + 1))
        x = x - rate * mhat / (np.sqrt(vhat) + eps)
    np.testing.assert_allclose(p.detach().numpy(), x, rtol=1e-10, atol=1e-12)


def test_optimizer_skips_non_finite_gradients():
    p = torch.nn.Parameter(torch.ones(2))
    opt = Optimizer([p], lr=0.1, warmup=1, total=10)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        applied = optimizer_step(opt, {"p": torch.tensor([1.0, math.nan])}, {"p": p})
    assert not applied and opt.skipped == 1 and opt.step_count == 0
    assert torch.equal(p.detach(), torch.ones(2))
    assert caught


def test_optimizer_rejects_shape_mismatch():
    p = torch.nn.Parameter(torch.ones(2))
    with pytest.raises(ValueError):
        optimizer_step(Optimizer([p], 0.1, 1, 10), {"p": torch.ones(3)}, {"p": p})


def test_quadratic_bowl_minimized():
    torch.manual_seed(0)
    p = torch.nn.Parameter(torch.randn(10) * 3)
    opt = Optimizer([p], lr=0.05, warmup=10, total=2000)
    for _ in range(2000):
        loss = (p ** 2).sum()
        loss.backward()
        opt.step()
    assert float((p.detach() ** 2).sum()) < 1e-6


def test_checkpoint_round_trip_and_byte_identity(tmp_path):
    torch.manual_seed(0)
    cfg = ModelConfig(**SMALL)
    dec = FactDecoder(cfg)
    tensors = {f"dec.{k}": v for k, v in dec.state_dict().items()}
    save_checkpoint(tmp_path / "a", tensors, cfg.to_json(), {"note": "x"})
    loaded, manifest = load_checkpoint(tmp_path / "a")
    assert manifest["format_version"] == 1 and manifest["config"] == cfg.to_json()
    offsets = [e["offset"] for e in manifest["tensors"]]
    assert offsets == sorted(offsets)
    for k, v in tensors.items():
        assert torch.equal(loaded[k], v)
    save_checkpoint(tmp_path / "b", loaded, manifest["config"], manifest["extra"])
    for name in ("manifest.json", "weights.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    blob = (tmp_path / "a" / "weights.bin").read_bytes()
    first = manifest["tensors"][0]
    value = np.frombuffer(blob[:4], dtype="<f4")[0]
    assert value == loaded[first["name"]].reshape(-1)[0].item()
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["extra"] == {"note": "x"}


def test_state_digest_tracks_parameters():
    torch.manual_seed(0)
    enc = Encoder(ModelConfig(**SMALL))
    d1 = state_digest(enc)
    assert d1 == state_digest(enc)
    with torch.no_grad():
        enc.tok.weight[0, 0] += 1
    assert state_digest(enc) != d1


def test_pad_batch():
    ids, mask = pad_batch([[1, 2, 3], [4]], 0)
    assert ids.tolist() == [[1, 2, 3], [4, 0, 0]]
    assert mask.tolist() == [[True, True, True], [True, False, False]]
