import numpy as np
import pytest
import torch

from noisefacts.corpus import EOK, FactTriple, KnowledgeSet, build_vocab
from noisefacts.embedder import (Embedder, PretrainConfig, SlotOverflow, build_block, decode_fact, embed_fact,
                                 nearest_neighbor_rate, pretrain_embedder, reconstruction_rate, sample_z0)
from noisefacts.numkernel import ModelConfig
from noisefacts.schedule import sqrt_schedule

TINY = dict(d=16, n_layers=1, n_heads=2, d_ff=32, dropout=0.0)


@pytest.fixture(scope="module")
def untrained(toy, catalog):
    _, _, vocab = toy
    torch.manual_seed(0)
    return Embedder(ModelConfig(len(vocab), **TINY), vocab, catalog).eval()


def test_embed_is_deterministic_and_shaped(untrained, toy):
    k = toy[0].facts[0]
    a, b = embed_fact(untrained, k), embed_fact(untrained, k)
    assert a.shape == (16,)
    assert torch.equal(a, b)


def test_embedding_does_not_depend_on_other_facts(untrained, toy):
    facts = toy[0].facts[:5]
    with torch.no_grad():
        together = untrained.embed(facts)
        reversed_ = untrained.embed(facts[::-1])
    assert torch.allclose(together[2], embed_fact(untrained, facts[2]), atol=1e-6)
    assert torch.allclose(together, reversed_.flip(0), atol=1e-6)


def test_decode_max_len_one(untrained):
    out = decode_fact(untrained, torch.zeros(16), max_len=1)
    assert out == ["<s>"]
    with pytest.raises(ValueError):
        decode_fact(untrained, torch.zeros(3))


def test_pretrain_rejects_empty(toy, catalog):
    with pytest.raises(ValueError):
        pretrain_embedder([], ModelConfig(len(toy[2]), **TINY), toy[2], catalog)


def test_pretrained_round_trip(fact_embedder, toy):
    kg = toy[0]
    assert reconstruction_rate(fact_embedder.model, kg.facts) >= 0.95
    assert reconstruction_rate(fact_embedder.model, [EOK]) == 1.0
    assert fact_embedder.model.decode(fact_embedder.model.embed([EOK])) == [EOK]


def test_pretrained_nearest_neighbor(fact_embedder, toy):
    assert nearest_neighbor_rate(fact_embedder.model, list(dict.fromkeys(toy[0].facts))) >= 0.95


def test_pretraining_curve(fact_embedder):
    history = np.array(fact_embedder.history)
    assert history[1] < history[0]
    # epoch averages may wobble by minibatch noise; the trend must be down
    smoothed = np.convolve(history[1:], np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smoothed) <= 1e-3)
    assert history[-1] < 0.05 * history[0]


def test_pretrained_embedder_is_frozen(fact_embedder):
    emb = fact_embedder.model
    assert emb.frozen
    assert not any(p.requires_grad for p in emb.parameters())


def test_save_load_round_trip(fact_embedder, toy, tmp_path):
    emb = fact_embedder.model
    emb.save(tmp_path / "emb")
    back = Embedder.load(tmp_path / "emb")
    assert back.digest() == emb.digest()
    assert back.level == "fact" and back.vocab.itos == emb.vocab.itos
    k = toy[0].facts[3]
    assert torch.equal(embed_fact(back, k), embed_fact(emb, k))


def test_entity_level(toy, catalog):
    kg, _, vocab = toy
    torch.manual_seed(0)
    emb = Embedder(ModelConfig(len(vocab), **TINY), vocab, catalog, level="entity")
    ids = emb.verbalize("old cap")
    assert vocab.decode(ids) == ["<s>", "old", "cap", "</s>"]
    assert emb.interpret(ids) == "old cap"
    with pytest.raises(ValueError):
        Embedder(ModelConfig(len(vocab), **TINY), vocab, catalog, level="sentence")


def test_interpret_rejects_garbage(untrained):
    vocab = untrained.vocab
    assert untrained.interpret([vocab.bos_id, vocab.eos_id]) is None
    assert untrained.interpret(vocab.encode(["<s>", "<eok>", "</s>"])) == EOK


def test_build_block_and_overflow(untrained, toy):
    facts = toy[0].facts[:3]
    block = build_block(untrained, facts, max_slots=8)
    assert block.matrix.shape == (4, 16) and block.n_items == 3
    eok = embed_fact(untrained, EOK)
    assert torch.allclose(block.matrix[-1], eok, atol=1e-6)
    padded = build_block(untrained, facts, max_slots=8, width=6)
    assert padded.width == 6
    assert torch.allclose(padded.matrix[4:], eok.expand(2, -1), atol=1e-6)
    with pytest.raises(SlotOverflow, match="ctx-7"):
        build_block(untrained, facts, max_slots=3, label="ctx-7")
    assert build_block(untrained, [], max_slots=1).width == 1


def test_sample_z0_statistics_and_seed():
    sched = sqrt_schedule(2000)
    n = 100_000
    e = torch.full((n, 1), 0.25, dtype=torch.float64)
    z = sample_z0(e, sched, torch.Generator().manual_seed(0))
    assert abs(z.mean().item() - 0.25) < 3 * 0.1 / np.sqrt(n)
    assert z.var().item() == pytest.approx(0.01, rel=0.05)
    e2 = torch.randn(3, 4)
    a = sample_z0(e2, sched, torch.Generator().manual_seed(1))
    assert torch.equal(a, sample_z0(e2, sched, torch.Generator().manual_seed(1)))
    with pytest.raises(SlotOverflow):
        sample_z0(e2, sched, max_slots=2)


def test_tiny_pretraining_learns(catalog):
    facts = [FactTriple("cap", "ObjectUse", "wear on head"), FactTriple("ball", "AtLocation", "park"),
             FactTriple("cap", "AtLocation", "closet")]
    vocab = build_vocab([], KnowledgeSet(facts), 1, catalog)
    emb, history = pretrain_embedder(facts, ModelConfig(len(vocab), **TINY), vocab, catalog,
                                     train=PretrainConfig(epochs=150, lr=5e-3, warmup=10))
    assert history[-1] < history[0]
    assert reconstruction_rate(emb, facts + [EOK]) == 1.0
    assert emb.decode(emb.embed(facts)) == facts
