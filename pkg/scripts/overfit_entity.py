"""Overfit the entity-level pipeline (heads, tails, relation classifier) on
the toy corpus and report the four recall figures."""

import argparse
import time

import torch

from noisefacts.corpus import RelationCatalog, build_vocab
from noisefacts.diffuser import DiffusionTrainConfig, GenerationConfig
from noisefacts.embedder import PretrainConfig, pretrain_embedder
from noisefacts.entitypipe import ClassifierTrainConfig, train_entity_pipeline
from noisefacts.numkernel import ModelConfig
from noisefacts.schedule import sqrt_schedule
from noisefacts.toydata import toy_kg, toy_narratives


def recalls(pipe, samples, gen_cfg):
    hits = dict.fromkeys(("heads", "tails", "relation", "triples"), 0)
    totals = dict.fromkeys(hits, 0)
    for s in samples:
        heads = set(pipe.generate_heads(s.context, gen_cfg))
        for h in s.gold.heads:
            hits["heads"] += h in heads
            totals["heads"] += 1
            tails = set(pipe.generate_tails(s.context, h, gen_cfg))
            for f in s.gold.facts:
                if f.head == h:
                    hits["tails"] += f.tail in tails
                    totals["tails"] += 1
        facts = set(pipe.generate_fact_graph(s.context, gen_cfg)[0])
        for f in s.gold.facts:
            hits["relation"] += pipe.predict_relation(s.context, f.head, f.tail) == f.relation
            hits["triples"] += f in facts
            totals["relation"] += 1
            totals["triples"] += 1
    return {k: hits[k] / totals[k] for k in hits}


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--T", type=int, default=200)
    parser.add_argument("--steps", type=int, default=3000)
    parser.add_argument("--width", type=int, default=4)
    parser.add_argument("--classifier-steps", type=int, default=1500)
    args = parser.parse_args()
    torch.set_num_threads(1)

    catalog = RelationCatalog.atomic()
    kg = toy_kg(200, catalog=catalog)
    samples = toy_narratives(kg, 20)
    vocab = build_vocab(samples, kg, 1, catalog)

    start = time.perf_counter()
    emb, _ = pretrain_embedder(kg.heads + kg.tails, ModelConfig(len(vocab), dropout=0.0), vocab, catalog,
                               "entity", PretrainConfig(epochs=200, lr=3e-3))
    pipe, _ = train_entity_pipeline(samples, emb, sqrt_schedule(args.T),
                                    ModelConfig(len(vocab), max_slots=args.width),
                                    DiffusionTrainConfig(steps=args.steps, log_every=100),
                                    ClassifierTrainConfig(steps=args.classifier_steps), catalog)
    print(f"trained in {time.perf_counter() - start:.0f}s")
    for name, value in recalls(pipe, samples, GenerationConfig(args.T, seed=0)).items():
        print(f"{name:>9}: {value:.1%}")


if __name__ == "__main__":
    main()
