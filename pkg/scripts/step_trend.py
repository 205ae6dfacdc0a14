"""Mean number of edit-distance fact clusters per generation as a function of
inference steps, for a trained fact-level model.

    python3 scripts/step_trend.py --embedder runs/emb --model runs/fact --narratives toy/narratives.jsonl
"""

import argparse
from pathlib import Path

import numpy as np

from noisefacts.corpus import ingest_narratives
from noisefacts.diffuser import ContextDiffuser, GenerationConfig
from noisefacts.embedder import Embedder
from noisefacts.evalmetrics import SimilarityConfig, auto_threshold_range, cluster_facts, distance_matrix


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--embedder", type=Path, required=True)
    parser.add_argument("--model", type=Path, required=True)
    parser.add_argument("--narratives", type=Path, required=True)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--points", type=int, default=8, help="number of step counts between 1 and T")
    args = parser.parse_args()

    emb = Embedder.load(args.embedder)
    model_dir = args.model / "diffuser" if (args.model / "diffuser").exists() else args.model
    model, _ = ContextDiffuser.load(model_dir)
    samples = ingest_narratives(args.narratives, emb.catalog)
    cfg = SimilarityConfig("edit", emb.catalog)
    thresholds = auto_threshold_range([s.gold.facts for s in samples], cfg)
    T = model.sched.T
    counts = sorted(set(np.geomspace(1, T, args.points).round().astype(int).tolist()))

    print("steps\tmean_clusters\tmean_facts")
    for k in counts:
        clusters, sizes = [], []
        for seed in range(args.seeds):
            for i, s in enumerate(samples):
                facts = model.generate(s.context, emb, GenerationConfig(k, seed=seed * 1000 + i)).items
                sizes.append(len(facts))
                if not facts:
                    clusters.append(0.0)
                    continue
                d = distance_matrix(facts, cfg)
                clusters.append(np.mean([cluster_facts(facts, cfg, eps, dist=d).n_clusters for eps in thresholds]))
        print(f"{k}\t{np.mean(clusters):.3f}\t{np.mean(sizes):.3f}")


if __name__ == "__main__":
    main()
