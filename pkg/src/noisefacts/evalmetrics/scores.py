"""Cluster-level diversity, relevance and alignment scores and their corpus report."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..corpus import FactTriple, GROUPS, RelationCatalog
from .clustering import FactClustering, auto_threshold_range, cluster_facts
from .similarity import SimilarityConfig, distance_matrix, similarity_matrix

NOVEL_MAX_COSINE = 0.45
NOVEL_MIN_RELEVANCE = 0.97


def relevance(clustering: FactClustering, context: str, cfg: SimilarityConfig, context_id: int = -1,
              fact_scores: Sequence[float] | None = None) -> float | None:
    """Mean over clusters of the mean member relevance; None for an empty clustering."""
    if not clustering.facts:
        return None
    if fact_scores is None:
        fact_scores = [cfg.scorer.score(k, context, context_id) for k in clustering.facts]
    scores = np.asarray(fact_scores, dtype=np.float64)
    return float(np.mean([scores[members].mean() for members in clustering.clusters()]))


def alignment(generated: Sequence[FactTriple], gold: FactClustering, cfg: SimilarityConfig,
              sim: np.ndarray | None = None) -> float:
    """Mean over gold clusters of the best similarity any generated fact reaches to a member."""
    if not gold.facts:
        raise ValueError("alignment needs a non-empty gold clustering")
    if not generated:
        return 0.0
    if sim is None:
        sim = similarity_matrix(list(generated), gold.facts, cfg)
    best = sim.max(axis=0)
    return float(np.mean([best[members].max() for members in gold.clusters()]))


def ra_f1(rel: float | None, align: float) -> float:
    """Harmonic mean of relevance and alignment (0 when both are 0 or relevance is absent)."""
    if rel is None or rel + align == 0:
        return 0.0
    return 2 * rel * align / (rel + align)


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


@dataclass
class ContextScores:
    context_id: int
    n_facts: int
    gold_n_facts: int
    per_threshold: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        rows = self.per_threshold
        rel = _mean(r["relevance"] for r in rows)
        align = _mean(r["alignment"] for r in rows)
        return {
            "context_id": self.context_id,
            "n_facts": self.n_facts,
            "n_clusters": _mean(r["n_clusters"] for r in rows),
            "gold_n_facts": self.gold_n_facts,
            "gold_n_clusters": _mean(r["gold_n_clusters"] for r in rows),
            "relevance": rel,
            "alignment": align,
            "ra_f1": ra_f1(rel, align) if align is not None else None,
        }


def corpus_summary(contexts: Sequence[dict]) -> dict:
    """Averages of per-context summaries; RA-F1 is recomputed from the averaged parts."""
    keys = ("n_facts", "n_clusters", "gold_n_facts", "gold_n_clusters", "relevance", "alignment")
    out = {k: _mean(c[k] for c in contexts) for k in keys}
    out["ra_f1"] = ra_f1(out["relevance"], out["alignment"]) if out["alignment"] is not None else None
    return out


def evaluate_geometry(gen_sets, gold_sets, contexts, cfg: SimilarityConfig,
                      thresholds: Sequence[float] | str = "auto") -> dict:
    if not (len(gen_sets) == len(gold_sets) == len(contexts)):
        raise ValueError(f"misaligned inputs: {len(gen_sets)} generated, {len(gold_sets)} gold, "
                         f"{len(contexts)} contexts")
    if thresholds == "auto":
        thresholds = auto_threshold_range(gold_sets, cfg)
    thresholds = [float(e) for e in thresholds]
    per_context = []
    for cid, (gen, gold, ctx) in enumerate(zip(gen_sets, gold_sets, contexts)):
        gen, gold = list(gen), list(gold)
        record = ContextScores(cid, len(gen), len(gold))
        scores = [cfg.scorer.score(k, ctx, cid) for k in gen] if gen and cfg.scorer is not None else None
        d_gen, d_gold = distance_matrix(gen, cfg), distance_matrix(gold, cfg)
        sim = similarity_matrix(gen, gold, cfg)
        for eps in thresholds:
            gen_cl = cluster_facts(gen, cfg, eps, d_gen)
            gold_cl = cluster_facts(gold, cfg, eps, d_gold)
            rel = relevance(gen_cl, ctx, cfg, cid, scores) if cfg.scorer is not None else None
            align = alignment(gen, gold_cl, cfg, sim) if gold else None
            record.per_threshold.append({
                "eps": eps,
                "n_clusters": gen_cl.n_clusters,
                "gold_n_clusters": gold_cl.n_clusters,
                "relevance": rel,
                "alignment": align,
                "ra_f1": ra_f1(rel, align) if align is not None else None,
            })
        per_context.append({**record.summary(), "per_threshold": record.per_threshold})
    return {"geometry": cfg.geometry, "thresholds": thresholds, "per_context": per_context,
            "corpus": corpus_summary(per_context)}


@dataclass
class MetricReport:
    geometries: dict = field(default_factory=dict)
    nlg: dict | None = None
    webnlg: dict | None = None
    novelty: dict | None = None
    knowledge_types: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"meta": self.meta, "geometries": self.geometries}
        for key in ("nlg", "webnlg", "novelty", "knowledge_types"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    def to_markdown(self) -> str:
        lines = ["# Evaluation report", ""]
        for name, block in self.geometries.items():
            c = block["corpus"]
            lines += [f"## Clustering: {name}", "",
                      f"thresholds: {', '.join(f'{e:.3g}' for e in block['thresholds'])}", "",
                      "| # Facts | # Clusters | Relevance | Alignment | RA-F1 | Gold # Facts | Gold # Clusters |",
                      "|---|---|---|---|---|---|---|",
                      "| " + " | ".join(_pct(c[k], k) for k in ("n_facts", "n_clusters", "relevance", "alignment",
                                                                  "ra_f1", "gold_n_facts", "gold_n_clusters")) + " |",
                      ""]
        if self.nlg:
            lines += ["## NLG", "", "| BLEU | ROUGE-L | Distinct-4 |", "|---|---|---|",
                      f"| {_pct(self.nlg['bleu'])} | {_pct(self.nlg['rouge_l'])} | {_pct(self.nlg['distinct_4'])} |", ""]
        if self.webnlg:
            lines += ["## WebNLG", "", "| Match | Precision | Recall | F1 |", "|---|---|---|---|"]
            for kind in ("exact", "partial", "strict"):
                s = self.webnlg[kind]
                lines.append(f"| {kind} | {_pct(s['precision'])} | {_pct(s['recall'])} | {_pct(s['f1'])} |")
            lines.append("")
        if self.novelty:
            lines += ["## Novelty", "", f"novel facts / context: {self.novelty['mean_novel_facts']:.2f}",
                      f"novel clusters / context: {self.novelty['mean_novel_clusters']:.2f}", ""]
        if self.knowledge_types:
            lines += ["## Knowledge types (%)", ""]
            lines += [f"- {k}: {v:.2f}" for k, v in self.knowledge_types.items() if k != "n_contexts"]
            lines.append("")
        return "\n".join(lines)


def _pct(value, key: str = "") -> str:
    if value is None:
        return "-"
    if key.startswith("n_") or key.startswith("gold_n_"):
        return f"{value:.2f}"
    return f"{100 * value:.2f}"


def evaluate_suite(gen_sets, gold_sets, contexts, cfgs: Sequence[SimilarityConfig] | SimilarityConfig,
                   thresholds: Sequence[float] | str | dict = "auto") -> MetricReport:
    """Cluster metrics per geometry, averaged over thresholds then contexts.

    ``thresholds`` may be a dict keyed by geometry name.
    """
    if isinstance(cfgs, SimilarityConfig):
        cfgs = [cfgs]
    report = MetricReport()
    for cfg in cfgs:
        th = thresholds.get(cfg.geometry, "auto") if isinstance(thresholds, dict) else thresholds
        report.geometries[cfg.geometry] = evaluate_geometry(gen_sets, gold_sets, contexts, cfg, th)
    return report


def novelty(gen_sets, reference_pool: Sequence[FactTriple], contexts, cfg: SimilarityConfig, eps: float,
            max_cosine: float = NOVEL_MAX_COSINE, min_relevance: float = NOVEL_MIN_RELEVANCE) -> dict:
    """Facts far from every reference (cosine below ``max_cosine``) yet relevant above ``min_relevance``."""
    if cfg.provider is None or cfg.scorer is None:
        raise ValueError("novelty needs an embedding provider and a relevance scorer")
    emb_cfg = SimilarityConfig("embedding", cfg.catalog, cfg.provider, cfg.scorer)
    pool = list(reference_pool)
    rows = []
    for cid, (gen, ctx) in enumerate(zip(gen_sets, contexts)):
        gen = list(gen)
        novel = []
        if gen:
            cos = _raw_cosines(gen, pool, emb_cfg)
            for k, best in zip(gen, cos):
                if best < max_cosine and cfg.scorer.score(k, ctx, cid) > min_relevance:
                    novel.append(k)
        n_clusters = cluster_facts(novel, emb_cfg, eps).n_clusters if novel else 0
        rows.append({"context_id": cid, "n_novel_facts": len(novel), "n_novel_clusters": n_clusters})
    return {"per_context": rows,
            "mean_novel_facts": float(np.mean([r["n_novel_facts"] for r in rows])) if rows else 0.0,
            "mean_novel_clusters": float(np.mean([r["n_novel_clusters"] for r in rows])) if rows else 0.0}


def _raw_cosines(gen, pool, cfg: SimilarityConfig) -> np.ndarray:
    """Max (unclipped) cosine of each generated fact to the pool; -inf for an empty pool."""
    if not pool:
        return np.full(len(gen), -np.inf)
    g = np.stack([cfg.provider.vector(k) for k in gen])
    p = np.stack([cfg.provider.vector(k) for k in pool])
    g = g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-300)
    p = p / np.maximum(np.linalg.norm(p, axis=1, keepdims=True), 1e-300)
    return (g @ p.T).max(axis=1)


def knowledge_type_proportions(gen_sets, catalog: RelationCatalog) -> dict:
    """Percent of generated facts per relation group, averaged over non-empty contexts."""
    per_context = []
    for gen in gen_sets:
        gen = list(gen)
        if not gen:
            continue
        counts = dict.fromkeys((*GROUPS, "other"), 0)
        for k in gen:
            group = catalog.group(k.relation) if k.relation in catalog else None
            counts[group or "other"] += 1
        per_context.append({g: 100.0 * c / len(gen) for g, c in counts.items()})
    keys = (*GROUPS, "other")
    out = {g: float(np.mean([p[g] for p in per_context])) if per_context else 0.0 for g in keys}
    out["n_contexts"] = len(per_context)
    return out
