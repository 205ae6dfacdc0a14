"""Evaluation suite for generated fact sets."""

from .clustering import FactClustering, auto_threshold_range, cluster_facts, cluster_from_distances
from .nlg import distinct_n, nlg_scores, rouge_l, sentence_bleu
from .relevance import ClassifierScorer, PrecomputedScorer, RelevanceScorer, TokenOverlapScorer
from .scores import (MetricReport, alignment, evaluate_suite, knowledge_type_proportions, novelty, ra_f1,
                     relevance)
from .similarity import (EmbedderVectors, MissingVector, SimilarityConfig, VectorTable, distance_matrix,
                         edit_similarity, embedding_similarity, similarity, similarity_matrix)
from .webnlg import webnlg_scores

__all__ = [
    "ClassifierScorer", "EmbedderVectors", "FactClustering", "MetricReport", "MissingVector", "PrecomputedScorer",
    "RelevanceScorer", "SimilarityConfig", "TokenOverlapScorer", "VectorTable", "alignment",
    "auto_threshold_range", "cluster_facts", "cluster_from_distances", "distance_matrix", "distinct_n",
    "edit_similarity", "embedding_similarity", "evaluate_suite", "knowledge_type_proportions", "nlg_scores",
    "novelty", "ra_f1", "relevance", "rouge_l", "sentence_bleu", "similarity", "similarity_matrix",
    "webnlg_scores",
]
