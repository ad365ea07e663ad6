"""Plausibility-ranked distractor datasets, training records and generator evaluation for MCQs."""

from .bleu import sentence_bleu_smoothed, tokenize_13a, tokenize_intl
from .client import AuditLog, BackendConfig, ChatExchange, Client, EmbeddingVector, HttpTransport, ScriptedTransport
from .core import (
    DatasetSplit,
    Distractor,
    GroundTruthPair,
    Kind,
    McqItem,
    Origin,
    Polarity,
    derive_ground_truth_pairs,
    load_dataset,
)
from .discrimination import StudentResponseMatrix, discrimination_index, group_selection_counts
from .errors import DatasetError, ForgeError, ParseError, ProtocolError, TransportError
from .generation import GeneratorSource, PromptKind, generate_distractors, validity_rate
from .preference import (
    PreferenceRecord,
    Scheme,
    SftRecord,
    emit_generator_dpo,
    emit_generator_sft,
    emit_ranker_dpo,
    emit_ranker_sft,
)
from .prompts import RankerVariant, parse_ranker_output, render_ranker_prompt
from .ranker import PairJudgment, ProtocolConfig, consistency_metric, judge_pair, rank_accuracy, round_robin_rank
from .scd import RankedDistractorList, augment_distractors, build_ranked_list, check_distractor_validity
from .similarity import cosine, embedding_similarity_report, knn_retrieve
from .tournament import Setting, TournamentReport, plausibility_tournament, tournament_from_outputs

__all__ = [
    "AuditLog", "BackendConfig", "ChatExchange", "Client", "DatasetError", "DatasetSplit", "Distractor",
    "EmbeddingVector", "ForgeError", "GeneratorSource", "GroundTruthPair", "HttpTransport", "Kind", "McqItem",
    "Origin", "PairJudgment", "ParseError", "Polarity", "PreferenceRecord", "PromptKind", "ProtocolConfig",
    "ProtocolError", "RankedDistractorList", "RankerVariant", "Scheme", "ScriptedTransport", "Setting",
    "SftRecord", "StudentResponseMatrix", "TournamentReport", "TransportError", "augment_distractors",
    "build_ranked_list", "check_distractor_validity", "consistency_metric", "cosine", "derive_ground_truth_pairs",
    "discrimination_index", "embedding_similarity_report", "emit_generator_dpo", "emit_generator_sft",
    "emit_ranker_dpo", "emit_ranker_sft", "generate_distractors", "group_selection_counts", "judge_pair",
    "knn_retrieve", "load_dataset", "parse_ranker_output", "plausibility_tournament", "rank_accuracy",
    "render_ranker_prompt", "round_robin_rank", "sentence_bleu_smoothed", "tokenize_13a", "tokenize_intl",
    "tournament_from_outputs", "validity_rate",
]
