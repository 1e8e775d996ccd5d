"""Prompt-based text classification: templates, verbalizers, ensembles,
active few-shot sampling and evaluation, with pluggable scoring backends."""

from .corpus import (
    ConversationRecord,
    CorpusError,
    Dataset,
    LabelCatalog,
    LabelEntry,
    SplitAssignment,
    label_distribution,
    load_catalog,
    load_dataset,
    stratified_split,
)
from .ensembling import (
    GridSpec,
    ModelSpec,
    combine_distributions,
    expand_grid,
    predict_label,
    softmax_normalize,
)
from .evaluation import EvaluationReport, accuracy, confusion_matrix, evaluate_predictions, macro_f1
from .prompting import FilledPrompt, Template, TemplateError, parse_template, render_prompt
from .sampling import SamplingPlan, allocate_counts, sample_active, sample_random
from .scoring import (
    BackendConfig,
    BackendError,
    CandidateScores,
    TrainingPair,
    parse_index_response,
    tokenize,
    toy_fit,
)
from .verbalizing import LabelDistribution, Verbalizer, VerbalizerError, aggregate_scores

__version__ = "0.1.0"

__all__ = [
    "BackendConfig",
    "BackendError",
    "CandidateScores",
    "ConversationRecord",
    "CorpusError",
    "Dataset",
    "EvaluationReport",
    "FilledPrompt",
    "GridSpec",
    "LabelCatalog",
    "LabelDistribution",
    "LabelEntry",
    "ModelSpec",
    "SamplingPlan",
    "SplitAssignment",
    "Template",
    "TemplateError",
    "TrainingPair",
    "Verbalizer",
    "VerbalizerError",
    "accuracy",
    "aggregate_scores",
    "allocate_counts",
    "combine_distributions",
    "confusion_matrix",
    "evaluate_predictions",
    "expand_grid",
    "label_distribution",
    "load_catalog",
    "load_dataset",
    "macro_f1",
    "parse_index_response",
    "parse_template",
    "predict_label",
    "render_prompt",
    "sample_active",
    "sample_random",
    "softmax_normalize",
    "stratified_split",
    "tokenize",
    "toy_fit",
]
