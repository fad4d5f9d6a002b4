"""Salience scoring for commonsense triples.

Probes a masked language model with per-predicate templates, scores
necessity and sufficiency as normalized PMI over span pseudo-likelihoods,
combines them into salience, and learns soft-prompt parameters plus the
mixing weight from annotated data. Ships the dataset tooling (splits, cue
audit, adversarial candidates, agreement and regression analyses) needed
to build and evaluate a benchmark.
"""

__version__ = "0.1.0"

from .core import (
    AnnotatedTriple,
    Dataset,
    Predicate,
    PredicateRegistry,
    SplitAssignment,
    Triple,
    load_dataset,
    validate_dataset,
    write_dataset,
)
from .scoring import ProbabilityBundle, ScoreConfig, ScoreTriple, combine_salience, npmi_score, score_batch
from .templates import HardTemplate, PromptLayout, RenderedInput, TemplateRegistry, render_variants
from .training import ModelArtifact, TrainConfig, loss_original, loss_simplified, train

__all__ = [
    "AnnotatedTriple",
    "Dataset",
    "HardTemplate",
    "ModelArtifact",
    "Predicate",
    "PredicateRegistry",
    "ProbabilityBundle",
    "PromptLayout",
    "RenderedInput",
    "ScoreConfig",
    "ScoreTriple",
    "SplitAssignment",
    "TemplateRegistry",
    "TrainConfig",
    "Triple",
    "combine_salience",
    "load_dataset",
    "loss_original",
    "loss_simplified",
    "npmi_score",
    "render_variants",
    "score_batch",
    "train",
    "validate_dataset",
    "write_dataset",
]
