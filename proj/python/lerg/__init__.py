"""Local explanations for conditional sequence generation."""

from ._lerg import (
    AdditiveToy,
    CallbackModel,
    Example,
    Generator,
    LergError,
    NgramModel,
    evaluate,
    exact_shapley,
    explain,
    explanation_svg,
    methods,
    oracle_check,
    read_corpus,
    synthetic_dialogues,
    top_k_segments,
)

__all__ = [
    "AdditiveToy",
    "CallbackModel",
    "Example",
    "Generator",
    "LergError",
    "NgramModel",
    "evaluate",
    "exact_shapley",
    "explain",
    "explanation_svg",
    "methods",
    "oracle_check",
    "read_corpus",
    "synthetic_dialogues",
    "top_k_segments",
]
