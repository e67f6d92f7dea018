"""Weakly supervised dense retrieval for retrieval-augmented QA."""

from wrag._core import (
    Bm25Index,
    Corpus,
    DataError,
    Error,
    InvalidArgument,
    MissingArtifact,
    NumericError,
    TransportError,
    bleu_1,
    containment_score,
    cosine_score,
    e2e,
    make_synthetic,
    mnr_loss,
    mock_generate,
    pairwise_loss,
    paired_t_test,
    qa_prompt,
    rouge_l,
    token_f1,
    tokenize,
)

__all__ = [
    "Bm25Index",
    "Corpus",
    "DataError",
    "Error",
    "InvalidArgument",
    "MissingArtifact",
    "NumericError",
    "TransportError",
    "bleu_1",
    "containment_score",
    "cosine_score",
    "e2e",
    "make_synthetic",
    "mnr_loss",
    "mock_generate",
    "pairwise_loss",
    "paired_t_test",
    "qa_prompt",
    "rouge_l",
    "token_f1",
    "tokenize",
]
