"""Knowledge-graph embeddings with optional causal-weight modulation."""

from .scoring import (
    ModelKind,
    circular_convolution,
    circular_correlation,
    circular_correlation_naive,
    score_grad,
)
from .training import (
    Adam,
    EmbeddingState,
    TrainConfig,
    corrupt_indices,
    init_state,
    load_checkpoint,
    loss_and_grad,
    modulate,
    sample_negatives,
    save_checkpoint,
    score,
    train,
)

__all__ = [
    "Adam",
    "EmbeddingState",
    "ModelKind",
    "TrainConfig",
    "circular_convolution",
    "circular_correlation",
    "circular_correlation_naive",
    "corrupt_indices",
    "init_state",
    "load_checkpoint",
    "loss_and_grad",
    "modulate",
    "sample_negatives",
    "save_checkpoint",
    "score",
    "score_grad",
    "train",
]
