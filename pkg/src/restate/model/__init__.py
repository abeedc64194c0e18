"""Numpy encoder-decoder with flag-conditioned cross-attention."""

from .nn import ShapeMismatch
from .training import (Adam, NonFiniteLoss, TrainingConfig, TrainingExample,
                       assemble_batch, build_model, example_from_record, train)
from .transformer import (CheckpointVersionMismatch, LengthOverflow,
                          ModelConfig, Seq2SeqModel, build_flag_matrix_batch,
                          cross_attention_flagged)

__all__ = [
    "Adam",
    "CheckpointVersionMismatch",
    "LengthOverflow",
    "ModelConfig",
    "NonFiniteLoss",
    "Seq2SeqModel",
    "ShapeMismatch",
    "TrainingConfig",
    "TrainingExample",
    "assemble_batch",
    "build_flag_matrix_batch",
    "build_model",
    "cross_attention_flagged",
    "example_from_record",
    "train",
]
