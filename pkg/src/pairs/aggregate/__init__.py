"""Combining per-patch class scores into one prediction per image."""

from .gate import GateModel, constant_gate, gate_predict, gate_predict_batch, gate_train, gate_weights
from .mlp import MlpModel, init_mlp, mlp_forward, mlp_loss_and_grads, mlp_train
from .scores import ScoreTensor, load_scores, read_scores, write_scores
from .selection import (
    BeamStep,
    average_predict,
    beam_search_subsets,
    brute_force_best_subset,
    rank_patches,
    top_patches,
)

__all__ = [
    "BeamStep", "GateModel", "MlpModel", "ScoreTensor",
    "average_predict", "beam_search_subsets", "brute_force_best_subset",
    "constant_gate", "gate_predict", "gate_predict_batch", "gate_train", "gate_weights",
    "init_mlp", "load_scores", "mlp_forward", "mlp_loss_and_grads", "mlp_train",
    "rank_patches", "read_scores", "top_patches", "write_scores",
]
