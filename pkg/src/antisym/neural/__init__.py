"""Networks, optimiser, ansätze and training loop."""
from .ansatz import (
    ANSATZ_NAMES,
    BiLipschitzModel,
    PlainMLPModel,
    VandermondeModel,
    build_model,
    forward_h,
    forward_vandermonde_baseline,
    param_count,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .mlp import MLPParams, init_mlp, mlp_backward, mlp_forward
from .optim import AdamState, PlateauScheduler, adam_step
from .train import DivergenceError, TrainConfig, evaluate, train

__all__ = [
    "ANSATZ_NAMES", "AdamState", "BiLipschitzModel", "DivergenceError", "MLPParams",
    "PlainMLPModel", "PlateauScheduler", "TrainConfig", "VandermondeModel", "adam_step",
    "build_model", "evaluate", "forward_h", "forward_vandermonde_baseline", "init_mlp",
    "load_checkpoint", "mlp_backward", "mlp_forward", "param_count", "save_checkpoint", "train",
]
