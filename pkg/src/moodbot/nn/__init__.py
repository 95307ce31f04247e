"""Dense numerical core: peephole LSTM, activations, BCE, Adam, training loop."""

from .adam import AdamState, adam_step
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .lstm import (
    LstmCellParams,
    LstmState,
    bilstm_forward,
    initial_state,
    lstm_backward,
    lstm_cell_step,
    lstm_forward,
)
from .ops import activation, bce_loss, clip_global_norm, sigmoid, softmax
from .training import (
    EpochRecord,
    TrainHistory,
    TrainSchedule,
    compute_gradients,
    fit,
)

__all__ = [
    "AdamState",
    "adam_step",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "LstmCellParams",
    "LstmState",
    "bilstm_forward",
    "initial_state",
    "lstm_backward",
    "lstm_cell_step",
    "lstm_forward",
    "activation",
    "bce_loss",
    "clip_global_norm",
    "sigmoid",
    "softmax",
    "EpochRecord",
    "TrainHistory",
    "TrainSchedule",
    "compute_gradients",
    "fit",
]
