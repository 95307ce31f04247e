"""Generic mini-batch training loop with early stopping and plateau LR decay.

A trainable model exposes four methods (see `TrainableModel`); `fit` owns
batching, shuffling, the optimizer, per-epoch checkpoints, and the stopping
rules:

* the learning rate is multiplied by `plateau_factor` after every epoch whose
  validation loss fails to improve on the best seen so far, floored at
  `min_lr` (no separate plateau patience);
* training stops after `early_stop_patience` consecutive non-improving
  epochs, or at `max_epochs`;
* the weights from the best-validation-loss epoch are restored before
  returning.

With an empty validation set both rules are disabled and the run goes the
full `max_epochs` at the initial learning rate.
"""
from __future__ import annotations

import logging
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from ..errors import InvalidInputError, NumericOverflowError
from .adam import AdamState, adam_step
from .checkpoint import save_checkpoint
from .ops import clip_global_norm

logger = logging.getLogger(__name__)


class TrainableModel(Protocol):
    """Contract `fit` relies on.

    `parameters()` must return the same array objects on every call; the
    optimizer updates them in place.
    """

    def parameters(self) -> dict[str, np.ndarray]: ...

    def collate(self, examples: Sequence[Any]) -> Any: ...

    def batch_loss(self, batch: Any) -> float: ...

    def batch_loss_and_grads(self, batch: Any) -> tuple[float, dict[str, np.ndarray]]: ...

    def checkpoint_meta(self) -> dict: ...


@dataclass
class TrainSchedule:
    """Knobs of the training loop (see module docstring for semantics)."""

    initial_lr: float = 0.001
    min_lr: float = 1e-5
    plateau_factor: float = 0.1
    early_stop_patience: int = 3
    max_epochs: int = 20
    rng_seed: int = 0
    batch_size: int = 32
    clip_norm: float | None = 5.0

    def validate(self) -> None:
        if not (0.0 < self.min_lr <= self.initial_lr):
            raise InvalidInputError("require 0 < min_lr <= initial_lr")
        if not (0.0 < self.plateau_factor < 1.0):
            raise InvalidInputError("require 0 < plateau_factor < 1")
        if self.early_stop_patience < 1:
            raise InvalidInputError("early_stop_patience must be >= 1")
        if self.max_epochs < 1:
            raise InvalidInputError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float | None
    lr: float
    checkpoint_path: str


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    stopped_early: bool = False

    def lrs(self) -> list[float]:
        return [r.lr for r in self.records]

    def val_losses(self) -> list[float | None]:
        return [r.val_loss for r in self.records]


def compute_gradients(model: TrainableModel, batch: Any) -> dict[str, np.ndarray]:
    """Gradient of the mean batch loss for every trainable parameter.

    Raises NumericOverflowError when the loss or any gradient is non-finite,
    naming the first offending tensor.
    """
    loss, grads = model.batch_loss_and_grads(batch)
    if not np.isfinite(loss):
        for name, arr in model.parameters().items():
            if not np.all(np.isfinite(arr)):
                raise NumericOverflowError("non-finite loss", tensor=name)
        raise NumericOverflowError("non-finite loss", tensor="loss")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError("non-finite gradient", tensor=name)
    return grads


def _batches(indices: np.ndarray, size: int):
    for start in range(0, len(indices), size):
        yield indices[start : start + size]


def _dataset_loss(model: TrainableModel, dataset: Sequence[Any], batch_size: int) -> float:
    total = 0.0
    count = 0
    for start in range(0, len(dataset), batch_size):
        chunk = dataset[start : start + batch_size]
        total += model.batch_loss(model.collate(chunk)) * len(chunk)
        count += len(chunk)
    return total / count


def fit(
    model: TrainableModel,
    train_set: Sequence[Any],
    val_set: Sequence[Any],
    schedule: TrainSchedule,
    checkpoint_dir: str | Path | None = None,
) -> tuple[TrainableModel, TrainHistory]:
    """Train `model` in place and return it with the epoch history.

    A checkpoint is written at the end of every epoch under
    `checkpoint_dir` (a temporary directory when not given).
    """
    schedule.validate()
    if len(train_set) == 0:
        raise InvalidInputError("fit requires a nonempty training set")
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else Path(tempfile.mkdtemp(prefix="moodbot_ckpt_"))
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(schedule.rng_seed)
    params = model.parameters()
    adam = AdamState.init(params)
    lr = schedule.initial_lr
    has_val = len(val_set) > 0

    history = TrainHistory()
    best_val = np.inf
    best_weights = {k: v.copy() for k, v in params.items()}
    best_epoch = None
    bad_streak = 0

    for epoch in range(1, schedule.max_epochs + 1):
        epoch_lr = lr
        order = rng.permutation(len(train_set))
        losses = []
        for batch_idx in _batches(order, schedule.batch_size):
            batch = model.collate([train_set[j] for j in batch_idx])
            loss, grads = model.batch_loss_and_grads(batch)
            if not np.isfinite(loss):
                compute_gradients(model, batch)  # raises with the tensor name
            if schedule.clip_norm is not None:
                clip_global_norm(grads, schedule.clip_norm)
            adam_step(params, grads, adam, epoch_lr)
            losses.append(loss)
        train_loss = float(np.mean(losses))
        val_loss = _dataset_loss(model, val_set, schedule.batch_size) if has_val else None

        ckpt_path = ckpt_dir / f"epoch_{epoch:03d}.json"
        meta = model.checkpoint_meta()
        save_checkpoint(
            ckpt_path,
            input_dim=meta["input_dim"],
            hidden_dims=meta["hidden_dims"],
            activation_flag=meta["activation_flag"],
            tensors=params,
            extra=meta.get("extra"),
        )
        history.records.append(
            EpochRecord(epoch, train_loss, val_loss, epoch_lr, str(ckpt_path))
        )
        logger.debug(
            "epoch %d: train_loss=%.6f val_loss=%s lr=%g", epoch, train_loss, val_loss, epoch_lr
        )

        if has_val:
            if val_loss < best_val:
                best_val = val_loss
                best_weights = {k: v.copy() for k, v in params.items()}
                best_epoch = epoch
                bad_streak = 0
            else:
                bad_streak += 1
                lr = max(lr * schedule.plateau_factor, schedule.min_lr)
                if bad_streak >= schedule.early_stop_patience:
                    history.stopped_early = True
                    break

    if has_val and best_epoch is not None:
        for k, v in params.items():
            v[...] = best_weights[k]
        history.best_epoch = best_epoch
    else:
        history.best_epoch = history.records[-1].epoch
    return model, history
