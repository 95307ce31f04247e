"""Binary text classifier: embedding -> Bi-LSTM -> LSTM -> sigmoid scalar.

The same architecture serves both tasks, distinguished only by training data
and the `task_tag`: sentiment polarity (1 = positive, 0 = negative) and
counseling relatedness (1 = related, 0 = casual).

The Bi-LSTM layer emits its full hidden sequence (both directions
concatenated per position); a second LSTM reads that sequence and its final
hidden state feeds a scalar sigmoid head.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .nn import (
    LstmCellParams,
    TrainHistory,
    TrainSchedule,
    bce_loss,
    fit,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
)
from .nn.lstm import lstm_backward, lstm_forward
from .nn.ops import BCE_EPS
from .text import EmbeddingTable, TextCodec, compute_pad_length, pad_truncate

logger = logging.getLogger(__name__)

TASK_TAGS = ("sentiment", "relatedness")


@dataclass
class ClassifierConfig:
    task_tag: str
    bilstm_units: int = 32
    lstm_units: int = 16
    decision_threshold: float = 0.5
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    pad_coverage: float = 0.95
    squash: str = "sigmoid"          # cell candidate/output activation
    freeze_embeddings: bool = True
    clean_profile: str = "cjk"

    def validate(self) -> None:
        if self.task_tag not in TASK_TAGS:
            raise InvalidInputError(f"task_tag must be one of {TASK_TAGS}")
        if self.bilstm_units < 1 or self.lstm_units < 1:
            raise InvalidInputError("unit counts must be >= 1")
        if not 0.0 < self.decision_threshold < 1.0:
            raise InvalidInputError("decision_threshold must be in (0, 1)")


class ClassifierNet:
    """Trainable parameters and forward/backward passes of the classifier."""

    def __init__(
        self,
        emb_matrix: np.ndarray,
        bilstm_units: int,
        lstm_units: int,
        squash: str,
        rng: np.random.Generator,
        train_embeddings: bool = False,
    ):
        dim = emb_matrix.shape[1]
        self.squash = squash
        self.train_embeddings = train_embeddings
        self.emb = np.array(emb_matrix, dtype=np.float64)
        self.fwd = LstmCellParams.init(dim, bilstm_units, rng)
        self.bwd = LstmCellParams.init(dim, bilstm_units, rng)
        self.top = LstmCellParams.init(2 * bilstm_units, lstm_units, rng)
        self.head_w = rng.uniform(-0.05, 0.05, size=lstm_units)
        self.head_b = np.zeros(1)

    @property
    def bilstm_units(self) -> int:
        return self.fwd.hidden_dim

    @property
    def lstm_units(self) -> int:
        return self.top.hidden_dim

    def parameters(self) -> dict[str, np.ndarray]:
        params = {}
        params.update(self.fwd.tensors("bi_fwd."))
        params.update(self.bwd.tensors("bi_bwd."))
        params.update(self.top.tensors("top."))
        params["head_w"] = self.head_w
        params["head_b"] = self.head_b
        if self.train_embeddings:
            params["emb"] = self.emb
        return params

    def checkpoint_meta(self) -> dict:
        return {
            "input_dim": self.emb.shape[1],
            "hidden_dims": [self.bilstm_units, self.lstm_units],
            "activation_flag": self.squash,
        }

    def collate(self, examples: Sequence[tuple[Sequence[int], int]]):
        X = np.array([list(idx) for idx, _ in examples], dtype=np.int64)
        y = np.array([label for _, label in examples], dtype=np.float64)
        return X, y

    def forward_scores(self, X: np.ndarray, want_caches: bool = False):
        E = self.emb[X]                                   # (B, L, D)
        hs_f, _, cache_f = lstm_forward(E, self.fwd, self.squash)
        hs_b_rev, _, cache_b = lstm_forward(E[:, ::-1, :], self.bwd, self.squash)
        H = np.concatenate([hs_f, hs_b_rev[:, ::-1, :]], axis=2)
        hs_t, final_t, cache_t = lstm_forward(H, self.top, self.squash)
        logits = final_t.h @ self.head_w + self.head_b[0]
        probs = sigmoid(logits)
        if want_caches:
            return probs, (X, E, cache_f, cache_b, cache_t, final_t.h, logits)
        return probs

    def batch_loss(self, batch) -> float:
        X, y = batch
        return bce_loss(self.forward_scores(X), y)

    def batch_loss_and_grads(self, batch):
        X, y = batch
        probs, (X, E, cache_f, cache_b, cache_t, h_last, _) = self.forward_scores(
            X, want_caches=True
        )
        loss = bce_loss(probs, y)
        B = X.shape[0]
        u = self.bilstm_units

        # clamped-BCE gradient through the sigmoid head; clamped entries have
        # zero slope, everything else gets the usual (p - y) shortcut
        active = (probs > BCE_EPS) & (probs < 1.0 - BCE_EPS)
        dlogit = np.where(active, probs - y, 0.0) / B

        grads: dict[str, np.ndarray] = {
            "head_w": h_last.T @ dlogit,
            "head_b": np.array([dlogit.sum()]),
        }
        dh_last = dlogit[:, None] * self.head_w[None, :]
        d_hs_top = np.zeros_like(cache_t.hs)
        dH, top_grads, _, _ = lstm_backward(cache_t, d_hs_top, d_h_final=dh_last)
        grads.update({f"top.{k}": v for k, v in top_grads.items()})

        dE_f, fwd_grads, _, _ = lstm_backward(cache_f, dH[:, :, :u])
        dE_b_rev, bwd_grads, _, _ = lstm_backward(cache_b, dH[:, ::-1, u:])
        grads.update({f"bi_fwd.{k}": v for k, v in fwd_grads.items()})
        grads.update({f"bi_bwd.{k}": v for k, v in bwd_grads.items()})

        if self.train_embeddings:
            dE = dE_f + dE_b_rev[:, ::-1, :]
            demb = np.zeros_like(self.emb)
            np.add.at(demb, X.ravel(), dE.reshape(-1, dE.shape[2]))
            grads["emb"] = demb
        return loss, grads


@dataclass
class Prediction:
    score: float
    label: int
    empty_after_clean: bool = False


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    accuracy: float

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "EvalReport":
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            logger.warning("no positive predictions; precision reported as 0")
            precision = 0.0
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            logger.warning("no positive labels; recall reported as 0")
            recall = 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        total = tp + fp + fn + tn
        accuracy = (tp + tn) / total if total else 0.0
        return cls(tp, fp, fn, tn, precision, recall, f1, accuracy)


@dataclass
class ClassifierModel:
    """A trained classifier plus everything needed to score raw text."""

    table: EmbeddingTable
    net: ClassifierNet
    pad_length: int
    task_tag: str
    threshold: float = 0.5
    clean_profile: str = "cjk"

    def codec(self) -> TextCodec:
        return TextCodec(self.table, profile=self.clean_profile)


def _encode_dataset(
    examples: Sequence[tuple[int, str]], codec: TextCodec
) -> list[tuple[int, "object"]]:
    return [(label, codec.encode(text)) for label, text in examples]


def train_classifier(
    train: Sequence[tuple[int, str]],
    val: Sequence[tuple[int, str]] | None,
    cfg: ClassifierConfig,
    table: EmbeddingTable,
    segmenter=None,
    checkpoint_dir: str | Path | None = None,
) -> tuple[ClassifierModel, TrainHistory]:
    """Train on (label, text) examples; the whole text pipeline is applied here.

    When `val` is None the last 10% of a seeded shuffle of `train` is held
    out for validation.
    """
    cfg.validate()
    labels = {label for label, _ in train}
    if labels != {0, 1}:
        raise InvalidInputError(
            f"training set must contain both labels, found {sorted(labels)}"
        )
    codec = TextCodec(table, profile=cfg.clean_profile, segmenter=segmenter)

    if val is None:
        rng = np.random.default_rng(cfg.schedule.rng_seed)
        order = rng.permutation(len(train))
        cut = max(1, int(round(len(train) * 0.1)))
        shuffled = [train[i] for i in order]
        train, val = shuffled[:-cut], shuffled[-cut:]
        if {label for label, _ in train} != {0, 1}:
            raise InvalidInputError("training split lost one of the labels; provide val explicitly")

    train_seqs = _encode_dataset(train, codec)
    val_seqs = _encode_dataset(val, codec)
    pad_length = compute_pad_length([s for _, s in train_seqs], cfg.pad_coverage)

    def to_example(label, seq):
        return (pad_truncate(seq, pad_length).indices, label)

    train_set = [to_example(label, s) for label, s in train_seqs]
    val_set = [to_example(label, s) for label, s in val_seqs]

    rng = np.random.default_rng(cfg.schedule.rng_seed)
    net = ClassifierNet(
        table.vectors,
        cfg.bilstm_units,
        cfg.lstm_units,
        cfg.squash,
        rng,
        train_embeddings=not cfg.freeze_embeddings,
    )
    _, history = fit(net, train_set, val_set, cfg.schedule, checkpoint_dir=checkpoint_dir)
    model = ClassifierModel(
        table=table,
        net=net,
        pad_length=pad_length,
        task_tag=cfg.task_tag,
        threshold=cfg.decision_threshold,
        clean_profile=cfg.clean_profile,
    )
    return model, history


def predict(model: ClassifierModel, text: str) -> Prediction:
    """Score one message; empty-after-cleaning input is scored on the all-pad
    sequence and flagged rather than rejected."""
    seq = model.codec().encode(text)
    empty = len(seq) == 0
    padded = pad_truncate(seq, model.pad_length)
    X = np.array([padded.indices], dtype=np.int64)
    score = float(model.net.forward_scores(X)[0])
    return Prediction(score=score, label=int(score >= model.threshold), empty_after_clean=empty)


def predict_score(model: ClassifierModel, text: str) -> float:
    return predict(model, text).score


def predict_label(model: ClassifierModel, text: str) -> int:
    return predict(model, text).label


def predict_scores(model: ClassifierModel, texts: Sequence[str]) -> np.ndarray:
    """Batched scoring used by the corpus filter."""
    if len(texts) == 0:
        return np.zeros(0)
    codec = model.codec()
    rows = [pad_truncate(codec.encode(t), model.pad_length).indices for t in texts]
    X = np.array(rows, dtype=np.int64)
    return model.net.forward_scores(X)


def evaluate(model: ClassifierModel, test: Sequence[tuple[int, str]]) -> EvalReport:
    if len(test) == 0:
        raise InvalidInputError("evaluate requires a nonempty test set")
    tp = fp = fn = tn = 0
    scores = predict_scores(model, [text for _, text in test])
    for (label, _), score in zip(test, scores):
        pred = int(score >= model.threshold)
        if pred == 1 and label == 1:
            tp += 1
        elif pred == 1 and label == 0:
            fp += 1
        elif pred == 0 and label == 1:
            fn += 1
        else:
            tn += 1
    return EvalReport.from_counts(tp, fp, fn, tn)


def save_classifier(model: ClassifierModel, path: str | Path) -> Path:
    """Write the model file: core checkpoint plus task metadata.

    The embedding matrix is stored only when it was trained; frozen tables
    are reloaded from the embeddings file and verified by fingerprint.
    """
    net = model.net
    tensors = dict(net.parameters())
    meta = net.checkpoint_meta()
    extra = {
        "model_kind": "classifier",
        "task_tag": model.task_tag,
        "pad_length": model.pad_length,
        "threshold": model.threshold,
        "vocab_fingerprint": model.table.fingerprint(),
        "clean_profile": model.clean_profile,
        "train_embeddings": net.train_embeddings,
    }
    return save_checkpoint(
        path,
        input_dim=meta["input_dim"],
        hidden_dims=meta["hidden_dims"],
        activation_flag=meta["activation_flag"],
        tensors=tensors,
        extra=extra,
    )


def load_classifier(path: str | Path, table: EmbeddingTable) -> ClassifierModel:
    ck = load_checkpoint(path)
    if ck.extra.get("model_kind") != "classifier":
        raise ConfigurationError(f"{path} is not a classifier model file")
    if ck.extra["vocab_fingerprint"] != table.fingerprint():
        raise ConfigurationError(
            "embedding table does not match the one this model was trained with"
        )
    bilstm_units, lstm_units = ck.hidden_dims
    rng = np.random.default_rng(0)
    net = ClassifierNet(
        table.vectors,
        bilstm_units,
        lstm_units,
        ck.activation_flag,
        rng,
        train_embeddings=bool(ck.extra.get("train_embeddings", False)),
    )
    params = net.parameters()
    for name, arr in params.items():
        if name == "emb" and "emb" not in ck.tensors:
            continue
        arr[...] = ck.tensors[name]
    return ClassifierModel(
        table=table,
        net=net,
        pad_length=int(ck.extra["pad_length"]),
        task_tag=ck.extra["task_tag"],
        threshold=float(ck.extra["threshold"]),
        clean_profile=ck.extra.get("clean_profile", "cjk"),
    )
