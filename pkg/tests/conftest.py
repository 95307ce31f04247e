"""Shared toy world: vocabulary, datasets, and trained model files.

The fixtures build one complete miniature deployment per test session: an
embedding file, both classifiers, both responders, the reply LM, and a
config file pointing at all of them.  Everything is seeded, small, and
trains in a few seconds.
"""
from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np
import pytest

from moodbot.classifier import ClassifierConfig, save_classifier, train_classifier
from moodbot.nn import TrainSchedule
from moodbot.responder import ResponderConfig, save_responder, train_lm, train_seq2seq
from moodbot.text import load_embeddings

NEG_WORDS = list("愁哭苦痛丧烦")
POS_WORDS = list("乐喜笑棒妙安")
MENTAL_WORDS = list("心虑郁压眠焦")
FILLER_WORDS = list("天饭球书歌路水山茶花看走吃去来说")

ALL_WORDS = NEG_WORDS + POS_WORDS + MENTAL_WORDS + FILLER_WORDS


@dataclasses.dataclass
class ToyWorld:
    root: Path
    embeddings_path: Path
    table: object
    sentiment_path: Path
    relatedness_path: Path
    casual_path: Path
    counseling_path: Path
    lm_path: Path
    config_path: Path
    sentiment_train: list
    relatedness_train: list


def _write_embeddings(path: Path, dim: int = 12, seed: int = 0) -> None:
    rng = np.random.default_rng(seed)
    lines = [f"{len(ALL_WORDS)} {dim}"]
    for w in ALL_WORDS:
        vec = rng.uniform(-1.0, 1.0, size=dim)
        lines.append(w + " " + " ".join(f"{v:.6f}" for v in vec))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sentences(rng, n, positive_pool, negative_pool, hit_rate=0.5):
    """(label, text) pairs: label 1 unless a negative-pool word appears."""
    data = []
    for _ in range(n):
        length = int(rng.integers(3, 8))
        toks = list(rng.choice(FILLER_WORDS + positive_pool, size=length))
        label = 1
        if rng.random() < hit_rate:
            toks[int(rng.integers(0, length))] = str(rng.choice(negative_pool))
            label = 0
        data.append((label, "".join(toks)))
    return data


def _classifier_cfg(task, seed=0):
    return ClassifierConfig(
        task_tag=task,
        bilstm_units=8,
        lstm_units=8,
        squash="tanh",
        schedule=TrainSchedule(max_epochs=8, rng_seed=seed, initial_lr=0.01, batch_size=16),
    )


def _responder_cfg(role, seed=0):
    return ResponderConfig(
        role=role,
        hidden_units=16,
        squash="tanh",
        schedule=TrainSchedule(max_epochs=10, rng_seed=seed, initial_lr=0.01, batch_size=16),
    )


def make_toy_world(root: Path, seed: int = 0) -> ToyWorld:
    rng = np.random.default_rng(seed)
    emb_path = root / "embeddings.txt"
    _write_embeddings(emb_path, seed=seed)
    table = load_embeddings(emb_path)

    # sentiment: negative words flip the label to 0
    sentiment_train = _sentences(rng, 220, POS_WORDS, NEG_WORDS)
    sentiment_model, _ = train_classifier(
        sentiment_train, None, _classifier_cfg("sentiment", seed), table
    )
    sentiment_path = root / "sentiment.json"
    save_classifier(sentiment_model, sentiment_path)

    # relatedness: mental words mark label ... the convention here is
    # label 1 = counseling-related, so the "negative pool" is the marker
    relatedness_raw = _sentences(rng, 220, POS_WORDS, MENTAL_WORDS)
    relatedness_train = [(1 - label, text) for label, text in relatedness_raw]
    relatedness_model, _ = train_classifier(
        relatedness_train, None, _classifier_cfg("relatedness", seed + 1), table
    )
    relatedness_path = root / "relatedness.json"
    save_classifier(relatedness_model, relatedness_path)

    # responders: tiny echo-flavoured corpora
    def pairs_from(pool, n):
        out = []
        for _ in range(n):
            q = "".join(rng.choice(pool + FILLER_WORDS, size=int(rng.integers(2, 5))))
            a = "".join(rng.choice(pool + FILLER_WORDS, size=int(rng.integers(2, 5))))
            out.append((q, a))
        return out

    casual_model, _ = train_seq2seq(
        pairs_from(POS_WORDS, 150), _responder_cfg("casual", seed + 2), table
    )
    casual_path = root / "casual.json"
    save_responder(casual_model, casual_path)

    counseling_model, _ = train_seq2seq(
        pairs_from(MENTAL_WORDS + POS_WORDS, 150),
        _responder_cfg("counseling", seed + 3),
        table,
    )
    counseling_path = root / "counseling.json"
    save_responder(counseling_model, counseling_path)

    replies = ["".join(rng.choice(ALL_WORDS, size=int(rng.integers(2, 5)))) for _ in range(120)]
    lm, _ = train_lm(replies, _responder_cfg("lm", seed + 4), table)
    lm_path = root / "lm.json"
    save_responder(lm, lm_path)

    config_path = root / "moodbot.ini"
    config_path.write_text(
        f"""[models]
embeddings = {emb_path}
sentiment = {sentiment_path}
relatedness = {relatedness_path}
casual = {casual_path}
counseling = {counseling_path}
lm = {lm_path}

[store]
knowledge = {root / 'state' / 'knowledge.ndjson'}
sessions = {root / 'state' / 'sessions'}

[decode]
beam_width = 3
max_len = 8

[service]
host = 127.0.0.1
port = 8130
""",
        encoding="utf-8",
    )
    return ToyWorld(
        root=root,
        embeddings_path=emb_path,
        table=table,
        sentiment_path=sentiment_path,
        relatedness_path=relatedness_path,
        casual_path=casual_path,
        counseling_path=counseling_path,
        lm_path=lm_path,
        config_path=config_path,
        sentiment_train=sentiment_train,
        relatedness_train=relatedness_train,
    )


@pytest.fixture(scope="session")
def toy_world(tmp_path_factory) -> ToyWorld:
    return make_toy_world(tmp_path_factory.mktemp("toy_world"))


@pytest.fixture()
def toy_engine(toy_world, tmp_path):
    """Fresh engine over the session's models with an isolated store."""
    from moodbot.config import build_engine, load_config

    cfg = load_config(toy_world.config_path)
    cfg = dataclasses.replace(
        cfg,
        knowledge=tmp_path / "knowledge.ndjson",
        sessions=tmp_path / "sessions",
    )
    return build_engine(cfg)
