"""INI configuration with environment overrides.

Example file:

    [models]
    embeddings = data/embeddings.txt
    sentiment = models/sentiment.json
    relatedness = models/relatedness.json
    casual = models/casual.json
    counseling = models/counseling.json
    lm = models/lm.json

    [routing]
    mental_threshold = 0.5
    sentiment_threshold = 0.5
    trend_window = 5
    trend_warmup = 5

    [decode]
    beam_width = 5
    max_len = 20
    mmi_lambda = 0.5

    [store]
    knowledge = state/knowledge.ndjson
    sessions = state/sessions

    [service]
    host = 127.0.0.1
    port = 8000

Any value can be overridden with MOODBOT_<SECTION>_<KEY>, e.g.
``MOODBOT_ROUTING_TREND_WINDOW=3``.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .dialogue import RoutingConfig
from .errors import ConfigurationError
from .responder import DecodeConfig

ENV_PREFIX = "MOODBOT"


@dataclass
class AppConfig:
    embeddings: Path
    sentiment: Path
    relatedness: Path
    casual: Path
    counseling: Path
    lm: Path | None
    knowledge: Path
    sessions: Path | None
    routing: RoutingConfig = field(default_factory=RoutingConfig)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    host: str = "127.0.0.1"
    port: int = 8000
    embedding_cap: int = 100000


def _value(parser, env, section, key, fallback=None):
    env_key = f"{ENV_PREFIX}_{section.upper()}_{key.upper()}"
    if env_key in env:
        return env[env_key]
    return parser.get(section, key, fallback=fallback)


def load_config(path: str | Path, env: Mapping[str, str] | None = None) -> AppConfig:
    env = dict(os.environ if env is None else env)
    parser = configparser.ConfigParser()
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigurationError(f"config file not found: {path}")
    base = Path(path).resolve().parent

    def path_of(section, key, required=True):
        raw = _value(parser, env, section, key)
        if raw is None:
            if required:
                raise ConfigurationError(f"config missing [{section}] {key}")
            return None
        p = Path(raw)
        return p if p.is_absolute() else base / p

    def floatv(section, key, fallback):
        return float(_value(parser, env, section, key, fallback=str(fallback)))

    def intv(section, key, fallback):
        return int(_value(parser, env, section, key, fallback=str(fallback)))

    routing = RoutingConfig(
        mental_threshold=floatv("routing", "mental_threshold", 0.5),
        sentiment_threshold=floatv("routing", "sentiment_threshold", 0.5),
        trend_window=intv("routing", "trend_window", 5),
        trend_warmup=intv("routing", "trend_warmup", 5),
    )
    decode = DecodeConfig(
        beam_width=intv("decode", "beam_width", 5),
        max_len=intv("decode", "max_len", 20),
        mmi_lambda=floatv("decode", "mmi_lambda", 0.5),
        min_len=intv("decode", "min_len", 1),
    )
    return AppConfig(
        embeddings=path_of("models", "embeddings"),
        sentiment=path_of("models", "sentiment"),
        relatedness=path_of("models", "relatedness"),
        casual=path_of("models", "casual"),
        counseling=path_of("models", "counseling"),
        lm=path_of("models", "lm", required=False),
        knowledge=path_of("store", "knowledge"),
        sessions=path_of("store", "sessions", required=False),
        routing=routing,
        decode=decode,
        host=_value(parser, env, "service", "host", fallback="127.0.0.1"),
        port=intv("service", "port", 8000),
        embedding_cap=intv("models", "embedding_cap", 100000),
    )


def build_engine(cfg: AppConfig):
    """Load every model named in the config and assemble a ChatEngine."""
    from .classifier import load_classifier
    from .dialogue import ChatEngine, KnowledgeStore, ModelBundle, SessionManager
    from .responder import LanguageModel, Seq2SeqModel, load_responder
    from .text import load_embeddings

    table = load_embeddings(cfg.embeddings, cap=cfg.embedding_cap)
    sentiment = load_classifier(cfg.sentiment, table)
    relatedness = load_classifier(cfg.relatedness, table)
    if sentiment.task_tag != "sentiment" or relatedness.task_tag != "relatedness":
        raise ConfigurationError("classifier model files have swapped task tags")
    casual = load_responder(cfg.casual, table)
    counseling = load_responder(cfg.counseling, table)
    if not isinstance(casual, Seq2SeqModel) or not isinstance(counseling, Seq2SeqModel):
        raise ConfigurationError("responder model files must hold seq2seq weights")
    lm = None
    if cfg.lm is not None:
        lm = load_responder(cfg.lm, table)
        if not isinstance(lm, LanguageModel):
            raise ConfigurationError(f"{cfg.lm} is not a language model file")
    bundle = ModelBundle(
        sentiment=sentiment,
        relatedness=relatedness,
        casual=casual,
        counseling=counseling,
        lm=lm,
        decode=cfg.decode,
    )
    store = KnowledgeStore(cfg.knowledge)
    sessions = SessionManager(state_dir=cfg.sessions)
    return ChatEngine(bundle, store, sessions=sessions, routing=cfg.routing)
