"""Seq2seq response generation with beam search and anti-LM reranking.

Two responder instances are trained from the same code: a casual one on the
unfiltered corpus and a counseling one on the filtered corpus.  Decoding runs
a width-limited beam, and the finished candidates are reranked by
``log p(reply | message) - lambda * log p_lm(reply)`` so that generic
high-frequency replies lose to specific ones.

Vocabulary layout: embedding-table rows 0..K (0 = pad/unknown), then BOS at
K+1 and EOS at K+2.  PAD can never be emitted: its probability is forced to
zero and the distribution renormalised at every step.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .nn import (
    LstmCellParams,
    LstmState,
    TrainHistory,
    TrainSchedule,
    fit,
    load_checkpoint,
    save_checkpoint,
)
from .nn.lstm import lstm_backward, lstm_forward
from .nn.ops import log_softmax, softmax
from .text import PAD_INDEX, EmbeddingTable, IndexedSeq, TextCodec

logger = logging.getLogger(__name__)

ROLES = ("casual", "counseling", "lm")

# served when the user's message survives no cleaning step ("I am listening,
# please go on"); a live chat must always answer
FALLBACK_TEXT = "我在听，你可以继续说。"


@dataclass
class DecodeConfig:
    beam_width: int = 5
    max_len: int = 20
    mmi_lambda: float = 0.5
    min_len: int = 1

    def validate(self) -> None:
        if self.beam_width < 1:
            raise InvalidInputError("beam_width must be >= 1")
        if not (self.max_len >= self.min_len >= 1):
            raise InvalidInputError("require max_len >= min_len >= 1")
        if self.mmi_lambda < 0:
            raise InvalidInputError("mmi_lambda must be >= 0")


@dataclass
class ResponderConfig:
    role: str = "casual"
    hidden_units: int = 64
    squash: str = "sigmoid"
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    train_embeddings: bool = False
    clean_profile: str = "cjk"

    def validate(self) -> None:
        if self.role not in ROLES:
            raise InvalidInputError(f"role must be one of {ROLES}")
        if self.hidden_units < 1:
            raise InvalidInputError("hidden_units must be >= 1")


def _build_embedding(table: EmbeddingTable, rng: np.random.Generator) -> np.ndarray:
    """Table rows plus two fresh rows for BOS and EOS."""
    specials = rng.uniform(-0.05, 0.05, size=(2, table.dim))
    return np.concatenate([np.asarray(table.vectors, dtype=np.float64), specials], axis=0)


class _DecoderCore:
    """Shared trainable machinery of the conditional decoder and the LM."""

    def __init__(
        self,
        emb: np.ndarray,
        hidden_units: int,
        squash: str,
        rng: np.random.Generator,
        train_embeddings: bool = False,
    ):
        vocab, dim = emb.shape
        self.squash = squash
        self.train_embeddings = train_embeddings
        self.emb = np.array(emb, dtype=np.float64)
        self.dec = LstmCellParams.init(dim, hidden_units, rng)
        self.proj_w = rng.uniform(-0.05, 0.05, size=(hidden_units, vocab))
        self.proj_b = np.zeros(vocab)

    @property
    def vocab_size(self) -> int:
        return self.proj_w.shape[1]

    @property
    def hidden_units(self) -> int:
        return self.dec.hidden_dim

    def decoder_parameters(self) -> dict[str, np.ndarray]:
        params = dict(self.dec.tensors("dec."))
        params["proj_w"] = self.proj_w
        params["proj_b"] = self.proj_b
        if self.train_embeddings:
            params["emb"] = self.emb
        return params

    def masked_ce(self, hs: np.ndarray, targets: np.ndarray):
        """Mean NLL over non-pad targets plus the gradient on the logits."""
        B, T, _ = hs.shape
        logits = hs @ self.proj_w + self.proj_b
        logp = log_softmax(logits)
        mask = targets != PAD_INDEX
        n_tok = int(mask.sum())
        if n_tok == 0:
            raise InvalidInputError("batch contains no unmasked target tokens")
        picked = np.take_along_axis(logp, targets[:, :, None], axis=2)[:, :, 0]
        loss = float(-(picked * mask).sum() / n_tok)

        dlogits = softmax(logits)
        rows = np.arange(B)[:, None], np.arange(T)[None, :]
        dlogits[rows[0], rows[1], targets] -= 1.0
        dlogits *= mask[:, :, None] / n_tok
        return loss, logits, dlogits


class Seq2SeqNet(_DecoderCore):
    """Encoder-decoder with teacher forcing; decoder starts from the final
    encoder state."""

    def __init__(self, emb, hidden_units, squash, rng, train_embeddings=False):
        super().__init__(emb, hidden_units, squash, rng, train_embeddings)
        dim = emb.shape[1]
        self.enc = LstmCellParams.init(dim, hidden_units, rng)

    def parameters(self) -> dict[str, np.ndarray]:
        params = dict(self.enc.tensors("enc."))
        params.update(self.decoder_parameters())
        return params

    def checkpoint_meta(self) -> dict:
        return {
            "input_dim": self.emb.shape[1],
            "hidden_dims": [self.hidden_units],
            "activation_flag": self.squash,
        }

    def collate(self, pairs: Sequence[tuple[Sequence[int], Sequence[int]]]):
        bos, eos = self.vocab_size - 2, self.vocab_size - 1
        src_max = max(len(s) for s, _ in pairs)
        tgt_max = max(len(t) for _, t in pairs) + 1  # room for BOS/EOS
        B = len(pairs)
        X_src = np.zeros((B, src_max), dtype=np.int64)
        X_dec = np.zeros((B, tgt_max), dtype=np.int64)
        Y = np.zeros((B, tgt_max), dtype=np.int64)
        for k, (src, tgt) in enumerate(pairs):
            X_src[k, src_max - len(src):] = src          # pre-pad the source
            dec_in = [bos, *tgt]
            dec_tgt = [*tgt, eos]
            X_dec[k, : len(dec_in)] = dec_in             # post-pad the decoder
            Y[k, : len(dec_tgt)] = dec_tgt
        return X_src, X_dec, Y

    def _forward(self, X_src, X_dec):
        E_src = self.emb[X_src]
        # pad/unknown steps are masked out of the encoder state so batched
        # pre-padding and unpadded inference produce identical final states
        src_mask = (X_src != PAD_INDEX).astype(np.float64)
        _, enc_final, enc_cache = lstm_forward(E_src, self.enc, self.squash, mask=src_mask)
        E_dec = self.emb[X_dec]
        hs, _, dec_cache = lstm_forward(
            E_dec, self.dec, self.squash, h0=enc_final.h, c0=enc_final.c
        )
        return hs, enc_cache, dec_cache

    def batch_loss(self, batch) -> float:
        X_src, X_dec, Y = batch
        hs, _, _ = self._forward(X_src, X_dec)
        loss, _, _ = self.masked_ce(hs, Y)
        return loss

    def batch_loss_and_grads(self, batch):
        X_src, X_dec, Y = batch
        hs, enc_cache, dec_cache = self._forward(X_src, X_dec)
        loss, _, dlogits = self.masked_ce(hs, Y)

        grads: dict[str, np.ndarray] = {
            "proj_w": np.einsum("bth,btv->hv", hs, dlogits),
            "proj_b": dlogits.sum(axis=(0, 1)),
        }
        d_hs = dlogits @ self.proj_w.T
        dE_dec, dec_grads, dh0, dc0 = lstm_backward(dec_cache, d_hs)
        grads.update({f"dec.{k}": v for k, v in dec_grads.items()})

        d_hs_enc = np.zeros_like(enc_cache.hs)
        dE_src, enc_grads, _, _ = lstm_backward(
            enc_cache, d_hs_enc, d_h_final=dh0, d_c_final=dc0
        )
        grads.update({f"enc.{k}": v for k, v in enc_grads.items()})

        if self.train_embeddings:
            demb = np.zeros_like(self.emb)
            np.add.at(demb, X_src.ravel(), dE_src.reshape(-1, dE_src.shape[2]))
            np.add.at(demb, X_dec.ravel(), dE_dec.reshape(-1, dE_dec.shape[2]))
            grads["emb"] = demb
        return loss, grads


class LmNet(_DecoderCore):
    """Decoder-only language model over reply sequences."""

    def parameters(self) -> dict[str, np.ndarray]:
        return self.decoder_parameters()

    def checkpoint_meta(self) -> dict:
        return {
            "input_dim": self.emb.shape[1],
            "hidden_dims": [self.hidden_units],
            "activation_flag": self.squash,
        }

    def collate(self, sequences: Sequence[Sequence[int]]):
        bos, eos = self.vocab_size - 2, self.vocab_size - 1
        tgt_max = max(len(t) for t in sequences) + 1
        B = len(sequences)
        X_dec = np.zeros((B, tgt_max), dtype=np.int64)
        Y = np.zeros((B, tgt_max), dtype=np.int64)
        for k, t in enumerate(sequences):
            X_dec[k, : len(t) + 1] = [bos, *t]
            Y[k, : len(t) + 1] = [*t, eos]
        return X_dec, Y

    def batch_loss(self, batch) -> float:
        X_dec, Y = batch
        hs, _, _ = lstm_forward(self.emb[X_dec], self.dec, self.squash)
        loss, _, _ = self.masked_ce(hs, Y)
        return loss

    def batch_loss_and_grads(self, batch):
        X_dec, Y = batch
        hs, _, cache = lstm_forward(self.emb[X_dec], self.dec, self.squash)
        loss, _, dlogits = self.masked_ce(hs, Y)
        grads: dict[str, np.ndarray] = {
            "proj_w": np.einsum("bth,btv->hv", hs, dlogits),
            "proj_b": dlogits.sum(axis=(0, 1)),
        }
        d_hs = dlogits @ self.proj_w.T
        dE, dec_grads, _, _ = lstm_backward(cache, d_hs)
        grads.update({f"dec.{k}": v for k, v in dec_grads.items()})
        if self.train_embeddings:
            demb = np.zeros_like(self.emb)
            np.add.at(demb, X_dec.ravel(), dE.reshape(-1, dE.shape[2]))
            grads["emb"] = demb
        return loss, grads


@dataclass
class Seq2SeqModel:
    table: EmbeddingTable
    net: Seq2SeqNet
    role: str
    clean_profile: str = "cjk"

    @property
    def bos_id(self) -> int:
        return self.net.vocab_size - 2

    @property
    def eos_id(self) -> int:
        return self.net.vocab_size - 1

    def codec(self) -> TextCodec:
        return TextCodec(self.table, profile=self.clean_profile)


@dataclass
class LanguageModel:
    table: EmbeddingTable
    net: LmNet
    clean_profile: str = "cjk"

    @property
    def bos_id(self) -> int:
        return self.net.vocab_size - 2

    @property
    def eos_id(self) -> int:
        return self.net.vocab_size - 1


@dataclass
class BeamHypothesis:
    tokens: list[int]
    logprob: float
    state: LstmState
    finished: bool = False


def train_seq2seq(
    pairs: Sequence[tuple[str, str]],
    cfg: ResponderConfig,
    table: EmbeddingTable,
    val_pairs: Sequence[tuple[str, str]] | None = None,
    segmenter=None,
    checkpoint_dir: str | Path | None = None,
) -> tuple[Seq2SeqModel, TrainHistory]:
    """Teacher-forced training of p(reply | message) on (question, answer)
    text pairs."""
    cfg.validate()
    if len(pairs) == 0:
        raise InvalidInputError("train_seq2seq requires a nonempty corpus")
    codec = TextCodec(table, profile=cfg.clean_profile, segmenter=segmenter)

    def encode_pairs(raw):
        out = []
        for q, a in raw:
            src = codec.encode(q).indices
            tgt = codec.encode(a).indices
            if not src or not tgt:
                raise InvalidInputError(
                    f"pair empties after encoding: {(q, a)!r}; filter the corpus first"
                )
            out.append((src, tgt))
        return out

    train_set = encode_pairs(pairs)
    val_set = encode_pairs(val_pairs) if val_pairs else []
    rng = np.random.default_rng(cfg.schedule.rng_seed)
    net = Seq2SeqNet(
        _build_embedding(table, rng),
        cfg.hidden_units,
        cfg.squash,
        rng,
        train_embeddings=cfg.train_embeddings,
    )
    _, history = fit(net, train_set, val_set, cfg.schedule, checkpoint_dir=checkpoint_dir)
    return Seq2SeqModel(table=table, net=net, role=cfg.role, clean_profile=cfg.clean_profile), history


def train_lm(
    replies: Sequence[str],
    cfg: ResponderConfig,
    table: EmbeddingTable,
    val_replies: Sequence[str] | None = None,
    segmenter=None,
    checkpoint_dir: str | Path | None = None,
) -> tuple[LanguageModel, TrainHistory]:
    """Train the unconditional reply-side language model used for reranking."""
    cfg.validate()
    if len(replies) == 0:
        raise InvalidInputError("train_lm requires a nonempty corpus")
    codec = TextCodec(table, profile=cfg.clean_profile, segmenter=segmenter)

    def encode_all(raw):
        seqs = []
        for text in raw:
            ids = codec.encode(text).indices
            if not ids:
                raise InvalidInputError(f"reply empties after encoding: {text!r}")
            seqs.append(ids)
        return seqs

    train_set = encode_all(replies)
    val_set = encode_all(val_replies) if val_replies else []
    rng = np.random.default_rng(cfg.schedule.rng_seed)
    net = LmNet(
        _build_embedding(table, rng),
        cfg.hidden_units,
        cfg.squash,
        rng,
        train_embeddings=cfg.train_embeddings,
    )
    _, history = fit(net, train_set, val_set, cfg.schedule, checkpoint_dir=checkpoint_dir)
    return LanguageModel(table=table, net=net, clean_profile=cfg.clean_profile), history


def decode_step(
    model: Seq2SeqModel | LanguageModel, state: LstmState, prev_token: int
) -> tuple[np.ndarray, LstmState]:
    """Consume `prev_token` and return (next-token distribution, new state).

    PAD's probability is forced to zero and the rest renormalised.
    """
    net = model.net
    if not 0 <= prev_token < net.vocab_size:
        raise InvalidInputError(f"token id {prev_token} outside vocabulary")
    x = net.emb[prev_token]
    new_state = _cell_step_fast(x, state, net.dec, net.squash)
    logits = new_state.h @ net.proj_w + net.proj_b
    probs = softmax(logits)
    probs[PAD_INDEX] = 0.0
    total = probs.sum()
    if total <= 0.0:
        raise ConfigurationError("probability mass vanished after PAD masking")
    return probs / total, new_state


def _cell_step_fast(x, state, p, squash):
    # single-vector cell step without the per-call validation of the public op
    from .nn.lstm import _squash
    from .nn.ops import sigmoid

    i = sigmoid(x @ p.w_xi + state.h @ p.w_hi + state.c * p.w_ci + p.b_i)
    f = sigmoid(x @ p.w_xf + state.h @ p.w_hf + state.c * p.w_cf + p.b_f)
    g = _squash(squash, x @ p.w_xc + state.h @ p.w_hc + p.b_c)
    c = f * state.c + i * g
    o = sigmoid(x @ p.w_xo + state.h @ p.w_ho + c * p.w_co + p.b_o)
    return LstmState(o * _squash(squash, c), c)


def encode_source(model: Seq2SeqModel, src_ids: Sequence[int]) -> LstmState:
    """Run the encoder over the unpadded source and return its final state.

    Pad/unknown ids are dropped, mirroring the mask applied in training.
    """
    ids = [int(t) for t in src_ids if t != PAD_INDEX]
    if not ids:
        raise InvalidInputError("cannot encode an empty source")
    net = model.net
    xs = net.emb[np.asarray(ids, dtype=np.int64)][None, :, :]
    _, final, _ = lstm_forward(xs, net.enc, net.squash)
    return LstmState(final.h[0], final.c[0])


def _sort_key(entry: tuple[list[int], float]):
    tokens, logprob = entry
    return (-logprob, tokens)


def beam_search(
    model: Seq2SeqModel,
    src: IndexedSeq | Sequence[int],
    cfg: DecodeConfig | None = None,
) -> list[tuple[list[int], float]]:
    """Width-limited best-first decoding.

    Live hypotheses expand one token per step; emitting EOS moves a
    hypothesis to the finished pool, and the search stops once the pool holds
    `beam_width` hypotheses or `max_len` content tokens were emitted.  Any
    survivors are then closed with a scored EOS step, so every returned token
    list ends with EOS and its logprob is the sum of all its step
    log-probabilities.  Ties break toward smaller token ids, then shorter
    hypotheses.
    """
    cfg = cfg or DecodeConfig()
    cfg.validate()
    src_ids = src.indices if isinstance(src, IndexedSeq) else list(src)
    if len(src_ids) == 0:
        raise InvalidInputError("beam_search requires a nonempty source")
    eos = model.eos_id
    init = BeamHypothesis(tokens=[], logprob=0.0, state=encode_source(model, src_ids))
    live = [init]
    finished: list[BeamHypothesis] = []

    for step in range(1, cfg.max_len + 1):
        candidates: list[BeamHypothesis] = []
        for hyp in live:
            prev = hyp.tokens[-1] if hyp.tokens else model.bos_id
            probs, state = decode_step(model, hyp.state, prev)
            with np.errstate(divide="ignore"):
                logps = np.log(probs)
            # stable descending order resolves logprob ties toward smaller ids;
            # only the per-hypothesis top beam_width (plus EOS) can matter
            order = np.argsort(-logps, kind="stable")
            taken = 0
            eos_pending = cfg.min_len <= step
            for token in order:
                token = int(token)
                if probs[token] <= 0.0:
                    break
                is_eos = token == eos
                if is_eos and not eos_pending:
                    continue
                if not is_eos and taken >= cfg.beam_width:
                    continue
                candidates.append(
                    BeamHypothesis(
                        tokens=hyp.tokens + [token],
                        logprob=hyp.logprob + float(logps[token]),
                        state=state,
                        finished=is_eos,
                    )
                )
                if is_eos:
                    eos_pending = False
                else:
                    taken += 1
                if taken >= cfg.beam_width and not eos_pending:
                    break
        candidates.sort(key=lambda h: (-h.logprob, h.tokens))
        # only the global top beam_width survive the step: EOS ones join the
        # finished pool, the rest stay live
        live = []
        for cand in candidates[: cfg.beam_width]:
            if cand.finished:
                finished.append(cand)
            else:
                live.append(cand)
        if len(finished) >= cfg.beam_width or not live:
            break

    # close out survivors with a scored EOS step
    for hyp in live:
        prev = hyp.tokens[-1] if hyp.tokens else model.bos_id
        probs, _ = decode_step(model, hyp.state, prev)
        if probs[eos] > 0.0:
            finished.append(
                BeamHypothesis(
                    tokens=hyp.tokens + [eos],
                    logprob=hyp.logprob + float(np.log(probs[eos])),
                    state=hyp.state,
                    finished=True,
                )
            )

    results = [(h.tokens, h.logprob) for h in finished]
    results.sort(key=_sort_key)
    return results[: cfg.beam_width]


def lm_score(lm: LanguageModel, tokens: Sequence[int]) -> float:
    """Sum of stepwise log-probabilities of `tokens` under the reply LM,
    conditioning on BOS; the tokens are scored exactly as given."""
    if len(tokens) == 0:
        raise InvalidInputError("lm_score requires a nonempty token sequence")
    net = lm.net
    state = LstmState(np.zeros(net.hidden_units), np.zeros(net.hidden_units))
    prev = lm.bos_id
    total = 0.0
    for token in tokens:
        if not 0 < token < net.vocab_size:
            raise InvalidInputError(f"token id {token} not scoreable (PAD or out of range)")
        probs, state = decode_step(lm, state, prev)
        p = float(probs[token])
        if p <= 0.0:
            return float("-inf")
        total += float(np.log(p))
        prev = token
    return total


def mmi_rerank(
    nbest: Sequence[tuple[Sequence[int], float]],
    lm: LanguageModel | None,
    mmi_lambda: float,
) -> list[int]:
    """Pick argmax of ``logprob - lambda * lm_score(tokens)`` over the n-best
    list; with lambda = 0 (or no LM) the top beam candidate wins unchanged."""
    if len(nbest) == 0:
        raise InvalidInputError("mmi_rerank requires a nonempty candidate list")
    if lm is None or mmi_lambda == 0.0:
        return list(nbest[0][0])
    best_tokens: list[int] | None = None
    best_key = None
    for tokens, logprob in nbest:
        tokens = list(tokens)
        score = logprob - mmi_lambda * lm_score(lm, tokens)
        key = (-score, tokens)
        if best_key is None or key < best_key:
            best_key = key
            best_tokens = tokens
    return best_tokens


@dataclass
class GenerateResult:
    text: str
    tokens: list[int]
    fallback: bool
    nbest: list[tuple[list[int], float]]


def generate_detailed(
    model: Seq2SeqModel,
    lm: LanguageModel | None,
    src_text: str,
    cfg: DecodeConfig | None = None,
    codec: TextCodec | None = None,
) -> GenerateResult:
    cfg = cfg or DecodeConfig()
    codec = codec or model.codec()
    src = codec.encode(src_text)
    known = [t for t in src.indices if t != PAD_INDEX]
    if not known:
        return GenerateResult(text=FALLBACK_TEXT, tokens=[], fallback=True, nbest=[])
    nbest = beam_search(model, known, cfg)
    if not nbest:
        return GenerateResult(text=FALLBACK_TEXT, tokens=[], fallback=True, nbest=[])
    tokens = mmi_rerank(nbest, lm, cfg.mmi_lambda)
    content = [t for t in tokens if 0 < t <= model.table.size]
    text = codec.decode(content)
    if not text:
        return GenerateResult(text=FALLBACK_TEXT, tokens=tokens, fallback=True, nbest=nbest)
    return GenerateResult(text=text, tokens=tokens, fallback=False, nbest=nbest)


def generate(
    model: Seq2SeqModel,
    lm: LanguageModel | None,
    src_text: str,
    cfg: DecodeConfig | None = None,
    codec: TextCodec | None = None,
) -> str:
    """Full reply pipeline: clean, segment, index, beam-search, rerank,
    detokenize.  Deterministic for fixed models and config."""
    return generate_detailed(model, lm, src_text, cfg, codec).text


def _save_core(path, net, role, table, clean_profile):
    meta = net.checkpoint_meta()
    extra = {
        "model_kind": "responder",
        "role": role,
        "vocab_fingerprint": table.fingerprint(),
        "clean_profile": clean_profile,
        "train_embeddings": net.train_embeddings,
    }
    tensors = dict(net.parameters())
    if not net.train_embeddings:
        # frozen rows reload from the embeddings file; BOS/EOS rows are the
        # model's own and must be persisted
        tensors["emb_specials"] = net.emb[-2:]
    return save_checkpoint(
        path,
        input_dim=meta["input_dim"],
        hidden_dims=meta["hidden_dims"],
        activation_flag=meta["activation_flag"],
        tensors=tensors,
        extra=extra,
    )


def save_responder(model: Seq2SeqModel | LanguageModel, path: str | Path) -> Path:
    role = model.role if isinstance(model, Seq2SeqModel) else "lm"
    return _save_core(path, model.net, role, model.table, model.clean_profile)


def load_responder(path: str | Path, table: EmbeddingTable) -> Seq2SeqModel | LanguageModel:
    ck = load_checkpoint(path)
    if ck.extra.get("model_kind") != "responder":
        raise ConfigurationError(f"{path} is not a responder model file")
    if ck.extra["vocab_fingerprint"] != table.fingerprint():
        raise ConfigurationError(
            "embedding table does not match the one this model was trained with"
        )
    role = ck.extra["role"]
    rng = np.random.default_rng(0)
    emb = _build_embedding(table, rng)
    hidden = ck.hidden_dims[0]
    train_emb = bool(ck.extra.get("train_embeddings", False))
    if role == "lm":
        net: LmNet | Seq2SeqNet = LmNet(emb, hidden, ck.activation_flag, rng, train_emb)
    else:
        net = Seq2SeqNet(emb, hidden, ck.activation_flag, rng, train_emb)
    for name, arr in net.parameters().items():
        arr[...] = ck.tensors[name]
    if "emb_specials" in ck.tensors:
        net.emb[-2:] = ck.tensors["emb_specials"]
    profile = ck.extra.get("clean_profile", "cjk")
    if role == "lm":
        return LanguageModel(table=table, net=net, clean_profile=profile)
    return Seq2SeqModel(table=table, net=net, role=role, clean_profile=profile)
