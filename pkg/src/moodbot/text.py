"""Text cleansing, segmentation, embedding vocabulary, and length normalization.

All trainable models share this pipeline: clean the raw string, segment it
into words, map words to embedding-row indices (0 = pad/unknown), then pad or
truncate to a fixed length chosen to cover most of the training data.
"""
from __future__ import annotations

import hashlib
import logging
import math
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, ParseError

logger = logging.getLogger(__name__)

PAD_INDEX = 0  # shared pad/unknown row; its embedding vector is all-zero

# CJK Unified Ideographs: base block plus extensions A-F.
_CJK_RANGES = (
    (0x4E00, 0x9FFF),
    (0x3400, 0x4DBF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2B73F),
    (0x2B740, 0x2B81F),
    (0x2B820, 0x2CEAF),
    (0x2CEB0, 0x2EBEF),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def clean_text(raw: str, profile: str = "cjk") -> str:
    """Strip punctuation, Latin letters, digits, and everything else outside
    the CJK Unified Ideographs blocks; retained characters keep their order.

    ``profile="none"`` is a pass-through for non-CJK corpora.
    """
    if profile == "none":
        return raw
    if profile != "cjk":
        raise InvalidInputError(f"unknown cleansing profile: {profile!r}")
    out = []
    for ch in raw:
        if unicodedata.category(ch).startswith("P"):
            continue
        if _is_cjk(ch):
            out.append(ch)
    return "".join(out)


def segment(text: str, lexicon) -> list[str]:
    """Greedy longest-match segmentation, left to right.

    At each position the longest lexicon word starting there is taken; if no
    word starts there the single character becomes a token.  Concatenating
    the result reproduces the input exactly.
    """
    words = lexicon if isinstance(lexicon, (set, frozenset, dict)) else set(lexicon)
    max_len = max((len(w) for w in words), default=1)
    tokens: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        match = None
        for j in range(min(max_len, n - i), 0, -1):
            cand = text[i : i + j]
            if cand in words:
                match = cand
                break
        if match is None:
            match = text[i]
        tokens.append(match)
        i += len(match)
    return tokens


@dataclass
class EmbeddingTable:
    """Word vocabulary plus dense vectors; row 0 is the pad/unknown zero vector."""

    dim: int
    words: list[str]                 # words[k] sits at index k + 1
    vectors: np.ndarray              # (K + 1, dim), row 0 all-zero
    index: dict[str, int] = field(repr=False)
    cap: int = 100000

    @property
    def size(self) -> int:
        """Number of real words K (indices 1..K)."""
        return len(self.words)

    def lookup(self, word: str) -> int:
        return self.index.get(word, PAD_INDEX)

    def word_at(self, idx: int) -> str | None:
        if 1 <= idx <= self.size:
            return self.words[idx - 1]
        return None

    def fingerprint(self) -> str:
        """Stable digest of the vocabulary and vectors, stored in model files."""
        h = hashlib.sha256()
        h.update(str(self.dim).encode())
        for w in self.words:
            h.update(w.encode("utf-8"))
            h.update(b"\x00")
        h.update(np.ascontiguousarray(self.vectors, dtype=np.float64).tobytes())
        return h.hexdigest()

    @classmethod
    def from_entries(cls, entries: Sequence[tuple[str, Sequence[float]]], dim: int,
                     cap: int = 100000) -> "EmbeddingTable":
        words: list[str] = []
        vecs = [np.zeros(dim)]
        index: dict[str, int] = {}
        for word, vec in entries:
            if word in index or len(words) >= cap:
                continue
            words.append(word)
            index[word] = len(words)
            vecs.append(np.asarray(vec, dtype=np.float64))
        return cls(dim=dim, words=words, vectors=np.stack(vecs), index=index, cap=cap)

    @classmethod
    def random(cls, words: Sequence[str], dim: int, seed: int = 0,
               scale: float = 0.5) -> "EmbeddingTable":
        """Synthetic table with uniform(-scale, scale) vectors; for tests and demos."""
        rng = np.random.default_rng(seed)
        entries = [(w, rng.uniform(-scale, scale, size=dim)) for w in words]
        return cls.from_entries(entries, dim=dim, cap=max(len(words), 1))


def load_embeddings(path: str | Path, cap: int = 100000) -> EmbeddingTable:
    """Load a text embedding file: header "<word_count> <dim>" then one
    "<word> <d floats>" row per line.

    The first min(word_count, cap) distinct words are kept in file order
    (duplicates keep their first vector); index 0 is prepended for
    pad/unknown.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise ParseError(f"embedding header must be '<count> <dim>', got {header!r}", line=1)
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise ParseError(f"embedding header must be numeric: {header!r}", line=1) from exc
        if count < 0 or dim <= 0:
            raise ParseError("embedding header counts must be positive", line=1)

        words: list[str] = []
        vecs = [np.zeros(dim)]
        index: dict[str, int] = {}
        for row in range(count):
            line_no = row + 2
            line = fh.readline()
            if not line:
                raise ParseError(
                    f"embedding file ends after {row} rows, header declared {count}",
                    line=line_no,
                )
            if len(words) >= cap:
                break
            fields = line.rstrip("\n").split(" ")
            if len(fields) != dim + 1:
                raise ParseError(
                    f"expected a word and {dim} floats, got {len(fields)} fields",
                    line=line_no,
                )
            word = fields[0]
            try:
                vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric embedding value: {exc}", line=line_no) from exc
            if word in index:
                continue
            words.append(word)
            index[word] = len(words)
            vecs.append(vec)
    return EmbeddingTable(dim=dim, words=words, vectors=np.stack(vecs), index=index, cap=cap)


@dataclass(frozen=True)
class IndexedSeq:
    """A tokenised message as embedding-row indices, with its source text."""

    indices: tuple[int, ...]
    source_text: str = ""

    def __len__(self) -> int:
        return len(self.indices)


def tokens_to_indices(tokens: Iterable[str], table: EmbeddingTable,
                      source_text: str = "") -> IndexedSeq:
    """Map tokens to table rows; out-of-vocabulary tokens map to index 0."""
    return IndexedSeq(
        indices=tuple(table.lookup(t) for t in tokens),
        source_text=source_text,
    )


def compute_pad_length(dataset: Sequence[IndexedSeq | Sequence[int]],
                       coverage: float = 0.95) -> int:
    """Smallest L such that at least `coverage` of the dataset has length <= L."""
    if not 0.0 < coverage <= 1.0:
        raise InvalidInputError("coverage must be in (0, 1]")
    lengths = sorted(len(s) for s in dataset)
    if not lengths:
        raise InvalidInputError("compute_pad_length requires a nonempty dataset")
    n = len(lengths)
    # lengths[k-1] is the smallest L covering k sequences
    k = math.ceil(coverage * n)
    return lengths[max(k, 1) - 1]


def pad_truncate(seq: IndexedSeq, length: int) -> IndexedSeq:
    """Normalise to exactly `length` indices: zeros prepended when short,
    the last `length` indices kept when long (pre-padding / pre-truncation)."""
    if length < 1:
        raise InvalidInputError("pad length must be >= 1")
    idx = seq.indices
    if len(idx) == length:
        return seq
    if len(idx) > length:
        return replace(seq, indices=idx[-length:])
    return replace(seq, indices=(PAD_INDEX,) * (length - len(idx)) + idx)


@dataclass
class TextCodec:
    """Bundles the cleaning profile, segmenter, and vocabulary into one
    encode/decode surface.

    The default segmenter is greedy longest-match over the embedding
    vocabulary; pass any ``str -> list[str]`` callable to plug in another.
    """

    table: EmbeddingTable
    profile: str = "cjk"
    segmenter: Callable[[str], list[str]] | None = None

    def tokenize(self, text: str) -> list[str]:
        cleaned = clean_text(text, self.profile)
        if cleaned == "":
            return []
        if self.segmenter is not None:
            return self.segmenter(cleaned)
        return segment(cleaned, self.table.index)

    def encode(self, text: str) -> IndexedSeq:
        return tokens_to_indices(self.tokenize(text), self.table, source_text=text)

    def decode(self, indices: Iterable[int]) -> str:
        """Concatenate the words for the given indices; pad/unknown rows are skipped."""
        return "".join(
            w for w in (self.table.word_at(i) for i in indices) if w is not None
        )


def load_labeled_dataset(path: str | Path) -> list[tuple[int, str]]:
    """Read a labeled TSV file: one "<label 0|1>\\t<text>" example per line."""
    examples: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                label_str, text = line.split("\t", 1)
            except ValueError as exc:
                raise ParseError("expected '<label>\\t<text>'", line=line_no) from exc
            if label_str not in ("0", "1"):
                raise ParseError(f"label must be 0 or 1, got {label_str!r}", line=line_no)
            examples.append((int(label_str), text))
    return examples
