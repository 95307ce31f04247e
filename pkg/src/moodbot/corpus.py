"""'.conv' conversation files and counseling-relatedness filtering.

Record format: a line starting with 'E' opens a conversation; the following
lines, until the next 'E', are utterances.  An optional leading "M " on an
utterance line is stripped on input and written back on output.

The filter streams: one conversation is resident at a time, utterances are
scored in bounded batches, and a conversation is retained whole as soon as
any utterance reaches the threshold.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence, TextIO

from .classifier import ClassifierModel, predict_scores
from .errors import InvalidInputError, ParseError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.7
SCORE_BINS = 10


@dataclass
class Conversation:
    utterances: list[str]
    source_line: int = 0

    def __post_init__(self):
        if not self.utterances:
            raise InvalidInputError("a conversation needs at least one utterance")


def parse_conv_file(stream: Iterable[str]) -> Iterator[Conversation]:
    """Yield conversations from '.conv' lines; empty records are skipped with
    a warning, content before the first 'E' is a parse error."""
    current: list[str] | None = None
    start_line = 0
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\n")
        if line.startswith("E"):
            if current is not None:
                if current:
                    yield Conversation(current, source_line=start_line)
                else:
                    logger.warning("skipping empty conversation at line %d", start_line)
            current = []
            start_line = line_no
            continue
        if not line.strip():
            continue
        if current is None:
            raise ParseError("utterance before the first 'E' record delimiter", line=line_no)
        current.append(line[2:] if line.startswith("M ") else line)
    if current is not None:
        if current:
            yield Conversation(current, source_line=start_line)
        else:
            logger.warning("skipping empty conversation at line %d", start_line)


def write_conv_file(convs: Iterable[Conversation | Sequence[str]], stream: TextIO) -> int:
    """Serialize conversations back to the record format; returns the count."""
    n = 0
    for conv in convs:
        utterances = conv.utterances if isinstance(conv, Conversation) else list(conv)
        stream.write("E\n")
        for utt in utterances:
            stream.write(f"M {utt}\n")
        n += 1
    return n


def conversations_to_pairs(convs: Iterable[Conversation]) -> list[tuple[str, str]]:
    """Pair consecutive utterances (1st/2nd, 3rd/4th, ...) as Q&A training
    pairs; a trailing unpaired utterance is dropped."""
    pairs = []
    for conv in convs:
        utts = conv.utterances
        for k in range(0, len(utts) - 1, 2):
            pairs.append((utts[k], utts[k + 1]))
    return pairs


@dataclass
class FilterReport:
    total_conversations: int = 0
    retained: int = 0
    dropped: int = 0
    threshold: float = DEFAULT_THRESHOLD
    score_histogram: list[int] = field(default_factory=lambda: [0] * SCORE_BINS)

    @property
    def retained_fraction(self) -> float | None:
        if self.total_conversations == 0:
            return None
        return self.retained / self.total_conversations

    def record_scores(self, scores: Iterable[float]) -> None:
        for s in scores:
            bin_idx = min(int(s * SCORE_BINS), SCORE_BINS - 1)
            self.score_histogram[bin_idx] += 1

    def to_json(self) -> str:
        return json.dumps(
            {
                "total_conversations": self.total_conversations,
                "retained": self.retained,
                "dropped": self.dropped,
                "retained_fraction": self.retained_fraction,
                "threshold": self.threshold,
                "score_histogram": self.score_histogram,
            },
            indent=2,
        )


ScoreFn = Callable[[Sequence[str]], Sequence[float]]


def model_score_fn(model: ClassifierModel) -> ScoreFn:
    if model.task_tag != "relatedness":
        raise InvalidInputError(
            f"corpus filtering needs a relatedness model, got task_tag={model.task_tag!r}"
        )
    return lambda texts: predict_scores(model, texts)


def iter_filter(
    convs: Iterable[Conversation],
    score_fn: ScoreFn,
    threshold: float = DEFAULT_THRESHOLD,
    report: FilterReport | None = None,
    batch_size: int = 64,
) -> Iterator[Conversation]:
    """Stream-filter conversations, yielding the retained ones unmodified.

    A conversation is retained iff any utterance scores >= threshold.  One
    conversation is resident at a time; its utterances are scored in chunks
    of `batch_size`.
    """
    if report is None:
        report = FilterReport(threshold=threshold)
    report.threshold = threshold
    for conv in convs:
        report.total_conversations += 1
        keep = False
        scores: list[float] = []
        for start in range(0, len(conv.utterances), batch_size):
            chunk = conv.utterances[start : start + batch_size]
            chunk_scores = [float(s) for s in score_fn(chunk)]
            scores.extend(chunk_scores)
            if any(s >= threshold for s in chunk_scores):
                keep = True
                # scoring continues so the histogram covers every utterance
        report.record_scores(scores)
        if keep:
            report.retained += 1
            yield conv
        else:
            report.dropped += 1


def filter_conversations(
    convs: Iterable[Conversation],
    model_or_score_fn: ClassifierModel | ScoreFn,
    threshold: float = DEFAULT_THRESHOLD,
    batch_size: int = 64,
) -> tuple[list[Conversation], FilterReport]:
    """Materialised variant of `iter_filter` returning (retained, report)."""
    if isinstance(model_or_score_fn, ClassifierModel):
        score_fn = model_score_fn(model_or_score_fn)
    else:
        score_fn = model_or_score_fn
    report = FilterReport(threshold=threshold)
    retained = list(iter_filter(convs, score_fn, threshold, report, batch_size))
    return retained, report


@dataclass
class CorpusStats:
    total: int
    related: int
    casual: int

    @property
    def related_fraction(self) -> float | None:
        return self.related / self.total if self.total else None

    @property
    def casual_fraction(self) -> float | None:
        return self.casual / self.total if self.total else None


def corpus_stats(related: int, casual: int) -> CorpusStats:
    """Proportion summary of a labeled or filtered corpus."""
    return CorpusStats(total=related + casual, related=related, casual=casual)
