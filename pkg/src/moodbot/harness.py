"""Response-quality ratio and sentiment-trajectory analytics.

Human annotators rate each generated response 0 (unqualified), 1 (regular),
or 2 (qualified); the quality index is the fraction rated regular or better,
computed in exact rational arithmetic.  The trajectory report buckets logged
sentiment scores into fixed time windows and emits per-window means as CSV
for external plotting.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

from .errors import InvalidInputError, ParseError

LABELS = (0, 1, 2)

DEFAULT_WINDOW_SECONDS = 2 * 24 * 3600  # two days


@dataclass
class RcheckReport:
    n_unqualified: int
    n_regular: int
    n_qualified: int
    total: int
    r_check: Fraction

    @property
    def fractions(self) -> tuple[Fraction, Fraction, Fraction]:
        t = self.total
        return (
            Fraction(self.n_unqualified, t),
            Fraction(self.n_regular, t),
            Fraction(self.n_qualified, t),
        )


def r_check(annotations: Sequence[int]) -> RcheckReport:
    """Fraction of responses rated regular-or-qualified, as an exact ratio."""
    if len(annotations) == 0:
        raise InvalidInputError("r_check requires a nonempty annotation set")
    counts = {label: 0 for label in LABELS}
    for a in annotations:
        if a not in counts:
            raise InvalidInputError(f"annotation {a!r} outside the 0/1/2 scheme")
        counts[a] += 1
    total = len(annotations)
    return RcheckReport(
        n_unqualified=counts[0],
        n_regular=counts[1],
        n_qualified=counts[2],
        total=total,
        r_check=Fraction(counts[1] + counts[2], total),
    )


def load_annotations(path: str | Path) -> list[int]:
    """Annotation file: one 0/1/2 label per line; blank lines ignored."""
    labels = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line not in ("0", "1", "2"):
                raise ParseError(f"label must be 0, 1, or 2, got {line!r}", line=line_no)
            labels.append(int(line))
    return labels


@dataclass
class TrajectoryRow:
    cohort: str
    window_index: int
    window_start: float
    mean_sentiment: float
    count: int


def sentiment_trajectory(
    records: Iterable[Mapping],
    window_seconds: float = DEFAULT_WINDOW_SECONDS,
    cohorts: Mapping[str, str] | None = None,
) -> list[TrajectoryRow]:
    """Arithmetic mean of sentiment scores per fixed time window.

    `records` need `timestamp` and `sentiment_score` fields (knowledge-store
    records qualify).  `cohorts` optionally maps session ids to cohort names;
    unmapped records land in "all".  Windows without data are omitted.
    """
    if window_seconds <= 0:
        raise InvalidInputError("window must be positive")
    records = list(records)
    if not records:
        return []
    t0 = min(float(r["timestamp"]) for r in records)
    buckets: dict[tuple[str, int], list[float]] = {}
    for r in records:
        cohort = "all"
        if cohorts:
            cohort = cohorts.get(str(r.get("session_id")), "all")
        idx = int((float(r["timestamp"]) - t0) // window_seconds)
        buckets.setdefault((cohort, idx), []).append(float(r["sentiment_score"]))
    rows = [
        TrajectoryRow(
            cohort=cohort,
            window_index=idx,
            window_start=t0 + idx * window_seconds,
            mean_sentiment=sum(scores) / len(scores),
            count=len(scores),
        )
        for (cohort, idx), scores in buckets.items()
    ]
    rows.sort(key=lambda r: (r.cohort, r.window_index))
    return rows


def trajectory_csv(rows: Sequence[TrajectoryRow], stream: TextIO) -> None:
    writer = csv.writer(stream)
    writer.writerow(["cohort", "window_index", "window_start_iso", "mean_sentiment", "count"])
    for row in rows:
        iso = datetime.fromtimestamp(row.window_start, tz=timezone.utc).isoformat()
        writer.writerow([row.cohort, row.window_index, iso, f"{row.mean_sentiment:.6f}", row.count])
