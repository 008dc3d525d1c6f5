"""Rating analytics: Likert distributions, round comparisons, latency stats.

Percentages are integer, rounded half away from zero per row with no
renormalization, so a column may legitimately sum to 99 or 101. The derived
shares (low = ratings 1-2, mid = rating 3, top = rating 5) are computed from
summed raw counts and then rounded, never from the already-rounded rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyEvaluation, ValidationError

RATING_VALUES = (1, 2, 3, 4, 5)


def percent_of(count: int, total: int) -> int:
    """Integer percent of count/total, rounding halves away from zero."""
    if total <= 0:
        raise ValidationError(f"total must be positive, got {total}")
    return (200 * count + total) // (2 * total)


@dataclass(frozen=True)
class LikertReport:
    label: str
    counts: dict[int, int]
    total: int
    percents: dict[int, int]
    low_share_percent: int  # ratings 1-2
    mid_share_percent: int  # rating 3
    top_share_percent: int  # rating 5

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "counts": {str(r): self.counts[r] for r in RATING_VALUES},
            "total": self.total,
            "percents": {str(r): self.percents[r] for r in RATING_VALUES},
            "low_share_percent": self.low_share_percent,
            "mid_share_percent": self.mid_share_percent,
            "top_share_percent": self.top_share_percent,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LikertReport":
        counts = {int(r): int(c) for r, c in obj["counts"].items()}
        return likert_report(obj["label"], [r for r in RATING_VALUES for _ in range(counts.get(r, 0))])


def likert_report(label: str, ratings: Sequence[int]) -> LikertReport:
    if not ratings:
        raise EmptyEvaluation("no ratings to report on")
    counts = {r: 0 for r in RATING_VALUES}
    for value in ratings:
        if not isinstance(value, int) or value not in counts:
            raise ValidationError(f"rating must be an integer in 1..5, got {value!r}")
        counts[value] += 1
    total = len(ratings)
    return LikertReport(
        label=label,
        counts=counts,
        total=total,
        percents={r: percent_of(counts[r], total) for r in RATING_VALUES},
        low_share_percent=percent_of(counts[1] + counts[2], total),
        mid_share_percent=percent_of(counts[3], total),
        top_share_percent=percent_of(counts[5], total),
    )


@dataclass(frozen=True)
class RoundComparison:
    label_a: str
    label_b: str
    low_share: tuple[int, int]
    mid_share: tuple[int, int]
    top_share: tuple[int, int]
    percent_deltas: dict[int, int]  # rating -> b minus a, in percentage points

    def to_dict(self) -> dict:
        return {
            "label_a": self.label_a,
            "label_b": self.label_b,
            "low_share": list(self.low_share),
            "mid_share": list(self.mid_share),
            "top_share": list(self.top_share),
            "percent_deltas": {str(r): self.percent_deltas[r] for r in RATING_VALUES},
        }


def compare_rounds(a: LikertReport, b: LikertReport) -> RoundComparison:
    return RoundComparison(
        label_a=a.label,
        label_b=b.label,
        low_share=(a.low_share_percent, b.low_share_percent),
        mid_share=(a.mid_share_percent, b.mid_share_percent),
        top_share=(a.top_share_percent, b.top_share_percent),
        percent_deltas={r: b.percents[r] - a.percents[r] for r in RATING_VALUES},
    )


@dataclass(frozen=True)
class LatencyStats:
    n: int
    mean_ms: float
    median_ms: float
    p95_ms: float


def latency_stats(records: Iterable) -> LatencyStats:
    """Mean, median, and nearest-rank p95 of latency_ms over records.

    Median uses the midpoint of the two central values for even n; p95 is
    the value at rank ceil(0.95 * n) in the sorted latencies.
    """
    values = sorted(float(rec.latency_ms) for rec in records)
    n = len(values)
    if n == 0:
        raise EmptyEvaluation("no records to compute latency stats over")
    if n % 2 == 1:
        median = values[n // 2]
    else:
        median = (values[n // 2 - 1] + values[n // 2]) / 2.0
    p95_rank = max(1, -(-19 * n // 20))  # ceil(0.95 n) without float error
    return LatencyStats(n=n, mean_ms=sum(values) / n, median_ms=median, p95_ms=values[p95_rank - 1])


# --- rating extraction ------------------------------------------------------


def load_ratings(source: str | Path, model_id: str | None = None) -> list[int]:
    """Collect current ratings from a feedback store file or an export JSONL.

    Detection is by content: sqlite databases start with a fixed magic
    string, anything else parses as the `export --all` JSON Lines format.
    """
    source = Path(source)
    with open(source, "rb") as fh:
        magic = fh.read(16)
    if magic.startswith(b"SQLite format 3"):
        from .feedback import FeedbackStore

        store = FeedbackStore(source)
        lines = store.export_all_jsonl()
    else:
        lines = source.read_text(encoding="utf-8").splitlines()
    ratings = []
    for line in lines:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if model_id is not None and obj.get("interaction", {}).get("model_id") != model_id:
            continue
        feedback = obj.get("feedback")
        if feedback is not None:
            ratings.append(int(feedback["rating"]))
    return ratings


# --- plain-text tables ------------------------------------------------------


def format_report_table(report: LikertReport) -> str:
    lines = [
        f"Likert ratings: {report.label}",
        "Rating | Responses | %",
        "-------+-----------+----",
    ]
    for r in RATING_VALUES:
        lines.append(f"{r:<6} | {report.counts[r]:>9} | {report.percents[r]:>2}%")
    lines.append("-------+-----------+----")
    lines.append(f"Total  | {report.total:>9} |")
    lines.append(
        f"Low (1-2): {report.low_share_percent}%   Mid (3): {report.mid_share_percent}%   "
        f"Top (5): {report.top_share_percent}%"
    )
    return "\n".join(lines)


def format_comparison_table(a: LikertReport, b: LikertReport) -> str:
    comparison = compare_rounds(a, b)
    width_a = max(len(a.label), len("Responses  %"))
    width_b = max(len(b.label), len("Responses  %"))
    lines = [
        f"Rating | {a.label:<{width_a}} | {b.label:<{width_b}}",
        f"       | {'Responses  %':<{width_a}} | {'Responses  %':<{width_b}}",
        f"-------+-{'-' * width_a}-+-{'-' * width_b}",
    ]
    for r in RATING_VALUES:
        cell_a = f"{a.counts[r]:>9} {a.percents[r]:>2}%"
        cell_b = f"{b.counts[r]:>9} {b.percents[r]:>2}%"
        lines.append(f"{r:<6} | {cell_a:<{width_a}} | {cell_b:<{width_b}}")
    lines.append(
        f"Low share {comparison.low_share[0]}% -> {comparison.low_share[1]}%, "
        f"mid {comparison.mid_share[0]}% -> {comparison.mid_share[1]}%, "
        f"top {comparison.top_share[0]}% -> {comparison.top_share[1]}%"
    )
    return "\n".join(lines)
