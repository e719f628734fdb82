"""Ranked result lists and unit-to-article score aggregation."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UsageError

AGGREGATES = ("max", "mean", "sum")

__all__ = ["AGGREGATES", "RankedList", "aggregate_to_articles"]


@dataclass(frozen=True)
class RankedList:
    """Articles ranked by score descending, ties broken by ascending id."""

    query_id: str
    entries: list[tuple[str, float]] = field(default_factory=list)

    def article_ids(self) -> list[str]:
        return [article_id for article_id, _ in self.entries]


def aggregate_to_articles(
    unit_scores: dict[str, float],
    unit_to_article: dict[str, str],
    k: int,
    query_id: str,
    aggregate: str = "max",
) -> RankedList:
    """Fold per-unit scores into a top-k article ranking.

    ``max`` keeps the best unit per article; ``mean``/``sum`` pool over the
    article's scored units.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    if aggregate not in AGGREGATES:
        raise UsageError(f"unknown aggregate '{aggregate}' (expected one of {list(AGGREGATES)})")
    grouped: dict[str, list[float]] = {}
    for unit_id, score in unit_scores.items():
        grouped.setdefault(unit_to_article[unit_id], []).append(score)
    article_scores: dict[str, float] = {}
    for article_id, scores in grouped.items():
        if aggregate == "max":
            article_scores[article_id] = max(scores)
        elif aggregate == "sum":
            article_scores[article_id] = sum(scores)
        else:
            article_scores[article_id] = sum(scores) / len(scores)
    ranked = sorted(article_scores.items(), key=lambda item: (-item[1], item[0]))
    return RankedList(query_id=query_id, entries=ranked[:k])
