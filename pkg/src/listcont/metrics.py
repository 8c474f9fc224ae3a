"""Ranking metrics for continuation quality: hit ratio and NDCG."""

from __future__ import annotations

import math
from collections.abc import Sequence

__all__ = ["hr_at_k", "ndcg_at_k"]


def hr_at_k(generated: Sequence[int], target: Sequence[int], k: int) -> float:
    """Fraction of the (capped) target recovered in the first ``k`` results.

    ``|set(generated[:k]) & set(target)| / min(k, len(target))``; the
    denominator cap keeps short targets from being unreachable when k exceeds
    them and long targets from being unreachable when k is small.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(target) == 0:
        raise ValueError("target is empty")
    hits = len(set(generated[:k]) & set(target))
    return hits / min(k, len(target))


def ndcg_at_k(generated: Sequence[int], target: Sequence[int], k: int) -> float:
    """Binary-relevance NDCG with the standard log2(position + 1) discount.

    DCG sums ``1 / log2(i + 2)`` over 0-based ranks ``i`` of generated items
    that appear in the target; the ideal DCG places ``min(k, len(target))``
    hits at the top ranks.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(target) == 0:
        raise ValueError("target is empty")
    wanted = set(target)
    dcg = sum(
        1.0 / math.log2(i + 2) for i, item in enumerate(generated[:k]) if item in wanted
    )
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(k, len(target))))
    return dcg / idcg
