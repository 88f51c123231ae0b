from __future__ import annotations

import math
from collections import Counter
from typing import Sequence

from .._util import clamp_score, round_half_away


def majority_vote(scores: Sequence[int], n_models: int | None = 5) -> int:
    """Modal score; ties resolve to the rounded mean of the tied distinct scores."""
    if n_models is not None and len(scores) != n_models:
        raise ValueError(f"expected {n_models} scores, got {len(scores)}")
    if not scores:
        raise ValueError("no scores to vote on")
    for s in scores:
        if s not in (1, 2, 3, 4, 5):
            raise ValueError(f"score {s!r} outside 1..5")
    counts = Counter(int(s) for s in scores)
    top = max(counts.values())
    tied = sorted(s for s, c in counts.items() if c == top)
    return round_half_away(sum(tied) / len(tied))


def weighted_average(scores: Sequence[float], weights: Sequence[float]) -> int:
    if len(scores) != len(weights):
        raise ValueError(f"{len(scores)} scores but {len(weights)} weights")
    if abs(math.fsum(weights) - 1.0) > 1e-9:
        raise ValueError(f"weights sum to {math.fsum(weights)!r}, expected 1")
    return round_half_away(clamp_score(math.fsum(w * s for w, s in zip(weights, scores))))


def equal_weights(n: int) -> list[float]:
    return [1.0 / n] * n


def perf_weights(dev_metrics: Sequence[float]) -> list[float]:
    """Normalize per-model dev metrics (floored at 0) into weights."""
    if not dev_metrics:
        raise ValueError("no metrics")
    m = [max(0.0, float(x)) for x in dev_metrics]
    total = math.fsum(m)
    if total == 0.0:
        return equal_weights(len(m))
    return [x / total for x in m]
