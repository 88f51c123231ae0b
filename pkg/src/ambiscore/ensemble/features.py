from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)


def _fields(rec) -> tuple[str, str | None, float | None]:
    if isinstance(rec, Mapping):
        return rec["instance_id"], rec.get("status"), rec.get("score")
    return rec.instance_id, rec.status, rec.score


@dataclass
class FeatureMatrix:
    values: np.ndarray
    row_ids: list[str]
    column_ids: list[str]
    dropped: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (len(self.row_ids), len(self.column_ids)):
            raise ValueError("feature matrix shape does not match its ids")
        if len(self.column_ids) < 2:
            raise ValueError("an ensemble needs at least two base-model columns")

    @classmethod
    def from_runs(cls, runs: Mapping[str, Sequence]) -> "FeatureMatrix":
        """Join run records on instance id; rows failed by any model are dropped.

        Row order follows the first appearance of each id across the runs.
        """
        cols = list(runs)
        scores: dict[str, dict[str, float]] = {c: {} for c in cols}
        order: dict[str, None] = {}
        for col in cols:
            for rec in runs[col]:
                iid, status, score = _fields(rec)
                order.setdefault(iid)
                if status != "failed" and score is not None:
                    scores[col][iid] = float(score)
        keep, dropped = [], {}
        for iid in order:
            missing = [c for c in cols if iid not in scores[c]]
            if missing:
                dropped[iid] = missing
            else:
                keep.append(iid)
        if dropped:
            log.warning("dropped %d instances missing a base-model score", len(dropped))
        values = np.array([[scores[c][i] for c in cols] for i in keep], dtype=np.float64)
        return cls(values.reshape(len(keep), len(cols)), keep, cols, dropped)
