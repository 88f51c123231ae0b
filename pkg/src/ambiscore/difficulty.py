"""Triage of labeled instances into ambiguous / human-easy-high / human-easy-low.

Instances whose annotators agree (std at or below ``agreement_std_max``) and
whose mean is high or low are human-easy; everything else, including agreed
mid-scale ratings such as five 3s, is ambiguous context.

The numeric thresholds are not published, so :func:`calibrate_thresholds`
recovers them by matching the known category sizes over a grid.
"""

from __future__ import annotations

import enum
import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._util import atomic_write_text, dump_json
from .corpus import AnnotationStats, StoryInstance, dataset_hash

# comparisons tolerate float noise in means such as 22/5
_EPS = 1e-9

# default calibration targets: category sizes (ambiguous, high, low) on the full train split
REFERENCE_TARGETS = (1088, 631, 561)


class DifficultyCategory(enum.Enum):
    AMBIGUOUS_CONTEXT = "ambiguous_context"
    HUMAN_EASY_HIGH = "human_easy_high"
    HUMAN_EASY_LOW = "human_easy_low"

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    DifficultyCategory.AMBIGUOUS_CONTEXT: "Ambiguous Context",
    DifficultyCategory.HUMAN_EASY_HIGH: "Human Easy - High Score",
    DifficultyCategory.HUMAN_EASY_LOW: "Human Easy - Low Score",
}

# order of the count tuples used throughout: (ambiguous, easy-high, easy-low)
CATEGORY_ORDER = (
    DifficultyCategory.AMBIGUOUS_CONTEXT,
    DifficultyCategory.HUMAN_EASY_HIGH,
    DifficultyCategory.HUMAN_EASY_LOW,
)


@dataclass(frozen=True)
class CategoryThresholds:
    agreement_std_max: float
    high_mean_min: float
    low_mean_max: float
    std_convention: str = "sample"

    def __post_init__(self):
        if self.std_convention not in ("sample", "population"):
            raise ValueError(f"unknown std convention {self.std_convention!r}")
        if self.agreement_std_max < 0:
            raise ValueError("agreement_std_max must be >= 0")
        if not self.low_mean_max < self.high_mean_min:
            raise ValueError("low_mean_max must be below high_mean_min")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryThresholds":
        return cls(
            agreement_std_max=float(d["agreement_std_max"]),
            high_mean_min=float(d["high_mean_min"]),
            low_mean_max=float(d["low_mean_max"]),
            std_convention=d.get("std_convention", "sample"),
        )


def categorize(stats: AnnotationStats, t: CategoryThresholds) -> DifficultyCategory:
    agree = stats.std(t.std_convention) <= t.agreement_std_max + _EPS
    if agree and stats.mean >= t.high_mean_min - _EPS:
        return DifficultyCategory.HUMAN_EASY_HIGH
    if agree and stats.mean <= t.low_mean_max + _EPS:
        return DifficultyCategory.HUMAN_EASY_LOW
    return DifficultyCategory.AMBIGUOUS_CONTEXT


def categorize_all(instances: Sequence[StoryInstance], t: CategoryThresholds) -> dict[str, DifficultyCategory]:
    out = {}
    for inst in instances:
        if not inst.labeled:
            raise ValueError(f"instance {inst.id} is unlabeled; categorization needs annotations")
        out[inst.id] = categorize(inst.stats(), t)
    return out


def category_counts(categories: dict[str, DifficultyCategory]) -> tuple[int, int, int]:
    vals = list(categories.values())
    return tuple(vals.count(c) for c in CATEGORY_ORDER)  # type: ignore[return-value]


def _axis(lo: float, hi: float, step: float) -> tuple[float, ...]:
    n = int(round((hi - lo) / step))
    return tuple(round(lo + k * step, 10) for k in range(n + 1))


@dataclass(frozen=True)
class GridSpec:
    agreement_std_max: tuple[float, ...] = field(default_factory=lambda: _axis(0.4, 1.6, 0.05))
    high_mean_min: tuple[float, ...] = field(default_factory=lambda: _axis(3.4, 4.6, 0.1))
    low_mean_max: tuple[float, ...] = field(default_factory=lambda: _axis(1.4, 2.6, 0.1))
    std_convention: tuple[str, ...] = ("sample", "population")

    def size(self) -> int:
        return (len(self.agreement_std_max) * len(self.high_mean_min)
                * len(self.low_mean_max) * len(self.std_convention))

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**{k: tuple(v) for k, v in d.items()})


@dataclass
class CalibrationResult:
    thresholds: CategoryThresholds
    counts: tuple[int, int, int]
    targets: tuple[int, int, int]
    l1_gap: int
    n_labeled: int
    n_candidates: int

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds.to_dict(),
            "counts": dict(zip([c.value for c in CATEGORY_ORDER], self.counts)),
            "targets": dict(zip([c.value for c in CATEGORY_ORDER], self.targets)),
            "l1_gap": self.l1_gap,
            "n_labeled": self.n_labeled,
            "n_candidates": self.n_candidates,
        }


def calibrate_thresholds(
    train: Sequence[StoryInstance],
    targets: tuple[int, int, int] = REFERENCE_TARGETS,
    grid: GridSpec | None = None,
) -> CalibrationResult:
    """Pick the grid point whose (ambiguous, high, low) counts are L1-closest to ``targets``.

    Ties go to the smaller agreement std, then smaller high-mean cut, then
    smaller low-mean cut, then sample before population convention.
    """
    grid = grid or GridSpec()
    if grid.size() == 0:
        raise ValueError("empty calibration grid")
    labeled = [i for i in train if i.labeled]
    if not labeled:
        raise ValueError("no labeled instances to calibrate on")
    stats = [i.stats() for i in labeled]
    means = np.array([s.mean for s in stats])
    stds = {
        "sample": np.array([s.std_sample for s in stats]),
        "population": np.array([s.std_population for s in stats]),
    }
    tgt = np.asarray(targets)
    n = len(labeled)
    conv_rank = {"sample": 0, "population": 1}
    best_key = None
    best = None
    hi_axis = np.asarray(grid.high_mean_min)
    lo_axis = np.asarray(grid.low_mean_max)
    for conv, s_max in itertools.product(grid.std_convention, grid.agreement_std_max):
        agree = stds[conv] <= s_max + _EPS
        m = means[agree]
        # count per cut of the agreed subset, broadcast over both mean axes
        n_high = (m[None, :] >= hi_axis[:, None] - _EPS).sum(axis=1)
        is_high = m[None, :] >= hi_axis[:, None] - _EPS
        is_low = m[None, :] <= lo_axis[:, None] + _EPS
        n_low = (is_low[None, :, :] & ~is_high[:, None, :]).sum(axis=2)
        for a, h in enumerate(grid.high_mean_min):
            for b, lo in enumerate(grid.low_mean_max):
                if not lo < h:
                    continue
                hi_c = int(n_high[a])
                lo_c = int(n_low[a, b])
                counts = (n - hi_c - lo_c, hi_c, lo_c)
                gap = int(np.abs(np.asarray(counts) - tgt).sum())
                key = (gap, s_max, h, lo, conv_rank[conv])
                if best_key is None or key < best_key:
                    best_key = key
                    best = (CategoryThresholds(s_max, h, lo, conv), counts, gap)
    if best is None:
        raise ValueError("no valid grid point (low_mean_max must be below high_mean_min)")
    thresholds, counts, gap = best
    return CalibrationResult(thresholds, counts, tuple(targets), gap, n, grid.size())


def save_thresholds(path: str | Path, result: CalibrationResult, train: Sequence[StoryInstance],
                    grid: GridSpec) -> None:
    doc = result.to_dict()
    doc["provenance"] = {"dataset_hash": dataset_hash(train), "grid": grid.to_dict()}
    atomic_write_text(path, dump_json(doc))


def load_thresholds(path: str | Path) -> CategoryThresholds:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return CategoryThresholds.from_dict(doc.get("thresholds", doc))
