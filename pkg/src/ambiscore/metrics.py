"""Task metrics: Spearman against mean ratings and accuracy within one SD."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .corpus import AnnotationStats, StoryInstance

DEGENERATE_RANK_VARIANCE = "zero_rank_variance"

# slack on the SD boundary so 0.5 <= 0.5 survives float noise
_BOUNDARY_SLACK = 1e-12


class MetricsError(ValueError):
    pass


def spearman_detail(pred: Sequence[float], gold: Sequence[float]) -> tuple[float, bool]:
    """Return (rho, degenerate). Degenerate means one side has constant ranks."""
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gold, dtype=np.float64)
    if p.shape != g.shape or p.ndim != 1:
        raise MetricsError(f"length mismatch: {p.shape} vs {g.shape}")
    if p.shape[0] < 2:
        raise MetricsError("spearman needs at least two points")
    if not (np.isfinite(p).all() and np.isfinite(g).all()):
        raise MetricsError("non-finite values")
    rp = kernels.average_ranks(p)
    rg = kernels.average_ranks(g)
    rp -= rp.mean()
    rg -= rg.mean()
    sp = float(np.dot(rp, rp))
    sg = float(np.dot(rg, rg))
    if sp == 0.0 or sg == 0.0:
        return 0.0, True
    rho = float(np.dot(rp, rg)) / math.sqrt(sp * sg)
    return max(-1.0, min(1.0, rho)), False


def spearman(pred: Sequence[float], gold: Sequence[float]) -> float:
    return spearman_detail(pred, gold)[0]


def within_sd(pred: float, stats: AnnotationStats, convention: str = "sample") -> bool:
    sd = stats.std(convention)
    if sd == 0.0:
        return pred == stats.mean
    return abs(pred - stats.mean) <= sd + _BOUNDARY_SLACK


def acc_within_sd(preds: Mapping[str, float], stats: Mapping[str, AnnotationStats],
                  convention: str = "sample") -> float:
    if not preds:
        raise MetricsError("no predictions")
    hits = 0
    for key, p in preds.items():
        if key not in stats:
            raise MetricsError(f"no annotation stats for prediction {key!r}")
        hits += within_sd(p, stats[key], convention)
    return hits / len(preds)


@dataclass
class EvalReport:
    spearman: float
    acc_within_sd: float
    n_evaluated: int
    n_failed: int
    std_convention: str
    degenerate_flags: list[str] = field(default_factory=list)
    per_category: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spearman": self.spearman,
            "acc_within_sd": self.acc_within_sd,
            "n_evaluated": self.n_evaluated,
            "n_failed": self.n_failed,
            "std_convention": self.std_convention,
            "degenerate_flags": list(self.degenerate_flags),
            "per_category": self.per_category,
        }

    def to_text(self) -> str:
        lines = [
            f"{'metric':<22}{'value':>10}",
            f"{'spearman':<22}{self.spearman:>10.4f}",
            f"{'acc_within_sd':<22}{self.acc_within_sd:>10.4f}",
            f"{'n_evaluated':<22}{self.n_evaluated:>10d}",
            f"{'n_failed':<22}{self.n_failed:>10d}",
            f"{'std_convention':<22}{self.std_convention:>10}",
        ]
        if self.degenerate_flags:
            lines.append(f"degenerate: {', '.join(self.degenerate_flags)}")
        for cat, sub in sorted(self.per_category.items()):
            sp = "n/a" if sub["spearman"] is None else f"{sub['spearman']:.4f}"
            lines.append(f"  {cat:<20} n={sub['n']:<5d} sc={sp:<8} acc={sub['acc_within_sd']:.4f}")
        return "\n".join(lines) + "\n"


def _score_of(record) -> tuple[str, float | None]:
    if isinstance(record, Mapping):
        return record["instance_id"], (None if record.get("status") == "failed" else record.get("score"))
    return record.instance_id, (None if record.status == "failed" else record.score)


def evaluate_predictions(preds: Mapping[str, float], n_failed: int,
                         instances: Mapping[str, StoryInstance], convention: str = "sample",
                         categories: Mapping[str, object] | None = None) -> EvalReport:
    if not preds:
        raise MetricsError("zero evaluable records")
    stats = {}
    for iid in preds:
        inst = instances.get(iid)
        if inst is None:
            raise MetricsError(f"record references unknown instance {iid!r}")
        if not inst.labeled:
            raise MetricsError(f"instance {iid!r} has no annotations to evaluate against")
        stats[iid] = inst.stats()
    ids = list(preds)
    flags = []
    if len(ids) >= 2:
        rho, degenerate = spearman_detail([preds[i] for i in ids], [stats[i].mean for i in ids])
        if degenerate:
            flags.append(DEGENERATE_RANK_VARIANCE)
    else:
        rho = 0.0
        flags.append("single_instance")
    report = EvalReport(
        spearman=rho,
        acc_within_sd=acc_within_sd(preds, stats, convention),
        n_evaluated=len(ids),
        n_failed=n_failed,
        std_convention=convention,
        degenerate_flags=flags,
    )
    if categories:
        groups: dict[str, list[str]] = {}
        for i in ids:
            if i in categories:
                cat = categories[i]
                groups.setdefault(getattr(cat, "value", str(cat)), []).append(i)
        for cat, members in sorted(groups.items()):
            sub_rho = None
            if len(members) >= 2:
                r, deg = spearman_detail([preds[i] for i in members], [stats[i].mean for i in members])
                sub_rho = None if deg else r
            report.per_category[cat] = {
                "n": len(members),
                "spearman": sub_rho,
                "acc_within_sd": acc_within_sd({i: preds[i] for i in members}, stats, convention),
            }
    return report


def evaluate_run(run: Sequence, instances: Sequence[StoryInstance] | Mapping[str, StoryInstance],
                 convention: str = "sample", categories: Mapping[str, object] | None = None) -> EvalReport:
    """Join run records to gold annotations; failed records are counted, not scored."""
    by_id = instances if isinstance(instances, Mapping) else {i.id: i for i in instances}
    preds: dict[str, float] = {}
    n_failed = 0
    for rec in run:
        iid, score = _score_of(rec)
        if iid not in by_id:
            raise MetricsError(f"record references unknown instance {iid!r}")
        if score is None:
            n_failed += 1
            continue
        preds[iid] = float(score)
    return evaluate_predictions(preds, n_failed, by_id, convention, categories)


def residuals_csv(preds: Mapping[str, float], instances: Mapping[str, StoryInstance],
                  convention: str = "sample") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance_id", "pred", "gold_mean", "gold_std", "residual", "within_sd"])
    for iid in preds:
        st = instances[iid].stats()
        p = preds[iid]
        w.writerow([iid, f"{p:.6g}", f"{st.mean:.6g}", f"{st.std(convention):.6g}",
                    f"{p - st.mean:.6g}", int(within_sd(p, st, convention))])
    return buf.getvalue()
