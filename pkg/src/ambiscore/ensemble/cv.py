"""Seeded k-fold cross-validation and exhaustive grid search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ..corpus import AnnotationStats
from ..metrics import acc_within_sd, spearman
from .model import EnsembleModel, fit

Learner = Callable[[np.ndarray, np.ndarray, Sequence[AnnotationStats] | None], EnsembleModel]

DEFAULT_SVR_GRID = {"C": [0.1, 1.0, 10.0], "epsilon": [0.05, 0.1, 0.2], "gamma": [0.1, 0.5, None]}
DEFAULT_GBT_GRID = {"n_trees": [50, 200], "max_depth": [2, 3], "learning_rate": [0.05, 0.1], "min_leaf": [5]}
DEFAULT_GRIDS = {"svr": DEFAULT_SVR_GRID, "gbt": DEFAULT_GBT_GRID}


class FoldError(RuntimeError):
    pass


def kfold_indices(n: int, k: int, seed: int = 0) -> list[np.ndarray]:
    """Shuffled folds; the first ``n % k`` folds get one extra row."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    sizes = [n // k + (1 if f < n % k else 0) for f in range(k)]
    bounds = np.cumsum([0] + sizes)
    return [np.sort(perm[bounds[f]:bounds[f + 1]]) for f in range(k)]


@dataclass
class CVResult:
    folds: list[dict]
    mean_spearman: float
    mean_acc: float | None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"folds": self.folds, "mean_spearman": self.mean_spearman, "mean_acc": self.mean_acc,
                "params": self.params}


def kfold_cv(learner: Learner, X, y, k: int = 5, seed: int = 0,
             sd: Sequence[AnnotationStats] | None = None, convention: str = "sample") -> CVResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    folds = kfold_indices(X.shape[0], k, seed)
    out = []
    for f, test in enumerate(folds):
        train = np.setdiff1d(np.arange(X.shape[0]), test)
        try:
            model = learner(X[train], y[train], [sd[i] for i in train] if sd is not None else None)
            pred = model.predict(X[test])
        except Exception as exc:
            raise FoldError(f"learner failed on fold {f}: {exc}") from exc
        row = {"fold": f, "n_test": int(test.shape[0]), "spearman": spearman(pred, y[test]), "acc_within_sd": None}
        if sd is not None:
            row["acc_within_sd"] = acc_within_sd(
                {str(i): float(p) for i, p in zip(test, pred)}, {str(i): sd[i] for i in test}, convention)
        out.append(row)
    accs = [r["acc_within_sd"] for r in out]
    return CVResult(
        folds=out,
        mean_spearman=float(np.mean([r["spearman"] for r in out])),
        mean_acc=None if sd is None else float(np.mean(accs)),
    )


def learner_for(kind: str, **params) -> Learner:
    return lambda X, y, sd=None: fit(kind, X, y, sd=sd, **params)


def grid_points(grid: Mapping[str, Sequence]) -> list[dict]:
    keys = sorted(grid)
    if not keys or any(len(grid[k]) == 0 for k in keys):
        raise ValueError("empty grid")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


@dataclass
class GridResult:
    best_params: dict
    best: CVResult
    table: list[CVResult]

    def to_dict(self) -> dict:
        return {"best_params": self.best_params, "best": self.best.to_dict(),
                "table": [r.to_dict() for r in self.table]}


def grid_search(kind: str, X, y, grid: Mapping[str, Sequence], k: int = 5, seed: int = 0,
                sd=None, convention: str = "sample") -> GridResult:
    """Pick the grid point with the highest mean CV Spearman (first wins ties)."""
    table = []
    for p in grid_points(grid):
        res = kfold_cv(learner_for(kind, **p), X, y, k, seed, sd, convention)
        res.params = p
        table.append(res)
    best = max(table, key=lambda r: r.mean_spearman)
    return GridResult(best.params, best, table)


def fit_gbt(X, y, grid: Mapping[str, Sequence] | None = None, k: int = 5, seed: int = 0,
            sd=None, columns: Sequence[str] = ()) -> tuple[EnsembleModel, GridResult]:
    """Grid-search boosting hyperparameters by CV Spearman, then refit on all rows."""
    gr = grid_search("gbt", X, y, grid or DEFAULT_GBT_GRID, k, seed, sd)
    model = fit("gbt", X, y, seed=seed, columns=columns,
                **{p: v for p, v in gr.best_params.items() if p != "seed"})
    return model, gr
