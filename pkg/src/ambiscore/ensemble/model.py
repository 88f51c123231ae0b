"""Fitted meta-learners over base-model score columns."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .._util import atomic_write_text, clamp_score, dump_json, round_half_away
from ..metrics import acc_within_sd, spearman
from ..corpus import AnnotationStats
from .gbt import fit_gbt_params, gbt_predict
from .svr import fit_svr_params, svr_decision
from .voting import equal_weights, majority_vote, perf_weights, weighted_average

KINDS = ("majority_vote", "equal_weight", "perf_weight", "linear", "svr", "gbt")


class EnsembleError(ValueError):
    pass


@dataclass
class EnsembleModel:
    kind: str
    params: dict = field(default_factory=dict)
    columns: list[str] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        """Real-valued predictions clamped to [1, 5]; vote rules yield integers."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise EnsembleError("expected a 2-D feature matrix")
        if self.columns and X.shape[1] != len(self.columns):
            raise EnsembleError(f"model expects {len(self.columns)} columns, got {X.shape[1]}")
        if self.kind == "majority_vote":
            out = [majority_vote([round_half_away(clamp_score(v)) for v in row], None) for row in X]
        elif self.kind in ("equal_weight", "perf_weight"):
            w = self.params["weights"]
            out = [weighted_average(row, w) for row in X]
        elif self.kind == "linear":
            out = X @ np.asarray(self.params["coef"]) + self.params["intercept"]
        elif self.kind == "svr":
            out = svr_decision(self.params, X)
        elif self.kind == "gbt":
            out = gbt_predict(self.params, X)
        else:
            raise EnsembleError(f"unknown ensemble kind {self.kind!r}")
        return np.clip(np.asarray(out, dtype=np.float64), 1.0, 5.0)

    def predict_int(self, X) -> list[int]:
        return [round_half_away(clamp_score(v)) for v in self.predict(X)]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "columns": list(self.columns), "params": self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleModel":
        if d.get("kind") not in KINDS:
            raise EnsembleError(f"unknown ensemble kind {d.get('kind')!r}")
        return cls(kind=d["kind"], params=d.get("params", {}), columns=list(d.get("columns", [])))

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, dump_json(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "EnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _check(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise EnsembleError(f"bad shapes X{X.shape} y{y.shape}")
    if X.shape[0] == 0:
        raise EnsembleError("no training rows")
    return X, y


def fit_linear(X, y, ridge: float = 1e-8, columns: Sequence[str] = ()) -> EnsembleModel:
    """OLS with intercept via ridge-stabilized normal equations (intercept unpenalized)."""
    X, y = _check(X, y)
    n, d = X.shape
    if n <= d:
        raise EnsembleError(f"need more rows than columns ({n} <= {d})")
    A = np.hstack([np.ones((n, 1)), X])
    gram = A.T @ A
    gram[np.arange(1, d + 1), np.arange(1, d + 1)] += ridge
    if not np.isfinite(gram).all() or np.linalg.cond(gram) > 1e15:
        raise EnsembleError("design matrix is rank-deficient beyond ridge rescue")
    beta = np.linalg.solve(gram, A.T @ y)
    return EnsembleModel("linear", {"intercept": float(beta[0]), "coef": beta[1:].tolist(), "ridge": ridge},
                         list(columns))


def fit_svr(X, y, C: float = 1.0, epsilon: float = 0.1, gamma: float | None = None,
            tol: float = 1e-3, columns: Sequence[str] = ()) -> EnsembleModel:
    X, y = _check(X, y)
    return EnsembleModel("svr", fit_svr_params(X, y, C, epsilon, gamma, tol), list(columns))


def fit_gbt_fixed(X, y, n_trees: int = 100, max_depth: int = 3, learning_rate: float = 0.1,
                  min_leaf: int = 5, seed: int = 0, columns: Sequence[str] = ()) -> EnsembleModel:
    X, y = _check(X, y)
    return EnsembleModel("gbt", fit_gbt_params(X, y, n_trees, max_depth, learning_rate, min_leaf, seed),
                         list(columns))


def fit_majority(X, y=None, columns: Sequence[str] = ()) -> EnsembleModel:
    X = np.asarray(X)
    return EnsembleModel("majority_vote", {"n_models": int(X.shape[1])}, list(columns))


def fit_equal_weight(X, y=None, columns: Sequence[str] = ()) -> EnsembleModel:
    X = np.asarray(X)
    return EnsembleModel("equal_weight", {"weights": equal_weights(X.shape[1])}, list(columns))


def column_metrics(X, y, metric: str = "spearman", sd: Sequence[AnnotationStats] | None = None) -> list[float]:
    X, y = _check(X, y)
    if metric == "spearman":
        return [spearman(X[:, j], y) for j in range(X.shape[1])]
    if metric == "accuracy":
        if sd is None:
            raise EnsembleError("accuracy-based weights need annotation stats")
        stats = {str(i): s for i, s in enumerate(sd)}
        return [acc_within_sd({str(i): float(v) for i, v in enumerate(X[:, j])}, stats) for j in range(X.shape[1])]
    raise EnsembleError(f"unknown weighting metric {metric!r}")


def fit_perf_weight(X, y, metric: str = "spearman", sd=None, columns: Sequence[str] = ()) -> EnsembleModel:
    m = column_metrics(X, y, metric, sd)
    return EnsembleModel("perf_weight", {"weights": perf_weights(m), "metric": metric, "column_metrics": m},
                         list(columns))


FITTERS = {
    "majority_vote": lambda X, y, sd=None, **p: fit_majority(X, y, **p),
    "equal_weight": lambda X, y, sd=None, **p: fit_equal_weight(X, y, **p),
    "perf_weight": lambda X, y, sd=None, **p: fit_perf_weight(X, y, sd=sd, **p),
    "linear": lambda X, y, sd=None, **p: fit_linear(X, y, **p),
    "svr": lambda X, y, sd=None, **p: fit_svr(X, y, **p),
    "gbt": lambda X, y, sd=None, **p: fit_gbt_fixed(X, y, **p),
}


def fit(kind: str, X, y, sd=None, **params) -> EnsembleModel:
    if kind not in FITTERS:
        raise EnsembleError(f"unknown ensemble kind {kind!r}")
    return FITTERS[kind](X, y, sd=sd, **params)
