"""Epsilon-SVR with an RBF kernel, trained by SMO on standardized features."""

from __future__ import annotations

import numpy as np

from .. import kernels


class ConvergenceError(RuntimeError):
    pass


def rbf_kernel(A: np.ndarray, B: np.ndarray, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def standardize_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return mean, scale


def _rho(a: np.ndarray, G: np.ndarray, C: float) -> float:
    n = a.shape[0] // 2
    y = np.concatenate((np.ones(n), -np.ones(n)))
    yG = y * G
    free = (a > 0) & (a < C)
    if free.any():
        return float(yG[free].mean())
    at_upper = a >= C
    ub_mask = (at_upper & (y < 0)) | (~at_upper & (y > 0))
    lb_mask = ~ub_mask
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def solve_svr(K: np.ndarray, y: np.ndarray, C: float, epsilon: float, tol: float = 1e-3,
              max_iter: int | None = None, backend: str | None = None) -> tuple[np.ndarray, float, int]:
    """Return (dual coefficients alpha - alpha*, bias, iterations) for a precomputed kernel."""
    if C <= 0 or epsilon < 0 or tol <= 0:
        raise ValueError("C and tol must be positive, epsilon non-negative")
    y = np.ascontiguousarray(y, dtype=np.float64)
    K = np.ascontiguousarray(K, dtype=np.float64)
    n = y.shape[0]
    if max_iter is None:
        max_iter = max(1_000_000, 200 * n)
    smo = kernels.IMPLEMENTATIONS[backend]["smo_svr"] if backend else kernels.smo_svr
    a, G, iters, converged = smo(K, y, float(C), float(epsilon), float(tol), int(max_iter))
    if not converged:
        gap = _violation(a, G, C)
        raise ConvergenceError(f"SMO stopped after {iters} iterations with KKT gap {gap:.3g} > {tol}")
    coef = a[:n] - a[n:]
    return coef, -_rho(a, G, C), int(iters)


def _violation(a, G, C) -> float:
    n = a.shape[0] // 2
    y = np.concatenate((np.ones(n), -np.ones(n)))
    yG = -y * G
    up = np.where(y > 0, a < C, a > 0)
    low = np.where(y > 0, a > 0, a < C)
    if not up.any() or not low.any():
        return 0.0
    return float(yG[up].max() - yG[low].min())


def fit_svr_params(X: np.ndarray, y: np.ndarray, C: float = 1.0, epsilon: float = 0.1,
                   gamma: float | None = None, tol: float = 1e-3, backend: str | None = None) -> dict:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mean, scale = standardize_stats(X)
    Z = (X - mean) / scale
    gamma = 1.0 / X.shape[1] if gamma is None else float(gamma)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    coef, b, iters = solve_svr(rbf_kernel(Z, Z, gamma), y, C, epsilon, tol, backend=backend)
    sv = np.flatnonzero(coef != 0.0)
    return {
        "C": float(C),
        "epsilon": float(epsilon),
        "gamma": gamma,
        "bias": b,
        "dual_coef": coef[sv].tolist(),
        "support_vectors": Z[sv].tolist(),
        "feature_mean": mean.tolist(),
        "feature_scale": scale.tolist(),
        "iterations": iters,
    }


def svr_decision(params: dict, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    Z = (X - np.asarray(params["feature_mean"])) / np.asarray(params["feature_scale"])
    sv = np.asarray(params["support_vectors"], dtype=np.float64)
    if sv.size == 0:
        return np.full(X.shape[0], params["bias"])
    return rbf_kernel(Z, sv.reshape(-1, Z.shape[1]), params["gamma"]) @ np.asarray(params["dual_coef"]) + params["bias"]
