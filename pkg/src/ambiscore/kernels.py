"""Hot numeric kernels with a numba path and a pure-numpy path.

Each kernel ``foo`` has ``foo_loop`` (scalar loops, compiled by numba when
available), ``foo_numpy`` (vectorized numpy) and a dispatching ``foo`` bound
according to :data:`ambiscore._accel.BACKEND`. The two paths implement the
same algorithm with the same tie-breaking, so results agree to rounding.
"""

from __future__ import annotations

import numpy as np

from ._accel import BACKEND, njit

TAU = 1e-12


# --------------------------------------------------------------------------
# average ranks (ties get the mean of the positions they span, 1-based)


def _average_ranks_loop(x):
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(n, dtype=np.float64)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and x[order[j + 1]] == x[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for t in range(i, j + 1):
            ranks[order[t]] = r
        i = j + 1
    return ranks


def average_ranks_numpy(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    edges = np.flatnonzero(np.concatenate(([True], xs[1:] != xs[:-1], [True])))
    starts, stops = edges[:-1], edges[1:]
    avg = 0.5 * (starts + stops - 1) + 1.0
    ranks = np.empty(n, dtype=np.float64)
    ranks[order] = np.repeat(avg, stops - starts)
    return ranks


average_ranks_loop = njit(_average_ranks_loop)


# --------------------------------------------------------------------------
# epsilon-SVR dual by SMO with second-order working-set selection
#
# Variables a[0:n] carry label +1 and linear term eps - z, a[n:2n] carry
# label -1 and linear term eps + z. Q[s, t] = y_s y_t K[s % n, t % n].
# Returns (a, G, iterations, converged).


def _smo_svr_loop(K, z, C, eps, tol, max_iter):
    n = z.shape[0]
    m = 2 * n
    a = np.zeros(m)
    G = np.empty(m)
    y = np.empty(m)
    for t in range(n):
        y[t] = 1.0
        y[t + n] = -1.0
        G[t] = eps - z[t]
        G[t + n] = eps + z[t]
    it = 0
    converged = False
    while it < max_iter:
        # i: maximal violator among I_up
        gmax = -np.inf
        i = -1
        for t in range(m):
            if y[t] > 0:
                if a[t] < C and -G[t] > gmax:
                    gmax = -G[t]
                    i = t
            else:
                if a[t] > 0 and G[t] > gmax:
                    gmax = G[t]
                    i = t
        if i < 0:
            converged = True
            break
        ii = i % n
        gmax2 = -np.inf
        obj_min = np.inf
        j = -1
        for t in range(m):
            tt = t % n
            if y[t] > 0:
                if a[t] > 0:
                    if G[t] > gmax2:
                        gmax2 = G[t]
                    diff = gmax + G[t]
                    if diff > 0:
                        quad = K[ii, ii] + K[tt, tt] - 2.0 * K[ii, tt]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj < obj_min:
                            obj_min = obj
                            j = t
            else:
                if a[t] < C:
                    if -G[t] > gmax2:
                        gmax2 = -G[t]
                    diff = gmax - G[t]
                    if diff > 0:
                        quad = K[ii, ii] + K[tt, tt] - 2.0 * K[ii, tt]
                        if quad <= 0:
                            quad = TAU
                        obj = -(diff * diff) / quad
                        if obj < obj_min:
                            obj_min = obj
                            j = t
        if gmax + gmax2 < tol or j < 0:
            converged = True
            break
        jj = j % n
        old_ai = a[i]
        old_aj = a[j]
        kij = y[i] * y[j] * K[ii, jj]
        if y[i] != y[j]:
            quad = K[ii, ii] + K[jj, jj] + 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            else:
                if a[j] > C:
                    a[j] = C
                    a[i] = C + diff
        else:
            quad = K[ii, ii] + K[jj, jj] - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            s = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if s > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = s - C
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = s
            if s > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = s - C
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = s
        dai = a[i] - old_ai
        daj = a[j] - old_aj
        for t in range(m):
            tt = t % n
            G[t] += y[t] * (y[i] * K[ii, tt] * dai + y[j] * K[jj, tt] * daj)
        it += 1
    return a, G, it, converged


def smo_svr_numpy(K, z, C, eps, tol, max_iter):
    K = np.asarray(K, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    n = z.shape[0]
    y = np.concatenate((np.ones(n), -np.ones(n)))
    a = np.zeros(2 * n)
    G = np.concatenate((eps - z, eps + z))
    diagK = np.diag(K)
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        yG = -y * G
        up = np.where(pos, a < C, a > 0)
        low = np.where(pos, a > 0, a < C)
        if not up.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, yG, -np.inf)))
        gmax = yG[i]
        gmax2 = np.max(np.where(low, -yG, -np.inf))
        ii = i % n
        krow = np.concatenate((K[ii], K[ii]))
        diff = gmax - yG
        quad = diagK[ii] + np.concatenate((diagK, diagK)) - 2.0 * krow
        quad = np.where(quad <= 0, TAU, quad)
        cand = low & (diff > 0)
        if gmax + gmax2 < tol or not cand.any():
            converged = True
            break
        obj = np.where(cand, -(diff * diff) / quad, np.inf)
        j = int(np.argmin(obj))
        jj = j % n
        old_ai, old_aj = a[i], a[j]
        kij = y[i] * y[j] * K[ii, jj]
        ai, aj = a[i], a[j]
        if y[i] != y[j]:
            q = K[ii, ii] + K[jj, jj] + 2.0 * kij
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            d = ai - aj
            ai += delta
            aj += delta
            if d > 0:
                if aj < 0:
                    aj, ai = 0.0, d
            elif ai < 0:
                ai, aj = 0.0, -d
            if d > 0:
                if ai > C:
                    ai, aj = C, C - d
            elif aj > C:
                aj, ai = C, C + d
        else:
            q = K[ii, ii] + K[jj, jj] - 2.0 * kij
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            s = ai + aj
            ai -= delta
            aj += delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        a[i], a[j] = ai, aj
        dai, daj = ai - old_ai, aj - old_aj
        kj = np.concatenate((K[jj], K[jj]))
        G += y * (y[i] * krow * dai + y[j] * kj * daj)
        it += 1
    return a, G, it, converged


smo_svr_loop = njit(_smo_svr_loop)


# --------------------------------------------------------------------------
# best least-squares split for one regression-tree node


def _best_split_loop(X, r, min_leaf, min_gain):
    m, d = X.shape
    total = 0.0
    for k in range(m):
        total += r[k]
    base = total * total / m
    best_gain = min_gain
    best_f = -1
    best_thr = 0.0
    for f in range(d):
        col = X[:, f].copy()
        order = np.argsort(col, kind="mergesort")
        sl = 0.0
        for k in range(m - 1):
            sl += r[order[k]]
            nl = k + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            lo = col[order[k]]
            hi = col[order[k + 1]]
            if lo == hi:
                continue
            sr = total - sl
            gain = sl * sl / nl + sr * sr / nr - base
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = 0.5 * (lo + hi)
    return best_f, best_thr, best_gain


def best_split_numpy(X, r, min_leaf, min_gain):
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    m, d = X.shape
    total = np.cumsum(r)[-1]
    base = total * total / m
    best_gain, best_f, best_thr = min_gain, -1, 0.0
    nl = np.arange(1, m, dtype=np.float64)
    nr = m - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    for f in range(d):
        order = np.argsort(X[:, f], kind="mergesort")
        xs = X[order, f]
        sl = np.cumsum(r[order])[:-1]
        sr = total - sl
        ok = size_ok & (xs[:-1] != xs[1:])
        if not ok.any():
            continue
        gain = np.where(ok, sl * sl / nl + sr * sr / nr - base, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best_gain:
            best_gain = float(gain[k])
            best_f = f
            best_thr = 0.5 * (xs[k] + xs[k + 1])
    return best_f, best_thr, best_gain


best_split_loop = njit(_best_split_loop)


# --------------------------------------------------------------------------
# forest inference: nodes of all trees in flat arrays, leaves have feature -1


def _predict_forest_loop(X, roots, feature, threshold, left, right, value):
    m = X.shape[0]
    out = np.zeros(m)
    for row in range(m):
        acc = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[row, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[row] = acc
    return out


def predict_forest_numpy(X, roots, feature, threshold, left, right, value):
    X = np.asarray(X, dtype=np.float64)
    m = X.shape[0]
    rows = np.arange(m)
    out = np.zeros(m)
    for root in roots:
        node = np.full(m, root, dtype=np.int64)
        inner = feature[node] >= 0
        while inner.any():
            f = feature[node]
            go_left = X[rows, np.where(inner, f, 0)] <= threshold[node]
            nxt = np.where(go_left, left[node], right[node])
            node = np.where(inner, nxt, node)
            inner = feature[node] >= 0
        out += value[node]
    return out


predict_forest_loop = njit(_predict_forest_loop)


if BACKEND == "numba":
    average_ranks = average_ranks_loop
    smo_svr = smo_svr_loop
    best_split = best_split_loop
    predict_forest = predict_forest_loop
else:
    average_ranks = average_ranks_numpy
    smo_svr = smo_svr_numpy
    best_split = best_split_numpy
    predict_forest = predict_forest_numpy

IMPLEMENTATIONS = {
    "numba": {
        "average_ranks": average_ranks_loop,
        "smo_svr": smo_svr_loop,
        "best_split": best_split_loop,
        "predict_forest": predict_forest_loop,
    },
    "numpy": {
        "average_ranks": average_ranks_numpy,
        "smo_svr": smo_svr_numpy,
        "best_split": best_split_numpy,
        "predict_forest": predict_forest_numpy,
    },
}
