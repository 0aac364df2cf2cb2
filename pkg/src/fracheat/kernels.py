"""O(M^2) inner loops, each in a numba flavour and a pure numpy flavour.

The public names dispatch on :data:`fracheat._accel.USE_NUMBA`.  The
``*_numba`` / ``*_numpy`` variants are exported for the equivalence tests and
``benchmarks/bench_kernels.py``.
"""

import numpy as np

from . import _accel
from ._accel import njit


# ---------------------------------------------------------------- Hölder scan

def _holder_scan_loops(values, times, gamma):
    n, d = values.shape
    best = 0.0
    for s in range(n - 1):
        for t in range(s + 1, n):
            acc = 0.0
            for k in range(d):
                diff = values[t, k] - values[s, k]
                acc += diff * diff
            r = np.sqrt(acc) / (times[t] - times[s]) ** gamma
            if r > best:
                best = r
    return best


holder_scan_numba = njit(_holder_scan_loops)


def holder_scan_numpy(values, times, gamma):
    best = 0.0
    for s in range(values.shape[0] - 1):
        inc = np.sqrt(np.sum((values[s + 1:] - values[s]) ** 2, axis=1))
        r = inc / (times[s + 1:] - times[s]) ** gamma
        best = max(best, float(r.max()))
    return best


def holder_scan(values, times, gamma):
    """``max_{s<t} |x_t - x_s| / (t - s)^gamma`` over all grid pairs."""
    values = np.ascontiguousarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    times = np.ascontiguousarray(times, dtype=float)
    if values.shape[0] < 2:
        return 0.0
    if _accel.USE_NUMBA:
        return float(holder_scan_numba(values, times, float(gamma)))
    return holder_scan_numpy(values, times, float(gamma))


# ------------------------------------------------------- field path norm scan

def _field_scan_loops(coeffs, weights, lam, dt, kappa):
    n, N = coeffs.shape
    decay = np.empty((n, N))
    for lag in range(n):
        for j in range(N):
            decay[lag, j] = np.exp(-lam[j] * lag * dt)
    c0 = 0.0
    for t in range(n):
        acc = 0.0
        for j in range(N):
            v = weights[j] * coeffs[t, j]
            acc += v * v
        c0 = max(c0, np.sqrt(acc))
    holder = 0.0
    hat = 0.0
    for s in range(n - 1):
        for t in range(s + 1, n):
            lag = t - s
            a = 0.0
            b = 0.0
            for j in range(N):
                u = coeffs[t, j] - coeffs[s, j]
                w = coeffs[t, j] - decay[lag, j] * coeffs[s, j]
                a += (weights[j] * u) ** 2
                b += (weights[j] * w) ** 2
            scale = (lag * dt) ** kappa
            ra = np.sqrt(a) / scale
            rb = np.sqrt(b) / scale
            if ra > holder:
                holder = ra
            if rb > hat:
                hat = rb
    return c0, holder, hat


field_scan_numba = njit(_field_scan_loops)


def field_scan_numpy(coeffs, weights, lam, dt, kappa):
    n = coeffs.shape[0]
    wc = coeffs * weights
    c0 = float(np.sqrt((wc**2).sum(axis=1)).max())
    holder = 0.0
    hat = 0.0
    lags = np.arange(1, n)
    decay = np.exp(-np.outer(lags * dt, lam))
    scale = (lags * dt) ** kappa
    for s in range(n - 1):
        m = n - 1 - s
        inc = wc[s + 1:] - wc[s]
        hinc = wc[s + 1:] - decay[:m] * wc[s]
        holder = max(holder, float((np.sqrt((inc**2).sum(axis=1)) / scale[:m]).max()))
        hat = max(hat, float((np.sqrt((hinc**2).sum(axis=1)) / scale[:m]).max()))
    return c0, holder, hat


def field_scan(coeffs, weights, lam, dt, kappa):
    """Sup, Hölder and hat-Hölder seminorms of a path on a uniform grid.

    ``coeffs`` is ``(n_times, N)``; ``weights`` are the Sobolev weights
    ``lambda_n^alpha``; ``lam`` the eigenvalues driving ``S_{t-s}``.
    """
    coeffs = np.ascontiguousarray(coeffs, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    lam = np.ascontiguousarray(lam, dtype=float)
    if coeffs.shape[0] < 2:
        c0 = float(np.linalg.norm(coeffs[0] * weights)) if coeffs.shape[0] else 0.0
        return c0, 0.0, 0.0
    if _accel.USE_NUMBA:
        out = field_scan_numba(coeffs, weights, lam, float(dt), float(kappa))
        return tuple(float(v) for v in out)
    return field_scan_numpy(coeffs, weights, lam, float(dt), float(kappa))


# --------------------------------------------- linear flows from every source

def _flows_loops(decay, A, B, fprime, dx, start, sources):
    # fprime: (M, d, n_nodes) coefficient values f_j'(y_m) at the nodes
    # start:  (n_src, d, N) initial fields at each source time
    M, d, n_nodes = fprime.shape
    N = decay.shape[0]
    n_src = sources.shape[0]
    out = np.empty((n_src, d, N))
    nodes = np.empty(n_nodes)
    tmp = np.empty(n_nodes)
    inc = np.empty(N)
    for q in range(n_src):
        k0 = sources[q]
        for i in range(d):
            v = start[q, i].copy()
            for m in range(k0, M):
                for a in range(n_nodes):
                    acc = 0.0
                    for b in range(N):
                        acc += A[a, b] * v[b]
                    nodes[a] = acc
                for b in range(N):
                    inc[b] = 0.0
                for j in range(d):
                    h = dx[m, j]
                    if h == 0.0:
                        continue
                    for a in range(n_nodes):
                        tmp[a] = fprime[m, j, a] * nodes[a] * h
                    for b in range(N):
                        acc = 0.0
                        for a in range(n_nodes):
                            acc += B[b, a] * tmp[a]
                        inc[b] += acc
                for b in range(N):
                    v[b] = decay[b] * (v[b] + inc[b])
            out[q, i] = v
    return out


flows_numba = njit(_flows_loops)


def flows_numpy(decay, A, B, fprime, dx, start, sources):
    M, d, _ = fprime.shape
    n_src = sources.shape[0]
    N = decay.shape[0]
    v = np.zeros((n_src, d, N))
    order = np.argsort(sources, kind="stable")
    begun = 0
    for m in range(int(sources.min()) if n_src else M, M):
        while begun < n_src and sources[order[begun]] <= m:
            q = order[begun]
            v[q] = start[q]
            begun += 1
        act = order[:begun]
        va = v[act]
        nodes = va @ A.T
        inc = np.zeros_like(va)
        for j in range(d):
            if dx[m, j] != 0.0:
                inc += ((nodes * fprime[m, j]) * dx[m, j]) @ B.T
        v[act] = decay * (va + inc)
    for q in range(n_src):
        if sources[q] >= M:
            v[q] = start[q]
    return v


def flows_from_sources(decay, A, B, fprime, dx, start, sources):
    """Propagate ``v_{m+1} = S_dt (v_m + sum_j dx_j B(f_j'(y_m) * A v_m))``.

    Every source index ``k`` starts its own flow at step ``k`` from
    ``start[q]`` and is advanced to the final step ``M``.  This is the direct
    O(M^2) route; the adjoint sweep in :mod:`fracheat.malliavin` must agree
    with it.
    """
    args = (
        np.ascontiguousarray(decay, dtype=float),
        np.ascontiguousarray(A, dtype=float),
        np.ascontiguousarray(B, dtype=float),
        np.ascontiguousarray(fprime, dtype=float),
        np.ascontiguousarray(dx, dtype=float),
        np.ascontiguousarray(start, dtype=float),
        np.ascontiguousarray(sources, dtype=np.int64),
    )
    # batching the live sources into one matrix product beats the scalar loops,
    # so this kernel stays on numpy even when numba is on
    return flows_numpy(*args)
