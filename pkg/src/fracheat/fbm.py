"""Fractional Brownian motion drivers, the Volterra kernel and the space H.

Paths are sampled either by an exact Cholesky factorization of the grid
covariance or by discretizing the Volterra representation
``B_t = int_0^t K(t, r) dW_r``.  Both samplers consume the same standard
normals for a given ``(seed, path_index)``, so ensembles are reproducible and
the two methods can be compared path by path.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import roots_jacobi, roots_legendre

from . import csvio
from .errors import (FactorizationFailure, InvalidParameter, NumericFailure,
                     OutOfDomain, ShapeError)
from .kernels import holder_scan

DEFAULT_HURST = 0.75
KERNEL_NODES = 64


def _check_hurst(hurst, low=0.0):
    if not (low < hurst < 1.0):
        raise InvalidParameter(f"Hurst parameter must lie in ({low}, 1), got {hurst}")


def covariance(s, t, hurst: float):
    """``R_H(s, t) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2``."""
    _check_hurst(hurst)
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise OutOfDomain("covariance needs s, t >= 0")
    h2 = 2.0 * hurst
    out = 0.5 * (t**h2 + s**h2 - np.abs(t - s) ** h2)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------- paths

@dataclass(frozen=True)
class DriverPath:
    """A ``d``-dimensional path sampled on a uniform grid, vanishing at 0."""

    times: np.ndarray
    values: np.ndarray
    hurst: float | None = None  # None marks a deterministic driver

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.size or t.size < 2:
            raise ShapeError(f"times {t.shape} and values {v.shape} disagree")
        dt = np.diff(t)
        if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise InvalidParameter("driver grid must be strictly increasing and uniform")
        if t[0] != 0.0 or np.any(v[0] != 0.0):
            raise InvalidParameter("driver paths start at time 0 with value 0")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def is_constant(self) -> bool:
        return not np.any(self.values)

    def holder_norm(self, gamma: float) -> float:
        return holder_norm(self, gamma)

    def subsample(self, stride: int) -> "DriverPath":
        if self.n_steps % stride:
            raise ShapeError(f"stride {stride} does not divide {self.n_steps} steps")
        return DriverPath(self.times[::stride], self.values[::stride], self.hurst)

    def __add__(self, other: "DriverPath") -> "DriverPath":
        _same_grid(self, other)
        return DriverPath(self.times, self.values + other.values, self.hurst)

    def __sub__(self, other: "DriverPath") -> "DriverPath":
        _same_grid(self, other)
        return DriverPath(self.times, self.values - other.values, self.hurst)

    def scaled(self, c: float) -> "DriverPath":
        return DriverPath(self.times, self.values * c, self.hurst)

    def to_csv(self, path, manifest=None):
        header = ["time"] + [f"comp_{i + 1}" for i in range(self.dim)]
        return csvio.write_csv(path, header, np.column_stack([self.times, self.values]),
                               manifest)

    @classmethod
    def from_function(cls, func, n_steps: int, horizon: float = 1.0, dim: int = 1):
        """Deterministic path ``x_t = func(t) - func(0)`` (vector valued if ``dim > 1``)."""
        t = np.linspace(0.0, horizon, n_steps + 1)
        v = np.asarray(func(t), dtype=float).reshape(dim, -1).T if dim > 1 else \
            np.asarray(func(t), dtype=float)[:, None]
        return cls(t, v - v[0])

    @classmethod
    def constant(cls, n_steps: int, dim: int = 1, horizon: float = 1.0):
        return cls(np.linspace(0.0, horizon, n_steps + 1), np.zeros((n_steps + 1, dim)))


def _same_grid(a: DriverPath, b: DriverPath):
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ShapeError("driver paths live on different grids")
    if a.dim != b.dim:
        raise ShapeError("driver paths have different dimensions")


def holder_norm(path: DriverPath, gamma: float) -> float:
    """All-pairs grid proxy for the gamma-Hölder seminorm."""
    if not 0 < gamma < 1:
        raise InvalidParameter(f"gamma must lie in (0, 1), got {gamma}")
    return holder_scan(path.values, path.times, gamma)


# ------------------------------------------------------------------- seeding

def path_rng(seed: int, path_index: int = 0) -> np.random.Generator:
    """Generator for path ``path_index`` of the ensemble with master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(path_index)]))


def standard_normals(seed: int, path_index: int, n_steps: int, dim: int) -> np.ndarray:
    return path_rng(seed, path_index).standard_normal((dim, n_steps))


# ------------------------------------------------------------ Volterra kernel

@lru_cache(maxsize=None)
def _legendre(n):
    return roots_legendre(n)


@lru_cache(maxsize=None)
def _jacobi(n, alpha, beta):
    return roots_jacobi(n, alpha, beta)


def _kernel_unscaled(t, s, hurst):
    """``s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du`` via ``w = (u-s)^{H-1/2}``."""
    a = hurst - 0.5
    x, w = _legendre(KERNEL_NODES)
    t = np.asarray(t, dtype=float)[..., None]
    s = np.asarray(s, dtype=float)[..., None]
    top = (t - s) ** a
    nodes = 0.5 * top * (1.0 + x)
    integrand = (s + nodes ** (1.0 / a)) ** a
    integral = 0.5 * top[..., 0] * (integrand @ w) / a
    return s[..., 0] ** (-a) * integral


@lru_cache(maxsize=None)
def hurst_constant(hurst: float) -> float:
    """Multiplicative constant of ``K`` fixed by ``int_0^1 K(1, r)^2 dr = 1``."""
    _check_hurst(hurst, 0.5)
    unscaled = _product_integral_unscaled(1.0, 1.0, hurst)
    return brentq(lambda c: c * c * unscaled - 1.0, 1e-8, 1e4, xtol=1e-15, rtol=1e-15)


def volterra_kernel(t, s, hurst: float, c_h: float | None = None):
    """``K(t, s)`` for ``0 < s < t``."""
    _check_hurst(hurst, 0.5)
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0) or np.any(s_arr >= t_arr):
        raise OutOfDomain("volterra_kernel requires 0 < s < t")
    c = hurst_constant(hurst) if c_h is None else c_h
    out = c * _kernel_unscaled(t_arr, s_arr, hurst)
    return float(out) if out.ndim == 0 else out


PRODUCT_NODES = 48


def _product_integral_unscaled(u, t, hurst):
    m, big = min(u, t), max(u, t)
    if m <= 0:
        return 0.0
    a = hurst - 0.5
    right = 2 * a if u == t else a
    left = 1.0 - 2.0 * hurst
    x, w = _jacobi(PRODUCT_NODES, right, left)
    r = 0.5 * m * (1.0 + x)
    k_small = _kernel_unscaled(np.full_like(r, m), r, hurst)
    k_big = k_small if u == t else _kernel_unscaled(np.full_like(r, big), r, hurst)
    g = k_small * k_big / (r**left * (m - r) ** right)
    return float((0.5 * m) ** (1.0 + left + right) * (g @ w))


def kernel_product_integral(u: float, t: float, hurst: float) -> float:
    """``int_0^{u ^ t} K(u, r) K(t, r) dr`` by Gauss-Jacobi quadrature."""
    c = hurst_constant(hurst)
    return c * c * _product_integral_unscaled(float(u), float(t), hurst)


# ------------------------------------------------------------------ samplers

@lru_cache(maxsize=16)
def _cholesky_factor(n_steps: int, hurst: float, horizon: float) -> np.ndarray:
    t = np.linspace(0.0, horizon, n_steps + 1)[1:]
    cov = covariance(t[:, None], t[None, :], hurst)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise FactorizationFailure(
            f"fBm covariance not positive definite (M={n_steps}, H={hurst})") from exc
    L.setflags(write=False)
    return L


CELL_NODES = 8


@lru_cache(maxsize=8)
def _volterra_factor(n_steps: int, hurst: float, horizon: float) -> np.ndarray:
    """Lower-triangular ``sqrt(dt) * mean_{cell j} K(t_k, .)``."""
    a = hurst - 0.5
    c = hurst_constant(hurst)
    dt = horizon / n_steps
    t = dt * np.arange(1, n_steps + 1)
    out = np.zeros((n_steps, n_steps))
    xg, wg = _legendre(CELL_NODES)
    xl, wl = _jacobi(CELL_NODES, 0.0, -a)      # r^{1/2-H} at r = 0
    xr, wr = _jacobi(CELL_NODES, a, 0.0)       # (t - r)^{H-1/2} at r = t
    xb, wb = _jacobi(CELL_NODES, a, -a)        # both, first row only
    half = 0.5 * dt
    for k in range(n_steps):
        tk = t[k]
        if k == 0:
            r = half * (1 + xb)
            g = _kernel_unscaled(np.full_like(r, tk), r, hurst) * r**a / (tk - r) ** a
            out[0, 0] = half ** 1.0 * (g @ wb)
            continue
        # first cell, singular at 0
        r = half * (1 + xl)
        g = _kernel_unscaled(np.full_like(r, tk), r, hurst) * r**a
        out[k, 0] = half ** (1 - a) * (g @ wl)
        # diagonal cell, root behaviour at t_k
        r = t[k - 1] + half * (1 + xr)
        g = _kernel_unscaled(np.full_like(r, tk), r, hurst) / (tk - r) ** a
        out[k, k] = half ** (1 + a) * (g @ wr)
        if k > 1:
            left = dt * np.arange(1, k)
            r = left[:, None] + half * (1 + xg)
            g = _kernel_unscaled(np.full_like(r, tk), r, hurst)
            out[k, 1:k] = half * (g @ wg)
    out *= c / dt * np.sqrt(dt)
    if not np.all(np.isfinite(out)):
        raise NumericFailure("Volterra cell quadrature produced non-finite values")
    out.setflags(write=False)
    return out


def sampler_factor(n_steps: int, hurst: float, method: str = "factorization",
                   horizon: float = 1.0) -> np.ndarray:
    """Lower-triangular map from i.i.d. normals to the grid values ``B_{t_1..t_M}``."""
    if n_steps < 1:
        raise InvalidParameter("need at least one time step")
    _check_hurst(hurst, 0.5)
    if method == "factorization":
        return _cholesky_factor(n_steps, float(hurst), float(horizon))
    if method == "volterra":
        return _volterra_factor(n_steps, float(hurst), float(horizon))
    raise InvalidParameter(f"unknown sampling method {method!r}")


def sample_path(n_steps: int, hurst: float, dim: int = 1, seed: int = 0,
                method: str = "factorization", horizon: float = 1.0,
                path_index: int = 0) -> DriverPath:
    """One fBm path; path ``i`` of an ensemble uses ``path_index=i``."""
    if dim < 1:
        raise InvalidParameter("dim must be positive")
    L = sampler_factor(n_steps, hurst, method, horizon)
    z = standard_normals(seed, path_index, n_steps, dim)
    vals = np.zeros((n_steps + 1, dim))
    vals[1:] = (z @ L.T).T
    return DriverPath(np.linspace(0.0, horizon, n_steps + 1), vals, float(hurst))


def sample_paths(n_paths: int, n_steps: int, hurst: float, dim: int = 1, seed: int = 0,
                 method: str = "factorization", horizon: float = 1.0,
                 start_index: int = 0) -> np.ndarray:
    """Ensemble values as an array ``(n_paths, n_steps + 1, dim)``.

    Row ``i`` equals ``sample_path(..., path_index=start_index + i).values``
    bit for bit.
    """
    L = sampler_factor(n_steps, hurst, method, horizon)
    out = np.zeros((n_paths, n_steps + 1, dim))
    for i in range(n_paths):
        z = standard_normals(seed, start_index + i, n_steps, dim)
        out[i, 1:] = (z @ L.T).T
    return out


# ---------------------------------------------------------------- the space H

@dataclass(frozen=True)
class StepFunction:
    """Piecewise constant ``R^d``-valued function on ``breakpoints``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        b = np.array(self.breakpoints, dtype=float)
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if b.ndim != 1 or v.shape[0] != b.size - 1:
            raise ShapeError(f"{b.size} breakpoints need {b.size - 1} pieces, got {v.shape[0]}")
        if np.any(np.diff(b) <= 0) or b[0] < 0:
            raise InvalidParameter("breakpoints must be increasing and nonnegative")
        object.__setattr__(self, "breakpoints", b)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def indicator(cls, breakpoints, t: float, component: int = 0, dim: int = 1):
        """``1_{[0, t]} e_component`` on a grid containing ``t``."""
        b = np.asarray(breakpoints, dtype=float)
        v = np.zeros((b.size - 1, dim))
        v[b[1:] <= t + 1e-12, component] = 1.0
        return cls(b, v)

    @classmethod
    def from_function(cls, func, breakpoints, dim: int = 1):
        """Sample ``func`` at cell midpoints."""
        b = np.asarray(breakpoints, dtype=float)
        mid = 0.5 * (b[1:] + b[:-1])
        v = np.asarray(func(mid), dtype=float)
        return cls(b, v.reshape(dim, -1).T if dim > 1 else v)


def h_gram(breakpoints, hurst: float) -> np.ndarray:
    """``<1_{(a_p, b_p]}, 1_{(a_q, b_q]}>_H`` for consecutive cells."""
    b = np.asarray(breakpoints, dtype=float)
    R = covariance(b[:, None], b[None, :], hurst)
    return R[1:, 1:] - R[1:, :-1] - R[:-1, 1:] + R[:-1, :-1]


def h_inner_product(h1: StepFunction, h2: StepFunction, hurst: float) -> float:
    if h1.breakpoints.shape != h2.breakpoints.shape or not np.allclose(
            h1.breakpoints, h2.breakpoints, rtol=0, atol=1e-14):
        raise ShapeError("step functions live on different grids")
    if h1.dim != h2.dim:
        raise ShapeError("step functions have different dimensions")
    G = h_gram(h1.breakpoints, hurst)
    return float(np.einsum("pi,pq,qi->", h1.values, G, h2.values))


def h_norm(h: StepFunction, hurst: float) -> float:
    return float(np.sqrt(max(h_inner_product(h, h, hurst), 0.0)))


def cameron_martin_lift(h: StepFunction, hurst: float) -> DriverPath:
    """``R_H h`` on the breakpoint grid.

    For a step ``h``, ``K* h(s) = int_s^T h(r) d_r K(r, s)`` telescopes into
    kernel values, so ``R_H h(u)`` is a combination of the quadratures
    ``int_0^{u ^ b} K(u, s) K(b, s) ds`` over breakpoints ``b``.
    """
    b = h.breakpoints
    if b[0] != 0.0:
        raise InvalidParameter("lift needs breakpoints starting at 0")
    n = b.size
    Q = np.zeros((n, n))
    for i in range(1, n):
        for j in range(i, n):
            Q[i, j] = Q[j, i] = kernel_product_integral(b[i], b[j], hurst)
    if not np.all(np.isfinite(Q)):
        raise NumericFailure("kernel quadrature did not produce finite values")
    vals = (Q[:, 1:] - Q[:, :-1]) @ h.values
    return DriverPath(b, vals, None)
