"""Convolutional Young integrals and time-regularity norms of field paths."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidParameter, ShapeError
from .fbm import DriverPath
from .kernels import field_scan
from .spectral import SpectralField, eigenvalues, semigroup_factors, sobolev_weights


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FieldPath:
    """One :class:`SpectralField` per time of a uniform grid, stored as ``(n_times, N)``."""

    times: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 2 or c.shape[0] != t.size:
            raise ShapeError(f"coeffs {c.shape} do not match {t.size} times")
        if t.size > 1:
            dt = np.diff(t)
            if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
                raise InvalidParameter("field paths live on uniform increasing grids")
        t.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.shape[1]

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def __len__(self):
        return self.times.size

    def __getitem__(self, k) -> SpectralField:
        return SpectralField(self.coeffs[k])

    def at(self, t: float) -> SpectralField:
        return self[grid_index(self.times, t)]

    def window(self, i0: int, i1: int) -> "FieldPath":
        return FieldPath(self.times[i0:i1 + 1], self.coeffs[i0:i1 + 1])

    def scaled(self, c: float) -> "FieldPath":
        return FieldPath(self.times, self.coeffs * c)

    @classmethod
    def constant(cls, field: SpectralField, times) -> "FieldPath":
        times = np.asarray(times, dtype=float)
        return cls(times, np.tile(field.coeffs, (times.size, 1)))

    @classmethod
    def semigroup_orbit(cls, phi: SpectralField, times) -> "FieldPath":
        """``t -> S_t phi``."""
        times = np.asarray(times, dtype=float)
        return cls(times, np.exp(-np.outer(times, eigenvalues(phi.n_modes))) * phi.coeffs)


def grid_index(times, t: float) -> int:
    times = np.asarray(times)
    k = int(np.argmin(np.abs(times - t)))
    if abs(times[k] - t) > 1e-9 * max(1.0, abs(t)):
        raise InvalidParameter(f"time {t} is not a grid point")
    return k


def _stack_integrand(z) -> np.ndarray:
    """``(n_times, d, N)`` from one FieldPath or one per driver component."""
    if isinstance(z, FieldPath):
        return z.coeffs[:, None, :]
    arr = np.stack([zi.coeffs for zi in z], axis=1)
    return arr


def _check(z_arr, times, x: DriverPath):
    if z_arr.shape[0] != x.times.size or not np.allclose(times, x.times):
        raise ShapeError("integrand and driver use different time grids")
    if z_arr.shape[1] != x.dim:
        raise ShapeError(f"{z_arr.shape[1]} integrand components for a {x.dim}-dim driver")


def _times_of(z):
    return z.times if isinstance(z, FieldPath) else z[0].times


def conv_riemann_sum(z: FieldPath | Sequence[FieldPath], x: DriverPath, s: float, t: float,
                     partition=None, rule: str = "right") -> SpectralField:
    """``sum_k S_{t - t_{k+1}} z_{t_{k+1}} (x_{t_{k+1}} - x_{t_k})`` over components.

    ``partition`` holds grid indices (or times) from ``s`` to ``t``; ``None``
    uses every grid point.  ``rule="left"`` evaluates ``S_{t - t_k} z_{t_k}``.
    """
    times = _times_of(z)
    z_arr = _stack_integrand(z)
    _check(z_arr, times, x)
    i0, i1 = grid_index(times, s), grid_index(times, t)
    if i1 <= i0:
        raise InvalidParameter("need s < t")
    idx = _partition_indices(times, partition, i0, i1)
    return SpectralField(_riemann(z_arr, x.values, times, idx, rule))


def _partition_indices(times, partition, i0, i1):
    if partition is None:
        return np.arange(i0, i1 + 1)
    p = np.asarray(partition)
    if p.dtype.kind == "f":
        p = np.array([grid_index(times, v) for v in p])
    p = p.astype(int)
    if p[0] != i0 or p[-1] != i1 or np.any(np.diff(p) <= 0):
        raise InvalidParameter("partition must increase strictly from s to t")
    return p


def _riemann(z_arr, xv, times, idx, rule):
    lam = eigenvalues(z_arr.shape[2])
    t = times[idx[-1]]
    dx = xv[idx[1:]] - xv[idx[:-1]]               # (n_int, d)
    eval_idx = idx[1:] if rule == "right" else idx[:-1]
    if rule not in ("right", "left"):
        raise InvalidParameter(f"unknown rule {rule!r}")
    decay = np.exp(-np.outer(t - times[eval_idx], lam))
    return np.einsum("kn,kin,ki->n", decay, z_arr[eval_idx], dx)


def _dyadic(i0, i1, level):
    return np.unique(np.rint(np.linspace(i0, i1, 2**level + 1)).astype(int))


def conv_integral(z, x: DriverPath, s: float, t: float, rel_tol: float = 1e-3,
                  min_level: int = 3, full_output: bool = False):
    """Young convolution integral by dyadic refinement of right-point sums.

    Stops when two successive sums differ by less than ``rel_tol`` in the
    ``L^2`` norm, relative to the latest sum.  If the driver grid is reached
    first, the finest sum is returned and a :class:`ConvergenceWarning` raised.
    """
    times = _times_of(z)
    z_arr = _stack_integrand(z)
    _check(z_arr, times, x)
    i0, i1 = grid_index(times, s), grid_index(times, t)
    if i1 <= i0:
        raise InvalidParameter("need s < t")
    prev = None
    level = 0
    history = []
    while True:
        idx = _dyadic(i0, i1, level)
        cur = _riemann(z_arr, x.values, times, idx, "right")
        finest = idx.size == i1 - i0 + 1
        if prev is not None:
            change = float(np.linalg.norm(cur - prev))
            scale = float(np.linalg.norm(cur))
            history.append(change)
            if level >= min_level and change <= rel_tol * scale:
                converged = True
                break
        if finest:
            converged = bool(history) and history[-1] <= rel_tol * float(np.linalg.norm(cur))
            if not converged:
                warnings.warn("conv_integral reached the driver grid before converging",
                              ConvergenceWarning, stacklevel=2)
            break
        prev = cur
        level += 1
    field = SpectralField(cur)
    if full_output:
        return field, {"converged": bool(converged), "n_intervals": idx.size - 1,
                       "changes": history}
    return field


def conv_path(z, x: DriverPath, phi: SpectralField | None = None,
              rule: str = "right") -> FieldPath:
    """The path ``y`` with ``y_0 = phi`` and ``y_t - S_{t-s} y_s`` equal to the
    convolution integral of ``z`` over ``[s, t]``, on the full driver grid."""
    times = _times_of(z)
    z_arr = _stack_integrand(z)
    _check(z_arr, times, x)
    N = z_arr.shape[2]
    decay = semigroup_factors(N, x.dt)
    dx = x.increments()
    y = np.zeros((times.size, N))
    if phi is not None:
        y[0] = phi.coeffs
    for k in range(times.size - 1):
        if rule == "right":
            y[k + 1] = decay * y[k] + dx[k] @ z_arr[k + 1]
        elif rule == "left":
            y[k + 1] = decay * (y[k] + dx[k] @ z_arr[k])
        else:
            raise InvalidParameter(f"unknown rule {rule!r}")
    return FieldPath(times, y)


class PathNorms(NamedTuple):
    c0: float
    holder: float
    hat_holder: float


def path_norms(y: FieldPath, interval=None, kappa: float = 0.45, alpha: float = 0.0,
               stride: int = 1) -> PathNorms:
    """Sup, kappa-Hölder and hat-kappa-Hölder norms in ``B_alpha`` over a window.

    ``interval`` is ``(t_start, t_end)`` on the grid (default: whole path);
    ``stride`` coarsens the grid before the all-pairs scan.
    """
    i0, i1 = (0, len(y) - 1) if interval is None else (
        grid_index(y.times, interval[0]), grid_index(y.times, interval[1]))
    coeffs = y.coeffs[i0:i1 + 1:stride]
    w = sobolev_weights(y.n_modes, float(alpha))
    c0, hol, hat = field_scan(coeffs, w, eigenvalues(y.n_modes), y.dt * stride, kappa)
    return PathNorms(c0, hol, hat)
