"""Truncated sine-series representation of functions on (0, 1).

A field is stored as its coefficients ``y^n`` on the Dirichlet eigenbasis
``e_n(xi) = sqrt(2) sin(pi n xi)``, whose Laplacian eigenvalues are
``lambda_n = pi^2 n^2``.  Everything nonlinear is done by collocation on the
grid ``xi_j = j / (N + 1)``, where the sine matrix is orthogonal up to the
factor ``(N + 1) / 2`` and the transform pair is exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidParameter, OutOfDomain, ShapeError

DEFAULT_N_MODES = 64


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@lru_cache(maxsize=None)
def eigenvalues(n_modes: int) -> np.ndarray:
    n = np.arange(1, n_modes + 1, dtype=float)
    return _frozen(np.pi**2 * n**2)


@lru_cache(maxsize=64)
def sobolev_weights(n_modes: int, alpha: float) -> np.ndarray:
    """Per-mode weights ``lambda_n^alpha`` so that ``||y||_alpha = ||w * y||_2``."""
    if alpha < 0:
        raise InvalidParameter(f"Sobolev order must be >= 0, got {alpha}")
    return _frozen(eigenvalues(n_modes) ** alpha)


def sine_matrix(points, n_modes: int) -> np.ndarray:
    """Rows ``[e_1(p), ..., e_N(p)]`` for every point ``p``."""
    p = np.asarray(points, dtype=float).reshape(-1, 1)
    n = np.arange(1, n_modes + 1, dtype=float)
    return np.sqrt(2.0) * np.sin(np.pi * p * n)


@lru_cache(maxsize=None)
def _grid_matrix(n_points: int, n_modes: int) -> np.ndarray:
    xi = np.arange(1, n_points + 1) / (n_points + 1)
    return _frozen(sine_matrix(xi, n_modes))


@dataclass(frozen=True)
class SpectralField:
    """A function on (0, 1) given by ``N`` sine coefficients."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float, copy=True).ravel()
        if c.size == 0:
            raise ShapeError("a field needs at least one mode")
        if not np.all(np.isfinite(c)):
            raise InvalidParameter("field coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def n_modes(self) -> int:
        return self.coeffs.size

    @classmethod
    def zeros(cls, n_modes: int = DEFAULT_N_MODES) -> "SpectralField":
        return cls(np.zeros(n_modes))

    @classmethod
    def basis(cls, n: int, n_modes: int = DEFAULT_N_MODES) -> "SpectralField":
        """The eigenfunction ``e_n`` (1-based)."""
        if not 1 <= n <= n_modes:
            raise InvalidParameter(f"mode {n} outside 1..{n_modes}")
        c = np.zeros(n_modes)
        c[n - 1] = 1.0
        return cls(c)

    @classmethod
    def from_function(cls, func: Callable, n_modes: int = DEFAULT_N_MODES) -> "SpectralField":
        """Interpolate ``func`` on the collocation grid."""
        grid = CollocationGrid(n_modes)
        return grid.to_coeffs(func(grid.points))

    def __add__(self, other):
        return SpectralField(self.coeffs + _coeffs_of(other, self.n_modes))

    def __sub__(self, other):
        return SpectralField(self.coeffs - _coeffs_of(other, self.n_modes))

    def __mul__(self, scalar):
        return SpectralField(self.coeffs * float(scalar))

    __rmul__ = __mul__

    def norm(self, alpha: float = 0.0) -> float:
        return sobolev_norm(self, alpha)

    def semigroup(self, t: float) -> "SpectralField":
        return semigroup_apply(self, t)

    def __call__(self, xi):
        return evaluate(self, xi)


def _coeffs_of(other, n_modes):
    c = other.coeffs if isinstance(other, SpectralField) else np.asarray(other, dtype=float)
    if c.shape != (n_modes,):
        raise ShapeError(f"mode count mismatch: {c.shape} vs ({n_modes},)")
    return c


class CollocationGrid:
    """Interior grid ``xi_j = j/(N+1)``, ``j = 1..N``, with weight ``1/(N+1)``."""

    def __init__(self, n_modes: int = DEFAULT_N_MODES):
        if n_modes < 1:
            raise InvalidParameter("n_modes must be positive")
        self.n_modes = n_modes
        self.points = np.arange(1, n_modes + 1) / (n_modes + 1)
        self.weight = 1.0 / (n_modes + 1)
        self.matrix = _grid_matrix(n_modes, n_modes)

    def to_grid(self, field) -> np.ndarray:
        c = field.coeffs if isinstance(field, SpectralField) else np.asarray(field, dtype=float)
        if c.shape[-1] != self.n_modes:
            raise ShapeError(f"expected {self.n_modes} coefficients, got {c.shape[-1]}")
        return c @ self.matrix.T

    def to_coeffs(self, values, as_array: bool = False):
        v = np.asarray(values, dtype=float)
        if v.shape[-1] != self.n_modes:
            raise ShapeError(f"expected {self.n_modes} grid values, got {v.shape[-1]}")
        c = (v @ self.matrix) * self.weight
        if as_array or c.ndim > 1:
            return c
        return SpectralField(c)


def collocation_transform(data, direction: str, n_modes: int | None = None):
    """Exact discrete sine transform pair on the collocation grid.

    ``direction="to-grid"`` takes a field (or coefficient array) and returns
    grid values; ``direction="to-coeffs"`` takes grid values and returns a
    :class:`SpectralField` (or coefficient array for batched input).
    """
    if direction == "to-grid":
        size = data.n_modes if isinstance(data, SpectralField) else np.shape(data)[-1]
        if n_modes is not None and n_modes != size:
            raise ShapeError(f"length {size} does not match grid of {n_modes}")
        return CollocationGrid(size).to_grid(data)
    if direction == "to-coeffs":
        size = np.shape(data)[-1]
        if n_modes is not None and n_modes != size:
            raise ShapeError(f"length {size} does not match grid of {n_modes}")
        return CollocationGrid(size).to_coeffs(data)
    raise InvalidParameter(f"unknown direction {direction!r}")


def sobolev_norm(field, alpha: float) -> float:
    if not np.isfinite(alpha) or alpha < 0:
        raise InvalidParameter(f"alpha must be finite and >= 0, got {alpha}")
    c = _as_coeffs(field)
    return float(np.linalg.norm(sobolev_weights(c.size, float(alpha)) * c))


def semigroup_factors(n_modes: int, t: float) -> np.ndarray:
    if t < 0:
        raise InvalidParameter(f"semigroup time must be >= 0, got {t}")
    return np.exp(-eigenvalues(n_modes) * t)


def semigroup_apply(field, t: float):
    """Heat semigroup ``S_t``: multiply mode ``n`` by ``exp(-lambda_n t)``."""
    if isinstance(field, SpectralField):
        if t == 0:
            return field
        return SpectralField(field.coeffs * semigroup_factors(field.n_modes, t))
    c = np.asarray(field, dtype=float)
    return c * semigroup_factors(c.shape[-1], t)


def evaluate(field, xi):
    """Point values ``sum_n y^n e_n(xi)`` for ``xi`` in the open interval (0, 1)."""
    x = np.asarray(xi, dtype=float)
    if np.any((x <= 0) | (x >= 1)) or not np.all(np.isfinite(x)):
        raise OutOfDomain(f"evaluation point(s) must lie in (0, 1), got {xi}")
    c = _as_coeffs(field)
    vals = sine_matrix(x, c.size) @ c
    return float(vals[0]) if x.ndim == 0 else vals.reshape(x.shape)


def sup_norm(field, oversample: int = 4) -> float:
    """Max of ``|y|`` on a uniform grid of ``oversample * N`` interior points."""
    c = _as_coeffs(field)
    m = oversample * c.size
    return float(np.max(np.abs(_grid_matrix(m, c.size) @ c)))


@lru_cache(maxsize=None)
def fine_grid_matrix(n_modes: int) -> np.ndarray:
    """Sine matrix on the oversampled ``2N+1`` point grid used for products."""
    return _grid_matrix(2 * n_modes + 1, n_modes)


def pointwise_map(fields: SpectralField | Sequence[SpectralField], g: Callable) -> SpectralField:
    """Apply ``g`` pointwise to one or more fields.

    Inputs are evaluated on the ``2N+1`` point grid, ``g`` is applied to the
    values, and the result is transformed back and truncated to ``N`` modes.
    Covers Nemytskii maps ``f(y)`` and products ``phi * psi``.
    """
    if isinstance(fields, SpectralField):
        fields = [fields]
    fields = list(fields)
    n = fields[0].n_modes
    if any(f.n_modes != n for f in fields):
        raise ShapeError("all fields must share n_modes")
    E = fine_grid_matrix(n)
    vals = [E @ f.coeffs for f in fields]
    out = np.broadcast_to(np.asarray(g(*vals), dtype=float), vals[0].shape)
    return SpectralField(E.T @ out / (2 * n + 2))


def regularization_constant(alpha: float) -> float:
    """``sup_x x^alpha e^{-x} = (alpha/e)^alpha``; 1 when alpha = 0."""
    return 1.0 if alpha == 0 else (alpha / np.e) ** alpha


def embedding_constant(n_modes: int, alpha: float) -> float:
    """Cauchy-Schwarz bound for ``sup|y| <= C ||y||_alpha`` on ``N`` modes."""
    return float(np.sqrt(2.0 * np.sum(eigenvalues(n_modes) ** (-2.0 * alpha))))


def _as_coeffs(field) -> np.ndarray:
    if isinstance(field, SpectralField):
        return field.coeffs
    return np.asarray(field, dtype=float)
