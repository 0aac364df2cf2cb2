"""Mild solutions of the fBm-driven heat equation by exponential Euler.

Two equations are covered:

* Nemytskii: ``y_t = S_t phi + int_0^t S_{t-u} f_i(y_u) dx^i_u``
* regularized: ``y_t = S_t phi + int_0^t S_{t-u} L(f_i(y_u)) dx^i_u``

Both reduce to a coefficient map ``G_i(y) = B f_i(A y)`` where ``A`` evaluates
sine coefficients at quadrature nodes and ``B`` maps node values back to
coefficients (through ``L`` when present).  The scheme is

    y_{k+1} = S_dt (y_k + sum_i G_i(y_k) dx^i_k),

vectorized over an ensemble axis so whole Monte-Carlo batches advance with a
few BLAS calls per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import BlowUpError, InvalidParameter, NonConvergence, ShapeError
from .fbm import DriverPath
from .spectral import (DEFAULT_N_MODES, CollocationGrid, SpectralField, fine_grid_matrix,
                       semigroup_factors, sine_matrix, sobolev_norm)
from .young import FieldPath, conv_path


# -------------------------------------------------------------- coefficients

@dataclass
class NemytskiiFamily:
    """``d`` scalar coefficients, each given as ``(f, f', f'', f''')``.

    Every callable must accept and return numpy arrays.
    """

    funcs: Sequence[tuple[Callable, Callable, Callable, Callable]]
    name: str = "custom"
    bounds: np.ndarray | None = None  # (d, 4) sup norms of f, f', f'', f'''

    def __post_init__(self):
        self.funcs = [tuple(f) for f in self.funcs]
        if not self.funcs or any(len(f) != 4 for f in self.funcs):
            raise InvalidParameter("each coefficient needs f and three derivatives")
        if self.bounds is None:
            u = np.linspace(-50.0, 50.0, 20001)
            self.bounds = np.array([[np.max(np.abs(np.broadcast_to(g(u), u.shape)))
                                     for g in fs] for fs in self.funcs])
        if not np.all(np.isfinite(self.bounds)):
            raise InvalidParameter("coefficient bounds must be finite")

    @property
    def dim(self) -> int:
        return len(self.funcs)

    def derivative(self, order: int, i: int, u):
        return np.broadcast_to(self.funcs[i][order](u), np.shape(u))


def _bump(c, amp):
    def f0(u):
        return amp / np.sqrt(1.0 + (u - c) ** 2)

    def f1(u):
        v = u - c
        return -amp * v * (1.0 + v * v) ** -1.5

    def f2(u):
        v = u - c
        return amp * (2.0 * v * v - 1.0) * (1.0 + v * v) ** -2.5

    def f3(u):
        v = u - c
        return amp * 3.0 * v * (3.0 - 2.0 * v * v) * (1.0 + v * v) ** -3.5

    return f0, f1, f2, f3


def default_family(dim: int = 1, lambda0: float = 0.5, amplitude: float = 1.0,
                   shift: float = 0.5) -> NemytskiiFamily:
    """``f_i(u) = lambda0 + amplitude (1 + (u - i*shift)^2)^{-1/2}``; ``f_i >= lambda0``."""
    funcs = []
    for i in range(dim):
        g0, g1, g2, g3 = _bump(i * shift, amplitude)
        funcs.append((lambda u, g0=g0: lambda0 + g0(u), g1, g2, g3))
    bounds = np.array([[lambda0 + amplitude, 0.3849001794597505 * amplitude, amplitude,
                        _third_bound() * amplitude]] * dim)
    return NemytskiiFamily(funcs, name=f"bump(lambda0={lambda0},amp={amplitude})",
                           bounds=bounds)


def _third_bound():
    v = np.linspace(0, 3, 300001)
    return float(np.max(np.abs(3 * v * (3 - 2 * v * v) * (1 + v * v) ** -3.5)))


def sine_family(dim: int = 1, scale: float = 1.0) -> NemytskiiFamily:
    """``f_i(u) = scale * (sin(u + i) + 1.5)``: smooth, bounded, non-vanishing."""
    funcs = []
    for i in range(dim):
        funcs.append((lambda u, i=i: scale * (np.sin(u + i) + 1.5),
                      lambda u, i=i: scale * np.cos(u + i),
                      lambda u, i=i: -scale * np.sin(u + i),
                      lambda u, i=i: -scale * np.cos(u + i)))
    return NemytskiiFamily(funcs, name=f"sine(scale={scale})",
                           bounds=np.array([[2.5 * scale, scale, scale, scale]] * dim))


def constant_family(value: float = 1.0, dim: int = 1) -> NemytskiiFamily:
    zero = lambda u: np.zeros_like(np.asarray(u, dtype=float))  # noqa: E731
    funcs = [(lambda u: np.full_like(np.asarray(u, dtype=float), value), zero, zero, zero)
             for _ in range(dim)]
    return NemytskiiFamily(funcs, name=f"constant({value})",
                           bounds=np.array([[abs(value), 0, 0, 0]] * dim, dtype=float))


# ---------------------------------------------------------- kernel operator L

class KernelOperator:
    """``L g(xi) = int_0^1 U(xi, eta) g(eta) d eta`` discretized by the trapezoid
    rule on ``eta_k = k/(N+1)``, ``k = 0..N+1``, and re-expanded in ``N`` modes.
    """

    def __init__(self, kernel: Callable, n_modes: int = DEFAULT_N_MODES, name: str = "custom"):
        self.n_modes = n_modes
        self.name = name
        grid = CollocationGrid(n_modes)
        self.nodes = np.arange(n_modes + 2) / (n_modes + 1)
        w = np.full(n_modes + 2, 1.0 / (n_modes + 1))
        w[[0, -1]] *= 0.5
        self.quad_weights = w
        U = np.asarray(kernel(grid.points[:, None], self.nodes[None, :]), dtype=float)
        U = np.broadcast_to(U, (n_modes, n_modes + 2))
        if np.any(U < 0):
            raise InvalidParameter("regularizing kernel must be nonnegative")
        self.matrix = U * w                      # (N, N+2), weights folded in
        self.c_U = float(self.matrix.sum(axis=1).min())
        if self.c_U <= 0:
            raise InvalidParameter("kernel mass lower bound c_U must be positive")
        self._grid = grid

    def apply_values(self, values) -> np.ndarray:
        """Coefficients of ``L g`` from ``g`` sampled at the ``N+2`` nodes."""
        return self._grid.to_coeffs(np.asarray(values) @ self.matrix.T, as_array=True)

    def apply(self, field: SpectralField | Callable) -> SpectralField:
        if isinstance(field, SpectralField):
            vals = node_matrix(self.n_modes) @ field.coeffs
        else:
            vals = field(self.nodes)
        return SpectralField(self.apply_values(vals))


def averaging_kernel(n_modes: int = DEFAULT_N_MODES) -> KernelOperator:
    """``U = 1``, so ``L g`` is the mean of ``g`` and ``c_U = 1``."""
    return KernelOperator(lambda xi, eta: np.ones(np.broadcast(xi, eta).shape), n_modes,
                          name="averaging")


def gaussian_kernel(n_modes: int = DEFAULT_N_MODES, sigma: float = 0.1) -> KernelOperator:
    return KernelOperator(lambda xi, eta: np.exp(-(xi - eta) ** 2 / (2 * sigma**2)), n_modes,
                          name=f"gaussian(sigma={sigma})")


def make_kernel(name: str, n_modes: int = DEFAULT_N_MODES) -> KernelOperator:
    if name == "averaging":
        return averaging_kernel(n_modes)
    if name == "gaussian":
        return gaussian_kernel(n_modes)
    raise InvalidParameter(f"unknown kernel {name!r}")


def node_matrix(n_modes: int) -> np.ndarray:
    """Sine matrix at ``eta_k = k/(N+1)``, ``k = 0..N+1``; boundary rows are zero."""
    A = sine_matrix(np.arange(n_modes + 2) / (n_modes + 1), n_modes)
    A[[0, -1]] = 0.0
    return A


IDENTITY = None  # marker selecting the Nemytskii equation


@dataclass(frozen=True)
class CoefficientMap:
    """``G_i(y) = B f_i(A y)`` and its derivatives in coefficient space."""

    A: np.ndarray
    B: np.ndarray
    family: NemytskiiFamily
    kernel: KernelOperator | None = None

    @classmethod
    def build(cls, family: NemytskiiFamily, kernel: KernelOperator | None, n_modes: int):
        if kernel is None:
            A = fine_grid_matrix(n_modes)
            return cls(np.asarray(A), A.T / (2 * n_modes + 2), family, None)
        if kernel.n_modes != n_modes:
            raise ShapeError(f"kernel built for {kernel.n_modes} modes, field has {n_modes}")
        B = CollocationGrid(n_modes).matrix.T / (n_modes + 1) @ kernel.matrix
        return cls(node_matrix(n_modes), B, family, kernel)

    @property
    def dim(self):
        return self.family.dim

    def nodes(self, y):
        return y @ self.A.T

    def G(self, y, order: int = 0):
        """``(..., d, N)``: ``B f_i^{(order)}(A y)`` for every component."""
        u = self.nodes(y)
        return np.stack([self.family.derivative(order, i, u) @ self.B.T
                         for i in range(self.dim)], axis=-2)

    def node_derivatives(self, y, order: int = 1):
        """``(..., d, n_nodes)``: ``f_i^{(order)}(A y)``."""
        u = self.nodes(y)
        return np.stack([self.family.derivative(order, i, u) for i in range(self.dim)],
                        axis=-2)

    def field(self, y_field: SpectralField, i: int = 0) -> SpectralField:
        return SpectralField(self.G(y_field.coeffs)[i])


# -------------------------------------------------------------------- config

@dataclass(frozen=True)
class SolverConfig:
    n_modes: int = DEFAULT_N_MODES
    time_steps: int = 1024
    horizon: float = 1.0
    kappa: float = 0.45
    gamma: float = 0.70
    scheme: str = "exp-euler-left"
    tolerance: float = 1e-10

    def validate(self, nemytskii: bool = True) -> "SolverConfig":
        if self.n_modes < 1 or self.time_steps < 1:
            raise InvalidParameter("n_modes and time_steps must be positive")
        if self.horizon <= 0:
            raise InvalidParameter("horizon must be positive")
        if not 0.5 < self.gamma < 1:
            raise InvalidParameter(f"gamma must lie in (1/2, 1), got {self.gamma}")
        lo = max(1.0 - self.gamma, 0.25)
        if nemytskii and not (lo < self.kappa < 0.5):
            raise InvalidParameter(
                f"kappa must lie in (max(1-gamma, 1/4), 1/2) = ({lo}, 0.5), got {self.kappa}")
        if self.scheme != "exp-euler-left":
            raise InvalidParameter(f"unknown scheme {self.scheme!r}")
        return self

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


# ------------------------------------------------------------------- kernels

def euler_batch(phi, cmap: CoefficientMap, dx, decay):
    """Advance an ensemble: ``phi`` ``(P, N)``, ``dx`` ``(P, M, d)``.

    Returns ``(Y, fail_step)`` with ``Y`` ``(P, M+1, N)`` and ``fail_step[p]``
    the first step with a non-finite field (``-1`` if none).
    """
    P, M, d = dx.shape
    N = decay.size
    Y = np.empty((P, M + 1, N))
    Y[:, 0] = phi
    y = Y[:, 0].copy()
    BT = cmap.B.T
    fam = cmap.family
    for k in range(M):
        u = y @ cmap.A.T
        inc = np.zeros_like(y)
        for i in range(d):
            inc += (fam.derivative(0, i, u) * dx[:, k, i:i + 1]) @ BT
        y = decay * (y + inc)
        Y[:, k + 1] = y
    bad = ~np.isfinite(Y).all(axis=2)
    fail = np.where(bad.any(axis=1), bad.argmax(axis=1), -1)
    return Y, fail


def linear_euler_batch(w, Y, cmap: CoefficientMap, dx, decay, k0: int = 0):
    """``v_k = w_k + I_k``, ``I_{k+1} = S_dt (I_k + sum_i G_i'(y_k) v_k dx^i_k)``.

    ``w`` and ``Y`` are ``(P, M+1, N)`` on the full grid; the result is zero
    before ``k0``.
    """
    P, M, d = dx.shape
    V = np.zeros_like(w)
    V[:, k0] = w[:, k0]
    I = np.zeros((P, decay.size))
    BT = cmap.B.T
    for k in range(k0, M):
        fp = cmap.node_derivatives(Y[:, k], 1)          # (P, d, n_nodes)
        av = V[:, k] @ cmap.A.T
        inc = np.zeros_like(I)
        for i in range(d):
            inc += (fp[:, i] * av * dx[:, k, i:i + 1]) @ BT
        I = decay * (I + inc)
        V[:, k + 1] = w[:, k + 1] + I
    return V


def _check_fields(phi: SpectralField, x: DriverPath, cmap: CoefficientMap):
    if x.dim != cmap.dim:
        raise ShapeError(f"driver has {x.dim} components, coefficients {cmap.dim}")


def solve(phi: SpectralField, f: NemytskiiFamily, L: KernelOperator | None, x: DriverPath,
          cfg: SolverConfig | None = None) -> FieldPath:
    """Left-point exponential Euler solution on the driver's grid.

    ``L=None`` selects the Nemytskii equation.  A constant driver returns the
    exact semigroup orbit.
    """
    if cfg is not None:
        cfg.validate(nemytskii=L is None)
    cmap = CoefficientMap.build(f, L, phi.n_modes)
    _check_fields(phi, x, cmap)
    if x.is_constant():
        return FieldPath.semigroup_orbit(phi, x.times)
    decay = semigroup_factors(phi.n_modes, x.dt)
    Y, fail = euler_batch(phi.coeffs[None], cmap, x.increments()[None], decay)
    if fail[0] >= 0:
        raise BlowUpError(int(fail[0]))
    return FieldPath(x.times, Y[0])


def _window_w(w: FieldPath, y: FieldPath, k0: int) -> np.ndarray:
    if len(w) == len(y):
        return w.coeffs
    if len(w) == len(y) - k0:
        full = np.zeros_like(y.coeffs)
        full[k0:] = w.coeffs
        return full
    raise ShapeError("w must cover the full grid or the window [t0, T]")


def solve_linear(w: FieldPath, y: FieldPath, f: NemytskiiFamily, L: KernelOperator | None,
                 x: DriverPath, t0: float = 0.0) -> FieldPath:
    """``v_t = w_t + int_{t0}^t S_{t-u} G_i'(y_u) v_u dx^i_u`` on ``[t0, T]``."""
    from .young import grid_index
    cmap = CoefficientMap.build(f, L, y.n_modes)
    if x.dim != cmap.dim:
        raise ShapeError("driver / coefficient dimension mismatch")
    if len(y) != x.times.size:
        raise ShapeError("y and the driver use different grids")
    k0 = grid_index(x.times, t0)
    w_full = _window_w(w, y, k0)
    if x.is_constant():
        return FieldPath(x.times[k0:], w_full[k0:])
    decay = semigroup_factors(y.n_modes, x.dt)
    V = linear_euler_batch(w_full[None], y.coeffs[None], cmap, x.increments()[None], decay, k0)
    if not np.all(np.isfinite(V[0, k0:])):
        bad = int(np.argmax(~np.isfinite(V[0, k0:]).all(axis=1))) + k0
        raise BlowUpError(bad)
    return FieldPath(x.times[k0:], V[0, k0:])


def picard_oracle(phi: SpectralField, f: NemytskiiFamily, L: KernelOperator | None,
                  x: DriverPath, cfg: SolverConfig | None = None, max_iter: int = 200,
                  tol: float | None = None, full_output: bool = False):
    """Fixed point of ``y -> S_. phi + int_0^. S_{.-u} G(y_u) dx_u`` (right-point sums
    on the full driver grid).  Independent of :func:`solve`; used as an oracle.
    """
    tol = (cfg.tolerance if cfg is not None else 1e-10) if tol is None else tol
    cmap = CoefficientMap.build(f, L, phi.n_modes)
    _check_fields(phi, x, cmap)
    y = FieldPath.semigroup_orbit(phi, x.times)
    history = []
    for _ in range(max_iter):
        G = cmap.G(y.coeffs)                               # (n, d, N)
        z = [FieldPath(x.times, G[:, i]) for i in range(cmap.dim)]
        new = conv_path(z, x, phi, rule="right")
        if not np.all(np.isfinite(new.coeffs)):
            raise BlowUpError(int(np.argmax(~np.isfinite(new.coeffs).all(axis=1))))
        dist = float(np.max(np.linalg.norm(new.coeffs - y.coeffs, axis=1)))
        history.append(dist)
        y = new
        if dist < tol:
            return (y, history) if full_output else y
    raise NonConvergence(f"Picard iteration did not contract in {max_iter} iterations",
                         history)


def initial_norm(phi: SpectralField, gamma: float) -> float:
    """``||phi||_{B_{2+gamma}}``, the size of the initial datum in the a-priori bounds."""
    return sobolev_norm(phi, 2.0 + gamma)


def field_path_to_csv(y: FieldPath, path, mode: str = "coeffs", manifest=None):
    """Columns ``time`` then ``c_1..c_N`` (``mode="coeffs"``) or the values
    ``u_1..u_N`` at the collocation points ``j/(N+1)`` (``mode="grid"``)."""
    from .csvio import write_csv
    N = y.n_modes
    if mode == "coeffs":
        header, data = [f"c_{n + 1}" for n in range(N)], y.coeffs
    elif mode == "grid":
        header, data = [f"u_{j + 1}" for j in range(N)], CollocationGrid(N).to_grid(y.coeffs)
    else:
        raise InvalidParameter(f"unknown export mode {mode!r}")
    return write_csv(path, ["time"] + header, np.column_stack([y.times, data]), manifest)
