"""Flows, directional derivatives and the Malliavin derivative of ``Y_1(xi)``.

The flow ``Psi^i_{t,s}`` solves the linearized equation started at time ``s``
from ``G_i(Y_s)``.  On the Euler grid it is a product of one-step Jacobians

    A_m = S_dt (I + sum_j dx^j_m B diag(f_j'(A Y_m)) A),

so ``Psi^i_{1,s_k} = A_{M-1} ... A_k G_i(Y_k)``.  Evaluating at a point only
needs the row ``e(xi) A_{M-1} ... A_k``, which one backward sweep produces for
every ``k`` at once.  :func:`fracheat.kernels.flows_from_sources` runs the
flows forward from each source instead and serves as the cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .csvio import write_csv
from .errors import InvalidParameter, ShapeError
from .fbm import DriverPath, StepFunction, h_gram
from .solver import (CoefficientMap, KernelOperator, NemytskiiFamily, SolverConfig,
                     linear_euler_batch, solve, solve_linear)
from .spectral import (SpectralField, evaluate, semigroup_factors, sine_matrix,
                       sobolev_weights)
from .young import FieldPath, grid_index


@dataclass(frozen=True)
class FlowField:
    """``Psi^i_{., s}`` on ``[s, T]`` for each driver component ``i``."""

    source_time: float
    paths: tuple

    @property
    def dim(self) -> int:
        return len(self.paths)

    def at(self, t: float, i: int = 0) -> SpectralField:
        return self.paths[i].at(t)


def flow_field(Y: FieldPath, x: DriverPath, f: NemytskiiFamily, L: KernelOperator | None,
               s: float) -> FlowField:
    """Solve the linear equation on ``[s, T]`` with ``w_t = S_{t-s} G_i(Y_s)``."""
    cmap = CoefficientMap.build(f, L, Y.n_modes)
    k0 = grid_index(x.times, s)
    G = cmap.G(Y.coeffs[k0])
    paths = []
    for i in range(cmap.dim):
        w = FieldPath.semigroup_orbit(SpectralField(G[i]), x.times[k0:] - x.times[k0])
        paths.append(solve_linear(FieldPath(x.times[k0:], w.coeffs), Y, f, L, x, s))
    return FlowField(float(x.times[k0]), tuple(paths))


# ------------------------------------------------------------ Malliavin matrix

@dataclass(frozen=True)
class MalliavinMatrix:
    """``entries[k, i] = D^i_{s_k} Y_T(xi) = Psi^i_{T, s_k}(xi)``."""

    xi: float
    times: np.ndarray
    entries: np.ndarray
    hurst: float | None = None

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def terminal(self) -> np.ndarray:
        return self.entries[-1].copy()

    def coarse(self, stride: int) -> "MalliavinMatrix":
        n = self.times.size - 1
        if stride < 1 or n % stride:
            raise InvalidParameter(f"stride {stride} does not divide {n} steps")
        return MalliavinMatrix(self.xi, self.times[::stride], self.entries[::stride], self.hurst)

    def to_csv(self, path, manifest=None):
        header = ["s"] + [f"comp_{i + 1}" for i in range(self.dim)]
        return write_csv(path, header, np.column_stack([self.times, self.entries]), manifest)


def evaluation_row(xi: float, n_modes: int) -> np.ndarray:
    if not 0 < xi < 1:
        raise InvalidParameter(f"xi must lie in (0, 1), got {xi}")
    return sine_matrix(np.array([float(xi)]), n_modes)[0]


def adjoint_batch(Y, dx, cmap: CoefficientMap, decay, row):
    """``(P, M+1, d)`` Malliavin entries for an ensemble by one backward sweep.

    ``Y`` is ``(P, M+1, N)``; ``row`` the evaluation row ``e(xi)``.
    """
    P, M, d = dx.shape
    out = np.empty((P, M + 1, d))
    r = np.broadcast_to(row, (P, row.size)).copy()
    out[:, M] = np.einsum("pn,pin->pi", r, cmap.G(Y[:, M]))
    for k in range(M - 1, -1, -1):
        u = cmap.nodes(Y[:, k])
        rs = r * decay                                     # r_{k+1} S
        rb = rs @ cmap.B                                   # (P, n_nodes)
        acc = np.zeros_like(rb)
        Gk = np.empty((P, d, decay.size))
        for j in range(d):
            acc += rb * cmap.family.derivative(1, j, u) * dx[:, k, j:j + 1]
            Gk[:, j] = cmap.family.derivative(0, j, u) @ cmap.B.T
        r = rs + acc @ cmap.A
        out[:, k] = np.einsum("pn,pin->pi", r, Gk)
    return out


def flow_terminals(Y: FieldPath, x: DriverPath, cmap: CoefficientMap, sources) -> np.ndarray:
    """``Psi^i_{T, s_k}`` as ``(n_src, d, N)`` by forward propagation from each source."""
    sources = np.asarray(sources, dtype=np.int64)
    start = cmap.G(Y.coeffs[sources])                      # (n_src, d, N)
    fprime = cmap.node_derivatives(Y.coeffs[:-1], 1)       # (M, d, n_nodes)
    return kernels.flows_from_sources(semigroup_factors(Y.n_modes, x.dt), cmap.A, cmap.B,
                                      fprime, x.increments(), start, sources)


def malliavin_matrix(Y: FieldPath, x: DriverPath, f: NemytskiiFamily,
                     L: KernelOperator | None, xi: float, method: str = "adjoint",
                     stride: int = 1) -> MalliavinMatrix:
    """Entries ``Psi^i_{T,s}(xi)`` for every ``stride``-th grid source time."""
    if len(Y) != x.times.size:
        raise ShapeError("Y and the driver use different grids")
    cmap = CoefficientMap.build(f, L, Y.n_modes)
    row = evaluation_row(xi, Y.n_modes)
    M = x.n_steps
    if M % stride:
        raise InvalidParameter(f"stride {stride} does not divide {M} steps")
    if method == "adjoint":
        ent = adjoint_batch(Y.coeffs[None], x.increments()[None], cmap,
                            semigroup_factors(Y.n_modes, x.dt), row)[0][::stride]
    elif method == "direct":
        src = np.arange(0, M + 1, stride)
        ent = flow_terminals(Y, x, cmap, src) @ row
    else:
        raise InvalidParameter(f"unknown method {method!r}")
    # the s = T row is the flow's initial value; take it straight from the field
    G = cmap.G(Y.coeffs[-1])
    ent[-1] = [evaluate(SpectralField(G[i]), xi) for i in range(cmap.dim)]
    return MalliavinMatrix(float(xi), x.times[::stride].copy(), ent, x.hurst)


# ------------------------------------------------------ directional derivatives

def _left_conv(incs, decay):
    """``w_0 = 0``, ``w_{k+1} = S_dt (w_k + incs_k)``."""
    P, M, N = incs.shape
    w = np.zeros((P, M + 1, N))
    for k in range(M):
        w[:, k + 1] = decay * (w[:, k] + incs[:, k])
    return w


def _same_grid(*paths: DriverPath):
    ref = paths[0]
    for p in paths[1:]:
        if p.times.shape != ref.times.shape or not np.allclose(p.times, ref.times):
            raise ShapeError("paths live on different grids")
        if p.dim != ref.dim:
            raise ShapeError("paths have different dimensions")


def tangent_batch(Y, dx, dh, cmap: CoefficientMap, decay):
    """``z_{k+1} = S_dt (z_k + G'(y_k) z_k dx_k + G(y_k) dh_k)`` for an ensemble."""
    G = cmap.G(Y[:, :-1])                                  # (P, M, d, N)
    w = _left_conv(np.einsum("pkin,pki->pkn", G, dh), decay)
    return linear_euler_batch(w, Y, cmap, dx, decay)


def directional_derivative(x: DriverPath, h: DriverPath, phi: SpectralField,
                           f: NemytskiiFamily, L: KernelOperator | None,
                           cfg: SolverConfig | None = None, Y: FieldPath | None = None) -> FieldPath:
    """``D Phi(x)(h)``: derivative of the discrete solution map along ``h``."""
    _same_grid(x, h)
    Y = solve(phi, f, L, x, cfg) if Y is None else Y
    cmap = CoefficientMap.build(f, L, phi.n_modes)
    decay = semigroup_factors(phi.n_modes, x.dt)
    z = tangent_batch(Y.coeffs[None], x.increments()[None], h.increments()[None], cmap, decay)
    return FieldPath(x.times, z[0])


def second_directional_derivative(x: DriverPath, h: DriverPath, k: DriverPath,
                                  phi: SpectralField, f: NemytskiiFamily,
                                  L: KernelOperator | None,
                                  cfg: SolverConfig | None = None) -> FieldPath:
    """``D^2 Phi(x)(h, k)``.  The forcing is assembled so that swapping ``h`` and
    ``k`` only swaps the two cross terms, which makes the result symmetric bit for bit.
    """
    _same_grid(x, h, k)
    Y = solve(phi, f, L, x, cfg)
    zh = directional_derivative(x, h, phi, f, L, Y=Y).coeffs
    zk = directional_derivative(x, k, phi, f, L, Y=Y).coeffs
    cmap = CoefficientMap.build(f, L, phi.n_modes)
    decay = semigroup_factors(phi.n_modes, x.dt)
    dx, dh, dk = x.increments(), h.increments(), k.increments()
    M = x.n_steps
    y = Y.coeffs[:-1]
    f1 = cmap.node_derivatives(y, 1)                       # (M, d, n)
    f2 = cmap.node_derivatives(y, 2)
    ah = zh[:-1] @ cmap.A.T                                # (M, n)
    ak = zk[:-1] @ cmap.A.T
    prod = ah * ak
    inc = np.zeros((M, phi.n_modes))
    for i in range(cmap.dim):
        cross = (f1[:, i] * ah * dk[:, i:i + 1]) @ cmap.B.T + (
            f1[:, i] * ak * dh[:, i:i + 1]) @ cmap.B.T
        inc += cross + (f2[:, i] * prod * dx[:, i:i + 1]) @ cmap.B.T
    w = _left_conv(inc[None], decay)
    z = linear_euler_batch(w, Y.coeffs[None], cmap, dx[None], decay)
    return FieldPath(x.times, z[0])


# ----------------------------------------------------- representation integral

def _flow_values(flows, t: float, xi: float):
    if isinstance(flows, MalliavinMatrix):
        if abs(flows.xi - xi) > 1e-12:
            raise InvalidParameter("matrix was evaluated at a different xi")
        if abs(flows.times[-1] - t) > 1e-9:
            raise InvalidParameter("matrix entries are flows to its final time only")
        return flows.times, flows.entries
    flows = sorted(flows, key=lambda fl: fl.source_time)
    times = np.array([fl.source_time for fl in flows])
    keep = times <= t + 1e-12
    vals = np.array([[fl.at(t, i)(xi) for i in range(fl.dim)]
                     for fl, kp in zip(flows, keep) if kp])
    return times[keep], vals


def representation_integral(flows: MalliavinMatrix | Sequence[FlowField], h: DriverPath,
                            t: float, xi: float, full_output: bool = False):
    """``sum_i int_0^t Psi^i_{t,u}(xi) dh^i_u`` by left-point sums.

    The sum is formed on the full source grid and on its dyadic coarsenings;
    ``full_output`` returns the whole refinement sequence.
    """
    s, vals = _flow_values(flows, t, xi)
    k1 = grid_index(h.times, t)
    hv = h.values[:k1 + 1]
    idx = np.array([grid_index(h.times, v) for v in s])
    if idx[0] != 0 or idx[-1] != k1:
        raise InvalidParameter("flows must cover source times from 0 to t")
    sums = []
    step = 1
    while True:
        sel = np.arange(0, idx.size, step)
        if sel[-1] != idx.size - 1:
            break
        dh = hv[idx[sel[1:]]] - hv[idx[sel[:-1]]]
        sums.append(float(np.sum(vals[sel[:-1]] * dh)))
        if sel.size <= 2:
            break
        step *= 2
    sums = sums[::-1]                                      # coarse to fine
    return (sums[-1], sums) if full_output else sums[-1]


# ---------------------------------------------------- H-norm and nondegeneracy

def malliavin_step_values(entries):
    """Cell values of the step function: the mean of the two endpoint entries."""
    return 0.5 * (entries[1:] + entries[:-1])


def malliavin_h_norm(matrix: MalliavinMatrix, hurst: float | None = None) -> float:
    """``(sum_i ||D^i Y||_H^2)^{1/2}`` with each component row read as a step function."""
    H = matrix.hurst if hurst is None else hurst
    if H is None:
        raise InvalidParameter("Hurst index unknown for this matrix")
    step = StepFunction(matrix.times, malliavin_step_values(matrix.entries))
    G = h_gram(step.breakpoints, H)
    q = float(np.einsum("pi,pq,qi->", step.values, G, step.values))
    return float(np.sqrt(max(q, 0.0)))


def h_norms_batch(entries, times, hurst: float):
    """H-norms for ``(P, n_s, d)`` entries sharing one source grid."""
    v = malliavin_step_values(np.moveaxis(entries, 1, 0))  # (n_s-1, P, d)
    G = h_gram(times, hurst)
    q = np.einsum("api,ab,bpi->p", v, G, v)
    return np.sqrt(np.maximum(q, 0.0))


class NondegeneracyReport(NamedTuple):
    min_terminal_entry: float
    passes: bool


def nondegeneracy_check(matrix: MalliavinMatrix | np.ndarray, c_U: float,
                        lambda_0: float) -> NondegeneracyReport:
    """Pass iff ``max_i |D^i_1 Y_1(xi)| >= c_U lambda_0 - 1e-8``.

    An array of terminal rows ``(P, d)`` reports the worst path.
    """
    term = matrix.terminal()[None] if isinstance(matrix, MalliavinMatrix) else np.atleast_2d(
        matrix)
    worst = float(np.min(np.max(np.abs(term), axis=1)))
    return NondegeneracyReport(worst, bool(worst >= c_U * lambda_0 - 1e-8))


def flow_holder_constant(Y: FieldPath, x: DriverPath, f: NemytskiiFamily,
                         L: KernelOperator | None, gamma: float, alpha: float,
                         stride: int = 4) -> float:
    """Largest ``gamma``-Hölder constant of ``s -> Psi^i_{T,s}`` in ``B_alpha`` over ``i``,
    scanned on every ``stride``-th source time."""
    cmap = CoefficientMap.build(f, L, Y.n_modes)
    src = np.arange(0, x.n_steps + 1, stride)
    fields = flow_terminals(Y, x, cmap, src)               # (n_src, d, N)
    w = sobolev_weights(Y.n_modes, alpha)
    best = 0.0
    for i in range(cmap.dim):
        _, hol, _ = kernels.field_scan(fields[:, i], w, np.zeros(Y.n_modes),
                                       x.dt * stride, gamma)
        best = max(best, hol)
    return best
