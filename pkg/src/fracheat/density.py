"""Monte-Carlo ensembles of the regularized equation and what is measured on them.

Path ``p`` of an ensemble with master seed ``s`` draws its fBm from
``SeedSequence([s, p])``, so any subset of paths can be regenerated alone
and the outcome never depends on chunking or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateDerivative, EnsembleInvalid, InvalidParameter
from .fbm import DEFAULT_HURST, DriverPath, sample_paths
from .malliavin import adjoint_batch, evaluation_row, flow_terminals, h_norms_batch
from .solver import (CoefficientMap, SolverConfig, default_family, euler_batch,
                     linear_euler_batch, make_kernel, sine_family)
from .spectral import SpectralField, eigenvalues, semigroup_factors, sobolev_weights
from .young import FieldPath

BOUND_IDS = ("poly-4.10", "lin-4.14", "lin-4.15", "flow-4.20", "sewing-2.11")
MULTIPLICATIVE = ("poly-4.10", "sewing-2.11")
FAMILIES = ("bump", "sine")
CHUNK = 64
MAX_SCAN_POINTS = 257


@dataclass(frozen=True)
class ExperimentConfig:
    n_paths: int = 1000
    seed: int = 42
    hurst: float = DEFAULT_HURST
    solver: SolverConfig = field(default_factory=SolverConfig)
    xi: float = 0.5
    family: str = "bump"
    amplitude: float = 5.0
    lambda0: float = 0.5
    dim: int = 1
    kernel: str = "averaging"
    bounds: tuple = BOUND_IDS
    bandwidth: str | float = "rule-of-thumb"
    phi_scale: float = 0.5
    s_stride: int = 4
    sampler: str = "factorization"

    def validate(self) -> "ExperimentConfig":
        self.solver.validate(nemytskii=False)
        if self.n_paths < 2:
            raise InvalidParameter("n_paths must be at least 2")
        if not 0 < self.xi < 1:
            raise InvalidParameter(f"xi must lie in (0, 1), got {self.xi}")
        if not 0.5 < self.hurst < 1:
            raise InvalidParameter(f"hurst must lie in (1/2, 1), got {self.hurst}")
        if self.solver.gamma >= self.hurst:
            raise InvalidParameter("gamma must be smaller than hurst")
        if self.solver.horizon != 1.0:
            raise InvalidParameter("regularized runs use horizon T = 1")
        if self.family not in FAMILIES:
            raise InvalidParameter(f"unknown family {self.family!r}")
        if self.dim < 1:
            raise InvalidParameter("dim must be positive")
        if self.kernel not in ("averaging", "gaussian"):
            raise InvalidParameter(f"unknown kernel {self.kernel!r}")
        for b in self.bounds:
            if b not in BOUND_IDS:
                raise InvalidParameter(f"unknown bound id {b!r}")
        if self.bandwidth != "rule-of-thumb" and not (
                isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0):
            raise InvalidParameter("bandwidth must be 'rule-of-thumb' or a positive number")
        if self.s_stride < 1 or self.solver.time_steps % self.s_stride:
            raise InvalidParameter("s_stride must divide time_steps")
        if self.sampler not in ("factorization", "volterra"):
            raise InvalidParameter(f"unknown sampler {self.sampler!r}")
        return self

    def with_(self, **kw) -> "ExperimentConfig":
        solver_keys = set(SolverConfig.__dataclass_fields__)
        s_kw = {k: kw.pop(k) for k in list(kw) if k in solver_keys}
        cfg = replace(self, **kw)
        return replace(cfg, solver=replace(cfg.solver, **s_kw)) if s_kw else cfg

    def coefficient_family(self):
        if self.family == "bump":
            return default_family(self.dim, self.lambda0, self.amplitude)
        return sine_family(self.dim, self.amplitude)

    def base_phi(self) -> SpectralField:
        """``phi_scale * sin(pi xi)``."""
        c = np.zeros(self.solver.n_modes)
        c[0] = self.phi_scale / math.sqrt(2.0)
        return SpectralField(c)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("FRACHEAT_THREADS", "")
        threads = int(env) if env.strip() else (os.cpu_count() or 1)
    if threads < 1:
        raise InvalidParameter("threads must be positive")
    return int(threads)


# ------------------------------------------------------------------ ensembles

@dataclass
class EnsembleResult:
    """Per-path records; arrays are indexed like ``path_index`` (failed paths removed)."""

    config: ExperimentConfig
    path_index: np.ndarray
    samples: np.ndarray
    failures: list
    x_holder: np.ndarray
    phi_norm: np.ndarray
    terminal: np.ndarray | None = None
    sup_norm: np.ndarray | None = None
    h_norm: np.ndarray | None = None
    s_times: np.ndarray | None = None
    entries: np.ndarray | None = None
    bound_data: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.samples.size


def _phi_scales(cfg: ExperimentConfig, idx, randomize: bool):
    if not randomize:
        return np.ones(len(idx))
    # a separate stream per path so the driver draws stay untouched
    return np.array([np.random.default_rng(np.random.SeedSequence([cfg.seed, int(p), 1])).uniform()
                     for p in idx])


def _scan_stride(M: int) -> int:
    stride = 1
    while M // stride + 1 > MAX_SCAN_POINTS and M % (2 * stride) == 0:
        stride *= 2
    return stride


def _run_chunk(cfg: ExperimentConfig, start: int, count: int, malliavin: bool, bounds: bool,
               zero_driver: bool):
    sc = cfg.solver
    N, M = sc.n_modes, sc.time_steps
    idx = np.arange(start, start + count)
    if zero_driver:
        X = np.zeros((count, M + 1, cfg.dim))
    else:
        X = sample_paths(count, M, cfg.hurst, cfg.dim, cfg.seed, cfg.sampler, sc.horizon, start)
    dx = np.diff(X, axis=1)
    times = np.linspace(0.0, sc.horizon, M + 1)
    family = cfg.coefficient_family()
    L = make_kernel(cfg.kernel, N)
    cmap = CoefficientMap.build(family, L, N)
    decay = semigroup_factors(N, sc.horizon / M)
    scales = _phi_scales(cfg, idx, bounds)
    phi0 = cfg.base_phi().coeffs
    phis = scales[:, None] * phi0
    alpha = 2.0 + sc.gamma
    w_alpha = sobolev_weights(N, alpha)
    out = {"idx": idx, "phi_norm": np.linalg.norm(phis * w_alpha, axis=1)}
    Y, fail = euler_batch(phis, cmap, dx, decay)
    row = evaluation_row(cfg.xi, N)
    out["fail"] = fail
    out["samples"] = Y[:, -1] @ row
    out["x_holder"] = np.array([kernels.holder_scan(X[p], times, sc.gamma) for p in range(count)])
    ok = fail < 0
    if malliavin:
        ent = np.full((count, M + 1, cfg.dim), np.nan)
        if ok.any():
            ent[ok] = adjoint_batch(Y[ok], dx[ok], cmap, decay, row)
        coarse = ent[:, ::cfg.s_stride]
        out["terminal"] = ent[:, -1]
        out["sup_norm"] = np.max(np.max(np.abs(ent), axis=2), axis=1)
        out["entries"] = coarse
        out["h_norm"] = h_norms_batch(coarse, times[::cfg.s_stride], cfg.hurst)
    if bounds:
        out["bounds"] = _bound_terms(cfg, Y, X, dx, cmap, decay, phis, ok)
    return out


def _scan(coeffs, w, lam, dt, kappa):
    return kernels.field_scan(coeffs, w, lam, dt, kappa)


def _bound_terms(cfg, Y, X, dx, cmap, decay, phis, ok):
    """Left- and right-hand side ingredients of the a-priori bounds, per path."""
    sc = cfg.solver
    N, M = sc.n_modes, sc.time_steps
    g = sc.gamma
    alpha = 2.0 + g
    w_alpha = sobolev_weights(N, alpha)
    lam = eigenvalues(N)
    zero = np.zeros(N)
    st = _scan_stride(M)
    dts = sc.horizon / M * st
    times = np.linspace(0.0, sc.horizon, M + 1)
    P = Y.shape[0]
    res = {k: np.full(P, np.nan) for k in
           ("hatY", "zC0", "zhat", "psi", "flow", "Gc0", "Ghol")}
    psi = 0.5 * SpectralField.basis(2, N).coeffs
    res["psi"][:] = np.linalg.norm(psi * w_alpha)
    if not ok.any():
        return res
    orbit = FieldPath.semigroup_orbit(SpectralField(psi), times).coeffs
    W = np.broadcast_to(orbit, (int(ok.sum()), M + 1, N)).copy()
    Z = np.full_like(Y, np.nan)
    Z[ok] = linear_euler_batch(W, Y[ok], cmap, dx[ok], decay)
    src = np.arange(0, M + 1, cfg.s_stride)
    for p in np.flatnonzero(ok):
        yc = Y[p, ::st]
        _, _, res["hatY"][p] = _scan(yc, w_alpha, lam, dts, g)
        res["zC0"][p], _, res["zhat"][p] = _scan(Z[p, ::st], w_alpha, lam, dts, g)
        G = cmap.G(yc)                                     # (n, d, N)
        c0s, hols = [], []
        for i in range(cmap.dim):
            c0, hol, _ = _scan(G[:, i], w_alpha, zero, dts, g)
            c0s.append(c0)
            hols.append(hol)
        res["Gc0"][p], res["Ghol"][p] = max(c0s), max(hols)
        yp = FieldPath(times, Y[p])
        xp = DriverPath(times, X[p], cfg.hurst)
        fields = flow_terminals(yp, xp, cmap, src)
        best = 0.0
        for i in range(cmap.dim):
            best = max(best, _scan(fields[:, i], w_alpha, zero, sc.horizon / M * cfg.s_stride,
                                   g)[1])
        res["flow"][p] = best
    return res


def run_ensemble(cfg: ExperimentConfig, malliavin: bool = True, bounds: bool = False,
                 threads: int | None = None, zero_driver: bool = False,
                 max_failure_rate: float = 0.01) -> EnsembleResult:
    """Solve ``n_paths`` independent paths and collect per-path summaries.

    ``bounds=True`` also draws a per-path random scale in ``[0, 1)`` for the
    initial datum and records everything :func:`verify_bound` needs.
    ``zero_driver`` replaces the fBm by the constant path.
    """
    cfg.validate()
    starts = list(range(0, cfg.n_paths, CHUNK))
    jobs = [(s, min(CHUNK, cfg.n_paths - s)) for s in starts]
    n_threads = resolve_threads(threads)
    if n_threads == 1 or len(jobs) == 1:
        parts = [_run_chunk(cfg, s, c, malliavin, bounds, zero_driver) for s, c in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            parts = list(ex.map(lambda j: _run_chunk(cfg, j[0], j[1], malliavin, bounds,
                                                     zero_driver), jobs))
    cat = {k: np.concatenate([p[k] for p in parts]) for k in parts[0] if k != "bounds"}
    fail = cat["fail"]
    failures = [(int(i), int(s)) for i, s in zip(cat["idx"], fail) if s >= 0]
    if len(failures) > max_failure_rate * cfg.n_paths:
        raise EnsembleInvalid(f"{len(failures)} of {cfg.n_paths} paths blew up "
                              f"(first at path {failures[0][0]}, step {failures[0][1]})")
    ok = fail < 0
    res = EnsembleResult(cfg, cat["idx"][ok], cat["samples"][ok], failures,
                         cat["x_holder"][ok], cat["phi_norm"][ok])
    if malliavin:
        res.terminal = cat["terminal"][ok]
        res.sup_norm = cat["sup_norm"][ok]
        res.h_norm = cat["h_norm"][ok]
        res.entries = cat["entries"][ok]
        res.s_times = np.linspace(0.0, cfg.solver.horizon, cfg.solver.time_steps + 1)[
            ::cfg.s_stride]
    if bounds:
        b = {k: np.concatenate([p["bounds"][k] for p in parts])[ok] for k in parts[0]["bounds"]}
        res.bound_data = bound_inputs(b, res.x_holder, res.phi_norm, cfg.solver.gamma)
    return res


def bound_inputs(b, xg, phin, gamma):
    """Turn raw norms into ``(lhs, rhs)`` pairs (multiplicative bounds) or
    ``(log_lhs, X)`` pairs (envelope bounds), keyed by bound id."""
    X = np.maximum(np.sqrt(phin), xg ** (1.0 / gamma))
    with np.errstate(divide="ignore"):
        return {
            "poly-4.10": (b["hatY"], (1.0 + xg) * X ** (1.0 - gamma)),
            "sewing-2.11": (b["hatY"], xg * (b["Gc0"] + b["Ghol"])),
            "lin-4.14": (np.log(b["zC0"] / b["psi"]), X),
            "lin-4.15": (np.log(b["zhat"] / (b["psi"] * X)), X),
            "flow-4.20": (np.log(b["flow"]), X),
        }


# ---------------------------------------------------------------- bound checks

class BoundReport(NamedTuple):
    bound_id: str
    constants: dict
    train_coverage: float
    validate_coverage: float
    max_ratio: float
    n_train: int
    n_validate: int


def verify_bound(bound_id: str, data, seed: int = 0) -> BoundReport:
    """Fit a bound's constants on a random half and measure held-out coverage.

    Multiplicative bounds ``lhs <= C rhs`` take ``C`` as the largest training
    ratio.  Envelope bounds ``log lhs <= a + b X`` take ``b`` as the
    nonnegative part of the least-squares slope and ``a`` as the largest
    training residual.  ``max_ratio`` is the largest ``lhs / bound`` over all
    paths.
    """
    if bound_id not in BOUND_IDS:
        raise InvalidParameter(f"unknown bound id {bound_id!r}")
    bd = data.bound_data if isinstance(data, EnsembleResult) else data
    a_arr, b_arr = (np.asarray(v, dtype=float) for v in bd[bound_id])
    n = a_arr.size
    if n < 4:
        raise InvalidParameter("need at least 4 paths to split")
    perm = np.random.default_rng(np.random.SeedSequence([int(seed), 7])).permutation(n)
    tr, va = np.sort(perm[: n // 2]), np.sort(perm[n // 2:])
    tol = 1e-12
    if bound_id in MULTIPLICATIVE:
        lhs, rhs = a_arr, b_arr
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(lhs == 0, 0.0, lhs / rhs)
        C = float(np.max(ratio[tr]))
        covered = lhs <= C * rhs * (1 + tol) + tol
        consts = {"C": C}
        max_ratio = float(np.max(ratio) / C) if C > 0 else 0.0
    else:
        y, X = a_arr, b_arr
        if np.ptp(X[tr]) > 0:
            slope = float(np.polyfit(X[tr], y[tr], 1)[0])
        else:
            slope = 0.0
        slope = max(slope, 0.0)
        a0 = float(np.max(y[tr] - slope * X[tr]))
        covered = y <= a0 + slope * X + tol
        consts = {"a": a0, "b": slope}
        max_ratio = float(np.exp(np.max(y - (a0 + slope * X))))
    return BoundReport(bound_id, consts, float(covered[tr].mean()), float(covered[va].mean()),
                       max_ratio, tr.size, va.size)


# ----------------------------------------------------------------------- KDE

@dataclass(frozen=True)
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float
    n_samples: int

    def integral(self) -> float:
        return float(np.trapezoid(self.density, self.grid))

    def __call__(self, pts):
        return np.interp(pts, self.grid, self.density)


def rule_of_thumb(samples) -> float:
    s = np.asarray(samples, dtype=float)
    sd = float(np.std(s, ddof=1))
    if sd <= 0:
        raise InvalidParameter("rule-of-thumb bandwidth needs samples with positive spread")
    return 1.06 * sd * s.size ** (-0.2)


def kde(samples, bandwidth: float | None = None, n_grid: int = 512) -> DensityEstimate:
    """Gaussian-kernel density on a grid spanning the samples plus four bandwidths."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise InvalidParameter("kde needs at least 2 samples")
    h = rule_of_thumb(s) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise InvalidParameter(f"bandwidth must be positive, got {bandwidth}")
    lo, hi = s.min() - 4 * h, s.max() + 4 * h
    n = int(min(max(n_grid, math.ceil((hi - lo) / (h / 8)) + 1), 200001))
    grid = np.linspace(lo, hi, n)
    dens = np.zeros(n)
    for block in np.array_split(s, max(1, s.size // 256)):
        dens += np.exp(-0.5 * ((grid[:, None] - block[None, :]) / h) ** 2).sum(axis=1)
    dens /= s.size * h * math.sqrt(2 * math.pi)
    return DensityEstimate(grid, dens, h, s.size)


# ------------------------------------------------------------- inverse moments

class InverseMoment(NamedTuple):
    value: float
    half_value: float
    stable: bool


def inverse_moment_estimate(h_norms, p: float, rel_tol: float = 0.25) -> InverseMoment:
    """Sample mean of ``||D||^{-p}``, with the first half of the sample for comparison."""
    x = np.asarray(h_norms, dtype=float).ravel()
    if p < 0:
        raise InvalidParameter("p must be nonnegative")
    if x.size == 0 or np.any(~(x > 0)):
        raise DegenerateDerivative("inverse moments need strictly positive H-norms")
    v = x ** (-float(p))
    full = float(v.mean())
    half = float(v[: max(1, x.size // 2)].mean())
    return InverseMoment(full, half, bool(abs(half - full) <= rel_tol * full))


# ------------------------------------------------------------------ small balls

def small_ball_diagnostic(entries, times, epsilons: Sequence[float], alpha: float, beta: float,
                          hurst: float):
    """Rows ``(eps, P[||D||_inf < eps^alpha], P[||D||_beta > eps^{-alpha}])``.

    ``entries`` is ``(P, n_s, d)`` on the source grid ``times``; ``||D||_beta``
    is the all-pairs ``beta``-Hölder constant of ``s -> D_s``.
    """
    if not beta > hurst - 0.5:
        raise InvalidParameter(f"beta must exceed H - 1/2 = {hurst - 0.5}")
    entries = np.asarray(entries, dtype=float)
    sup = np.max(np.max(np.abs(entries), axis=2), axis=1)
    hol = np.array([kernels.holder_scan(e, times, beta) for e in entries])
    rows = []
    for eps in epsilons:
        thr = eps ** alpha
        rows.append((float(eps), float(np.mean(sup < thr)), float(np.mean(hol > 1.0 / thr))))
    return np.array(rows)
