import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import norm

from fracheat import density
from fracheat.density import (BOUND_IDS, ExperimentConfig, inverse_moment_estimate, kde,
                              resolve_threads, run_ensemble, small_ball_diagnostic, verify_bound)
from fracheat.errors import DegenerateDerivative, EnsembleInvalid, InvalidParameter
from fracheat.solver import SolverConfig

SMALL = ExperimentConfig(n_paths=8, seed=5, solver=SolverConfig(n_modes=16, time_steps=64))


def test_ensemble_determinism():
    a = run_ensemble(SMALL, threads=1)
    b = run_ensemble(SMALL, threads=3)
    for k in ("samples", "h_norm", "sup_norm", "entries", "x_holder"):
        np.testing.assert_array_equal(getattr(a, k), getattr(b, k))
    assert a.n_samples == SMALL.n_paths - len(a.failures)


def test_ci_width_shrinks_like_sqrt_n():
    cfg = SMALL.with_(n_paths=200)
    widths = []
    for n in (200, 400):
        s = run_ensemble(cfg.with_(n_paths=n), malliavin=False).samples
        widths.append(2 * 1.96 * s.std(ddof=1) / math.sqrt(s.size))
    assert widths[1] / widths[0] == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_malliavin_summaries_respect_floor():
    res = run_ensemble(SMALL.with_(family="bump", lambda0=0.5))
    assert np.all(res.sup_norm >= 0.5 - 1e-8)
    assert np.all(res.h_norm > 0)
    assert res.entries.shape == (8, 64 // SMALL.s_stride + 1, 1)


def _fail_every_other(real):
    # bounded coefficients never overflow, so blow-ups are injected into the solver
    def run(phis, cmap, dx, decay):
        Y, fail = real(phis, cmap, dx, decay)
        fail = fail.copy()
        fail[::2] = 7
        return Y, fail
    return run


def test_failures_recorded_and_invalidate(monkeypatch):
    monkeypatch.setattr(density, "euler_batch", _fail_every_other(density.euler_batch))
    with pytest.raises(EnsembleInvalid):
        run_ensemble(SMALL, malliavin=False)
    res = run_ensemble(SMALL, malliavin=True, max_failure_rate=1.0)
    assert res.failures == [(i, 7) for i in range(0, 8, 2)]
    assert res.n_samples == SMALL.n_paths - len(res.failures)
    np.testing.assert_array_equal(res.path_index, [1, 3, 5, 7])


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("FRACHEAT_THREADS", "3")
    assert resolve_threads() == 3
    assert resolve_threads(2) == 2
    with pytest.raises(InvalidParameter):
        resolve_threads(0)


# --------------------------------------------------------------------- KDE

@given(st.lists(st.floats(-50, 50), min_size=2, max_size=60, unique=True),
       st.floats(0.05, 5.0))
def test_kde_mass(samples, bw):
    assert abs(kde(samples, bw).integral() - 1) <= 0.01


def _normal_dev(seed):
    est = kde(np.random.default_rng(seed).standard_normal(10_000))
    return np.max(np.abs(est.density - norm.pdf(est.grid)))


def test_kde_normal_oracle():
    # the 0.02 level is a statement about a typical draw: bias ~0.006 plus sampling
    # noise puts roughly one seed in twenty above it
    assert _normal_dev(1) <= 0.02
    assert np.mean([_normal_dev(s) <= 0.02 for s in range(100, 120)]) >= 0.9


def test_kde_identical_samples_single_bump():
    est = kde([1.5, 1.5], bandwidth=0.3)
    peak = np.argmax(est.density)
    assert est.grid[peak] == pytest.approx(1.5, abs=est.grid[1] - est.grid[0])
    d = np.diff(est.density)
    assert np.all(d[:peak - 1] >= 0) and np.all(d[peak + 1:] <= 0)
    assert est.density.max() == pytest.approx(1 / (0.3 * math.sqrt(2 * math.pi)), rel=1e-3)


@pytest.mark.parametrize("bw", [0.0, -1.0])
def test_kde_rejects_bandwidth(bw):
    with pytest.raises(InvalidParameter):
        kde([0.0, 1.0], bw)
    with pytest.raises(InvalidParameter):
        kde([0.0])


# ------------------------------------------------------------------ bounds

def test_verify_bound_unknown_id():
    with pytest.raises(InvalidParameter):
        verify_bound("poly-9.99", {})


def test_zero_driver_poly_bound_covered():
    cfg = SMALL.with_(n_paths=16)
    res = run_ensemble(cfg, malliavin=False, bounds=True, zero_driver=True)
    lhs, _ = res.bound_data["poly-4.10"]
    assert np.all(np.isfinite(lhs))
    rep = verify_bound("poly-4.10", res)
    assert rep.train_coverage == 1.0 and rep.validate_coverage == 1.0


def test_bound_report_shapes():
    res = run_ensemble(SMALL.with_(n_paths=40), malliavin=False, bounds=True)
    for b in BOUND_IDS:
        rep = verify_bound(b, res, seed=1)
        assert rep.n_train + rep.n_validate == 40
        assert rep.train_coverage == 1.0
        assert rep.max_ratio > 0
    rep = verify_bound("lin-4.15", res)
    assert set(rep.constants) == {"a", "b"} and rep.constants["b"] >= 0


# -------------------------------------------------------- inverse moments

@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=30))
def test_inverse_moment_p_zero(x):
    assert inverse_moment_estimate(x, 0).value == 1.0


@pytest.mark.parametrize("c,p", [(0.5, 1), (2.0, 2), (3.0, 4), (1.7, 2.5)])
def test_inverse_moment_constant_input(c, p):
    im = inverse_moment_estimate([c] * 10, p)
    assert im.value == pytest.approx(c ** -p, rel=1e-15) and im.stable


@pytest.mark.parametrize("bad", [[1.0, 0.0], [1.0, -2.0], [np.nan, 1.0], []])
def test_inverse_moment_rejects(bad):
    with pytest.raises(DegenerateDerivative):
        inverse_moment_estimate(bad, 1)


# ------------------------------------------------------------- small ball

def test_small_ball_columns():
    res = run_ensemble(SMALL.with_(n_paths=16))
    eps = [100.0, 10.0, 1.0, 0.1, 0.01]
    tab = small_ball_diagnostic(res.entries, res.s_times, eps, 1.0, 0.5, 0.75)
    assert tab[0, 1] == 1.0
    assert tab[-1, 1] == 0.0      # sup norm never drops below c_U lambda_0 = 0.5
    assert np.all(np.diff(tab[:, 2]) <= 0)   # the threshold eps^-alpha grows
    with pytest.raises(InvalidParameter):
        small_ball_diagnostic(res.entries, res.s_times, eps, 1.0, 0.2, 0.75)
