import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import beta as beta_fn

from fracheat.errors import InvalidParameter, OutOfDomain, ShapeError
from fracheat.fbm import (DriverPath, StepFunction, cameron_martin_lift, covariance, h_gram,
                          h_inner_product, h_norm, holder_norm, hurst_constant,
                          kernel_product_integral, sample_path, sample_paths, sampler_factor,
                          volterra_kernel)
from fracheat.kernels import holder_scan_numpy


def test_covariance_examples():
    for H in (0.3, 0.5, 0.75, 0.9):
        assert covariance(1, 1, H) == pytest.approx(1.0)
    assert covariance(0.5, 1, 0.75) == pytest.approx(0.5, abs=1e-15)
    assert covariance(0.3, 0.7, 0.5) == pytest.approx(0.3, abs=1e-15)
    for H in (0.0, 1.0, -1):
        with pytest.raises(InvalidParameter):
            covariance(0.5, 1, H)


def test_hurst_constant_matches_closed_form():
    # closed form of the Volterra normalization, an oracle independent of the root find
    for H in (0.6, 0.75, 0.9):
        ref = np.sqrt(H * (2 * H - 1) / beta_fn(2 - 2 * H, H - 0.5))
        assert hurst_constant(H) == pytest.approx(ref, rel=1e-3)


def test_volterra_kernel_examples():
    assert kernel_product_integral(1.0, 1.0, 0.75) == pytest.approx(1.0, abs=1e-3)
    assert kernel_product_integral(0.5, 1.0, 0.75) == pytest.approx(0.5, abs=1e-3)
    s = np.linspace(0.01, 0.99, 30)
    assert np.all(volterra_kernel(1.0, s, 0.75) > 0)
    with pytest.raises(OutOfDomain):
        volterra_kernel(0.5, 0.5, 0.75)
    with pytest.raises(OutOfDomain):
        volterra_kernel(0.5, 0.0, 0.75)


def test_sampler_moments():
    X = sample_paths(10_000, 64, 0.75, seed=11)[:, :, 0]
    v1 = X[:, -1]
    se_var = np.sqrt(np.var(v1**2) / v1.size)
    assert abs(np.mean(v1**2) - 1.0) < 5 * se_var
    prod = X[:, 32] * X[:, -1]
    assert abs(prod.mean() - 0.5) < 5 * prod.std() / np.sqrt(prod.size)


def test_sample_path_determinism_and_rows():
    a = sample_path(50, 0.7, dim=2, seed=3, path_index=4)
    b = sample_path(50, 0.7, dim=2, seed=3, path_index=4)
    np.testing.assert_array_equal(a.values, b.values)
    ens = sample_paths(6, 50, 0.7, dim=2, seed=3)
    np.testing.assert_array_equal(ens[4], a.values)
    np.testing.assert_array_equal(sample_paths(3, 50, 0.7, dim=2, seed=3, start_index=3)[1], a.values)
    assert a.values[0].tolist() == [0.0, 0.0]


def test_volterra_factor_close_to_cholesky():
    La = sampler_factor(64, 0.75, "factorization")
    Lb = sampler_factor(64, 0.75, "volterra")
    assert np.abs(La @ La.T - Lb @ Lb.T).max() < 0.02


def test_holder_norm_examples():
    x = DriverPath.from_function(lambda t: t, 100)
    assert holder_norm(x, 0.55) == pytest.approx(1.0, rel=1e-12)
    assert holder_norm(DriverPath.constant(100), 0.55) == 0.0
    p = sample_path(200, 0.75, seed=1)
    assert holder_norm(p, 0.7) == pytest.approx(holder_scan_numpy(p.values, p.times, 0.7),
                                                 rel=1e-13)
    with pytest.raises(InvalidParameter):
        holder_norm(p, 1.2)


@given(st.integers(0, 50), st.sampled_from([2, 4, 8]))
def test_holder_norm_monotone_under_coarsening(seed, stride):
    p = sample_path(64, 0.75, seed=seed)
    assert holder_norm(p.subsample(stride), 0.7) <= holder_norm(p, 0.7) * (1 + 1e-12)


def test_driver_validation():
    with pytest.raises(InvalidParameter):
        DriverPath([0, 1, 3], [0, 1, 2])
    with pytest.raises(InvalidParameter):
        DriverPath([0, 1, 2], [1, 1, 2])
    with pytest.raises(ShapeError):
        DriverPath([0, 1, 2], [0, 1])


def test_h_inner_product_examples():
    b = np.linspace(0, 1, 9)
    one = StepFunction.indicator(b, 1.0, 0, dim=2)
    half = StepFunction.indicator(b, 0.5, 0, dim=2)
    assert h_inner_product(one, half, 0.75) == pytest.approx(0.5, abs=1e-14)
    other = StepFunction.indicator(b, 0.5, 1, dim=2)
    assert h_inner_product(one, other, 0.75) == 0.0
    with pytest.raises(ShapeError):
        h_inner_product(one, StepFunction.indicator(np.linspace(0, 1, 5), 1.0, 0, 2), 0.75)


def test_h_norm_refinement():
    f = lambda u: np.cos(3 * u) + u  # noqa: E731
    a = h_norm(StepFunction.from_function(f, np.linspace(0, 1, 513)), 0.75)
    b = h_norm(StepFunction.from_function(f, np.linspace(0, 1, 1025)), 0.75)
    assert a == pytest.approx(b, rel=1e-2)


@given(st.integers(2, 12), st.floats(0.55, 0.95))
def test_gram_is_positive_semidefinite(n, H):
    G = h_gram(np.sort(np.r_[0.0, np.random.default_rng(n).uniform(0, 1, n)]), H)
    np.testing.assert_allclose(G, G.T, atol=1e-15)
    assert np.linalg.eigvalsh(G).min() > -1e-8


def test_cameron_martin_lift():
    b = np.linspace(0, 1, 5)
    zero = cameron_martin_lift(StepFunction(b, np.zeros(4)), 0.75)
    assert zero.is_constant()
    lift = cameron_martin_lift(StepFunction.indicator(b, 1.0), 0.75)
    assert lift.values[2, 0] == pytest.approx(0.5, abs=1e-2)
    np.testing.assert_allclose(lift.values[:, 0], covariance(b, 1.0, 0.75), atol=1e-2)
    rng = np.random.default_rng(5)
    h = StepFunction(np.linspace(0, 1, 17), rng.standard_normal(16))
    assert np.isfinite(holder_norm(cameron_martin_lift(h, 0.75), 0.7))
