import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracheat.errors import InvalidParameter, OutOfDomain, ShapeError
from fracheat.spectral import (CollocationGrid, SpectralField, collocation_transform,
                               embedding_constant, evaluate, pointwise_map,
                               regularization_constant, semigroup_apply, sobolev_norm,
                               sup_norm)

N = 16
coeff_arrays = arrays(np.float64, N, elements=st.floats(-3, 3, allow_nan=False))


def decaying(rng, n=N):
    return SpectralField(rng.standard_normal(n) / np.arange(1, n + 1) ** 2)


def test_sobolev_norm_examples():
    e1 = SpectralField.basis(1, N)
    assert sobolev_norm(e1, 0) == pytest.approx(1.0, abs=1e-15)
    assert sobolev_norm(e1, 1) == pytest.approx(np.pi**2, rel=1e-14)
    e12 = e1 + SpectralField.basis(2, N)
    assert sobolev_norm(e12, 0.5) == pytest.approx(np.pi * np.sqrt(5), rel=1e-14)
    with pytest.raises(InvalidParameter):
        sobolev_norm(e1, -0.1)


def test_semigroup_examples(rng):
    y = decaying(rng)
    assert semigroup_apply(y, 0.0) == y
    assert semigroup_apply(SpectralField.basis(1, N), 0.1).coeffs[0] == pytest.approx(
        np.exp(-np.pi**2 * 0.1), rel=1e-14)
    assert np.exp(-np.pi**2 * 0.1) == pytest.approx(0.37268, abs=1e-4)
    with pytest.raises(InvalidParameter):
        semigroup_apply(y, -1e-3)


def test_semigroup_accepts_batched_arrays(rng):
    c = rng.standard_normal((3, N))
    out = semigroup_apply(c, 0.2)
    for row, ref in zip(out, c):
        np.testing.assert_array_equal(row, semigroup_apply(SpectralField(ref), 0.2).coeffs)


def test_evaluate_examples():
    assert evaluate(SpectralField.basis(1, N), 0.5) == pytest.approx(np.sqrt(2), rel=1e-15)
    assert evaluate(SpectralField.basis(2, N), 0.5) == pytest.approx(0.0, abs=1e-15)
    assert evaluate(SpectralField.zeros(N), 0.3) == 0.0
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(OutOfDomain):
            evaluate(SpectralField.basis(1, N), bad)


def test_collocation_examples(rng):
    j = np.arange(1, N + 1)
    vals = collocation_transform(SpectralField.basis(1, N), "to-grid")
    np.testing.assert_allclose(vals, np.sqrt(2) * np.sin(np.pi * j / (N + 1)), atol=1e-15)
    np.testing.assert_array_equal(collocation_transform(SpectralField.zeros(N), "to-grid"), 0)
    y = SpectralField(rng.standard_normal(N))
    back = collocation_transform(collocation_transform(y, "to-grid"), "to-coeffs")
    np.testing.assert_allclose(back.coeffs, y.coeffs, rtol=0, atol=1e-12 * np.abs(y.coeffs).max())
    with pytest.raises(ShapeError):
        collocation_transform(np.zeros(N + 1), "to-coeffs", n_modes=N)


def test_sine_matrix_is_orthogonal_up_to_factor():
    E = CollocationGrid(N).matrix / np.sqrt(2)
    np.testing.assert_allclose(E.T @ E, (N + 1) / 2 * np.eye(N), atol=1e-12)


def test_pointwise_map_examples(rng):
    y = decaying(rng)
    np.testing.assert_allclose(pointwise_map(y, lambda u: u).coeffs, y.coeffs, atol=1e-14)
    one = pointwise_map(y, lambda u: np.ones_like(u)).coeffs
    n = np.arange(1, N + 1)
    exact = np.where(n % 2 == 1, 2 * np.sqrt(2) / (np.pi * n), 0.0)
    # truncation of a discontinuous-at-the-boundary function: aliasing decays like 1/N
    np.testing.assert_allclose(one[:4], exact[:4], atol=2e-2)
    assert np.all(np.abs(one[1::2]) < 1e-12)


def test_pointwise_square_against_fine_quadrature():
    # oracle: midpoint rule with 20000 cells for the sine coefficients of 2 sin^2(pi xi)
    M = 20000
    xi = (np.arange(M) + 0.5) / M
    g = 2 * np.sin(np.pi * xi) ** 2
    n = np.arange(1, N + 1)
    exact = (np.sqrt(2) * np.sin(np.pi * np.outer(n, xi)) @ g) / M
    got = pointwise_map(SpectralField.basis(1, N), lambda u: u**2).coeffs
    np.testing.assert_allclose(got[:3], exact[:3], atol=5e-3)


@given(coeff_arrays, st.floats(0, 2), st.floats(0, 3))
def test_contraction(c, t, alpha):
    y = SpectralField(c)
    assert sobolev_norm(semigroup_apply(y, t), alpha) <= sobolev_norm(y, alpha) * (1 + 1e-12) + 1e-300


@given(coeff_arrays, st.floats(1e-3, 2), st.floats(0.05, 3))
def test_regularization_bound(c, t, alpha):
    y = SpectralField(c)
    lhs = sobolev_norm(semigroup_apply(y, t), alpha)
    assert lhs <= regularization_constant(alpha) * t ** -alpha * sobolev_norm(y, 0) * (1 + 1e-12)


@given(coeff_arrays, st.floats(0, 1), st.floats(0.01, 1))
def test_semigroup_holder_bound(c, t, alpha):
    y = SpectralField(c)
    lhs = sobolev_norm(semigroup_apply(y, t) - y, 0)
    assert lhs <= t**alpha * sobolev_norm(y, alpha) * (1 + 1e-12) + 1e-14


@given(coeff_arrays, st.floats(0.26, 2))
def test_sobolev_embedding(c, alpha):
    y = SpectralField(c)
    assert sup_norm(y, oversample=8) <= embedding_constant(N, alpha) * sobolev_norm(y, alpha) * (
        1 + 1e-12)


def test_algebra_ratio_bounded(rng):
    ratios = []
    for _ in range(50):
        a, b = decaying(rng, 8), decaying(rng, 8)
        a = SpectralField(np.r_[a.coeffs, np.zeros(N - 8)])
        b = SpectralField(np.r_[b.coeffs, np.zeros(N - 8)])
        prod = pointwise_map([a, b], lambda u, v: u * v)
        ratios.append(sobolev_norm(prod, 0.5) / (sobolev_norm(a, 0.5) * sobolev_norm(b, 0.5)))
    assert np.isfinite(max(ratios))
    print("max algebra ratio", max(ratios))


def test_field_validation():
    with pytest.raises(InvalidParameter):
        SpectralField([1.0, np.nan])
    with pytest.raises(ShapeError):
        SpectralField.basis(1, N) + np.zeros(N + 1)
    with pytest.raises(InvalidParameter):
        SpectralField.basis(0, N)
