import numpy as np
import pytest

from fracheat.errors import BlowUpError, InvalidParameter, NonConvergence, ShapeError
from fracheat.fbm import DriverPath, sample_path
from fracheat.spectral import CollocationGrid, SpectralField, eigenvalues, sobolev_norm
from fracheat.solver import (CoefficientMap, NemytskiiFamily, SolverConfig, averaging_kernel,
                             constant_family, default_family, field_path_to_csv,
                             gaussian_kernel, picard_oracle, sine_family, solve, solve_linear)
from fracheat.young import FieldPath, path_norms
from fracheat.csvio import read_csv

N = 16


def phi0(n=N):
    return SpectralField.from_function(lambda u: 0.4 * np.sin(np.pi * u) + u * (1 - u), n)


def test_family_derivatives_by_finite_differences():
    u = np.linspace(-3, 3, 41)
    for fam in (default_family(2, 0.5, 2.0), sine_family(2)):
        for i in range(fam.dim):
            for order in range(3):
                h = 1e-5
                fd = (fam.derivative(order, i, u + h) - fam.derivative(order, i, u - h)) / (2 * h)
                np.testing.assert_allclose(fd, fam.derivative(order + 1, i, u), atol=1e-6)
        grid = np.linspace(-50, 50, 200001)
        for i in range(fam.dim):
            for order in range(4):
                assert np.abs(fam.derivative(order, i, grid)).max() <= fam.bounds[i, order] * (1 + 1e-6)


def test_default_family_lower_bound():
    fam = default_family(3, lambda0=0.5)
    u = np.linspace(-100, 100, 1001)
    assert all(np.all(fam.derivative(0, i, u) >= 0.5) for i in range(3))


def test_family_validation():
    with pytest.raises(InvalidParameter):
        NemytskiiFamily([(np.sin, np.cos)])
    with pytest.raises(InvalidParameter):
        NemytskiiFamily([(np.exp, np.exp, np.exp, np.exp)], bounds=np.full((1, 4), np.inf))


def test_kernels():
    avg = averaging_kernel(N)
    assert avg.c_U == pytest.approx(1.0, abs=1e-14)
    g = gaussian_kernel(N)
    assert 0 < g.c_U < 1
    assert np.all(g.matrix >= 0)
    # averaging L of any function is its trapezoid mean, re-expanded in sine modes
    vals = np.cos(avg.nodes)
    mean = np.sum(avg.quad_weights * vals)
    grid = CollocationGrid(N)
    np.testing.assert_allclose(avg.apply_values(vals), grid.to_coeffs(np.full(N, mean), True),
                               atol=1e-14)


def test_config_validation():
    SolverConfig().validate()
    with pytest.raises(InvalidParameter):
        SolverConfig(kappa=0.2).validate()
    with pytest.raises(InvalidParameter):
        SolverConfig(gamma=0.4).validate()
    SolverConfig(kappa=0.2).validate(nemytskii=False)


def test_constant_driver_gives_semigroup_orbit():
    x = DriverPath.constant(32)
    y = solve(phi0(), sine_family(), None, x)
    np.testing.assert_array_equal(y.coeffs, FieldPath.semigroup_orbit(phi0(), x.times).coeffs)


def test_linear_ode_closed_form():
    M = 1024
    x = DriverPath.from_function(lambda t: t, M)
    y = solve(phi0(), constant_family(1.0), None, x)
    lam = eigenvalues(N)
    c = CollocationGrid(N).to_coeffs(np.ones(N), as_array=True)
    exact = np.exp(-lam) * phi0().coeffs + c * (1 - np.exp(-lam)) / lam
    np.testing.assert_allclose(y[-1].coeffs, exact, atol=1e-3)


def test_self_refinement_order():
    errs = []
    levels = (64, 128, 256, 512, 1024, 2048)
    for seed in range(6):
        x = sample_path(4096, 0.75, seed=seed)
        ref = solve(phi0(), sine_family(), None, x)[-1].coeffs
        errs.append([np.linalg.norm(solve(phi0(), sine_family(), None,
                                          x.subsample(4096 // m))[-1].coeffs - ref)
                     for m in levels])
    e = np.mean(errs, axis=0)
    slope = -np.polyfit(np.log(levels), np.log(e), 1)[0]
    assert slope >= 2 * 0.70 - 1 - 0.1


def test_flow_property():
    x = sample_path(128, 0.75, seed=4)
    fam, L = default_family(), averaging_kernel(N)
    full = solve(phi0(), fam, L, x)
    k = 48
    tail = DriverPath(x.times[k:] - x.times[k], x.values[k:] - x.values[k])
    rest = solve(full[k], fam, L, tail)
    np.testing.assert_array_equal(rest.coeffs, full.coeffs[k:])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blow_up_is_reported():
    fam = NemytskiiFamily([(lambda u: 1e200 * (1 + u * u), lambda u: 2e200 * u,
                            lambda u: 2e200 + 0 * u, lambda u: 0 * u)],
                          bounds=np.ones((1, 4)))
    x = DriverPath.from_function(lambda t: 1e100 * t, 16)
    with pytest.raises(BlowUpError) as info:
        solve(phi0(), fam, None, x)
    assert info.value.step >= 1


def test_dimension_mismatch():
    with pytest.raises(ShapeError):
        solve(phi0(), sine_family(2), None, sample_path(16, 0.75))
    with pytest.raises(ShapeError):
        solve(phi0(), default_family(), gaussian_kernel(N + 1), sample_path(16, 0.75))


def test_solve_linear_trivial_cases():
    x = sample_path(64, 0.75, seed=1)
    fam, L = default_family(), gaussian_kernel(N)
    y = solve(phi0(), fam, L, x)
    zero = FieldPath(x.times, np.zeros((65, N)))
    assert not np.any(solve_linear(zero, y, fam, L, x).coeffs)
    w = FieldPath.semigroup_orbit(SpectralField.basis(2, N), x.times)
    v_const = solve_linear(w, FieldPath.semigroup_orbit(phi0(), x.times), fam, L,
                           DriverPath.constant(64))
    np.testing.assert_array_equal(v_const.coeffs, w.coeffs)
    v = solve_linear(w, y, fam, L, x, t0=0.25)
    assert v.times[0] == 0.25
    np.testing.assert_array_equal(v[0].coeffs, w.coeffs[16])
    v2 = solve_linear(w.scaled(2.0), y, fam, L, x, t0=0.25)
    np.testing.assert_allclose(v2.coeffs, 2 * v.coeffs, rtol=1e-14, atol=1e-16)
    with pytest.raises(InvalidParameter):
        solve_linear(w, y, fam, L, x, t0=0.3)


def test_solve_linear_ratio_is_stable(rng):
    """The linear response norm relative to the forcing norm stays in a narrow band."""
    x = sample_path(128, 0.75, seed=8)
    fam, L = sine_family(), None
    y = solve(phi0(), fam, L, x)
    ratios = []
    for _ in range(20):
        psi = SpectralField(rng.standard_normal(N) / np.arange(1, N + 1) ** 2)
        w = FieldPath.semigroup_orbit(psi, x.times)
        v = solve_linear(w, y, fam, L, x)
        nv, nw = path_norms(v, kappa=0.45, alpha=0.5), path_norms(w, kappa=0.45, alpha=0.5)
        ratios.append((nv.c0 + nv.hat_holder) / (nw.c0 + nw.hat_holder))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    assert ratios.max() / ratios.min() < 20


def test_picard_examples():
    x = DriverPath.constant(32)
    y, hist = picard_oracle(phi0(), sine_family(), None, x, full_output=True)
    assert len(hist) == 1
    np.testing.assert_allclose(y.coeffs, FieldPath.semigroup_orbit(phi0(), x.times).coeffs,
                               rtol=1e-14, atol=1e-16)
    short = sample_path(256, 0.75, seed=2, horizon=0.1)
    _, hist = picard_oracle(phi0(), sine_family(), None, short, full_output=True)
    h = np.array(hist[:-1])
    h = h[h > 1e-13]
    assert np.all(h[1:] < h[:-1])
    with pytest.raises(NonConvergence) as info:
        picard_oracle(phi0(), sine_family(), None, sample_path(64, 0.75, seed=2), max_iter=2)
    assert len(info.value.history) == 2


def test_picard_agrees_with_solver():
    """Agreement within 5x the solver's error estimate from one refinement step.

    With order p = 2 gamma - 1, the Richardson estimate of the error at M is
    ``||y_M - y_{M/2}|| / (2^p - 1)``.
    """
    M, p = 1024, 2 * 0.70 - 1
    fam, L = default_family(), averaging_kernel(32)
    phi = phi0(32)
    for seed in range(3):
        x = sample_path(M, 0.75, seed=seed)
        ys = solve(phi, fam, L, x)
        yp = picard_oracle(phi, fam, L, x)
        est = np.linalg.norm(ys[-1].coeffs - solve(phi, fam, L, x.subsample(2))[-1].coeffs) / (
            2**p - 1)
        assert np.linalg.norm(ys[-1].coeffs - yp[-1].coeffs) <= 5 * est


def test_coefficient_map_linearization():
    fam, L = default_family(2), gaussian_kernel(N)
    cm = CoefficientMap.build(fam, L, N)
    y = phi0().coeffs
    v = np.linspace(1, -1, N) * 0.1
    eps = 1e-6
    fd = (cm.G(y + eps * v) - cm.G(y - eps * v)) / (2 * eps)
    lin = np.stack([(cm.node_derivatives(y, 1)[i] * (cm.A @ v)) @ cm.B.T for i in range(2)])
    np.testing.assert_allclose(fd, lin, atol=1e-8)


def test_csv_export(tmp_path):
    x = sample_path(8, 0.75, seed=0)
    y = solve(phi0(), sine_family(), None, x)
    man, head, data = read_csv(field_path_to_csv(y, tmp_path / "c.csv"))
    assert head[0] == "time" and head[1] == "c_1" and data.shape == (9, N + 1)
    np.testing.assert_array_equal(data[:, 1:], y.coeffs)
    _, head, data = read_csv(field_path_to_csv(y, tmp_path / "g.csv", mode="grid"))
    assert head[1] == "u_1"
    np.testing.assert_allclose(data[:, 1:], CollocationGrid(N).to_grid(y.coeffs))
    with pytest.raises(InvalidParameter):
        field_path_to_csv(y, tmp_path / "x.csv", mode="bad")


def test_initial_norm_recorded():
    from fracheat.solver import initial_norm
    assert initial_norm(phi0(), 0.7) == pytest.approx(sobolev_norm(phi0(), 2.7))
