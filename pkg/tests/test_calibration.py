import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darbsplat.calibration import (PSI_TABLE, DensityGrid, collapse_and_normalize, default_psi,
                                   density_grid, estimate_psi, fit_psi, random_covariance,
                                   resolve_psi, weighted_covariance)
from darbsplat.errors import (CalibrationError, DegenerateDensityError, InvalidParameterError,
                              TruncationError)
from darbsplat.kernel import make_kernel, preset


def test_gaussian_grid_centre_is_one():
    g = density_grid(preset("gaussian"), np.zeros(3), np.eye(3), n=33)
    assert g.values[16, 16, 16] == pytest.approx(1.0)


def test_half_cosine_grid_zero_outside_limit():
    sigma = np.diag([1.0, 2.0, 0.5])
    g = density_grid(preset("half-cosine-sq"), np.zeros(3), sigma, n=40)
    xs = [g.axis(i) for i in range(3)]
    dx, dy, dz = np.meshgrid(*xs, indexing="ij")
    dm2 = dx**2 / 1.0 + dy**2 / 2.0 + dz**2 / 0.5
    assert np.all(g.values[dm2 >= 9.0] == 0.0)
    assert np.all(g.values[dm2 < 8.9] > 0.0)


def test_gaussian_riemann_sum():
    # exp(-d^2/2) integrates to (2 pi)^(3/2) for sigma = I
    spec = make_kernel("gaussian", 2, 2).with_cutoff(64.0)
    g = density_grid(spec, np.zeros(3), np.eye(3), n=64, extent=8.0)
    h = g.axis(0)[1] - g.axis(0)[0]
    assert g.values.sum() * h**3 == pytest.approx((2 * math.pi) ** 1.5, rel=0.01)


def test_truncated_grid_rejected():
    with pytest.raises(TruncationError):
        density_grid(preset("gaussian"), np.zeros(3), np.eye(3), n=40, extent=2.0)
    with pytest.raises(InvalidParameterError):
        density_grid(preset("gaussian"), np.zeros(3), np.eye(3), n=8)


def test_collapse_of_ones():
    np.testing.assert_array_equal(collapse_and_normalize(np.ones((4, 4, 4)), "z"), np.ones((4, 4)))
    with pytest.raises(DegenerateDensityError):
        collapse_and_normalize(np.zeros((4, 4, 4)))
    with pytest.raises(InvalidParameterError):
        collapse_and_normalize(np.ones((4, 4, 4)), "w")


def test_collapse_matches_column_sums():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3))
    g = density_grid(preset("half-cosine-sq"), np.zeros(3), a @ a.T + 0.5 * np.eye(3), n=32)
    want = np.zeros((32, 32))
    for i in range(32):
        for j in range(32):
            want[i, j] = sum(g.values[i, j, k] for k in range(32))
    want /= want.max()
    np.testing.assert_allclose(collapse_and_normalize(g, "z"), want, rtol=1e-12, atol=1e-15)


def test_gaussian_marginal_is_centred_and_peaked():
    g = density_grid(preset("gaussian"), np.zeros(3), np.eye(3), n=33)
    plane = collapse_and_normalize(g, "z")
    assert plane[16, 16] == 1.0
    np.testing.assert_allclose(plane, plane.T)


def test_weighted_covariance_point_mass():
    w = np.zeros((3, 4))
    w[1, 2] = 1.0
    gi, gj = np.meshgrid(np.arange(3.0), np.arange(4.0), indexing="ij")
    mean, cov = weighted_covariance(w, np.stack([gi, gj], -1))
    np.testing.assert_allclose(mean, [1, 2])
    np.testing.assert_allclose(cov, np.zeros((2, 2)), atol=1e-15)


def test_weighted_covariance_uniform_centre():
    gi, gj = np.meshgrid(np.linspace(-2, 2, 9), np.linspace(-1, 1, 5), indexing="ij")
    mean, _ = weighted_covariance(np.ones((9, 5)), np.stack([gi, gj], -1))
    np.testing.assert_allclose(mean, [0, 0], atol=1e-15)


def test_gaussian_marginal_keeps_submatrix():
    spec = preset("gaussian").with_cutoff(36.0)
    g = density_grid(spec, np.zeros(3), np.diag([4.0, 1.0, 2.0]), n=96)
    plane = collapse_and_normalize(g, "z")
    gi, gj = np.meshgrid(g.axis(0), g.axis(1), indexing="ij")
    _, cov = weighted_covariance(plane, np.stack([gi, gj], -1))
    np.testing.assert_allclose(cov, np.diag([4.0, 1.0]), rtol=0.02, atol=0.02)


def test_fit_psi_examples():
    a = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert fit_psi(2 * a, a) == pytest.approx(2.0, abs=1e-15)
    assert fit_psi(a, a) == 1.0
    eps = np.array([[1e-3, -2e-3], [-2e-3, 5e-4]])
    bound = np.linalg.norm(eps) / np.linalg.norm(a)
    assert abs(fit_psi(1.36 * a + eps, a) - 1.36) <= bound


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.integers(0, 2**31 - 1))
def test_fit_psi_exact_for_scalar_multiples(k, seed):
    a = random_covariance(np.random.default_rng(seed))[:2, :2]
    assert fit_psi(k * a, a) == pytest.approx(k, rel=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(0, 1000))
def test_covariance_is_invariant_to_weight_scale(scale, seed):
    # the max-normalisation step cannot change psi
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 1, (6, 7))
    gi, gj = np.meshgrid(np.arange(6.0), np.arange(7.0), indexing="ij")
    pts = np.stack([gi, gj], -1)
    m1, c1 = weighted_covariance(w, pts)
    m2, c2 = weighted_covariance(w * scale, pts)
    np.testing.assert_allclose(m1, m2, rtol=1e-12)
    np.testing.assert_allclose(c1, c2, rtol=1e-10, atol=1e-14)


def test_random_covariance_eigenvalues_in_range():
    rng = np.random.default_rng(4)
    for _ in range(20):
        ev = np.linalg.eigvalsh(random_covariance(rng, (0.5, 2.0)))
        assert np.all(ev >= 0.5 - 1e-12) and np.all(ev <= 2.0 + 1e-12)


def test_estimate_is_deterministic():
    spec = preset("half-cosine-sq")
    a = estimate_psi(spec, trials=10, n=40, seed=3)
    b = estimate_psi(spec, trials=10, n=40, seed=3)
    assert a == b


def test_estimate_independent_of_workers():
    spec = preset("raised-cosine")
    a = estimate_psi(spec, trials=10, n=36, seed=1, workers=1)
    b = estimate_psi(spec, trials=10, n=36, seed=1, workers=3)
    assert a.psi == b.psi and a.std == b.std


def test_too_few_trials():
    with pytest.raises(InvalidParameterError):
        estimate_psi(preset("gaussian"), trials=5)


def test_aborted_trials_fail_calibration(monkeypatch):
    import darbsplat.calibration as cal

    def boom(*a, **k):
        raise TruncationError("synthetic")

    monkeypatch.setattr(cal, "psi_trial", boom)
    with pytest.raises(CalibrationError):
        cal.estimate_psi(preset("gaussian"), trials=10)


def test_half_cosine_psi_small_grid():
    # coarse version of the full calibration, which lives in the acceptance suite
    est = estimate_psi(preset("half-cosine-sq"), trials=12, n=48, seed=0)
    assert est.psi == pytest.approx(1.363, abs=0.01)


def test_grid_doubling_convergence():
    spec = preset("half-cosine-sq")
    lo = estimate_psi(spec, trials=12, n=40, seed=2)
    hi = estimate_psi(spec, trials=12, n=80, seed=2)
    assert abs(lo.psi - hi.psi) <= 2 * max(lo.std, hi.std)


def test_psi_table_and_resolution():
    assert PSI_TABLE["half-cosine-sq"] == (1.36, "paper")
    assert default_psi("gaussian") == (1.0, "calibrated")
    assert resolve_psi("auto", "raised-cosine") == PSI_TABLE["raised-cosine"][0]
    assert resolve_psi("1.5", "gaussian") == 1.5
    with pytest.raises(InvalidParameterError):
        resolve_psi(-1, "gaussian")
    with pytest.raises(InvalidParameterError):
        default_psi("nope")


def test_density_grid_dataclass_axis():
    g = DensityGrid(5, np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.0, 0.0]), np.zeros((5, 5, 5)))
    np.testing.assert_allclose(g.axis(1), [-1, 0, 1, 2, 3])
