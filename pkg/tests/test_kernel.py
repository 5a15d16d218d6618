import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darbsplat.errors import DomainError, InvalidParameterError
from darbsplat.kernel import (KERNEL_NAMES, PRESETS, Family, cutoff_dm2, derive_xi, evaluate,
                              grad_check_kernel, make_kernel, preset, weight_and_derivative)


# independent scalar profiles written straight from the kernel table
def ref_weight(family, beta, xi, dm2):
    u = dm2 ** (beta / 2) / xi
    if family == "gaussian":
        return math.exp(-u)
    if family == "half-cosine":
        return math.cos(u)
    if family == "raised-cosine":
        return 0.5 + 0.5 * math.cos(u)
    if family == "mod-sinc":
        return 1.0 if u == 0 else abs(math.sin(u)) / u
    return 1.0 / math.sqrt(u + 1)


def test_cutoffs_match_published_limits():
    assert cutoff_dm2(make_kernel("half-cosine", 2, 18 / math.pi)) == pytest.approx(9.0, abs=1e-12)
    assert cutoff_dm2(make_kernel("raised-cosine", 1, 2.5 / math.pi)) == pytest.approx(6.25, abs=1e-12)
    assert cutoff_dm2(make_kernel("mod-sinc", 1, 3 / math.pi)) == pytest.approx(9.0, abs=1e-12)


def test_gaussian_render_box_is_three_sigma():
    g = preset("gaussian")
    # exp(-d^2/2): sigma = 1 in Mahalanobis units
    assert g.cutoff_dm == pytest.approx(3.0)
    assert g.weight(1.0) == pytest.approx(math.exp(-0.5))


def test_unit_spread_gaussian_value():
    g = make_kernel("gaussian", 2, 1)
    assert evaluate(g, 1.0).weight == pytest.approx(0.367879441, abs=1e-9)


def test_half_cosine_centre_and_edge():
    hc = preset("half-cosine-sq")
    assert evaluate(hc, 0.0).weight == 1.0
    assert evaluate(hc, 9.0).weight == 0.0
    assert evaluate(hc, 8.999).weight > 0.0


def test_sinc_centre_limit():
    s = preset("mod-sinc")
    assert evaluate(s, 0.0).weight == 1.0
    assert evaluate(s, 1e-14).weight == pytest.approx(1.0, abs=1e-12)


def test_raised_cosine_multi_lobe_cutoff():
    rc = make_kernel("raised-cosine", 1, 2.5 / math.pi, lobes=3)
    assert rc.cutoff_dm2 == pytest.approx((2.5 * 3) ** 2)


def test_invalid_parameters():
    with pytest.raises(InvalidParameterError):
        make_kernel("gaussian", 0, 1)
    with pytest.raises(InvalidParameterError):
        make_kernel("gaussian", 2, -1)
    with pytest.raises(InvalidParameterError):
        make_kernel("raised-cosine", 1, 1, lobes=0)
    with pytest.raises(ValueError):
        make_kernel("triangle", 2, 1)


def test_negative_distance_rejected():
    with pytest.raises(DomainError):
        weight_and_derivative(preset("gaussian"), -1.0)
    with pytest.raises(DomainError):
        weight_and_derivative(preset("gaussian"), np.nan)


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_weights_match_reference_profiles(name):
    spec = preset(name)
    rng = np.random.default_rng(3)
    x = rng.uniform(0, spec.cutoff_dm2 * 0.999, 200)
    got = spec.weight(x)
    want = [min(max(ref_weight(spec.family.value, spec.beta, spec.xi, v), 0.0), 1.0) for v in x]
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("name", KERNEL_NAMES)
def test_grad_check_per_kernel(name):
    assert grad_check_kernel(preset(name), samples=1000, step=1e-5) < 1e-4


def test_grad_check_catches_wrong_derivative():
    err = grad_check_kernel(preset("raised-cosine"), derivative=lambda x: np.zeros_like(x))
    assert err == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("family,beta,want", [
    ("half-cosine", 2, 18 / math.pi),
    ("raised-cosine", 1, 3 / math.pi),
    ("mod-sinc", 1, 3 / math.pi),
])
def test_derive_xi(family, beta, want):
    assert derive_xi(family, beta, 1) == pytest.approx(want)


def test_derive_xi_matches_gaussian_box():
    for fam, beta in [("half-cosine", 2.0), ("raised-cosine", 1.0), ("mod-sinc", 1.0), ("half-cosine", 3.0)]:
        k = make_kernel(fam, beta, derive_xi(fam, beta))
        assert k.cutoff_dm == pytest.approx(3.0)


def test_published_raised_cosine_preset():
    assert preset("raised-cosine").xi == pytest.approx(2.5 / math.pi)


def test_inline_overrides():
    k = preset("raised-cosine:xi=0.9,lobes=2")
    assert (k.xi, k.lobes, k.beta) == (0.9, 2, 1.0)
    with pytest.raises(InvalidParameterError):
        preset("raised-cosine:gamma=2")
    with pytest.raises(InvalidParameterError):
        preset("bogus")


def test_centre_derivative_limits():
    # beta = 2: f'(0)/xi; beta = 1 with a flat profile: curvature * 0.5 / xi^2
    g = preset("gaussian")
    assert weight_and_derivative(g, 0.0)[1] == pytest.approx(-0.5)
    rc = preset("raised-cosine")
    h = 1e-7
    fd = (rc.weight(h) - rc.weight(0.0)) / h
    assert weight_and_derivative(rc, 0.0)[1] == pytest.approx(fd, rel=1e-4)


names = st.sampled_from(sorted(PRESETS))


@settings(max_examples=60, deadline=None)
@given(names, st.floats(0, 200, allow_nan=False))
def test_weight_bounded_and_zero_past_cutoff(name, dm2):
    spec = preset(name)
    w = float(spec.weight(dm2))
    assert 0.0 <= w <= 1.0
    if dm2 >= spec.cutoff_dm2:
        assert w == 0.0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["gaussian", "half-cosine-sq", "inv-multiquadratic"]),
       st.floats(0, 50), st.floats(0, 50))
def test_monotone_families_decay(name, a, b):
    spec = preset(name)
    lo, hi = min(a, b), max(a, b)
    assert spec.weight(hi) <= spec.weight(lo)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(list(Family)), st.floats(0.5, 4), st.floats(0.2, 8))
def test_weights_finite_for_any_valid_spec(family, beta, xi):
    spec = make_kernel(family, beta, xi)
    x = np.linspace(0, 2 * spec.cutoff_dm2, 50)
    w, dw = weight_and_derivative(spec, x)
    assert np.all(np.isfinite(w)) and np.all(np.isfinite(dw))


def test_analytic_support_drops_render_box_only_for_unbounded():
    from darbsplat.kernel import analytic_support

    g = analytic_support(preset("gaussian"))
    assert g.cutoff_dm2 == math.inf and g.weight(16.0) == pytest.approx(math.exp(-8))
    hc = preset("half-cosine-sq")
    assert analytic_support(hc) is hc
