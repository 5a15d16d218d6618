import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darbsplat.errors import InvalidParameterError
from darbsplat.fit.mixture import (SIGNAL_KINDS, Mixture1D, MixtureConfig, Signal1D, _mixture_grad,
                                   fit_mixture, gen_signal, mixture_eval, sweep_components)
from darbsplat.kernel import preset


def sample(sig, x):
    return float(np.interp(x, sig.grid, sig.values))


def test_pulse_values():
    n = 1001  # grid step 0.01 so that x = 0, 1, 2 are samples
    assert sample(gen_signal("square", n), 0.0) == 1.0
    assert sample(gen_signal("square", n), 2.5) == 0.0
    assert sample(gen_signal("triangle", n), 1.0) == pytest.approx(0.5)
    assert sample(gen_signal("gaussian", n), 1.0) == pytest.approx(math.exp(-0.5))
    assert sample(gen_signal("half_sinusoid", n), 1.0) == pytest.approx(math.cos(math.pi / 4))
    assert sample(gen_signal("sharp_exponential", n), 1.0) == pytest.approx(math.exp(-2))
    assert sample(gen_signal("parabolic", n), 1.0) == pytest.approx(0.75)
    assert sample(gen_signal("trapezoid", n), 0.5) == 1.0
    assert sample(gen_signal("trapezoid", n), 1.5) == pytest.approx(0.5)


@pytest.mark.parametrize("kind", SIGNAL_KINDS)
def test_signals_peak_at_one(kind):
    s = gen_signal(kind, 513, seed=3)
    assert s.values.max() == pytest.approx(1.0, abs=2e-3)
    assert s.values.min() >= 0


def test_irregular_is_seeded():
    np.testing.assert_array_equal(gen_signal("irregular", 256, 4).values, gen_signal("irregular", 256, 4).values)
    assert not np.array_equal(gen_signal("irregular", 256, 4).values, gen_signal("irregular", 256, 5).values)


def test_signal_validation():
    with pytest.raises(InvalidParameterError):
        gen_signal("square", 10)
    with pytest.raises(InvalidParameterError):
        gen_signal("zigzag")
    with pytest.raises(InvalidParameterError):
        Signal1D([0, 1, 3], [0, 0, 0])
    with pytest.raises(InvalidParameterError):
        Mixture1D([0], [0], [1], preset("gaussian"))


def test_mixture_matches_naive_loop():
    k = preset("raised-cosine")
    rng = np.random.default_rng(0)
    mix = Mixture1D(rng.uniform(-3, 3, 6), rng.uniform(0.2, 1.5, 6), rng.uniform(-1, 1, 6), k)
    x = np.linspace(-5, 5, 77)
    want = [sum(a * float(k.weight(((xi - p) / s) ** 2)) for p, s, a in zip(mix.position, mix.sigma, mix.amplitude))
            for xi in x]
    np.testing.assert_allclose(mixture_eval(mix, x), want, rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_mixture_linear_in_amplitude(a, b, seed):
    rng = np.random.default_rng(seed)
    k = preset("half-cosine-sq")
    pos, sig = rng.uniform(-3, 3, 4), rng.uniform(0.3, 2, 4)
    amp1, amp2 = rng.uniform(-1, 1, (2, 4))
    x = np.linspace(-5, 5, 64)
    lhs = mixture_eval(Mixture1D(pos, sig, a * amp1 + b * amp2, k), x)
    rhs = a * mixture_eval(Mixture1D(pos, sig, amp1, k), x) + b * mixture_eval(Mixture1D(pos, sig, amp2, k), x)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_mixture_gradient_fd():
    k = preset("raised-cosine")
    rng = np.random.default_rng(1)
    x = np.linspace(-5, 5, 200)
    y = gen_signal("triangle", 200).values
    pos, logs, amp = rng.uniform(-2, 2, 5), np.log(rng.uniform(0.5, 1.5, 5)), rng.uniform(0, 1, 5)

    def loss(p, ls, a):
        return float(np.mean((_mixture_grad(k, x, p, ls, a, None)[0] - y) ** 2))

    _, g = _mixture_grad(k, x, pos, logs, amp, lambda pred: 2 * (pred - y) / len(x))
    h = 1e-6
    for name, arr in (("position", pos), ("log_sigma", logs), ("amplitude", amp)):
        for i in range(5):
            ap, am = arr.copy(), arr.copy()
            ap[i] += h
            am[i] -= h
            args_p = {"position": pos, "log_sigma": logs, "amplitude": amp, name: ap}
            args_m = {"position": pos, "log_sigma": logs, "amplitude": amp, name: am}
            fd = (loss(args_p["position"], args_p["log_sigma"], args_p["amplitude"])
                  - loss(args_m["position"], args_m["log_sigma"], args_m["amplitude"])) / (2 * h)
            assert g[name][i] == pytest.approx(fd, rel=1e-4, abs=1e-9)


def test_single_gaussian_recovers_gaussian_pulse():
    # the "gaussian" pulse is exp(-x^2/2), which one Gaussian component represents exactly
    target = gen_signal("gaussian", 256)
    report, mix = fit_mixture(target, preset("gaussian"), 1, MixtureConfig(iters=3000, lr=0.02))
    assert report.final_mse < 1e-6
    assert mix.sigma[0] == pytest.approx(1.0, abs=1e-2)


def test_fit_improves_and_is_deterministic():
    target = gen_signal("irregular", 256, seed=0)
    cfg = MixtureConfig(iters=300, lr=0.01, seed=2)
    r1, m1 = fit_mixture(target, preset("raised-cosine"), 6, cfg)
    r2, m2 = fit_mixture(target, preset("raised-cosine"), 6, cfg)
    assert r1.final_mse <= r1.loss_curve[0]
    np.testing.assert_array_equal(m1.position, m2.position)
    assert r1.loss_curve == r2.loss_curve
    assert len(r1.rows()) == 300


def test_zero_components_rejected():
    with pytest.raises(InvalidParameterError):
        fit_mixture(gen_signal("square", 128), preset("gaussian"), 0)


def test_sweep_returns_best():
    target = gen_signal("triangle", 128)
    cfg = MixtureConfig(iters=150, lr=0.02)
    n, report = sweep_components(target, preset("gaussian"), [1, 4], cfg)
    single = [fit_mixture(target, preset("gaussian"), m, MixtureConfig(150, 0.02, k))[0].final_mse
              for k, m in enumerate([1, 4])]
    assert report.final_mse == min(single)
    assert n == [1, 4][int(np.argmin(single))]
    with pytest.raises(InvalidParameterError):
        sweep_components(target, preset("gaussian"), [])


def test_sweep_on_realisable_target_picks_one_or_ties():
    target = gen_signal("gaussian", 256)
    n, report = sweep_components(target, preset("gaussian"), [1, 5, 10], MixtureConfig(iters=2000, lr=0.02))
    assert n == 1 or report.final_mse < 1e-6
