import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from darbsplat.errors import InvalidParameterError
from darbsplat.fit.losses import WINDOW, WINDOW_SIGMA, l1, loss_total, mse, psnr, ssim
from darbsplat.fit.optim import adam_init, adam_step


def naive_ssim(x, y):
    """Direct windowed SSIM with symmetric padding, one pixel at a time."""
    r = WINDOW // 2
    t = np.arange(WINDOW) - r
    g = np.exp(-(t**2) / (2 * WINDOW_SIGMA**2))
    win = np.outer(g, g) / np.outer(g, g).sum()
    xp = np.pad(x, ((r, r), (r, r), (0, 0)), mode="symmetric")
    yp = np.pad(y, ((r, r), (r, r), (0, 0)), mode="symmetric")
    h, w, _ = x.shape
    vals = []
    for i in range(h):
        for j in range(w):
            for c in range(3):
                px = xp[i:i + WINDOW, j:j + WINDOW, c]
                py = yp[i:i + WINDOW, j:j + WINDOW, c]
                mx, my = (win * px).sum(), (win * py).sum()
                vx = (win * px * px).sum() - mx * mx
                vy = (win * py * py).sum() - my * my
                cxy = (win * px * py).sum() - mx * my
                c1, c2 = 0.01**2, 0.03**2
                vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


def test_ssim_matches_naive_window():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (14, 13, 3))
    y = np.clip(x + 0.1 * rng.standard_normal(x.shape), 0, 1)
    assert ssim(x, y) == pytest.approx(naive_ssim(x, y), abs=1e-12)


def test_ssim_identity_and_shape_check():
    x = np.random.default_rng(1).uniform(0, 1, (8, 9, 3))
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidParameterError):
        ssim(x, x[:, :8])


def test_loss_identity_is_zero():
    x = np.random.default_rng(2).uniform(0, 1, (12, 12, 3))
    loss, grad, parts = loss_total(x, x, 0.2)
    assert loss == pytest.approx(0.0, abs=1e-12)
    assert parts["ssim"] == pytest.approx(1.0, abs=1e-12)


def test_constant_offset_l1():
    y = np.random.default_rng(3).uniform(0, 0.8, (10, 11, 3))
    loss, _, parts = loss_total(y + 0.1, y, lam=0.0)
    assert loss == pytest.approx(0.1, abs=1e-12)
    assert l1(y + 0.1, y) == pytest.approx(0.1)
    assert mse(y + 0.1, y) == pytest.approx(0.01)
    assert psnr(y + 0.1, y) == pytest.approx(20.0)
    assert psnr(y, y) == math.inf


def test_lambda_range():
    x = np.zeros((4, 4, 3))
    with pytest.raises(InvalidParameterError):
        loss_total(x, x, 1.5)


@pytest.mark.parametrize("lam", [0.0, 0.2, 1.0])
def test_loss_gradient_matches_finite_differences(lam):
    rng = np.random.default_rng(4)
    y = rng.uniform(0, 1, (12, 10, 3))
    x = np.clip(y + 0.2 * rng.standard_normal(y.shape), 0.05, 0.95)
    # keep every residual away from the L1 kink
    x = np.where(np.abs(x - y) < 1e-3, x + 0.01, x)
    _, g, _ = loss_total(x, y, lam)
    h = 1e-6
    for idx in map(tuple, rng.integers(0, [12, 10, 3], size=(40, 3))):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        fd = (loss_total(xp, y, lam)[0] - loss_total(xm, y, lam)[0]) / (2 * h)
        assert g[idx] == pytest.approx(fd, rel=1e-4, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_ssim_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(0, 1, (2, 9, 9, 3))
    s = ssim(x, y)
    assert s == pytest.approx(ssim(y, x), abs=1e-12)
    assert -1 <= s <= 1


def test_adam_first_step_is_signed_lr():
    p = {"a": np.array([1.0, -2.0, 0.5]), "b": np.array([[3.0]])}
    g = {"a": np.array([0.3, -7.0, 1e-3]), "b": np.array([[-2.0]])}
    new, state = adam_step(p, g, adam_init(p), {"a": 0.1, "b": 0.01}, 1)
    np.testing.assert_allclose(new["a"], p["a"] - 0.1 * np.sign(g["a"]), rtol=1e-10)
    np.testing.assert_allclose(new["b"], [[3.01]], rtol=1e-12)
    # inputs untouched
    assert p["a"][0] == 1.0


def test_adam_minimises_quadratic():
    p = {"x": np.array([5.0, -3.0])}
    state = adam_init(p)
    for t in range(1, 2001):
        p, state = adam_step(p, {"x": 2 * p["x"]}, state, 0.05, t)
    assert np.max(np.abs(p["x"])) < 1e-2


def test_adam_zero_gradient_keeps_params():
    p = {"x": np.array([1.0, 2.0])}
    new, _ = adam_step(p, {"x": np.zeros(2)}, adam_init(p), 0.1, 1)
    np.testing.assert_array_equal(new["x"], p["x"])
