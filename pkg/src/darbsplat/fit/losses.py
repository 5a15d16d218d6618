"""Photometric losses: L1, SSIM and their mix, with analytic gradients.

SSIM uses an 11x11 Gaussian window (sigma 1.5) with symmetric boundary
padding.  The separable window is applied as explicit ``(n, n)`` filter
matrices so that the adjoint needed for the gradient is just a transpose.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.ndimage import correlate1d

from ..errors import InvalidParameterError
from ..rasterizer import ImageBuffer

WINDOW = 11
WINDOW_SIGMA = 1.5
C1 = 0.01**2
C2 = 0.03**2


def _rgb(img):
    return img.rgb if isinstance(img, ImageBuffer) else np.asarray(img, dtype=np.float64)


@lru_cache(maxsize=32)
def filter_matrix(n: int) -> np.ndarray:
    x = np.arange(WINDOW) - WINDOW // 2
    g = np.exp(-(x**2) / (2 * WINDOW_SIGMA**2))
    g /= g.sum()
    # scipy's "reflect" is the symmetric (d c b a | a b c d) extension
    return correlate1d(np.eye(n), g, axis=0, mode="reflect")


def _blur(img, fh, fw):
    chw = np.moveaxis(img, -1, 0)
    return np.moveaxis(fh @ chw @ fw.T, 0, -1)


def _blur_adjoint(img, fh, fw):
    chw = np.moveaxis(img, -1, 0)
    return np.moveaxis(fh.T @ chw @ fw, 0, -1)


def ssim(x, y, with_grad: bool = False):
    """Mean SSIM over pixels and channels; optionally ``dSSIM/dx`` as well."""
    x, y = _rgb(x), _rgb(y)
    if x.shape != y.shape:
        raise InvalidParameterError(f"image shapes differ: {x.shape} vs {y.shape}")
    fh, fw = filter_matrix(x.shape[0]), filter_matrix(x.shape[1])
    mx, my = _blur(x, fh, fw), _blur(y, fh, fw)
    exx, eyy, exy = _blur(x * x, fh, fw), _blur(y * y, fh, fw), _blur(x * y, fh, fw)
    sxx, syy, sxy = exx - mx * mx, eyy - my * my, exy - mx * my
    a1 = 2 * mx * my + C1
    a2 = 2 * sxy + C2
    b1 = mx * mx + my * my + C1
    b2 = sxx + syy + C2
    smap = a1 * a2 / (b1 * b2)
    value = float(smap.mean())
    if not with_grad:
        return value
    m = smap.size
    d_mx = 2 * my * (a2 - a1) / (b1 * b2) - smap * (2 * mx / b1 - 2 * mx / b2)
    d_exx = -smap / b2
    d_exy = 2 * a1 / (b1 * b2)
    grad = (_blur_adjoint(d_mx, fh, fw) + 2 * x * _blur_adjoint(d_exx, fh, fw)
            + y * _blur_adjoint(d_exy, fh, fw)) / m
    return value, grad


def l1(x, y):
    x, y = _rgb(x), _rgb(y)
    return float(np.mean(np.abs(x - y)))


def mse(x, y):
    x, y = _rgb(x), _rgb(y)
    return float(np.mean((x - y) ** 2))


def psnr(x, y):
    err = mse(x, y)
    return float("inf") if err == 0 else float(10 * np.log10(1.0 / err))


def loss_total(rendered, target, lam: float = 0.2):
    """``(1 - lam) * L1 + lam * (1 - SSIM) / 2``.

    Returns ``(loss, grad, parts)`` where ``grad`` is ``dL/d(rendered)`` and
    ``parts`` holds the individual terms.
    """
    x, y = _rgb(rendered), _rgb(target)
    if x.shape != y.shape:
        raise InvalidParameterError(f"image shapes differ: {x.shape} vs {y.shape}")
    if not 0.0 <= lam <= 1.0:
        raise InvalidParameterError(f"lambda must lie in [0, 1], got {lam}")
    diff = x - y
    l1_val = float(np.mean(np.abs(diff)))
    g = (1 - lam) * np.sign(diff) / diff.size
    if lam > 0:
        s, gs = ssim(x, y, with_grad=True)
        g = g - 0.5 * lam * gs
    else:
        s = ssim(x, y)
    dssim = 0.5 * (1.0 - s)
    loss = (1 - lam) * l1_val + lam * dssim
    return loss, g, {"l1": l1_val, "dssim": dssim, "ssim": s}
