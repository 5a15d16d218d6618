"""Fitting 2D splats directly to an image."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, InvalidParameterError
from ..geometry import conic_of, conic_to_cov2_grad, eigen2, radius_from_eigen
from ..kernel import KernelSpec
from ..rasterizer import ImageBuffer, SplatBatch, backward, forward
from .losses import loss_total, psnr, ssim
from .optim import adam_init, adam_step
from .report import FitReport


@dataclass
class FitConfig:
    lam: float = 0.2
    lr_position: float = 1.6e-4
    lr_scale: float = 5e-3
    lr_rotation: float = 1e-3
    lr_opacity: float = 0.02
    lr_color: float = 2.5e-3
    iters: int = 2000
    seed: int = 0
    # final/initial learning-rate ratio of the exponential decay schedule
    lr_final_ratio: float = 0.01
    background: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameterError(f"lambda must lie in [0, 1], got {self.lam}")

    def lrs(self, it, position_scale=1.0):
        frac = 0.0 if self.iters <= 1 else (it - 1) / (self.iters - 1)
        decay = self.lr_final_ratio**frac
        return {
            "mu": self.lr_position * position_scale * decay,
            "log_scale": self.lr_scale * decay,
            "rot": self.lr_rotation * decay,
            "opacity_logit": self.lr_opacity * decay,
            "color_logit": self.lr_color * decay,
        }


IMAGE_DEFAULTS = dict(lr_position=0.05, lr_scale=0.01, lr_rotation=0.01, lr_opacity=0.02,
                      lr_color=0.01)


def image_config(**overrides) -> FitConfig:
    return FitConfig(**{**IMAGE_DEFAULTS, **overrides})


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logit(p):
    p = np.clip(p, 1e-6, 1 - 1e-6)
    return np.log(p / (1 - p))


def splats_from_params(params, kernel: KernelSpec):
    """2D splats from (position, log-scale, angle, logits); also returns cov2."""
    s2 = np.exp(2 * params["log_scale"])
    th = params["rot"]
    c, s = np.cos(th), np.sin(th)
    a, b = s2[:, 0], s2[:, 1]
    cov2 = np.empty((len(th), 2, 2))
    cov2[:, 0, 0] = c * c * a + s * s * b
    cov2[:, 0, 1] = cov2[:, 1, 0] = c * s * (a - b)
    cov2[:, 1, 1] = s * s * a + c * c * b
    conic, _ = conic_of(cov2)
    lam1, _ = eigen2(cov2)
    n = len(th)
    batch = SplatBatch(params["mu"], conic, radius_from_eigen(lam1, kernel),
                       np.arange(n, dtype=np.float64), sigmoid(params["opacity_logit"]),
                       sigmoid(params["color_logit"]), cov2=cov2)
    return batch


def _param_grads(params, batch, g):
    g_cov = conic_to_cov2_grad(batch.cov2, g["conic"])
    g00, g01, g11 = g_cov[:, 0, 0], g_cov[:, 0, 1] + g_cov[:, 1, 0], g_cov[:, 1, 1]
    s2 = np.exp(2 * params["log_scale"])
    a, b = s2[:, 0], s2[:, 1]
    th = params["rot"]
    c, s = np.cos(th), np.sin(th)
    ga = g00 * c * c + g01 * c * s + g11 * s * s
    gb = g00 * s * s - g01 * c * s + g11 * c * c
    gth = g00 * 2 * c * s * (b - a) + g01 * (c * c - s * s) * (a - b) + g11 * 2 * c * s * (a - b)
    op, col = batch.opacity, batch.color
    return {
        "mu": g["mu2"],
        "log_scale": np.stack([ga * 2 * a, gb * 2 * b], 1),
        "rot": gth,
        "opacity_logit": g["opacity"] * op * (1 - op),
        "color_logit": g["color"] * col * (1 - col),
    }


def init_image_params(target: ImageBuffer, n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    h, w = target.height, target.width
    mu = rng.uniform([0, 0], [w, h], size=(n, 2))
    sigma0 = 0.5 * np.sqrt(h * w / n)
    rows = np.clip(mu[:, 1].astype(int), 0, h - 1)
    cols = np.clip(mu[:, 0].astype(int), 0, w - 1)
    return {
        "mu": mu,
        "log_scale": np.log(np.full((n, 2), sigma0)) + rng.normal(0, 0.1, (n, 2)),
        "rot": rng.uniform(0, np.pi, n),
        "opacity_logit": np.zeros(n),
        "color_logit": logit(target.rgb[rows, cols]),
    }


def render_params(params, kernel, width, height, background=(0.0, 0.0, 0.0)):
    batch = splats_from_params(params, kernel)
    img, _ = forward(batch, kernel, width, height, background)
    return img


def image_loss_and_grads(params, kernel, target: ImageBuffer, lam, background=(0.0, 0.0, 0.0)):
    batch = splats_from_params(params, kernel)
    img, aux = forward(batch, kernel, target.width, target.height, background,
                       keep_terms=True)
    loss, g_img, parts = loss_total(img, target, lam)
    g = backward(g_img, batch, kernel, aux, background)
    return loss, _param_grads(params, batch, g), img, parts


def fit_image(target: ImageBuffer, kernel: KernelSpec, n_splats: int, config: FitConfig | None = None):
    """Optimise ``n_splats`` 2D splats against ``target``; returns ``(FitReport, image)``."""
    if n_splats < 1:
        raise InvalidParameterError("need at least one splat")
    config = config or image_config()
    start = time.perf_counter()
    params = init_image_params(target, n_splats, config.seed)
    state = adam_init(params)
    report = FitReport([], float("nan"), float("nan"), float("nan"), 0.0, kernel.label(), n_splats)
    for it in range(1, config.iters + 1):
        loss, grads, img, parts = image_loss_and_grads(params, kernel, target, config.lam,
                                                       config.background)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {it}")
        report.loss_curve.append(loss)
        report.l1_curve.append(parts["l1"])
        report.dssim_curve.append(parts["dssim"])
        report.psnr_curve.append(psnr(img, target))
        lrs = config.lrs(it)
        params, state = adam_step(params, grads, state, lrs, it)
    img = render_params(params, kernel, target.width, target.height, config.background)
    if not report.loss_curve:
        loss, _, parts = loss_total(img, target, config.lam)
        report.loss_curve.append(loss)
        report.l1_curve.append(parts["l1"])
        report.dssim_curve.append(parts["dssim"])
        report.psnr_curve.append(psnr(img, target))
    report.final_mse = float(np.mean((img.rgb - target.rgb) ** 2))
    report.final_psnr = psnr(img, target)
    report.final_ssim = ssim(img, target)
    report.wall_time = time.perf_counter() - start
    return report, img


def smooth_target(width=64, height=64, seed=0) -> ImageBuffer:
    """Smooth synthetic RGB test image: a few broad colour blobs on a gradient."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width] + 0.5
    u, v = xx / width, yy / height
    rgb = np.stack([0.2 + 0.5 * u, 0.3 + 0.4 * v, 0.6 - 0.3 * u * v], -1)
    for _ in range(5):
        cx, cy = rng.uniform(0.15, 0.85, 2)
        s = rng.uniform(0.08, 0.2)
        col = rng.uniform(-0.3, 0.3, 3)
        blob = np.exp(-((u - cx) ** 2 + (v - cy) ** 2) / (2 * s * s))
        rgb += blob[..., None] * col
    return ImageBuffer(np.clip(rgb, 0.02, 0.98))
