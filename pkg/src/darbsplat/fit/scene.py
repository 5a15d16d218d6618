"""Multi-view fitting of 3D primitives through projection and compositing."""

from __future__ import annotations

import time

import numpy as np

from ..errors import CulledError, DivergenceError, InvalidParameterError
from ..geometry import Scene, backward_projection, conic_to_cov2_grad, project_scene
from ..kernel import KernelSpec
from ..rasterizer import ImageBuffer, backward, forward
from .image import FitConfig, logit, sigmoid
from .losses import loss_total, psnr, ssim
from .optim import adam_init, adam_step
from .report import FitReport


def scene_to_params(scene: Scene):
    return {
        "mu": scene.mu.copy(),
        "log_scale": np.log(scene.scale),
        "rot": scene.rot.copy(),
        "opacity_logit": logit(scene.opacity),
        "color_logit": logit(scene.color),
    }


def params_to_scene(params) -> Scene:
    return Scene(params["mu"].copy(), np.exp(params["log_scale"]), params["rot"].copy(),
                 sigmoid(params["opacity_logit"]), sigmoid(params["color_logit"]))


def render_scene(scene: Scene, camera, kernel: KernelSpec, psi: float = 1.0,
                 background=(0.0, 0.0, 0.0)) -> ImageBuffer:
    proj = project_scene(scene, camera, kernel, psi)
    img, _ = forward(proj.splats(), kernel, camera.width, camera.height, background)
    return img


def scene_loss_and_grads(params, cameras, targets, kernel, psi, lam=0.2,
                         background=(0.0, 0.0, 0.0)):
    """Mean loss over all views and its gradient on the raw parameters."""
    scene = params_to_scene(params)
    n = len(scene)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    total, parts_sum, images = 0.0, {"l1": 0.0, "dssim": 0.0}, []
    seen = np.zeros(n, dtype=bool)
    for cam, tgt in zip(cameras, targets):
        proj = project_scene(scene, cam, kernel, psi)
        seen[proj.visible] = True
        batch = proj.splats()
        img, aux = forward(batch, kernel, cam.width, cam.height, background, keep_terms=True)
        loss, g_img, parts = loss_total(img, tgt, lam)
        g = backward(g_img, batch, kernel, aux, background)
        g_cov2 = conic_to_cov2_grad(proj.cov2, g["conic"])
        gw = backward_projection(proj, cam, g["mu2"], g_cov2, g["opacity"], g["color"], n)
        grads["mu"] += gw["mu"]
        grads["log_scale"] += gw["scale"] * scene.scale
        grads["rot"] += gw["rot"]
        grads["opacity_logit"] += gw["opacity"] * scene.opacity * (1 - scene.opacity)
        grads["color_logit"] += gw["color"] * scene.color * (1 - scene.color)
        total += loss
        parts_sum["l1"] += parts["l1"]
        parts_sum["dssim"] += parts["dssim"]
        images.append(img)
    v = len(cameras)
    for key in grads:
        grads[key] /= v
    return total / v, grads, images, {k: s / v for k, s in parts_sum.items()}, seen


def perturb_scene(scene: Scene, seed: int = 0, position=0.05, log_scale=0.2, rot=0.1,
                  opacity=0.5, color=0.5) -> Scene:
    """Noisy copy of ``scene`` in parameter space, used to initialise a fit."""
    rng = np.random.default_rng(seed)
    p = scene_to_params(scene)
    p["mu"] += rng.normal(0, position, p["mu"].shape)
    p["log_scale"] += rng.normal(0, log_scale, p["log_scale"].shape)
    p["rot"] += rng.normal(0, rot, p["rot"].shape)
    p["opacity_logit"] += rng.normal(0, opacity, p["opacity_logit"].shape)
    p["color_logit"] += rng.normal(0, color, p["color_logit"].shape)
    return params_to_scene(p)


def scene_extent(scene: Scene) -> float:
    c = scene.mu.mean(0)
    return float(max(np.max(np.linalg.norm(scene.mu - c, axis=1)), 1e-6))


def fit_scene(init: Scene, cameras, targets, kernel: KernelSpec, psi: float = 1.0,
              config: FitConfig | None = None):
    """Adam on all primitive parameters against every view each iteration.

    Returns ``(FitReport, Scene)``.  With ``iters == 0`` the report holds the
    loss of the initial scene.
    """
    config = config or FitConfig()
    if len(cameras) != len(targets):
        raise InvalidParameterError("need one target image per camera")
    if len(cameras) < 2:
        raise InvalidParameterError(f"need at least two views, got {len(cameras)}")
    for cam, tgt in zip(cameras, targets):
        if (tgt.width, tgt.height) != (cam.width, cam.height):
            raise InvalidParameterError("target size does not match its camera")
    start = time.perf_counter()
    params = scene_to_params(init)
    state = adam_init(params)
    pos_scale = scene_extent(init)
    report = FitReport([], float("nan"), float("nan"), float("nan"), 0.0, kernel.label(), len(init))

    def record(loss, parts, images):
        report.loss_curve.append(loss)
        report.l1_curve.append(parts["l1"])
        report.dssim_curve.append(parts["dssim"])
        report.psnr_curve.append(float(np.mean([psnr(i, t) for i, t in zip(images, targets)])))

    loss, grads, images, parts, seen = scene_loss_and_grads(
        params, cameras, targets, kernel, psi, config.lam, config.background)
    if not seen.all():
        raise CulledError(f"{int((~seen).sum())} primitives are behind the near plane in every view")
    for it in range(1, config.iters + 1):
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at iteration {it}")
        record(loss, parts, images)
        params, state = adam_step(params, grads, state, config.lrs(it, pos_scale), it)
        loss, grads, images, parts, _ = scene_loss_and_grads(
            params, cameras, targets, kernel, psi, config.lam, config.background)
    if not np.isfinite(loss):
        raise DivergenceError("non-finite final loss")
    if not report.loss_curve:
        record(loss, parts, images)
    report.per_view_psnr = [psnr(i, t) for i, t in zip(images, targets)]
    report.final_psnr = float(np.mean(report.per_view_psnr))
    report.final_mse = float(np.mean([np.mean((i.rgb - t.rgb) ** 2) for i, t in zip(images, targets)]))
    report.final_ssim = float(np.mean([ssim(i, t) for i, t in zip(images, targets)]))
    report.wall_time = time.perf_counter() - start
    return report, params_to_scene(params)
