from .image import FitConfig, fit_image, image_config, smooth_target
from .losses import loss_total, psnr, ssim
from .mixture import Mixture1D, MixtureConfig, Signal1D, fit_mixture, gen_signal, mixture_eval, sweep_components
from .optim import adam_init, adam_step
from .report import FitReport
from .scene import fit_scene, perturb_scene, render_scene

__all__ = [
    "FitConfig", "fit_image", "image_config", "smooth_target", "loss_total", "psnr", "ssim",
    "Mixture1D", "MixtureConfig", "Signal1D", "fit_mixture", "gen_signal", "mixture_eval",
    "sweep_components", "adam_init", "adam_step", "FitReport", "fit_scene", "perturb_scene",
    "render_scene",
]
