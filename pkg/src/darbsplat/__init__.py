"""Splatting with decaying anisotropic radial basis function kernels.

Kernels, EWA projection, the covariance correction psi, a tiled
differentiable compositor, and small fitting experiments built on them.
"""

__version__ = "0.1.0"

from .errors import DarbsError
from .kernel import KERNEL_NAMES, PRESETS, Family, KernelSpec, make_kernel, preset
from .geometry import Camera, Primitive3D, Scene, conic_and_radius, project_scene
from .calibration import PSI_TABLE, estimate_psi
from .rasterizer import ImageBuffer, SplatBatch, backward, forward, oracle_forward

__all__ = [
    "DarbsError", "KERNEL_NAMES", "PRESETS", "Family", "KernelSpec", "make_kernel", "preset",
    "Camera", "Primitive3D", "Scene", "conic_and_radius", "project_scene", "PSI_TABLE",
    "estimate_psi", "ImageBuffer", "SplatBatch", "backward", "forward", "oracle_forward",
]
