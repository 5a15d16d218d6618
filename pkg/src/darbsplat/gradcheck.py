"""Finite-difference checks of every analytic gradient in the engine.

The compositor is only piecewise smooth: the alpha floor, the alpha clamp,
the kernel cutoff, the transmittance stop and the tile lists all switch
discretely.  An entry is checked only if none of these masks changes
between ``x - h`` and ``x + h``; the others are counted as skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Camera, Scene, backward_projection, project_scene
from .kernel import KERNEL_NAMES, KernelSpec, grad_check_kernel, preset
from .rasterizer import ALPHA_MAX, SplatBatch, backward, forward
from .fit.losses import loss_total

KERNEL_TOL = 1e-4
END_TO_END_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    kernel: str
    max_rel_err: float
    checked: int
    skipped: int = 0

    @property
    def tol(self):
        return KERNEL_TOL if self.name == "kernel" else END_TO_END_TOL

    @property
    def ok(self):
        return self.checked > 0 and self.max_rel_err < self.tol


def rel_err(analytic, fd, floor=1e-6):
    a, f = np.asarray(analytic, dtype=np.float64), np.asarray(fd, dtype=np.float64)
    return np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), floor)


def random_splats(n, width, height, seed=0, opacity=(0.2, 0.9), sigma=(1.0, 4.0)) -> SplatBatch:
    """Random anisotropic splats inside the image, with radii for the Gaussian box."""
    from .geometry import conic_of, eigen2

    rng = np.random.default_rng(seed)
    mu2 = rng.uniform([0, 0], [width, height], size=(n, 2))
    s = rng.uniform(*sigma, size=(n, 2))
    th = rng.uniform(0, np.pi, n)
    c, si = np.cos(th), np.sin(th)
    cov2 = np.empty((n, 2, 2))
    cov2[:, 0, 0] = c * c * s[:, 0] ** 2 + si * si * s[:, 1] ** 2
    cov2[:, 0, 1] = cov2[:, 1, 0] = c * si * (s[:, 0] ** 2 - s[:, 1] ** 2)
    cov2[:, 1, 1] = si * si * s[:, 0] ** 2 + c * c * s[:, 1] ** 2
    conic, _ = conic_of(cov2)
    lam1, _ = eigen2(cov2)
    return SplatBatch(mu2, conic, np.zeros(n, dtype=np.int64), rng.uniform(0.5, 5.0, n),
                      rng.uniform(*opacity, n), rng.uniform(0, 1, (n, 3)), cov2=cov2), lam1


def with_radius(batch: SplatBatch, lam1, kernel: KernelSpec) -> SplatBatch:
    from .geometry import radius_from_eigen

    return SplatBatch(batch.mu2, batch.conic, radius_from_eigen(lam1, kernel), batch.depth,
                      batch.opacity, batch.color, cov2=batch.cov2)


def _signature(aux):
    parts = []
    for key in sorted(aux.tile_lists):
        _, _, w, _, raw, alpha, _ = aux.terms[key]
        parts.append((key, aux.tile_lists[key].tobytes(), np.packbits(alpha > 0).tobytes(),
                      np.packbits(raw < ALPHA_MAX).tobytes(), np.packbits(w > 0).tobytes()))
    return tuple(parts)


def check_kernels(names=KERNEL_NAMES, samples=1000, seed=0):
    out = []
    for name in names:
        err = grad_check_kernel(preset(name), samples=samples, seed=seed)
        out.append(CheckResult("kernel", name, err, samples))
    return out


def check_rasterizer(kernel: KernelSpec, n=20, width=24, height=24, seed=0, step=1e-4,
                     background=(0.1, 0.2, 0.3)) -> CheckResult:
    """Every mu2, conic, opacity and colour entry of a random scene."""
    base, lam1 = random_splats(n, width, height, seed)
    batch = with_radius(base, lam1, kernel)
    rng = np.random.default_rng(seed + 1000)
    g_img = rng.standard_normal((height, width, 3))

    def render(b):
        img, aux = forward(b, kernel, width, height, background, keep_terms=True)
        return float(np.sum(img.rgb * g_img)), aux

    _, aux0 = render(batch)
    grads = backward(g_img, batch, kernel, aux0, background)
    sig0 = _signature(aux0)
    fields = {"mu2": "mu2", "conic": "conic", "opacity": "opacity", "color": "color"}
    worst, checked, skipped = 0.0, 0, 0
    for key, attr in fields.items():
        arr = getattr(batch, attr)
        for i in range(arr.size):
            vals = []
            sigs = []
            for sgn in (1, -1):
                b = SplatBatch(batch.mu2.copy(), batch.conic.copy(), batch.radius, batch.depth,
                               batch.opacity.copy(), batch.color.copy())
                getattr(b, attr).flat[i] += sgn * step
                v, aux = render(b)
                vals.append(v)
                sigs.append(_signature(aux))
            if sigs[0] != sig0 or sigs[1] != sig0:
                skipped += 1
                continue
            fd = (vals[0] - vals[1]) / (2 * step)
            worst = max(worst, float(rel_err(grads[key].flat[i], fd)))
            checked += 1
    return CheckResult("rasterizer", kernel.label(), worst, checked, skipped)


def _random_scene(n, seed):
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n, 4))
    return Scene(rng.uniform(-0.6, 0.6, (n, 3)), rng.uniform(0.1, 0.4, (n, 3)), q,
                 rng.uniform(0.3, 0.9, n), rng.uniform(0, 1, (n, 3)))


def check_projection(kernel: KernelSpec, n=8, seed=0, step=1e-6, psi=1.3) -> CheckResult:
    """Scalar ``<A, mu2> + <B, cov2>`` differentiated by mu, scale and quaternion."""
    scene = _random_scene(n, seed)
    cam = Camera.look_at((0.5, -0.7, -3.0), (0, 0, 0), (0, -1, 0), 40.0, 38.0, 48, 40)
    rng = np.random.default_rng(seed + 1)
    a = rng.standard_normal((n, 2))
    b = rng.standard_normal((n, 2, 2))

    def value(s):
        p = project_scene(s, cam, kernel, psi)
        return float(np.sum(a * p.mu2) + np.sum(b * p.cov2))

    proj = project_scene(scene, cam, kernel, psi)
    g = backward_projection(proj, cam, a, b, n_total=n)
    worst, checked = 0.0, 0
    for key in ("mu", "scale", "rot"):
        arr = getattr(scene, key)
        for i in range(arr.size):
            plus, minus = scene.copy(), scene.copy()
            getattr(plus, key).flat[i] += step
            getattr(minus, key).flat[i] -= step
            fd = (value(plus) - value(minus)) / (2 * step)
            worst = max(worst, float(rel_err(g[key].flat[i], fd)))
            checked += 1
    return CheckResult("projection", kernel.label(), worst, checked)


def check_loss(width=20, height=18, seed=0, lam=0.2, step=1e-6, entries=300) -> CheckResult:
    """Total loss gradient on a random image pair (entries near an L1 kink are skipped)."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 0.95, (height, width, 3))
    y = rng.uniform(0.05, 0.95, (height, width, 3))
    _, g, _ = loss_total(x, y, lam)
    idx = rng.choice(x.size, size=min(entries, x.size), replace=False)
    worst, checked, skipped = 0.0, 0, 0
    for i in idx:
        if abs(x.flat[i] - y.flat[i]) < 10 * step:
            skipped += 1
            continue
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += step
        xm.flat[i] -= step
        fd = (loss_total(xp, y, lam)[0] - loss_total(xm, y, lam)[0]) / (2 * step)
        worst = max(worst, float(rel_err(g.flat[i], fd, floor=1e-8)))
        checked += 1
    return CheckResult("loss", "-", worst, checked, skipped)


def run_suite(names=KERNEL_NAMES, seed=0, kernel_samples=1000):
    """Kernel-level checks for every kernel plus the end-to-end checks."""
    results = check_kernels(names, kernel_samples, seed)
    for name in names:
        spec = preset(name)
        results.append(check_rasterizer(spec, seed=seed))
        results.append(check_projection(spec, seed=seed))
    results.append(check_loss(seed=seed))
    return results
