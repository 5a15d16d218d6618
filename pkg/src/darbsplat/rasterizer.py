"""Tile-based front-to-back compositing of screen-space splats.

Pixel ``(row, col)`` has its centre at ``(col + 0.5, row + 0.5)``.  Splats are
blended in one global depth order (ties broken by index).  Per pixel a
splat contributes ``alpha = min(ALPHA_MAX, opacity * w)``; contributions
below ``ALPHA_MIN`` are skipped and compositing stops before the splat that
would push the transmittance below ``T_MIN``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .kernel import KernelSpec, weight_and_derivative

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_MIN = 1e-4
TILE = 16


@dataclass
class SplatBatch:
    mu2: np.ndarray      # (K, 2) pixel coordinates
    conic: np.ndarray    # (K, 3) entries (a, b, c) of the inverse covariance
    radius: np.ndarray   # (K,) integer pixel radius
    depth: np.ndarray    # (K,)
    opacity: np.ndarray  # (K,)
    color: np.ndarray    # (K, 3)
    cov2: np.ndarray | None = None

    def __post_init__(self):
        self.mu2 = np.asarray(self.mu2, dtype=np.float64).reshape(-1, 2)
        self.conic = np.asarray(self.conic, dtype=np.float64).reshape(-1, 3)
        self.radius = np.asarray(self.radius).reshape(-1)
        self.depth = np.asarray(self.depth, dtype=np.float64).reshape(-1)
        self.opacity = np.asarray(self.opacity, dtype=np.float64).reshape(-1)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.mu2)

    @classmethod
    def from_splats(cls, splats):
        splats = list(splats)
        return cls(
            [s.mu2 for s in splats], [s.conic for s in splats], [s.radius for s in splats],
            [s.depth for s in splats], [s.opacity for s in splats], [s.color for s in splats],
        )

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for arr in (self.mu2, self.conic, self.depth, self.opacity, self.color):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.radius, dtype=np.int64).tobytes())
        return h.hexdigest()


def _as_batch(splats) -> SplatBatch:
    return splats if isinstance(splats, SplatBatch) else SplatBatch.from_splats(splats)


@dataclass
class ImageBuffer:
    rgb: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.float64)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3 or min(self.rgb.shape[:2]) <= 0:
            raise ValueError(f"image must be (H, W, 3), got {self.rgb.shape}")

    @property
    def height(self):
        return self.rgb.shape[0]

    @property
    def width(self):
        return self.rgb.shape[1]


@dataclass
class BlendAux:
    width: int
    height: int
    tile: int
    t_final: np.ndarray        # (H, W)
    n_contrib: np.ndarray      # (H, W)
    tile_lists: dict = field(repr=False)  # (tile_y, tile_x) -> depth-sorted splat indices
    valid: np.ndarray = field(repr=False, default=None)
    skipped: int = 0
    fingerprint: str = ""
    kernel: KernelSpec | None = None
    # per-tile _tile_terms kept by forward(keep_terms=True) for reuse in backward
    terms: dict | None = field(repr=False, default=None)


def depth_order(depth) -> np.ndarray:
    """Indices sorted by depth ascending, ties by index."""
    return np.lexsort((np.arange(len(depth)), depth))


def _valid_mask(b: SplatBatch) -> np.ndarray:
    ok = np.all(np.isfinite(b.conic), axis=1) & np.all(np.isfinite(b.mu2), axis=1)
    ok &= np.isfinite(b.radius.astype(np.float64)) & (b.radius > 0)
    return ok


def bin_splats(splats, width: int, height: int, tile: int = TILE, valid=None):
    """Map each tile ``(ty, tx)`` to the depth-sorted indices of overlapping splats."""
    b = _as_batch(splats)
    if valid is None:
        valid = np.isfinite(b.radius.astype(np.float64))
    ntx = (width + tile - 1) // tile
    nty = (height + tile - 1) // tile
    order = depth_order(b.depth)
    lists = {}
    for i in order:
        if not valid[i]:
            continue
        r = float(b.radius[i])
        x0 = max(int(np.floor((b.mu2[i, 0] - r) / tile)), 0)
        x1 = min(int(np.floor((b.mu2[i, 0] + r) / tile)), ntx - 1)
        y0 = max(int(np.floor((b.mu2[i, 1] - r) / tile)), 0)
        y1 = min(int(np.floor((b.mu2[i, 1] + r) / tile)), nty - 1)
        for ty in range(y0, y1 + 1):
            for tx in range(x0, x1 + 1):
                lists.setdefault((ty, tx), []).append(int(i))
    return {k: np.array(v, dtype=np.int64) for k, v in lists.items()}


def _tile_pixels(ty, tx, tile, width, height):
    ys = np.arange(ty * tile, min((ty + 1) * tile, height))
    xs = np.arange(tx * tile, min((tx + 1) * tile, width))
    return ys, xs


def _tile_terms(b: SplatBatch, idx, kernel, px, py):
    """Per (splat, pixel) quantities for one tile; shapes ``(K, P)``."""
    dx = px[None, :] - b.mu2[idx, 0][:, None]
    dy = py[None, :] - b.mu2[idx, 1][:, None]
    ca, cb, cc = (b.conic[idx, j][:, None] for j in range(3))
    dm2 = ca * dx * dx + 2.0 * cb * dx * dy + cc * dy * dy
    dm2 = np.maximum(dm2, 0.0)
    w, dw = weight_and_derivative(kernel, dm2)
    raw = b.opacity[idx][:, None] * w
    alpha = np.minimum(ALPHA_MAX, raw)
    alpha = np.where(alpha < ALPHA_MIN, 0.0, alpha)
    t_after = np.cumprod(1.0 - alpha, axis=0)
    included = t_after >= T_MIN
    alpha = np.where(included, alpha, 0.0)
    t_before = np.empty_like(t_after)
    t_before[0] = 1.0
    t_before[1:] = np.cumprod(1.0 - alpha, axis=0)[:-1]
    return dx, dy, w, dw, raw, alpha, t_before


def forward(splats, kernel: KernelSpec, width: int, height: int, background=(0.0, 0.0, 0.0),
            tile: int = TILE, keep_terms: bool = False):
    """Render splats; returns ``(ImageBuffer, BlendAux)``."""
    b = _as_batch(splats)
    bg = np.asarray(background, dtype=np.float64)
    valid = _valid_mask(b)
    lists = bin_splats(b, width, height, tile, valid)
    rgb = np.empty((height, width, 3))
    t_final = np.ones((height, width))
    n_contrib = np.zeros((height, width), dtype=np.int64)
    rgb[:] = bg
    terms = {} if keep_terms else None
    for (ty, tx), idx in lists.items():
        ys, xs = _tile_pixels(ty, tx, tile, width, height)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        px, py = gx.ravel() + 0.5, gy.ravel() + 0.5
        tt = _tile_terms(b, idx, kernel, px, py)
        if keep_terms:
            terms[ty, tx] = tt
        alpha, t_before = tt[5], tt[6]
        weight = alpha * t_before
        color = weight.T @ b.color[idx]
        tf = t_before[-1] * (1.0 - alpha[-1])
        out = color + tf[:, None] * bg
        rgb[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1] = out.reshape(len(ys), len(xs), 3)
        t_final[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1] = tf.reshape(len(ys), len(xs))
        n_contrib[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1] = (alpha > 0).sum(0).reshape(len(ys), len(xs))
    aux = BlendAux(width, height, tile, t_final, n_contrib, lists, valid,
                   int((~valid).sum()), b.fingerprint(), kernel, terms)
    return ImageBuffer(rgb), aux


def oracle_forward(splats, kernel: KernelSpec, width: int, height: int, background=(0.0, 0.0, 0.0)):
    """Reference compositor: every splat against every pixel, one splat at a time."""
    b = _as_batch(splats)
    bg = np.asarray(background, dtype=np.float64)
    gy, gx = np.mgrid[0:height, 0:width]
    px = gx + 0.5
    py = gy + 0.5
    color = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    done = np.zeros((height, width), dtype=bool)
    for i in depth_order(b.depth):
        a, bb, c = b.conic[i]
        if not (np.all(np.isfinite(b.conic[i])) and np.all(np.isfinite(b.mu2[i]))):
            continue
        dx = px - b.mu2[i, 0]
        dy = py - b.mu2[i, 1]
        dm2 = np.maximum(a * dx * dx + 2 * bb * dx * dy + c * dy * dy, 0.0)
        alpha = np.minimum(ALPHA_MAX, b.opacity[i] * kernel.weight(dm2))
        live = (alpha >= ALPHA_MIN) & ~done
        test_t = trans * (1.0 - alpha)
        stop = live & (test_t < T_MIN)
        done |= stop
        live &= ~stop
        color += np.where(live, alpha * trans, 0.0)[..., None] * b.color[i]
        trans = np.where(live, test_t, trans)
    return ImageBuffer(color + trans[..., None] * bg)


def backward(grad_image, splats, kernel: KernelSpec, aux: BlendAux, background=(0.0, 0.0, 0.0)):
    """Gradients of a scalar loss with respect to every splat's parameters.

    ``grad_image`` is ``dL/d(rgb)`` with shape ``(H, W, 3)``.  Returns a dict
    with ``color (K, 3)``, ``opacity (K,)``, ``conic (K, 3)`` and ``mu2 (K, 2)``.
    """
    b = _as_batch(splats)
    g_img = np.asarray(grad_image.rgb if isinstance(grad_image, ImageBuffer) else grad_image,
                       dtype=np.float64)
    if (g_img.shape != (aux.height, aux.width, 3) or b.fingerprint() != aux.fingerprint
            or aux.kernel != kernel):
        raise ContractError("backward called with splats, kernel or image size that differ "
                            "from the forward pass")
    bg = np.asarray(background, dtype=np.float64)
    k = len(b)
    g_color = np.zeros((k, 3))
    g_opacity = np.zeros(k)
    g_conic = np.zeros((k, 3))
    g_mu2 = np.zeros((k, 2))
    tile, width, height = aux.tile, aux.width, aux.height
    for (ty, tx), idx in aux.tile_lists.items():
        ys, xs = _tile_pixels(ty, tx, tile, width, height)
        gy, gx = np.meshgrid(ys, xs, indexing="ij")
        px, py = gx.ravel() + 0.5, gy.ravel() + 0.5
        g_pix = g_img[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1].reshape(-1, 3)
        if aux.terms is not None:
            dx, dy, w, dw, raw, alpha, t_before = aux.terms[ty, tx]
        else:
            dx, dy, w, dw, raw, alpha, t_before = _tile_terms(b, idx, kernel, px, py)
        cols = b.color[idx]
        weight = alpha * t_before
        g_color_t = weight @ g_pix
        # dL/dC . c_k for each splat, and the contribution seen from behind
        gc_dot = cols @ g_pix.T
        contrib = weight * gc_dot
        t_final = t_before[-1] * (1.0 - alpha[-1])
        suffix = np.cumsum(contrib[::-1], axis=0)[::-1]
        behind = suffix - contrib + (t_final * (g_pix @ bg))[None, :]
        one_minus = np.where(alpha > 0, 1.0 - alpha, 1.0)
        g_alpha = t_before * gc_dot - behind / one_minus
        g_alpha = np.where((alpha > 0) & (raw < ALPHA_MAX), g_alpha, 0.0)
        g_opacity_t = np.sum(g_alpha * w, axis=1)
        g_dm2 = g_alpha * b.opacity[idx][:, None] * dw
        ca, cb, cc = (b.conic[idx, j][:, None] for j in range(3))
        g_conic_t = np.stack([np.sum(g_dm2 * dx * dx, 1), np.sum(g_dm2 * 2 * dx * dy, 1),
                              np.sum(g_dm2 * dy * dy, 1)], 1)
        g_mu2_t = np.stack([np.sum(g_dm2 * -2.0 * (ca * dx + cb * dy), 1),
                            np.sum(g_dm2 * -2.0 * (cb * dx + cc * dy), 1)], 1)
        np.add.at(g_color, idx, g_color_t)
        np.add.at(g_opacity, idx, g_opacity_t)
        np.add.at(g_conic, idx, g_conic_t)
        np.add.at(g_mu2, idx, g_mu2_t)
    return {"color": g_color, "opacity": g_opacity, "conic": g_conic, "mu2": g_mu2}
