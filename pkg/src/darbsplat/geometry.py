"""3D primitives, camera projection and screen-space footprints.

Batch functions take arrays with a leading primitive axis: means ``(N, 3)``,
scales ``(N, 3)``, quaternions ``(N, 4)`` in ``(w, x, y, z)`` order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCovarianceError, InvalidParameterError
from .kernel import KernelSpec

NEAR_PLANE = 0.01
DILATION = 0.3


@dataclass
class Primitive3D:
    mu: np.ndarray
    scale: np.ndarray
    rot: np.ndarray
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.scale = np.asarray(self.scale, dtype=np.float64)
        self.rot = np.asarray(self.rot, dtype=np.float64)
        self.color = np.asarray(self.color, dtype=np.float64)
        if np.any(self.scale <= 0):
            raise InvalidParameterError("scale components must be positive")


@dataclass
class Scene:
    """Struct-of-arrays view of a list of primitives."""

    mu: np.ndarray        # (N, 3)
    scale: np.ndarray     # (N, 3)
    rot: np.ndarray       # (N, 4)
    opacity: np.ndarray   # (N,)
    color: np.ndarray     # (N, 3)

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1, 3)
        self.scale = np.asarray(self.scale, dtype=np.float64).reshape(-1, 3)
        self.rot = np.asarray(self.rot, dtype=np.float64).reshape(-1, 4)
        self.opacity = np.asarray(self.opacity, dtype=np.float64).reshape(-1)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(-1, 3)
        n = len(self.mu)
        if not all(len(a) == n for a in (self.scale, self.rot, self.opacity, self.color)):
            raise InvalidParameterError("scene arrays disagree on the primitive count")

    def __len__(self):
        return len(self.mu)

    @classmethod
    def from_primitives(cls, prims):
        prims = list(prims)
        return cls(
            np.array([p.mu for p in prims], dtype=np.float64).reshape(-1, 3),
            np.array([p.scale for p in prims], dtype=np.float64).reshape(-1, 3),
            np.array([p.rot for p in prims], dtype=np.float64).reshape(-1, 4),
            np.array([p.opacity for p in prims], dtype=np.float64),
            np.array([p.color for p in prims], dtype=np.float64).reshape(-1, 3),
        )

    def primitives(self):
        return [Primitive3D(self.mu[i], self.scale[i], self.rot[i], float(self.opacity[i]),
                            self.color[i]) for i in range(len(self))]

    def copy(self):
        return Scene(self.mu.copy(), self.scale.copy(), self.rot.copy(),
                     self.opacity.copy(), self.color.copy())


@dataclass
class Camera:
    w: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64).reshape(4, 4)
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidParameterError("focal lengths must be positive")
        r = self.w[:3, :3]
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-9):
            raise InvalidParameterError("camera rotation block is not orthonormal")
        self.width = int(self.width)
        self.height = int(self.height)

    @property
    def rotation(self):
        return self.w[:3, :3]

    @property
    def translation(self):
        return self.w[:3, 3]

    @classmethod
    def look_at(cls, eye, target, up, fx, fy, width, height, cx=None, cy=None):
        """Camera at ``eye`` looking at ``target`` (camera +z forward, +y down)."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        r = np.stack([right, down, fwd])
        w = np.eye(4)
        w[:3, :3] = r
        w[:3, 3] = -r @ eye
        return cls(w, fx, fy, width / 2 if cx is None else cx,
                   height / 2 if cy is None else cy, width, height)


@dataclass
class ProjectedSplat:
    mu2: np.ndarray
    cov2: np.ndarray
    conic: tuple
    radius: int
    depth: float
    opacity: float
    color: np.ndarray


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def quat_to_rotmat(q):
    """Rotation matrices from (not necessarily unit) quaternions ``(..., 4)``."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack([
        np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
        np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
        np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
    ], -2)


def _rotmat_jacobian(qn):
    """dR/dq for unit quaternions ``(N, 4)`` -> ``(N, 3, 3, 4)``."""
    w, x, y, z = qn.T
    zero = np.zeros_like(w)
    dw = np.stack([[zero, -2 * z, 2 * y], [2 * z, zero, -2 * x], [-2 * y, 2 * x, zero]])
    dx = np.stack([[zero, 2 * y, 2 * z], [2 * y, -4 * x, -2 * w], [2 * z, 2 * w, -4 * x]])
    dy = np.stack([[-4 * y, 2 * x, 2 * w], [2 * x, zero, 2 * z], [-2 * w, 2 * z, -4 * y]])
    dz = np.stack([[-4 * z, -2 * w, 2 * x], [2 * w, -4 * z, 2 * y], [2 * x, 2 * y, zero]])
    # each block is (3, 3, N)
    return np.stack([dw, dx, dy, dz], axis=-1).transpose(2, 0, 1, 3)


def covariance_from_scale_rot(scale, rot):
    """``R diag(scale^2) R^T`` for one primitive or a batch."""
    scale = np.asarray(scale, dtype=np.float64)
    if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
        raise InvalidParameterError("scale components must be positive and finite")
    r = quat_to_rotmat(rot)
    m = r * scale[..., None, :]
    cov = m @ np.swapaxes(m, -1, -2)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


# ---------------------------------------------------------------------------
# projection
# ---------------------------------------------------------------------------

def to_camera(camera: Camera, mu):
    mu = np.asarray(mu, dtype=np.float64)
    return mu @ camera.rotation.T + camera.translation


def project_point(camera: Camera, mu, near: float = NEAR_PLANE):
    """Pixel position and depth of a world point; ``None`` when culled."""
    t = to_camera(camera, mu)
    if t[2] <= near:
        return None
    mu2 = np.array([camera.fx * t[0] / t[2] + camera.cx, camera.fy * t[1] / t[2] + camera.cy])
    return mu2, float(t[2])


def ewa_jacobian(camera: Camera, t):
    """Jacobian of the perspective map at camera-space point(s) ``t``; ``(..., 2, 3)``."""
    t = np.asarray(t, dtype=np.float64)
    x, y, z = t[..., 0], t[..., 1], t[..., 2]
    zero = np.zeros_like(z)
    return np.stack([
        np.stack([camera.fx / z, zero, -camera.fx * x / z**2], -1),
        np.stack([zero, camera.fy / z, -camera.fy * y / z**2], -1),
    ], -2)


def project_covariance(sigma, camera: Camera, t):
    """Screen-space 2x2 slice ``J W Sigma W^T J^T`` (J is already 2x3)."""
    jw = ewa_jacobian(camera, t) @ camera.rotation
    cov = jw @ np.asarray(sigma, dtype=np.float64) @ np.swapaxes(jw, -1, -2)
    return 0.5 * (cov + np.swapaxes(cov, -1, -2))


def apply_psi(cov2_raw, psi: float, dilation: float = DILATION):
    if not psi > 0:
        raise InvalidParameterError(f"psi must be positive, got {psi}")
    return psi * np.asarray(cov2_raw, dtype=np.float64) + dilation * np.eye(2)


def eigen2(cov2):
    """Closed-form eigenvalues (larger first) of symmetric 2x2 matrices."""
    cov2 = np.asarray(cov2, dtype=np.float64)
    a, b, c = cov2[..., 0, 0], cov2[..., 0, 1], cov2[..., 1, 1]
    mid = 0.5 * (a + c)
    disc = np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    return mid + disc, mid - disc


def conic_of(cov2):
    cov2 = np.asarray(cov2, dtype=np.float64)
    a, b, c = cov2[..., 0, 0], cov2[..., 0, 1], cov2[..., 1, 1]
    det = a * c - b * b
    return np.stack([c / det, -b / det, a / det], -1), det


def radius_from_eigen(lam_max, kernel: KernelSpec):
    r = math.sqrt(kernel.cutoff_dm2) * np.sqrt(lam_max)
    # float slack must not add a whole pixel
    return np.ceil(r - 1e-9).astype(np.int64)


def conic_and_radius(cov2, kernel: KernelSpec):
    """Returns ``(conic, lambda1, lambda2, radius)`` for one 2x2 covariance."""
    lam1, lam2 = eigen2(cov2)
    if not (np.isfinite(lam2) and lam2 > 0):
        raise DegenerateCovarianceError("2D covariance is not positive definite")
    conic, _ = conic_of(cov2)
    return tuple(float(v) for v in conic), float(lam1), float(lam2), int(radius_from_eigen(lam1, kernel))


# ---------------------------------------------------------------------------
# batched forward / backward
# ---------------------------------------------------------------------------

@dataclass
class Projection:
    """Screen-space splats of the visible primitives and the cached intermediates."""

    visible: np.ndarray   # indices of primitives in front of the near plane
    mu2: np.ndarray
    cov2: np.ndarray
    conic: np.ndarray
    radius: np.ndarray
    depth: np.ndarray
    opacity: np.ndarray
    color: np.ndarray
    # cache
    t: np.ndarray
    r: np.ndarray
    qn: np.ndarray
    qnorm: np.ndarray
    scale: np.ndarray
    sigma: np.ndarray
    psi: float

    def splats(self):
        from .rasterizer import SplatBatch
        return SplatBatch(self.mu2, self.conic, self.radius, self.depth, self.opacity, self.color,
                          cov2=self.cov2)


def project_scene(scene: Scene, camera: Camera, kernel: KernelSpec, psi: float = 1.0,
                  dilation: float = DILATION, near: float = NEAR_PLANE) -> Projection:
    t_all = to_camera(camera, scene.mu)
    vis = np.nonzero(t_all[:, 2] > near)[0]
    t = t_all[vis]
    q = scene.rot[vis]
    qnorm = np.linalg.norm(q, axis=1)
    qn = q / qnorm[:, None]
    r = quat_to_rotmat(qn)
    scale = scene.scale[vis]
    m = r * scale[:, None, :]
    sigma = m @ np.swapaxes(m, 1, 2)
    raw = project_covariance(sigma, camera, t)
    cov2 = apply_psi(raw, psi, dilation)
    lam1, lam2 = eigen2(cov2)
    if np.any(~(lam2 > 0)):
        raise DegenerateCovarianceError("projected covariance is not positive definite")
    conic, _ = conic_of(cov2)
    mu2 = np.stack([camera.fx * t[:, 0] / t[:, 2] + camera.cx,
                    camera.fy * t[:, 1] / t[:, 2] + camera.cy], -1)
    return Projection(vis, mu2, cov2, conic, radius_from_eigen(lam1, kernel), t[:, 2].copy(),
                      scene.opacity[vis], scene.color[vis], t, r, qn, qnorm, scale, sigma,
                      float(psi))


def conic_to_cov2_grad(cov2, grad_conic):
    """Chain ``dL/d(a, b, c)`` of the inverse back to ``dL/dcov2`` (full symmetric form)."""
    ga, gb, gc = grad_conic[..., 0], grad_conic[..., 1], grad_conic[..., 2]
    g_inv = np.stack([np.stack([ga, 0.5 * gb], -1), np.stack([0.5 * gb, gc], -1)], -2)
    inv = np.linalg.inv(cov2)
    return -inv @ g_inv @ inv


def backward_projection(proj: Projection, camera: Camera, grad_mu2, grad_cov2,
                        grad_opacity=None, grad_color=None, n_total=None):
    """Reverse-mode pass of :func:`project_scene`.

    ``grad_cov2`` is the gradient with respect to the full symmetric 2x2
    matrix (both off-diagonal entries carry half of the pair's gradient).
    Returns a dict of gradients on the world-space parameters of all
    ``n_total`` primitives; culled primitives receive zeros.
    """
    n = len(proj.visible) if n_total is None else n_total
    vis = proj.visible
    t = proj.t
    x, y, z = t[:, 0], t[:, 1], t[:, 2]
    fx, fy = camera.fx, camera.fy
    wr = camera.rotation

    # cov2 = psi * T Sigma T^T + d I,  T = J W
    g_raw = proj.psi * 0.5 * (grad_cov2 + np.swapaxes(grad_cov2, 1, 2))
    jac = ewa_jacobian(camera, t)
    tm = jac @ wr
    g_sigma = np.swapaxes(tm, 1, 2) @ g_raw @ tm
    g_t_mat = 2.0 * g_raw @ tm @ proj.sigma
    g_j = g_t_mat @ wr.T

    # J entries as functions of t
    g_t = np.zeros_like(t)
    g_t[:, 0] += g_j[:, 0, 2] * (-fx / z**2)
    g_t[:, 1] += g_j[:, 1, 2] * (-fy / z**2)
    g_t[:, 2] += (g_j[:, 0, 0] * (-fx / z**2) + g_j[:, 0, 2] * (2 * fx * x / z**3)
                  + g_j[:, 1, 1] * (-fy / z**2) + g_j[:, 1, 2] * (2 * fy * y / z**3))
    # mu2 = (fx x/z + cx, fy y/z + cy): its Jacobian is J itself
    g_t += np.einsum("nij,ni->nj", jac, grad_mu2)
    g_mu = g_t @ wr

    # Sigma = M M^T, M = R S
    g_sig_sym = 0.5 * (g_sigma + np.swapaxes(g_sigma, 1, 2))
    m = proj.r * proj.scale[:, None, :]
    g_m = 2.0 * g_sig_sym @ m
    g_scale = np.einsum("nij,nij->nj", g_m, proj.r)
    g_r = g_m * proj.scale[:, None, :]
    g_qn = np.einsum("nij,nijk->nk", g_r, _rotmat_jacobian(proj.qn))
    g_q = (g_qn - proj.qn * np.sum(proj.qn * g_qn, axis=1, keepdims=True)) / proj.qnorm[:, None]

    out = {
        "mu": np.zeros((n, 3)), "scale": np.zeros((n, 3)), "rot": np.zeros((n, 4)),
        "opacity": np.zeros(n), "color": np.zeros((n, 3)),
    }
    out["mu"][vis] = g_mu
    out["scale"][vis] = g_scale
    out["rot"][vis] = g_q
    if grad_opacity is not None:
        out["opacity"][vis] = grad_opacity
    if grad_color is not None:
        out["color"][vis] = grad_color
    return out
