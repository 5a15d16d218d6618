"""The small bundled scene used by the demos, tests and CLI defaults."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .geometry import Camera, Scene

DEMO_PRIMITIVES = 20
DEMO_VIEWS = 4
DEMO_SIZE = 32


def make_demo_scene(n: int = DEMO_PRIMITIVES, seed: int = 0) -> Scene:
    rng = np.random.default_rng(seed)
    q = rng.standard_normal((n, 4))
    return Scene(
        mu=rng.uniform(-0.8, 0.8, (n, 3)),
        scale=rng.uniform(0.12, 0.3, (n, 3)),
        rot=q / np.linalg.norm(q, axis=1, keepdims=True),
        opacity=rng.uniform(0.5, 0.9, n),
        color=rng.uniform(0.15, 0.85, (n, 3)),
    )


def make_demo_cameras(views: int = DEMO_VIEWS, size: int = DEMO_SIZE, distance: float = 4.0,
                      elevation_deg: float = 20.0):
    """Cameras on a ring around the origin, all looking at it."""
    f = 1.25 * size
    el = np.radians(elevation_deg)
    cams = []
    for k in range(views):
        az = 2 * np.pi * k / views
        eye = distance * np.array([np.cos(el) * np.cos(az), -np.sin(el), np.cos(el) * np.sin(az)])
        cams.append(Camera.look_at(eye, np.zeros(3), (0.0, -1.0, 0.0), f, f, size, size))
    return cams


def demo_paths():
    root = resources.files("darbsplat") / "data"
    return root / "demo_scene.txt", root / "demo_cameras.txt"


def load_demo():
    """Bundled scene and cameras as ``(Scene, [Camera])``."""
    from .io import read_cameras, read_scene

    scene_path, cam_path = demo_paths()
    with resources.as_file(scene_path) as sp, resources.as_file(cam_path) as cp:
        return read_scene(sp), read_cameras(cp)
