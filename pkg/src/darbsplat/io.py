"""Plain-text scene/camera files, PPM images, float dumps and CSV reports."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import Camera, Scene
from .rasterizer import ImageBuffer

FLOAT_MAGIC = b"DSFL"


def _numeric_lines(path, width, what):
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != width:
            raise FormatError(f"{path}:{lineno}: {what} needs {width} values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return np.array(rows, dtype=np.float64).reshape(-1, width)


def read_scene(path) -> Scene:
    """One primitive per line: ``mu(3) scale(3) quat wxyz(4) opacity rgb(3)``."""
    a = _numeric_lines(path, 14, "primitive")
    return Scene(a[:, 0:3], a[:, 3:6], a[:, 6:10], a[:, 10], a[:, 11:14])


def write_scene(path, scene: Scene):
    with open(path, "w") as fh:
        fh.write("# mu_x mu_y mu_z s_x s_y s_z q_w q_x q_y q_z opacity r g b\n")
        for i in range(len(scene)):
            vals = [*scene.mu[i], *scene.scale[i], *scene.rot[i], scene.opacity[i], *scene.color[i]]
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def read_cameras(path):
    """One camera per line: ``fx fy cx cy width height`` then 16 row-major entries of W."""
    a = _numeric_lines(path, 22, "camera")
    return [Camera(row[6:].reshape(4, 4), row[0], row[1], row[2], row[3], int(row[4]), int(row[5]))
            for row in a]


def write_cameras(path, cameras):
    with open(path, "w") as fh:
        fh.write("# fx fy cx cy width height W(16, row-major)\n")
        for c in cameras:
            vals = [c.fx, c.fy, c.cx, c.cy, c.width, c.height, *c.w.ravel()]
            fh.write(" ".join(repr(float(v)) for v in vals) + "\n")


def to_bytes8(rgb):
    """Quantise [0, 1] floats to 8 bits, rounding half up."""
    return np.floor(np.clip(np.asarray(rgb, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_ppm(path, image: ImageBuffer):
    data = to_bytes8(image.rgb)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (image.width, image.height))
        fh.write(data.tobytes())


def read_ppm(path) -> ImageBuffer:
    raw = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        tokens.append(raw[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: only binary P6 PPM is supported")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise FormatError(f"{path}: maxval must be 255")
    pos += 1
    body = np.frombuffer(raw[pos:pos + w * h * 3], dtype=np.uint8)
    if body.size != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data")
    return ImageBuffer(body.reshape(h, w, 3).astype(np.float64) / 255.0)


def write_float_dump(path, image: ImageBuffer):
    """``DSFL`` + width, height, channels (uint32 LE) + float32 LE row-major RGB."""
    header = FLOAT_MAGIC + struct.pack("<III", image.width, image.height, 3)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(image.rgb, dtype="<f4").tobytes())


def read_float_dump(path) -> ImageBuffer:
    raw = Path(path).read_bytes()
    if raw[:4] != FLOAT_MAGIC or len(raw) < 16:
        raise FormatError(f"{path}: not a float dump")
    w, h, c = struct.unpack("<III", raw[4:16])
    data = np.frombuffer(raw[16:], dtype="<f4")
    if c != 3 or data.size != w * h * c:
        raise FormatError(f"{path}: size mismatch")
    return ImageBuffer(data.reshape(h, w, c).astype(np.float64))


def read_image(path) -> ImageBuffer:
    path = Path(path)
    if path.read_bytes()[:4] == FLOAT_MAGIC:
        return read_float_dump(path)
    return read_ppm(path)


def fmt(v) -> str:
    """Locale-independent number formatting for CSV cells."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
