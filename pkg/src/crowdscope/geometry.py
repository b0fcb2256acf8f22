"""Ground-plane rectification and multi-camera panorama fusion.

A :class:`Homography` maps image pixels (x right, y down, pixel centers on
integers) to ground-plane meters. Output canvases index ground coordinates
directly: canvas column ``c`` is ``X = x0 + c / resolution`` and canvas row
``r`` is ``Y = y0 + r / resolution``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateConfiguration,
    FormatError,
    InsufficientPoints,
    LayoutMismatch,
    NonInvertible,
    PointAtInfinity,
)
from .frames import Frame

W_EPS = 1e-9
DET_EPS = 1e-12


def _normalize(m: np.ndarray) -> np.ndarray:
    if abs(m[2, 2]) > 1e-12:
        return m / m[2, 2]
    return m / np.linalg.norm(m)


@dataclass
class Homography:
    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise NonInvertible(f"homography must be a finite 3x3 matrix, got shape {m.shape}")
        m = _normalize(m)
        if abs(np.linalg.det(m)) <= DET_EPS:
            raise NonInvertible("homography is singular")
        self.m = m

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)


def _hartley(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # centroid to origin, RMS distance sqrt(2)
    c = points.mean(axis=0)
    d = np.sqrt(np.mean(np.sum((points - c) ** 2, axis=1)))
    if d < 1e-12:
        raise DegenerateConfiguration("points are coincident")
    s = np.sqrt(2.0) / d
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (points - c) * s, t


def estimate_homography(image_points, ground_points) -> Homography:
    """Normalized DLT estimate of the image-to-ground homography.

    Needs at least four correspondences in general position. The result
    minimizes the algebraic error of the normalized system and is exact for
    noiseless data.
    """
    src = np.asarray(image_points, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(ground_points, dtype=np.float64).reshape(-1, 2)
    if src.shape != dst.shape:
        raise DegenerateConfiguration("image and ground point counts differ")
    n = len(src)
    if n < 4:
        raise InsufficientPoints(f"need at least 4 correspondences, got {n}")
    sn, t_src = _hartley(src)
    dn, t_dst = _hartley(dst)

    a = np.zeros((2 * n, 9))
    for i, ((x, y), (u, v)) in enumerate(zip(sn, dn)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]
    _, s, vt = np.linalg.svd(a)
    if s[-2] <= 1e-10 * s[0]:
        raise DegenerateConfiguration("correspondences do not determine a unique homography")
    hn = vt[-1].reshape(3, 3)
    m = np.linalg.inv(t_dst) @ hn @ t_src
    m = _normalize(m)
    if abs(np.linalg.det(m)) <= DET_EPS or abs(np.linalg.det(hn)) <= 1e-10 * np.linalg.norm(hn) ** 3:
        raise DegenerateConfiguration("estimated homography is singular (collinear points?)")
    return Homography(m)


def project_points(h: Homography, points) -> tuple[np.ndarray, np.ndarray]:
    """Map ``(N, 2)`` points through ``h``.

    Returns the mapped points and a boolean mask of points with finite depth;
    invalid rows are NaN.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    q = p @ h.m[:, :2].T + h.m[:, 2]
    w = q[:, 2]
    valid = np.abs(w) > W_EPS
    out = np.full((len(p), 2), np.nan)
    out[valid] = q[valid, :2] / w[valid, None]
    return out, valid


def apply_homography(h: Homography, p) -> np.ndarray:
    """Map a point ``(x, y)`` (or an ``(N, 2)`` array) through ``h``."""
    arr = np.asarray(p, dtype=np.float64)
    out, valid = project_points(h, arr)
    if not valid.all():
        raise PointAtInfinity(f"point maps to infinity under homography: {arr}")
    return out.reshape(arr.shape)


@dataclass
class PanoramaLayout:
    views: list = field(default_factory=list)  # (camera id, Homography)
    extent: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)  # x0, y0, x1, y1 meters
    resolution: float = 1.0  # pixels per meter

    def __post_init__(self):
        x0, y0, x1, y1 = (float(v) for v in self.extent)
        if not (x1 > x0 and y1 > y0):
            raise LayoutMismatch(f"degenerate extent {self.extent}")
        if not self.resolution > 0:
            raise LayoutMismatch("resolution must be positive")
        self.extent = (x0, y0, x1, y1)

    @property
    def shape(self) -> tuple[int, int]:
        x0, y0, x1, y1 = self.extent
        cols = max(1, int(round((x1 - x0) * self.resolution)))
        rows = max(1, int(round((y1 - y0) * self.resolution)))
        return rows, cols

    def ground_grid(self) -> np.ndarray:
        """Ground coordinates of every canvas pixel, shape ``(rows, cols, 2)``."""
        rows, cols = self.shape
        x0, y0, _, _ = self.extent
        gx = x0 + np.arange(cols) / self.resolution
        gy = y0 + np.arange(rows) / self.resolution
        xx, yy = np.meshgrid(gx, gy)
        return np.stack([xx, yy], axis=-1)


def _warp(frame: Frame, h: Homography, layout: PanoramaLayout) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = layout.shape
    ground = layout.ground_grid().reshape(-1, 2)
    src, valid = project_points(h.inverse(), ground)
    sx, sy = src[:, 0], src[:, 1]
    inside = valid & (sx >= -1e-9) & (sx <= frame.width - 1 + 1e-9) & (sy >= -1e-9) & (sy <= frame.height - 1 + 1e-9)
    coords = np.vstack([np.where(inside, sy, 0.0), np.where(inside, sx, 0.0)])
    px = frame.pixels
    planes = [px] if px.ndim == 2 else [px[:, :, k] for k in range(3)]
    out = []
    for plane in planes:
        vals = ndimage.map_coordinates(plane, coords, order=1, mode="nearest")
        out.append(np.where(inside, vals, 0.0).reshape(rows, cols))
    img = out[0] if px.ndim == 2 else np.stack(out, axis=-1)
    return np.clip(img, 0.0, 1.0), inside.reshape(rows, cols)


def rectify(frame: Frame, h: Homography, layout: PanoramaLayout) -> Frame:
    """Resample ``frame`` onto the layout's ground-plane canvas.

    Each canvas pixel is pulled back through ``h``'s inverse and sampled
    bilinearly; canvas pixels whose preimage falls outside the source are 0.
    """
    img, _ = _warp(frame, h, layout)
    return Frame(img, frame.timestamp)


def fuse_panorama(frames: Sequence[Frame], layout: PanoramaLayout) -> Frame:
    """Rectify every view into the shared canvas and average where views overlap."""
    if len(frames) != len(layout.views) or not frames:
        raise LayoutMismatch(f"{len(frames)} frames for {len(layout.views)} views")
    acc = None
    count = None
    for frame, (_, h) in zip(frames, layout.views):
        img, inside = _warp(frame, h, layout)
        if acc is None:
            acc = np.zeros_like(img)
            count = np.zeros(inside.shape)
        if img.ndim != acc.ndim:
            raise LayoutMismatch("views mix grayscale and RGB frames")
        acc += img
        count += inside
    denom = np.maximum(count, 1.0)
    if acc.ndim == 3:
        denom = denom[:, :, None]
    return Frame(np.clip(acc / denom, 0.0, 1.0), frames[0].timestamp)


def _data_lines(path):
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                yield line


def read_correspondences(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Parse ``u v X Y`` lines into image and ground point arrays."""
    rows = []
    for line in _data_lines(path):
        vals = line.split()
        if len(vals) != 4:
            raise FormatError(f"expected 'u v X Y', got {line!r}")
        rows.append([float(v) for v in vals])
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    return arr[:, :2], arr[:, 2:]


def read_homography(path: str | os.PathLike) -> Homography:
    vals = " ".join(_data_lines(path)).split()
    if len(vals) != 9:
        raise FormatError(f"homography file needs 9 values, found {len(vals)}")
    return Homography(np.array([float(v) for v in vals]).reshape(3, 3))


def write_homography(path: str | os.PathLike, h: Homography) -> None:
    with open(path, "w") as fh:
        for row in h.m:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
