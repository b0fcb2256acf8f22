"""Head localization from detector response maps and per-square-meter density.

A detector scores a patch centered on every ``stride``-th pixel. The coarse
map is upsampled to full resolution and explained greedily as a sum of
scaled copies of the detector's mean response to a single head (the
kernel); each copy is one detection.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, FormatError
from .frames import Frame, read_image
from .geometry import Homography, project_points

CRM_MAGIC = b"CRM1"


@dataclass
class ResponseMap:
    values: np.ndarray  # (height, width), cell (i, j) scores pixel (stride*j, stride*i)
    stride: int = 3

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise FormatError("response values must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise FormatError("response values must be finite")
        self.values = np.clip(self.values, 0.0, 1.0)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def write_response_map(path: str | os.PathLike, r: ResponseMap) -> None:
    with open(path, "wb") as fh:
        fh.write(CRM_MAGIC)
        fh.write(struct.pack("<III", r.width, r.height, r.stride))
        fh.write(r.values.astype("<f4").tobytes())


def read_response_map(path: str | os.PathLike, stride: int = 3) -> ResponseMap:
    """Read a CRM1 file, or a PGM/PNG whose gray levels are scores times 255."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == CRM_MAGIC:
            hdr = fh.read(12)
            if len(hdr) != 12:
                raise FormatError("truncated CRM1 header")
            w, h, s = struct.unpack("<III", hdr)
            payload = fh.read()
            if len(payload) != 4 * w * h:
                raise FormatError(f"CRM1 payload has {len(payload)} bytes, header says {4 * w * h}")
            data = np.frombuffer(payload, dtype="<f4")
            return ResponseMap(data.reshape(h, w).astype(np.float64), int(s))
    return ResponseMap(read_image(path).pixels, stride)


@dataclass
class PerspectiveModel:
    """Head radius in pixels as an affine function of image row."""

    a: float = 0.0
    b: float = 5.0

    def radius(self, y) -> np.ndarray | float:
        return self.a * np.asarray(y, dtype=np.float64) + self.b

    @classmethod
    def from_pairs(cls, row1: float, r1: float, row2: float, r2: float) -> "PerspectiveModel":
        if row1 == row2:
            raise ValueError("perspective rows must differ")
        a = (r2 - r1) / (row2 - row1)
        return cls(a, r1 - a * row1)

    def validate(self, height: int) -> "PerspectiveModel":
        if min(self.radius(0), self.radius(height - 1)) < 1.0:
            raise ValueError(f"head radius drops below 1 px inside a {height}-row image")
        return self


@dataclass
class ResponseKernel:
    """Mean response to one head, sampled on a ``(2R+1, 2R+1)`` grid."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise FormatError("kernel must be a square matrix with odd side")
        w = np.clip(0.5 * (w + w[::-1, ::-1]), 0.0, None)
        c = w.shape[0] // 2
        if w[c, c] <= 0:
            raise FormatError("kernel center must be positive")
        # an off-center maximum would break the peak-at-center contract
        self.weights = np.minimum(w / w[c, c], 1.0)

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    @classmethod
    def gaussian(cls, radius: int = 10) -> "ResponseKernel":
        """Isotropic Gaussian with sigma = radius / 2, truncated at the radius."""
        yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
        d2 = xx**2 + yy**2
        sigma = radius / 2.0
        w = np.exp(-d2 / (2 * sigma**2))
        w[d2 > radius**2] = 0.0
        return cls(w)

    def sample(self, dx: np.ndarray, dy: np.ndarray, r: float) -> np.ndarray:
        """Kernel value at offsets ``(dx, dy)`` for a head of radius ``r``."""
        R = self.radius
        coords = [R + np.asarray(dy) * R / r, R + np.asarray(dx) * R / r]
        return ndimage.map_coordinates(self.weights, coords, order=1, mode="constant", cval=0.0)

    def save(self, path: str | os.PathLike) -> None:
        np.savetxt(path, self.weights)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ResponseKernel":
        return cls(np.loadtxt(path, ndmin=2))


def dark_blob_template(radius: int) -> np.ndarray:
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    sigma = max(radius / 2.0, 0.5)
    return -np.exp(-(xx**2 + yy**2) / (2 * sigma**2))


def baseline_response(
    frame: Frame,
    p: PerspectiveModel,
    stride: int = 3,
    contrast_floor: float = 0.1,
) -> ResponseMap:
    """Template-correlation head detector.

    At each stride-spaced pixel the ``2r+1`` patch is correlated with a dark
    Gaussian blob. The correlation is normalized by the patch contrast, but
    never by less than ``contrast_floor`` (std per pixel), so flat or faintly
    textured areas stay near zero. Negative correlations clip to 0.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    img = frame.gray().pixels
    H, W = img.shape
    rows = np.arange(H // stride) * stride
    cols = np.arange(W // stride) * stride
    radii = np.maximum(1, np.round(p.radius(rows)).astype(int))
    out = np.zeros((len(rows), len(cols)))
    for r in np.unique(radii):
        t = dark_blob_template(int(r))
        t0 = t - t.mean()
        tn = np.sqrt(np.sum(t0**2))
        n = t.size
        num = ndimage.correlate(img, t0, mode="reflect")
        mean = ndimage.uniform_filter(img, t.shape[0], mode="reflect")
        sq = ndimage.uniform_filter(img * img, t.shape[0], mode="reflect")
        pstd = np.sqrt(np.maximum(sq - mean * mean, 0.0))
        denom = tn * np.sqrt(n) * np.maximum(pstd, contrast_floor)
        ncc = num / denom
        sel = np.flatnonzero(radii == r)
        out[sel] = ncc[np.ix_(rows[sel], cols)]
    return ResponseMap(np.clip(out, 0.0, 1.0), stride)


def upsample_response(r: ResponseMap, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear upsampling to full resolution; pixel ``x`` reads cell ``x / stride``."""
    s = r.stride
    if abs(target_w / s - r.width) > 1 or abs(target_h / s - r.height) > 1:
        raise DimensionMismatch(f"target {target_w}x{target_h} does not match {r.width}x{r.height} at stride {s}")
    gx = np.clip(np.arange(target_w) / s, 0, r.width - 1)
    gy = np.clip(np.arange(target_h) / s, 0, r.height - 1)
    yy, xx = np.meshgrid(gy, gx, indexing="ij")
    up = ndimage.map_coordinates(r.values, [yy, xx], order=1, mode="nearest")
    return np.clip(up, r.values.min(), r.values.max())


def _footprint(x: float, y: float, r: float, w: int, h: int):
    ri = int(np.ceil(r)) + 1
    cx, cy = int(round(x)), int(round(y))
    x0, x1 = max(0, cx - ri), min(w, cx + ri + 1)
    y0, y1 = max(0, cy - ri), min(h, cy + ri + 1)
    return x0, x1, y0, y1


def _kernel_patch(kernel: ResponseKernel, x: float, y: float, r: float, w: int, h: int):
    x0, x1, y0, y1 = _footprint(x, y, r, w, h)
    yy, xx = np.mgrid[y0:y1, x0:x1]
    k = kernel.sample(xx - x, yy - y, r)
    return (slice(y0, y1), slice(x0, x1)), k


def synthesize_response(
    points,
    kernel: ResponseKernel,
    p: PerspectiveModel,
    w: int,
    h: int,
    clamp: bool = True,
) -> np.ndarray:
    """Sum of kernels, each scaled to the head radius at its row."""
    out = np.zeros((h, w))
    for x, y in np.asarray(points, dtype=np.float64).reshape(-1, 2):
        sl, k = _kernel_patch(kernel, x, y, float(p.radius(y)), w, h)
        out[sl] += k
    return np.clip(out, 0.0, 1.0) if clamp else out


@dataclass
class DetectionSet:
    points: np.ndarray  # (n, 2) x, y
    scores: np.ndarray
    residual_history: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "points": np.round(self.points, 4).tolist(),
            "scores": np.round(self.scores, 6).tolist(),
        }


def min_separation(p: PerspectiveModel, y1, y2):
    return 0.8 * (p.radius(y1) + p.radius(y2)) / 2.0


def nms_least_squares(
    raw: np.ndarray,
    kernel: ResponseKernel,
    p: PerspectiveModel,
    max_detections: int | None = None,
    residual_drop_min: float | None = None,
    score_floor: float = 0.5,
) -> DetectionSet:
    """Greedy least-squares fit of kernels to a full-resolution response.

    Each step takes the residual's maximum over pixels not too close to an
    earlier detection, fits the kernel amplitude there by least squares and
    subtracts it. The loop ends when a step would lower the squared
    residual by less than ``residual_drop_min`` (by default a quarter of the
    local kernel energy times ``score_floor**2``, i.e. amplitude below half
    the floor) or after ``max_detections``.
    """
    resid = np.array(raw, dtype=np.float64)
    h, w = resid.shape
    blocked = np.zeros_like(resid, dtype=bool)
    pts: list[tuple[float, float]] = []
    scores: list[float] = []
    energy = float(np.sum(resid**2))
    history = [energy]
    limit = h * w if max_detections is None else int(max_detections)
    yy_all, xx_all = np.mgrid[0:h, 0:w]
    while len(pts) < limit:
        masked = np.where(blocked, -np.inf, resid)
        flat = int(np.argmax(masked))
        y, x = divmod(flat, w)
        if not masked[y, x] > 0:
            break
        r = float(p.radius(y))
        sl, k = _kernel_patch(kernel, x, y, r, w, h)
        kk = float(np.sum(k * k))
        amp = max(0.0, float(np.sum(resid[sl] * k)) / kk) if kk > 0 else 0.0
        drop = amp * amp * kk
        thresh = residual_drop_min if residual_drop_min is not None else 0.25 * kk * score_floor**2
        if drop < thresh:
            break
        if any(np.hypot(x - px, y - py) < min_separation(p, y, py) for px, py in pts):
            blocked[y, x] = True
            continue
        resid[sl] -= amp * k
        energy -= drop
        history.append(float(np.sum(resid**2)))
        pts.append((float(x), float(y)))
        scores.append(amp)
        # conservative: the separation rule uses both radii
        br = 0.8 * r
        x0, x1, y0, y1 = _footprint(x, y, br, w, h)
        sub = (xx_all[y0:y1, x0:x1] - x) ** 2 + (yy_all[y0:y1, x0:x1] - y) ** 2 < (br * br)
        blocked[y0:y1, x0:x1] |= sub
    return DetectionSet(np.array(pts, dtype=np.float64).reshape(-1, 2), np.array(scores), history)


@lru_cache(maxsize=32)
def _measured_kernel_cached(radius: int, stride: int, contrast_floor: float, blob_depth: float) -> ResponseKernel:
    from .synth import render_blob  # avoid an import cycle at module load

    c = 4 * radius
    size = 2 * c + stride + 1
    acc = np.zeros((2 * radius + 1, 2 * radius + 1))
    # heads land anywhere relative to the stride lattice: average all offsets
    for oy in range(stride):
        for ox in range(stride):
            img = np.full((size, size), 0.6)
            render_blob(img, c + ox, c + oy, radius, blob_depth)
            resp = baseline_response(Frame(np.clip(img, 0, 1)), PerspectiveModel(0.0, radius), stride, contrast_floor)
            up = upsample_response(resp, size, size)
            # kernel half-width is the head radius, matching ResponseKernel.sample
            acc += up[c + oy - radius : c + oy + radius + 1, c + ox - radius : c + ox + radius + 1]
    return ResponseKernel(acc)


def measure_kernel(radius: int = 5, stride: int = 3, contrast_floor: float = 0.1, blob_depth: float = 0.45) -> ResponseKernel:
    """Average response of :func:`baseline_response` to one isolated synthetic head."""
    return _measured_kernel_cached(int(radius), int(stride), float(contrast_floor), float(blob_depth))


@dataclass
class DensityGrid:
    origin: tuple[float, float]
    rows: int
    cols: int
    counts: np.ndarray  # (rows, cols); row k covers Y in [y0 + k, y0 + k + 1)
    overflow: int = 0
    cell_m: float = 1.0

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "origin": [float(self.origin[0]), float(self.origin[1])],
            "cell_m": self.cell_m,
            "rows": self.rows,
            "cols": self.cols,
            "counts": self.counts.astype(int).tolist(),
            "overflow": int(self.overflow),
        }


def density_grid(d: DetectionSet | np.ndarray, h: Homography, extent: Sequence[float]) -> DensityGrid:
    """Count detections per 1 m x 1 m ground cell.

    Detections outside ``extent`` or at infinity go to ``overflow``.
    """
    x0, y0, x1, y1 = (float(v) for v in extent)
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate extent {extent}")
    cols = int(np.ceil(x1 - x0))
    rows = int(np.ceil(y1 - y0))
    pts = d.points if isinstance(d, DetectionSet) else np.asarray(d, dtype=np.float64).reshape(-1, 2)
    counts = np.zeros((rows, cols), dtype=np.int64)
    if len(pts) == 0:
        return DensityGrid((x0, y0), rows, cols, counts, 0)
    g, valid = project_points(h, pts)
    inside = valid & (g[:, 0] >= x0) & (g[:, 0] < x1) & (g[:, 1] >= y0) & (g[:, 1] < y1)
    ci = np.floor(g[inside, 0] - x0).astype(int)
    ri = np.floor(g[inside, 1] - y0).astype(int)
    # x1 - x0 may be fractional; the last partial cell still exists
    np.add.at(counts, (np.clip(ri, 0, rows - 1), np.clip(ci, 0, cols - 1)), 1)
    return DensityGrid((x0, y0), rows, cols, counts, int(len(pts) - inside.sum()))


def render_detections(frame: Frame, d: DetectionSet, radius: int = 1) -> Frame:
    """Red dots on an RGB copy of ``frame``."""
    img = frame.rgb().pixels.copy()
    h, w = img.shape[:2]
    for x, y in d.points:
        cx, cy = int(round(x)), int(round(y))
        img[max(0, cy - radius) : min(h, cy + radius + 1), max(0, cx - radius) : min(w, cx + radius + 1)] = (1.0, 0.0, 0.0)
    return Frame(img, frame.timestamp)


def save_json(path: str | os.PathLike, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
