"""Dense optical flow, temporal segmentation and particle advection."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyInput, InvalidPlan
from .frames import Frame


@dataclass
class FlowField:
    """Per-pixel displacement (pixels/frame) such that ``b(x+u, y+v) ~ a(x, y)``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if self.u.shape != self.v.shape or self.u.ndim != 2:
            raise DimensionMismatch("u and v must be equal-shape 2-D arrays")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise DimensionMismatch("flow contains non-finite values")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def constant(cls, width: int, height: int, u: float, v: float) -> "FlowField":
        return cls(np.full((height, width), float(u)), np.full((height, width), float(v)))


@dataclass
class SegmentPlan:
    segment_length: int
    overlap_fraction: float
    starts: list[int]

    @property
    def stride(self) -> int:
        return stride_for(self.segment_length, self.overlap_fraction)

    def ranges(self) -> list[range]:
        return [range(s, s + self.segment_length) for s in self.starts]


def stride_for(segment_length: int, overlap_fraction: float) -> int:
    return int(round(segment_length * (1.0 - overlap_fraction)))


def plan_segments(total_frames: int, segment_length: int = 100, overlap_fraction: float = 0.25) -> SegmentPlan:
    """Split ``total_frames`` into equal, overlapping segments.

    Only fully contained segments are kept; a short tail is dropped.

    >>> plan_segments(1000, 100, 0.25).starts[:3]
    [0, 75, 150]
    """
    if segment_length < 2:
        raise InvalidPlan(f"segment_length must be >= 2, got {segment_length}")
    if not 0.0 <= overlap_fraction < 1.0:
        raise InvalidPlan(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    if total_frames < segment_length:
        raise InvalidPlan(f"{total_frames} frames cannot hold one segment of {segment_length}")
    stride = stride_for(segment_length, overlap_fraction)
    if stride < 1:
        raise InvalidPlan("overlap leaves a stride below one frame")
    starts = list(range(0, total_frames - segment_length + 1, stride))
    return SegmentPlan(segment_length, overlap_fraction, starts)


# -- optical flow -----------------------------------------------------------


@dataclass
class FlowParams:
    levels: int = 3
    window: int = 15
    iterations: int = 3
    block: int = 4  # solve on a block grid, then densify bilinearly
    max_flow: float = 20.0
    regularization: float = 1e-4  # Tikhonov weight per window pixel
    presmooth: float = 1.0  # Gaussian sigma applied to both frames first

    def validate(self) -> "FlowParams":
        if self.levels < 1 or self.window < 3 or self.iterations < 1 or self.block < 1:
            raise InvalidPlan(f"invalid flow parameters {self}")
        if self.max_flow <= 0 or self.regularization < 0 or self.presmooth < 0:
            raise InvalidPlan(f"invalid flow parameters {self}")
        return self


def resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and edge clamping."""
    h, w = img.shape
    rows, cols = shape
    ys = np.clip((np.arange(rows) + 0.5) * h / rows - 0.5, 0, h - 1)
    xs = np.clip((np.arange(cols) + 0.5) * w / cols - 0.5, 0, w - 1)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return ndimage.map_coordinates(img, [yy, xx], order=1, mode="nearest")


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    for _ in range(levels - 1):
        prev = pyr[-1]
        if min(prev.shape) < 16:
            break
        pyr.append(ndimage.gaussian_filter(prev, 1.0, mode="nearest")[::2, ::2])
    return pyr


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = ndimage.correlate1d(img, [-0.5, 0.0, 0.5], axis=1, mode="nearest")
    gy = ndimage.correlate1d(img, [-0.5, 0.0, 0.5], axis=0, mode="nearest")
    return gx, gy


def _lk_level(a: np.ndarray, b: np.ndarray, u: np.ndarray, v: np.ndarray, p: FlowParams):
    h, w = a.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ax, ay = _gradients(a)
    blk = p.block
    # block centers; window sums are sampled there
    by = np.arange(blk // 2, h, blk)
    bx = np.arange(blk // 2, w, blk)
    lam = p.regularization * p.window * p.window
    for _ in range(p.iterations):
        bw = ndimage.map_coordinates(b, [yy + v, xx + u], order=1, mode="nearest")
        bx_, by_ = _gradients(bw)
        gx = 0.5 * (ax + bx_)
        gy = 0.5 * (ay + by_)
        it = bw - a
        sums = [
            ndimage.uniform_filter(arr, p.window, mode="nearest")[np.ix_(by, bx)]
            for arr in (gx * gx, gx * gy, gy * gy, gx * it, gy * it)
        ]
        gxx, gxy, gyy, bxt, byt = (s * p.window * p.window for s in sums)
        gxx = gxx + lam
        gyy = gyy + lam
        det = gxx * gyy - gxy * gxy
        det = np.where(det > 1e-12, det, np.inf)
        du = -(gyy * bxt - gxy * byt) / det
        dv = -(gxx * byt - gxy * bxt) / det
        if blk > 1:
            du = _densify(du, by, bx, (h, w))
            dv = _densify(dv, by, bx, (h, w))
        u = u + du
        v = v + dv
    return u, v


def _densify(grid: np.ndarray, by: np.ndarray, bx: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    # block-grid coordinates of every pixel
    gy = np.interp(np.arange(h), by, np.arange(len(by)))
    gx = np.interp(np.arange(w), bx, np.arange(len(bx)))
    yy, xx = np.meshgrid(gy, gx, indexing="ij")
    return ndimage.map_coordinates(grid, [yy, xx], order=1, mode="nearest")


def dense_optical_flow(a: Frame, b: Frame, params: FlowParams | None = None) -> FlowField:
    """Coarse-to-fine Lucas-Kanade flow from ``a`` to ``b``.

    Flow vectors longer than ``params.max_flow`` are scaled back to that
    length. Textureless regions stay near zero because of the Tikhonov term.
    """
    p = (params or FlowParams()).validate()
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(f"frame shapes differ: {a.pixels.shape} vs {b.pixels.shape}")
    ia = a.gray().pixels
    ib = b.gray().pixels
    if p.presmooth > 0:
        ia = ndimage.gaussian_filter(ia, p.presmooth, mode="nearest")
        ib = ndimage.gaussian_filter(ib, p.presmooth, mode="nearest")
    pa = _pyramid(ia, p.levels)
    pb = _pyramid(ib, p.levels)
    u = np.zeros(pa[-1].shape)
    v = np.zeros(pa[-1].shape)
    for lvl in range(len(pa) - 1, -1, -1):
        if u.shape != pa[lvl].shape:
            u = 2.0 * resize_bilinear(u, pa[lvl].shape)
            v = 2.0 * resize_bilinear(v, pa[lvl].shape)
        u, v = _lk_level(pa[lvl], pb[lvl], u, v, p)
        np.clip(u, -4 * p.max_flow, 4 * p.max_flow, out=u)
        np.clip(v, -4 * p.max_flow, 4 * p.max_flow, out=v)
    mag = np.hypot(u, v)
    scale = np.where(mag > p.max_flow, p.max_flow / np.maximum(mag, 1e-12), 1.0)
    return FlowField(u * scale, v * scale)


def flows_for_frames(frames: Sequence[Frame], params: FlowParams | None = None) -> list[FlowField]:
    return [dense_optical_flow(frames[i], frames[i + 1], params) for i in range(len(frames) - 1)]


# -- particle advection -----------------------------------------------------


@dataclass
class Tracklet:
    id: int
    start_frame: int
    points: np.ndarray  # (n, 2) x, y

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def net_displacement(self) -> float:
        return float(np.hypot(*(self.points[-1] - self.points[0])))


@dataclass
class TrackletSet:
    segment_start: int
    tracklets: list[Tracklet] = field(default_factory=list)
    grid_spacing: float = 10.0

    def __len__(self) -> int:
        return len(self.tracklets)

    def __iter__(self):
        return iter(self.tracklets)

    def by_id(self) -> dict[int, Tracklet]:
        return {t.id: t for t in self.tracklets}

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "segment_start": int(self.segment_start),
            "grid_spacing": float(self.grid_spacing),
            "tracklets": [
                {"id": int(t.id), "start_frame": int(t.start_frame), "points": np.round(t.points, 6).tolist()}
                for t in self.tracklets
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackletSet":
        ts = [Tracklet(int(t["id"]), int(t["start_frame"]), t["points"]) for t in d["tracklets"]]
        return cls(int(d["segment_start"]), ts, float(d["grid_spacing"]))


def save_tracklets(path: str | os.PathLike, ts: TrackletSet) -> None:
    with open(path, "w") as fh:
        json.dump(ts.to_dict(), fh)


def load_tracklets(path: str | os.PathLike) -> TrackletSet:
    with open(path) as fh:
        return TrackletSet.from_dict(json.load(fh))


def seed_grid(width: int, height: int, grid_spacing: float) -> np.ndarray:
    xs = np.arange(0.0, width, grid_spacing)
    ys = np.arange(0.0, height, grid_spacing)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def advect_particles(
    flows: Sequence[FlowField],
    grid_spacing: float = 10.0,
    segment_start: int = 0,
    seeds: np.ndarray | None = None,
) -> TrackletSet:
    """Integrate a particle grid through a segment's flow fields.

    Particles start on a regular grid (multiples of ``grid_spacing``) and
    take one explicit Euler step per flow field, sampling the flow
    bilinearly. A particle that leaves the frame (padded by 1 px) stops; its
    prefix is kept when it has at least two points.
    """
    if not flows:
        raise EmptyInput("advection needs at least one flow field")
    if grid_spacing < 1:
        raise EmptyInput("grid_spacing must be >= 1")
    h, w = flows[0].height, flows[0].width
    for f in flows:
        if (f.height, f.width) != (h, w):
            raise DimensionMismatch("flow fields differ in size")
    pos = seed_grid(w, h, grid_spacing) if seeds is None else np.asarray(seeds, dtype=np.float64).reshape(-1, 2)
    n = len(pos)
    track = np.full((len(flows) + 1, n, 2), np.nan)
    track[0] = pos
    alive = np.ones(n, dtype=bool)
    length = np.ones(n, dtype=int)
    for k, f in enumerate(flows):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        p = track[k, idx]
        coords = [p[:, 1], p[:, 0]]
        du = ndimage.map_coordinates(f.u, coords, order=1, mode="nearest")
        dv = ndimage.map_coordinates(f.v, coords, order=1, mode="nearest")
        nxt = p + np.column_stack([du, dv])
        inside = (nxt[:, 0] >= -1) & (nxt[:, 0] <= w) & (nxt[:, 1] >= -1) & (nxt[:, 1] <= h)
        track[k + 1, idx[inside]] = nxt[inside]
        length[idx[inside]] += 1
        alive[idx[~inside]] = False
    tracklets = [
        Tracklet(i, segment_start, track[: length[i], i]) for i in range(n) if length[i] >= 2
    ]
    return TrackletSet(segment_start, tracklets, float(grid_spacing))


def prune_tracklets(
    ts: TrackletSet,
    min_length: int = 0,
    min_net_displacement: float = 0.0,
    keep_stationary: bool = False,
) -> TrackletSet:
    """Drop short tracklets and, unless ``keep_stationary``, nearly static ones.

    ``min_length`` counts points. Congestion analysis passes
    ``keep_stationary=True`` since oscillating particles barely move overall.
    """
    kept = [
        t
        for t in ts.tracklets
        if len(t) >= min_length and (keep_stationary or t.net_displacement >= min_net_displacement)
    ]
    return TrackletSet(ts.segment_start, kept, ts.grid_spacing)
