"""Dominant-flow detection and arrow summaries.

Tracklets are compared with a longest-common-subsequence similarity,
grouped by average-linkage agglomerative clustering, and each surviving
cluster is reduced to one arrow: a mean path, a speed color, a width that
grows with the number of member tracklets, and a heading.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import cv2
import numba
import numpy as np

from .errors import DegenerateTracklet, EmptyCluster
from .frames import Frame
from .geometry import Homography, project_points
from .motion import Tracklet, TrackletSet

SPEED_COLORS = ((0, 0, 255), (0, 200, 0), (255, 255, 0), (255, 128, 0), (255, 0, 0))
N_SPEED_BINS = len(SPEED_COLORS)
MIN_WIDTH, MAX_WIDTH = 2.0, 40.0


@numba.njit(cache=True)
def _lcs_length(a, b, eps):
    n, m = a.shape[0], b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        ax, ay = a[i - 1, 0], a[i - 1, 1]
        for j in range(1, m + 1):
            if abs(ax - b[j - 1, 0]) <= eps and abs(ay - b[j - 1, 1]) <= eps:
                cur[j] = prev[j - 1] + 1
            elif prev[j] >= cur[j - 1]:
                cur[j] = prev[j]
            else:
                cur[j] = cur[j - 1]
        for j in range(m + 1):
            prev[j] = cur[j]
            cur[j] = 0
    return prev[m]


@numba.njit(cache=True)
def _lcs_matrix(points, offsets, eps):
    n = offsets.shape[0] - 1
    out = np.eye(n)
    for i in range(n):
        a = points[offsets[i] : offsets[i + 1]]
        for j in range(i + 1, n):
            b = points[offsets[j] : offsets[j + 1]]
            s = _lcs_length(a, b, eps) / min(a.shape[0], b.shape[0])
            out[i, j] = s
            out[j, i] = s
    return out


def lcs_similarity(t1: Tracklet, t2: Tracklet, eps: float = 10.0) -> float:
    """LCS length under an L-infinity match tolerance, over the shorter length."""
    if len(t1) < 2 or len(t2) < 2:
        raise DegenerateTracklet("LCS similarity needs tracklets of at least 2 points")
    if eps <= 0:
        raise DegenerateTracklet("eps must be positive")
    a = np.ascontiguousarray(t1.points)
    b = np.ascontiguousarray(t2.points)
    return _lcs_length(a, b, float(eps)) / min(len(a), len(b))


@dataclass
class SimilarityMatrix:
    ids: list[int]
    values: np.ndarray

    @property
    def n(self) -> int:
        return len(self.ids)


def build_similarity_matrix(ts: TrackletSet | Sequence[Tracklet], eps: float = 10.0) -> SimilarityMatrix:
    tracklets = list(ts)
    if not tracklets:
        raise EmptyCluster("no tracklets to compare")
    for t in tracklets:
        if len(t) < 2:
            raise DegenerateTracklet(f"tracklet {t.id} has fewer than 2 points")
    points = np.ascontiguousarray(np.concatenate([t.points for t in tracklets]))
    offsets = np.concatenate([[0], np.cumsum([len(t) for t in tracklets])]).astype(np.int64)
    values = _lcs_matrix(points, offsets, float(eps))
    return SimilarityMatrix([t.id for t in tracklets], values)


@dataclass
class FlowCluster:
    member_ids: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.member_ids)


def average_linkage(dist: np.ndarray, cut_distance: float) -> list[list[int]]:
    """Agglomerate with average linkage until the closest pair exceeds the cut.

    Equal merge distances resolve to the lexicographically smallest pair of
    current cluster slots, where a merged cluster keeps the lower slot.
    """
    n = len(dist)
    d = np.array(dist, dtype=np.float64)
    np.fill_diagonal(d, np.inf)
    sizes = np.ones(n)
    members = [[i] for i in range(n)]
    active = np.ones(n, dtype=bool)
    for _ in range(n - 1):
        flat = int(np.argmin(d))
        i, j = divmod(flat, n)
        if not d[i, j] <= cut_distance:
            break
        if j < i:
            i, j = j, i
        # Lance-Williams update for average linkage
        merged = (sizes[i] * d[i] + sizes[j] * d[j]) / (sizes[i] + sizes[j])
        d[i] = merged
        d[:, i] = merged
        d[i, i] = np.inf
        d[j, :] = np.inf
        d[:, j] = np.inf
        sizes[i] += sizes[j]
        members[i].extend(members[j])
        members[j] = []
        active[j] = False
    return [sorted(members[k]) for k in range(n) if active[k]]


def cluster_tracklets(sim: SimilarityMatrix, cut_distance: float = 0.5, min_cluster_size: int = 5) -> list[FlowCluster]:
    """Cluster on ``1 - similarity`` and drop clusters below ``min_cluster_size``.

    Tracklets are processed in id order so the result does not depend on
    input ordering. Clusters come back largest first.
    """
    if not 0.0 < cut_distance < 1.0:
        raise ValueError(f"cut_distance must be in (0, 1), got {cut_distance}")
    order = np.argsort(sim.ids, kind="stable")
    ids = [sim.ids[k] for k in order]
    vals = np.asarray(sim.values)[np.ix_(order, order)]
    groups = average_linkage(1.0 - vals, cut_distance)
    clusters = [FlowCluster(tuple(ids[k] for k in g)) for g in groups if len(g) >= min_cluster_size]
    clusters.sort(key=lambda c: (-c.size, c.member_ids[0]))
    return clusters


def resample_path(points: np.ndarray, n: int = 20) -> np.ndarray:
    """Resample a polyline to ``n`` points equally spaced by arc length."""
    p = np.asarray(points, dtype=np.float64)
    seg = np.hypot(*np.diff(p, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] <= 0:
        return np.repeat(p[:1], n, axis=0)
    t = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(t, s, p[:, 0]), np.interp(t, s, p[:, 1])])


def step_speeds(points: np.ndarray, fps: float, h: Homography | None = None) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64)
    if h is not None:
        p, _ = project_points(h, p)
    return np.hypot(*np.diff(p, axis=0).T) * fps


def speed_scale(ts: TrackletSet | Sequence[Tracklet], fps: float, h: Homography | None = None) -> float:
    """95th percentile per-step speed over a tracklet population."""
    speeds = [step_speeds(t.points, fps, h) for t in ts if len(t) >= 2]
    if not speeds:
        return 0.0
    allv = np.concatenate(speeds)
    allv = allv[np.isfinite(allv)]
    return float(np.percentile(allv, 95)) if allv.size else 0.0


def speed_bin(speed: float, max_speed: float) -> int:
    if max_speed <= 0:
        return 0
    return int(min(N_SPEED_BINS - 1, max(0, np.floor(N_SPEED_BINS * speed / max_speed))))


def arrow_width(density: float, scale: float) -> float:
    return float(np.clip(density * scale, MIN_WIDTH, MAX_WIDTH))


@dataclass
class DominantFlow:
    representative_path: np.ndarray
    mean_speed: float  # pixels per second
    mean_speed_m_s: float | None
    density: int
    direction: np.ndarray
    color_bin: int
    width: float

    def to_dict(self) -> dict:
        return {
            "path": np.round(self.representative_path, 4).tolist(),
            "mean_speed_px_s": round(float(self.mean_speed), 6),
            "mean_speed_m_s": None if self.mean_speed_m_s is None else round(float(self.mean_speed_m_s), 6),
            "density": int(self.density),
            "direction": np.round(self.direction, 6).tolist(),
            "color_bin": int(self.color_bin),
        }


def summarize_cluster(
    cluster: FlowCluster,
    ts: TrackletSet,
    h: Homography | None = None,
    fps: float = 25.0,
    max_speed: float | None = None,
    n_points: int = 20,
    width_scale: float = 0.5,
) -> DominantFlow:
    """Reduce a cluster to one arrow.

    ``max_speed`` sets the top of the color scale; by default it is the 95th
    percentile step speed over the whole tracklet set, in the same unit used
    for binning (m/s when ``h`` is given).
    """
    if cluster.size == 0:
        raise EmptyCluster("cannot summarize an empty cluster")
    lookup = ts.by_id()
    members = [lookup[i] for i in cluster.member_ids]
    path = np.mean([resample_path(t.points, n_points) for t in members], axis=0)

    px_speed = float(np.mean(np.concatenate([step_speeds(t.points, fps) for t in members])))
    m_speed = None
    if h is not None:
        m_speed = float(np.nanmean(np.concatenate([step_speeds(t.points, fps, h) for t in members])))

    # heading of the final path segment; a stalled tail falls back to net motion
    tangent = path[-1] - path[-2]
    if np.hypot(*tangent) < 1e-9:
        tangent = np.mean([t.points[-1] - t.points[0] for t in members], axis=0)
    norm = np.hypot(*tangent)
    direction = tangent / norm if norm > 1e-12 else np.array([1.0, 0.0])

    binned = m_speed if m_speed is not None else px_speed
    if max_speed is None:
        max_speed = speed_scale(ts, fps, h)
    return DominantFlow(
        representative_path=path,
        mean_speed=px_speed,
        mean_speed_m_s=m_speed,
        density=cluster.size,
        direction=direction,
        color_bin=speed_bin(binned, max_speed),
        width=arrow_width(cluster.size, width_scale),
    )


def dominant_flows(
    ts: TrackletSet,
    eps: float = 10.0,
    cut_distance: float = 0.5,
    min_cluster_size: int = 5,
    h: Homography | None = None,
    fps: float = 25.0,
) -> list[DominantFlow]:
    if len(ts) == 0:
        return []
    sim = build_similarity_matrix(ts, eps)
    clusters = cluster_tracklets(sim, cut_distance, min_cluster_size)
    max_speed = speed_scale(ts, fps, h)
    return [summarize_cluster(c, ts, h, fps, max_speed) for c in clusters]


def _stroke_mask(shape: tuple[int, int], path: np.ndarray, width: float) -> np.ndarray:
    """Pixels whose center lies within ``width / 2`` of the polyline."""
    h, w = shape
    half = width / 2.0
    mask = np.zeros(shape, dtype=bool)
    x0, y0 = np.floor(path.min(axis=0) - half).astype(int)
    x1, y1 = np.ceil(path.max(axis=0) + half).astype(int)
    x0, y0, x1, y1 = max(x0, 0), max(y0, 0), min(x1, w - 1), min(y1, h - 1)
    if x1 < x0 or y1 < y0:
        return mask
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    q = np.stack([xx, yy], axis=-1).astype(np.float64)
    best = np.full(xx.shape, np.inf)
    segs = zip(path[:-1], path[1:]) if len(path) > 1 else [(path[0], path[0])]
    for a, b in segs:
        ab = b - a
        den = float(ab @ ab)
        t = np.clip(((q - a) @ ab) / den, 0.0, 1.0) if den > 0 else np.zeros(xx.shape)
        d = np.hypot(*(q - a - t[..., None] * ab).transpose(2, 0, 1))
        best = np.minimum(best, d)
    mask[y0 : y1 + 1, x0 : x1 + 1] = best <= half + 1e-9
    return mask


def render_flow_overlay(frame: Frame, flows: Sequence[DominantFlow], scale: float = 0.5) -> Frame:
    """Draw each flow as a thick polyline with a triangular head."""
    img = np.ascontiguousarray(np.round(frame.rgb().pixels * 255).astype(np.uint8))
    for f in flows:
        width = arrow_width(f.density, scale)
        color = SPEED_COLORS[f.color_bin]
        path = np.asarray(f.representative_path, dtype=np.float64)
        head_len = max(2.0 * width, 6.0)
        tip = path[-1]
        base = tip - f.direction * head_len
        # shaft stops at the head's base
        shaft = np.vstack([path[:-1], base]) if len(path) > 1 else path
        img[_stroke_mask(img.shape[:2], shaft, width)] = color
        normal = np.array([-f.direction[1], f.direction[0]])
        tri = np.array([tip, base + normal * width, base - normal * width])
        cv2.fillPoly(img, [np.round(tri).astype(np.int32)], color, lineType=cv2.LINE_8)
    return Frame(img.astype(np.float64) / 255.0, frame.timestamp)


def flow_summary_dict(segment_start: int, flows: Sequence[DominantFlow]) -> dict:
    return {"schema": 1, "segment_start": int(segment_start), "flows": [f.to_dict() for f in flows]}


def save_flow_summary(path: str | os.PathLike, segment_start: int, flows: Sequence[DominantFlow]) -> None:
    with open(path, "w") as fh:
        json.dump(flow_summary_dict(segment_start, flows), fh, indent=1)
