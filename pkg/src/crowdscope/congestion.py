"""Congestion detection from lateral oscillation of tracklets.

Per segment: score every tracklet point by how much it zig-zags across its
own smoothed heading, average the scores on a coarse grid, quantize, and
keep connected blobs of high cells. Across segments: chain blobs whose
centroids stay close and keep chains that persist.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import TrackletTooShort
from .frames import Frame
from .flowsum import SPEED_COLORS
from .motion import Tracklet, TrackletSet, resize_bilinear

STATIONARY_EPS = 1e-6


def _window_bounds(n_steps: int, window: int) -> np.ndarray:
    """Start index of the centered, range-clamped step window for each point."""
    centers = np.arange(n_steps + 1)
    return np.clip(centers - window // 2, 0, n_steps - window)


def oscillation_score(t: Tracklet | np.ndarray, window: int = 16) -> np.ndarray:
    """Per-point lateral-oscillation score.

    For point ``i`` the ``window`` steps centered on it (shifted inward near
    the ends) define a heading, the unit mean step. Steps are projected on
    the heading's normal; the score is the number of sign changes of that
    projection times its mean magnitude, divided by ``window``. Windows with
    mean step below 1e-6 px score 0.
    """
    pts = t.points if isinstance(t, Tracklet) else np.asarray(t, dtype=np.float64)
    if window < 4:
        raise TrackletTooShort(f"window must be >= 4, got {window}")
    if len(pts) - 1 < window:
        raise TrackletTooShort(f"tracklet has {len(pts) - 1} steps, window needs {window}")
    steps = np.diff(pts, axis=0)
    n_steps = len(steps)
    starts = _window_bounds(n_steps, window)
    # score each distinct window once
    uniq, inverse = np.unique(starts, return_inverse=True)
    idx = uniq[:, None] + np.arange(window)
    win = steps[idx]  # (k, window, 2)
    mean = win.mean(axis=1)
    mag = np.hypot(mean[:, 0], mean[:, 1])
    safe = np.where(mag > STATIONARY_EPS, mag, 1.0)
    normal = np.column_stack([-mean[:, 1], mean[:, 0]]) / safe[:, None]
    lateral = np.einsum("kwd,kd->kw", win, normal)
    crossings = np.sum(lateral[:, 1:] * lateral[:, :-1] < 0, axis=1)
    amplitude = np.mean(np.abs(lateral), axis=1)
    score = np.where(mag > STATIONARY_EPS, crossings * amplitude / window, 0.0)
    return score[inverse]


@dataclass
class OscillationMap:
    grid_w: int
    grid_h: int
    cell_size: float
    scores: np.ndarray  # (grid_h, grid_w)
    counts: np.ndarray
    segment_start: int = 0


def build_oscillation_map(
    ts: TrackletSet | Sequence[Tracklet],
    width: int,
    height: int,
    cell_size: float = 16.0,
    window: int = 16,
) -> OscillationMap:
    """Mean oscillation score of the tracklet points falling in each cell.

    Tracklets too short for ``window`` contribute nothing.
    """
    gw = int(np.ceil(width / cell_size))
    gh = int(np.ceil(height / cell_size))
    acc = np.zeros(gh * gw)
    counts = np.zeros(gh * gw)
    for t in ts:
        if len(t) - 1 < window:
            continue
        s = oscillation_score(t, window)
        cx = np.clip(np.floor(t.points[:, 0] / cell_size).astype(int), 0, gw - 1)
        cy = np.clip(np.floor(t.points[:, 1] / cell_size).astype(int), 0, gh - 1)
        cell = cy * gw + cx
        np.add.at(acc, cell, s)
        np.add.at(counts, cell, 1)
    scores = acc / np.maximum(counts, 1)
    seg = ts.segment_start if isinstance(ts, TrackletSet) else 0
    return OscillationMap(gw, gh, float(cell_size), scores.reshape(gh, gw), counts.reshape(gh, gw), seg)


@dataclass
class QuantizedMap:
    levels: int
    labels: np.ndarray  # (grid_h, grid_w) ints in [0, levels - 1]
    cell_size: float = 16.0
    segment_start: int = 0


def quantize_map(m: OscillationMap, levels: int = 4, noise_fraction: float = 0.05, min_score: float = 0.0) -> QuantizedMap:
    """Quantize scores into ``levels - 1`` equal bins above a noise floor.

    The floor is ``max(noise_fraction * max score, min_score)``; scores below
    it get label 0. ``min_score`` is an absolute floor so that a scene with
    no real oscillation does not have its noise stretched over all levels.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    s = m.scores
    top = float(s.max()) if s.size else 0.0
    labels = np.zeros(s.shape, dtype=int)
    floor = max(noise_fraction * top, min_score)
    if top > 0 and top >= floor:
        nbins = levels - 1
        if top > floor:
            k = np.floor((s - floor) / (top - floor) * nbins).astype(int) + 1
        else:
            k = np.full(s.shape, nbins)
        labels = np.where(s >= floor, np.clip(k, 1, nbins), 0)
    return QuantizedMap(levels, labels, m.cell_size, m.segment_start)


@dataclass
class Region:
    centroid: np.ndarray  # pixels
    area: int  # cells


EIGHT = np.ones((3, 3), dtype=int)


def candidate_regions(q: QuantizedMap, min_level: int = 2, min_region_area: int = 4) -> list[Region]:
    """8-connected blobs of cells at or above ``min_level``."""
    if not 1 <= min_level < q.levels:
        raise ValueError(f"min_level must be in [1, {q.levels - 1}]")
    mask = q.labels >= min_level
    lab, n = ndimage.label(mask, structure=EIGHT)
    regions = []
    for k in range(1, n + 1):
        ys, xs = np.nonzero(lab == k)
        if len(xs) < min_region_area:
            continue
        centroid = (np.array([xs.mean(), ys.mean()]) + 0.5) * q.cell_size
        regions.append(Region(centroid, int(len(xs))))
    regions.sort(key=lambda r: (-r.area, r.centroid[1], r.centroid[0]))
    return regions


@dataclass
class CongestionRegion:
    centroid: np.ndarray
    area: int
    confidence: float
    segments_present: list[int]
    kind: str  # "fixed" or "dynamic"
    track: list[np.ndarray] = field(default_factory=list)  # chained centroid per present segment

    def to_dict(self) -> dict:
        return {
            "centroid": np.round(self.centroid, 4).tolist(),
            "area_cells": int(self.area),
            "confidence": round(float(self.confidence), 6),
            "kind": self.kind,
            "segments": [int(s) for s in self.segments_present],
            "track": [np.round(c, 4).tolist() for c in self.track],
        }


def localize_congestion(
    per_segment_candidates: Sequence[tuple[int, Sequence[Region]]],
    persistence: float = 0.5,
    match_radius: float = 48.0,
) -> list[CongestionRegion]:
    """Chain candidate regions over consecutive segments.

    Each region in a segment extends the nearest chain that ended in the
    previous segment, if within ``match_radius``; otherwise it opens a new
    chain. Larger regions pick first. Chains present in at least
    ``persistence`` of all segments are reported, ``fixed`` when their
    centroid spread (RMS distance to the mean) is below ``match_radius / 2``.
    """
    if not per_segment_candidates:
        raise ValueError("need at least one segment")
    if not 0.0 < persistence <= 1.0:
        raise ValueError("persistence must be in (0, 1]")
    n_seg = len(per_segment_candidates)
    chains: list[list[tuple[int, int, Region]]] = []  # (segment index, segment start, region)
    for si, (start, regions) in enumerate(per_segment_candidates):
        open_chains = [c for c in chains if c[-1][0] == si - 1]
        taken: set[int] = set()
        for r in sorted(regions, key=lambda r: (-r.area, r.centroid[1], r.centroid[0])):
            best, best_d = None, np.inf
            for ci, c in enumerate(open_chains):
                if ci in taken:
                    continue
                d = float(np.hypot(*(r.centroid - c[-1][2].centroid)))
                if d <= match_radius and d < best_d:
                    best, best_d = ci, d
            if best is None:
                chains.append([(si, start, r)])
            else:
                taken.add(best)
                open_chains[best].append((si, start, r))
    out = []
    for c in chains:
        confidence = len(c) / n_seg
        if confidence < persistence - 1e-12:
            continue
        cents = np.array([r.centroid for _, _, r in c])
        mean = cents.mean(axis=0)
        spread = float(np.sqrt(np.mean(np.sum((cents - mean) ** 2, axis=1))))
        out.append(
            CongestionRegion(
                centroid=mean,
                area=int(round(np.mean([r.area for _, _, r in c]))),
                confidence=float(confidence),
                segments_present=[s for _, s, _ in c],
                kind="fixed" if spread < match_radius / 2 else "dynamic",
                track=list(cents),
            )
        )
    out.sort(key=lambda r: (-r.confidence, r.segments_present[0], r.centroid[1], r.centroid[0]))
    return out


def congestion_dict(regions: Sequence[CongestionRegion]) -> dict:
    return {"schema": 1, "regions": [r.to_dict() for r in regions]}


def save_congestion(path: str | os.PathLike, regions: Sequence[CongestionRegion]) -> None:
    with open(path, "w") as fh:
        json.dump(congestion_dict(regions), fh, indent=1)


def render_heatmap(frame: Frame, m: OscillationMap, alpha: float = 0.5) -> Frame:
    """Blend the upsampled map over ``frame`` with the speed color scale."""
    rgb = frame.rgb().pixels
    top = m.scores.max()
    if top <= 0:
        return Frame(rgb.copy(), frame.timestamp)
    norm = resize_bilinear(m.scores / top, (m.grid_h * int(m.cell_size), m.grid_w * int(m.cell_size)))
    norm = norm[: frame.height, : frame.width]
    if norm.shape != (frame.height, frame.width):
        norm = resize_bilinear(norm, (frame.height, frame.width))
    colors = np.array(SPEED_COLORS, dtype=np.float64) / 255.0
    bins = np.clip((norm * len(colors)).astype(int), 0, len(colors) - 1)
    overlay = colors[bins]
    a = np.where(norm > 1e-9, alpha, 0.0)[:, :, None]
    return Frame(np.clip((1 - a) * rgb + a * overlay, 0.0, 1.0), frame.timestamp)
