"""In-memory analysis stages shared by the CLI, scripts and tests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import congestion as cg
from . import counting as ct
from . import flowsum as fs
from .config import PipelineConfig
from .errors import HomographyRequired
from .frames import Frame
from .geometry import Homography
from .motion import FlowField, SegmentPlan, TrackletSet, advect_particles, dense_optical_flow, plan_segments, prune_tracklets


def compute_flows(frames: Sequence[Frame], cfg: PipelineConfig, pairs: Sequence[int] | None = None) -> dict[int, FlowField]:
    """Flow from frame ``k`` to ``k + 1`` for each requested ``k``."""
    ks = list(range(len(frames) - 1)) if pairs is None else sorted(set(pairs))
    params = cfg.flow_params

    def one(k):
        return dense_optical_flow(frames[k], frames[k + 1], params)

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(one, ks))
    else:
        results = [one(k) for k in ks]
    return dict(zip(ks, results))


def segment_tracklets(frames: Sequence[Frame], cfg: PipelineConfig) -> tuple[SegmentPlan, list[TrackletSet]]:
    plan = plan_segments(len(frames), cfg.segment_length, cfg.overlap_fraction)
    needed = {k for r in plan.ranges() for k in r[:-1]}
    flows = compute_flows(frames, cfg, needed)
    sets = [
        advect_particles([flows[k] for k in r[:-1]], cfg.grid_spacing, segment_start=r.start)
        for r in plan.ranges()
    ]
    return plan, sets


@dataclass
class FlowSegment:
    segment_start: int
    tracklets: TrackletSet
    flows: list[fs.DominantFlow]


def analyze_flows(
    frames: Sequence[Frame],
    cfg: PipelineConfig,
    h: Homography | None = None,
    tracklet_sets: Sequence[TrackletSet] | None = None,
) -> list[FlowSegment]:
    if tracklet_sets is None:
        _, tracklet_sets = segment_tracklets(frames, cfg)
    out = []
    for ts in tracklet_sets:
        kept = prune_tracklets(ts, cfg.min_tracklet_length, cfg.min_net_displacement)
        flows = fs.dominant_flows(kept, cfg.lcs_eps, cfg.cut_distance, cfg.min_cluster_size, h, cfg.fps)
        out.append(FlowSegment(ts.segment_start, kept, flows))
    return out


@dataclass
class CongestionSegment:
    segment_start: int
    oscillation: cg.OscillationMap
    quantized: cg.QuantizedMap
    candidates: list[cg.Region]


def analyze_congestion(
    frames: Sequence[Frame],
    cfg: PipelineConfig,
    tracklet_sets: Sequence[TrackletSet] | None = None,
) -> tuple[list[cg.CongestionRegion], list[CongestionSegment]]:
    if tracklet_sets is None:
        _, tracklet_sets = segment_tracklets(frames, cfg)
    w, h = frames[0].width, frames[0].height
    segments = []
    for ts in tracklet_sets:
        kept = prune_tracklets(ts, cfg.oscillation_window + 1, keep_stationary=True)
        om = cg.build_oscillation_map(kept, w, h, cfg.cell_size, cfg.oscillation_window)
        q = cg.quantize_map(om, cfg.levels, cfg.noise_fraction, cfg.min_score)
        cands = cg.candidate_regions(q, cfg.min_level, cfg.min_region_area)
        segments.append(CongestionSegment(ts.segment_start, om, q, cands))
    regions = cg.localize_congestion(
        [(s.segment_start, s.candidates) for s in segments], cfg.persistence, cfg.match_radius
    )
    return regions, segments


def load_kernel(cfg: PipelineConfig) -> ct.ResponseKernel:
    if cfg.kernel_file:
        return ct.ResponseKernel.load(cfg.kernel_file)
    return ct.ResponseKernel.gaussian(max(1, int(np.ceil(cfg.perspective[1]))))


@dataclass
class CountResult:
    response: ct.ResponseMap
    detections: ct.DetectionSet
    density: ct.DensityGrid | None


def analyze_count(
    frame: Frame,
    cfg: PipelineConfig,
    response: ct.ResponseMap | None = None,
    h: Homography | None = None,
    want_density: bool = False,
    kernel: ct.ResponseKernel | None = None,
) -> CountResult:
    """Detections from a supplied response map, or from the built-in baseline."""
    if want_density and h is None:
        raise HomographyRequired("density output needs a homography")
    p = ct.PerspectiveModel(*cfg.perspective).validate(frame.height)
    if response is None:
        response = ct.baseline_response(frame, p, cfg.stride, cfg.contrast_floor)
        if kernel is None and not cfg.kernel_file:
            kernel = ct.measure_kernel(int(round(p.radius(frame.height / 2))), cfg.stride, cfg.contrast_floor)
    if kernel is None:
        kernel = load_kernel(cfg)
    raw = ct.upsample_response(response, frame.width, frame.height)
    dets = ct.nms_least_squares(raw, kernel, p, cfg.max_detections, score_floor=cfg.score_floor)
    density = None
    if h is not None:
        extent = cfg.density_extent or _ground_extent(h, frame)
        density = ct.density_grid(dets, h, extent)
    return CountResult(response, dets, density)


def _ground_extent(h: Homography, frame: Frame) -> tuple[float, float, float, float]:
    from .geometry import project_points

    corners = np.array([[0, 0], [frame.width - 1, 0], [0, frame.height - 1], [frame.width - 1, frame.height - 1]], float)
    g, valid = project_points(h, corners)
    g = g[valid]
    x0, y0 = np.floor(g.min(axis=0))
    x1, y1 = np.ceil(g.max(axis=0))
    return float(x0), float(y0), float(max(x1, x0 + 1)), float(max(y1, y0 + 1))
