"""Pipeline configuration: one flat dataclass, loadable from JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .errors import InvalidConfig
from .motion import FlowParams


@dataclass
class PipelineConfig:
    input: str = ""
    output: str = ""
    fps: float = 25.0
    seed: int = 0
    threads: int = 1
    # segmentation and advection
    segment_length: int = 100
    overlap_fraction: float = 0.25
    flow_levels: int = 3
    flow_window: int = 15
    flow_iterations: int = 3
    flow_block: int = 4
    max_flow: float = 20.0
    grid_spacing: float = 10.0
    # dominant flows
    min_tracklet_length: int = 10
    min_net_displacement: float = 10.0
    lcs_eps: float = 10.0
    cut_distance: float = 0.5
    min_cluster_size: int = 5
    arrow_scale: float = 0.5
    # congestion
    oscillation_window: int = 16
    cell_size: float = 16.0
    levels: int = 4
    min_level: int = 2
    min_region_area: int = 4
    noise_fraction: float = 0.05
    min_score: float = 0.05
    persistence: float = 0.5
    match_radius: float = 48.0
    # counting
    stride: int = 3
    contrast_floor: float = 0.1  # baseline detector
    perspective: tuple[float, float] = (0.0, 5.0)  # r(y) = a*y + b
    kernel_file: str | None = None
    score_floor: float = 0.5
    max_detections: int | None = None
    homography_file: str | None = None
    density_extent: tuple[float, float, float, float] | None = None

    def validate(self) -> "PipelineConfig":
        checks = [
            (self.fps > 0, "fps must be > 0"),
            (self.threads >= 1, "threads must be >= 1"),
            (self.segment_length >= 2, "segment_length must be >= 2"),
            (self.flow_levels >= 1 and self.flow_window >= 3 and self.flow_iterations >= 1, "invalid flow parameters"),
            (self.flow_block >= 1 and self.max_flow > 0, "invalid flow parameters"),
            (self.grid_spacing >= 1, "grid_spacing must be >= 1"),
            (self.min_tracklet_length >= 0 and self.min_net_displacement >= 0, "prune thresholds must be >= 0"),
            (self.lcs_eps > 0, "lcs_eps must be > 0"),
            (0 < self.cut_distance < 1, "cut_distance must be in (0, 1)"),
            (self.min_cluster_size >= 1, "min_cluster_size must be >= 1"),
            (self.oscillation_window >= 4, "oscillation_window must be >= 4"),
            (self.cell_size > 0, "cell_size must be > 0"),
            (self.levels >= 2 and 1 <= self.min_level < self.levels, "need levels >= 2 and 1 <= min_level < levels"),
            (self.min_region_area >= 1, "min_region_area must be >= 1"),
            (0 <= self.noise_fraction < 1 and self.min_score >= 0, "invalid quantization floor"),
            (0 < self.persistence <= 1, "persistence must be in (0, 1]"),
            (self.match_radius > 0, "match_radius must be > 0"),
            (self.stride >= 1, "stride must be >= 1"),
            (self.contrast_floor > 0, "contrast_floor must be > 0"),
            (len(self.perspective) == 2, "perspective needs two values a,b"),
            (self.score_floor > 0, "score_floor must be > 0"),
        ]
        # overlap_fraction is validated by plan_segments so it reports InvalidPlan
        for ok, msg in checks:
            if not ok:
                raise InvalidConfig(msg)
        return self

    @property
    def flow_params(self) -> FlowParams:
        return FlowParams(self.flow_levels, self.flow_window, self.flow_iterations, self.flow_block, self.max_flow)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        for key in ("perspective", "density_extent"):
            if d.get(key) is not None:
                d[key] = tuple(float(v) for v in d[key])
        return cls(**d)

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidConfig("config must be a JSON object")
        return cls.from_dict(data)

    def updated(self, **overrides) -> "PipelineConfig":
        d = asdict(self)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return PipelineConfig.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """Hash of the analysis settings (paths excluded)."""
        d = self.to_dict()
        d.pop("input")
        d.pop("output")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()
