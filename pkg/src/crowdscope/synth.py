"""Synthetic crowd scenes with ground truth.

Agents walk along lanes toward goal regions with short-range exponential
repulsion from each other and from obstacles. An agent whose forward
progress in a frame drops below half its lane speed counts as blocked and
is drawn with a fresh uniform lateral offset (up to ``jitter`` px) that
frame. Heads are dark Gaussian blobs on a smooth value-noise background.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InvalidSpec
from .frames import Frame, write_sequence

Rect = tuple[float, float, float, float]  # x0, y0, x1, y1


@dataclass
class Lane:
    entry: Rect
    goal: Rect
    speed: float  # px/frame; 0 means agents stand still
    weight: float = 1.0  # share of agents

    @property
    def direction(self) -> np.ndarray:
        e = np.array(_center(self.entry))
        g = np.array(_center(self.goal))
        d = g - e
        n = np.hypot(*d)
        return d / n if n > 0 else np.array([1.0, 0.0])


@dataclass
class Blocker:
    """A tight group moving slowly through the scene, acting as a moving obstacle."""

    start: tuple[float, float]  # center at frame 0
    velocity: tuple[float, float]  # px/frame
    size: tuple[float, float]  # width, height

    def rect(self, t: int) -> Rect:
        cx = self.start[0] + self.velocity[0] * t
        cy = self.start[1] + self.velocity[1] * t
        w, h = self.size
        return (cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2)


@dataclass
class ScenarioSpec:
    name: str
    width: int = 192
    height: int = 128
    frames: int = 100
    fps: float = 25.0
    agents: int = 0
    lanes: list[Lane] = field(default_factory=list)
    obstacles: list[Rect] = field(default_factory=list)
    bottleneck: Rect | None = None
    blockers: list[Blocker] = field(default_factory=list)
    blob_radius: float | tuple[float, float] = 4.0  # px, or (a, b) with r(y) = a*y + b
    seed: int = 0
    noise: float = 0.01
    jitter: float = 2.0
    texture: float = 0.08  # background value-noise std
    placement: str = "lanes"  # "lanes" or "lattice" (static grid for counting)
    respawn: bool = True
    spawn_gap: float = 1.5  # minimum spawn spacing in head diameters
    analysis: dict = field(default_factory=dict)  # suggested pipeline overrides

    def radius_at(self, y) -> np.ndarray | float:
        if isinstance(self.blob_radius, (tuple, list)):
            a, b = self.blob_radius
            return a * np.asarray(y, dtype=np.float64) + b
        return np.full(np.shape(y), float(self.blob_radius)) if np.ndim(y) else float(self.blob_radius)

    @property
    def mean_radius(self) -> float:
        return float(np.mean(self.radius_at(np.array([0.0, self.height - 1.0]))))

    def validate(self) -> "ScenarioSpec":
        if self.frames < 2:
            raise InvalidSpec("frames must be >= 2")
        if self.agents < 0:
            raise InvalidSpec("agents must be >= 0")
        if self.width < 8 or self.height < 8:
            raise InvalidSpec("frame too small")
        if self.agents > 0 and self.placement == "lanes" and not self.lanes:
            raise InvalidSpec("agents need at least one lane")
        if self.placement not in ("lanes", "lattice"):
            raise InvalidSpec(f"unknown placement {self.placement!r}")
        if min(self.radius_at(np.array([0.0, self.height - 1.0]))) < 1.0:
            raise InvalidSpec("blob radius must be >= 1 px")
        for lane in self.lanes:
            if lane.speed < 0:
                raise InvalidSpec("lane speeds must be non-negative")
            for r in (lane.entry, lane.goal):
                self._check_rect(r)
        for r in self.obstacles:
            self._check_rect(r)
        if self.bottleneck is not None:
            self._check_rect(self.bottleneck)
        if self.noise < 0 or self.fps <= 0:
            raise InvalidSpec("noise must be >= 0 and fps > 0")
        return self

    def _check_rect(self, r: Rect):
        x0, y0, x1, y1 = r
        if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
            raise InvalidSpec(f"region {r} outside {self.width}x{self.height} frame")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["lanes"] = [Lane(**{**l, "entry": tuple(l["entry"]), "goal": tuple(l["goal"])}) for l in d.get("lanes", [])]
        d["blockers"] = [Blocker(tuple(b["start"]), tuple(b["velocity"]), tuple(b["size"])) for b in d.get("blockers", [])]
        d["obstacles"] = [tuple(o) for o in d.get("obstacles", [])]
        if d.get("bottleneck") is not None:
            d["bottleneck"] = tuple(d["bottleneck"])
        if isinstance(d.get("blob_radius"), list):
            d["blob_radius"] = tuple(d["blob_radius"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidSpec(str(exc)) from exc


@dataclass
class GroundTruth:
    trajectories: list[dict]  # {"agent", "lane", "start_frame", "points"}
    lane_directions: list[np.ndarray]
    congestion_center: np.ndarray | None
    per_frame_heads: list[np.ndarray]
    lane_agents: list[int] = field(default_factory=list)
    congestion_track: list[np.ndarray] | None = None  # per-frame blockage position
    blocked_centroids: list[np.ndarray | None] = field(default_factory=list)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.round(np.asarray(a, dtype=np.float64), 4).tolist()

        return {
            "schema": 1,
            "trajectories": [{**t, "points": arr(t["points"])} for t in self.trajectories],
            "lane_directions": [arr(d) for d in self.lane_directions],
            "lane_agents": list(self.lane_agents),
            "congestion_center": arr(self.congestion_center),
            "congestion_track": None if self.congestion_track is None else [arr(c) for c in self.congestion_track],
            "per_frame_heads": [arr(h) for h in self.per_frame_heads],
        }


def _center(r: Rect) -> tuple[float, float]:
    return ((r[0] + r[2]) / 2.0, (r[1] + r[3]) / 2.0)


def _inside(p: np.ndarray, r: Rect, pad: float = 0.0) -> np.ndarray:
    return (p[..., 0] > r[0] - pad) & (p[..., 0] < r[2] + pad) & (p[..., 1] > r[1] - pad) & (p[..., 1] < r[3] + pad)


def _rect_offset(p: np.ndarray, r: Rect) -> np.ndarray:
    """Vector from the nearest point of ``r`` to each point (zero inside)."""
    nearest = np.column_stack([np.clip(p[:, 0], r[0], r[2]), np.clip(p[:, 1], r[1], r[3])])
    return p - nearest


def value_noise(width: int, height: int, rng: np.random.Generator, amplitude: float = 0.05, mean: float = 0.6) -> np.ndarray:
    """Smooth multi-octave noise texture."""
    tex = np.zeros((height, width))
    total = 0.0
    for cell, weight in ((16, 1.0), (8, 0.6), (4, 0.35)):
        gh, gw = height // cell + 2, width // cell + 2
        coarse = rng.standard_normal((gh, gw))
        yy, xx = np.mgrid[0:height, 0:width] / cell
        tex += weight * ndimage.map_coordinates(coarse, [yy, xx], order=3, mode="nearest")
        total += weight
    tex /= total
    tex = (tex - tex.mean()) / (tex.std() + 1e-12)
    return mean + amplitude * tex


def render_blob(img: np.ndarray, x: float, y: float, r: float, depth: float) -> None:
    """Darken ``img`` in place with a Gaussian head of radius ``r``."""
    h, w = img.shape
    ext = int(np.ceil(2 * r)) + 1
    x0, x1 = max(0, int(np.floor(x)) - ext), min(w, int(np.floor(x)) + ext + 1)
    y0, y1 = max(0, int(np.floor(y)) - ext), min(h, int(np.floor(y)) + ext + 1)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    sigma = r / 2.0
    g = np.exp(-((xx - x) ** 2 + (yy - y) ** 2) / (2 * sigma**2))
    img[y0:y1, x0:x1] *= 1.0 - depth * g


class _Sim:
    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        self.r = spec.mean_radius
        self.d0 = 2.0 * self.r
        self.lane_of = np.zeros(spec.agents, dtype=int)
        self.pos = np.zeros((spec.agents, 2))
        self.active = np.zeros(spec.agents, dtype=bool)
        self.depth = self.rng.uniform(0.35, 0.5, spec.agents)
        self.passed_gap = np.zeros(spec.agents, dtype=bool)
        self.cutoff = 1.5 * self.d0
        self.spawn_gap = spec.spawn_gap * self.d0
        self.band = []
        for lane in spec.lanes:
            d = lane.direction
            n = np.array([-d[1], d[0]])
            corners = np.array([[lane.entry[0], lane.entry[1]], [lane.entry[2], lane.entry[3]],
                                [lane.entry[0], lane.entry[3]], [lane.entry[2], lane.entry[1]]])
            lat = corners @ n
            self.band.append((lat.min(), lat.max(), n))
        self.members = self._blocker_members()

    def _blocker_members(self) -> list[np.ndarray]:
        """Fixed head offsets inside each blocker rectangle."""
        out = []
        step = 2.4 * self.r
        for b in self.spec.blockers:
            w, h = b.size
            xs = np.arange(-w / 2 + self.r, w / 2 - self.r + 1e-9, step)
            ys = np.arange(-h / 2 + self.r, h / 2 - self.r + 1e-9, step)
            yy, xx = np.meshgrid(ys, xs, indexing="ij")
            offs = np.column_stack([xx.ravel(), yy.ravel()])
            offs += self.rng.uniform(-0.3 * self.r, 0.3 * self.r, offs.shape)
            out.append(offs)
        return out

    def blocker_heads(self, t: int) -> np.ndarray:
        heads = [np.array(_center(b.rect(t))) + offs for b, offs in zip(self.spec.blockers, self.members)]
        return np.vstack(heads) if heads else np.zeros((0, 2))

    # -- placement ------------------------------------------------------

    def _free(self, p: np.ndarray, min_d: float, t: int = 0) -> bool:
        if any(_inside(p, o, self.r).item() for o in self._obstacles(t)):
            return False
        if not self.active.any():
            return True
        d = np.hypot(*(self.pos[self.active] - p).T)
        return bool(np.all(d >= min_d))

    def _obstacles(self, t: int) -> list[Rect]:
        return list(self.spec.obstacles) + [b.rect(t) for b in self.spec.blockers]

    def _corridor(self, lane: Lane) -> Rect:
        xs = (lane.entry[0], lane.entry[2], lane.goal[0], lane.goal[2])
        ys = (lane.entry[1], lane.entry[3], lane.goal[1], lane.goal[3])
        return (min(xs), min(ys), max(xs), max(ys))

    def _sample_in(self, region: Rect, min_d: float, tries: int = 60, t: int = 0) -> np.ndarray | None:
        for _ in range(tries):
            p = np.array([self.rng.uniform(region[0], region[2]), self.rng.uniform(region[1], region[3])])
            if self._free(p, min_d, t):
                return p
        return None

    def place_initial(self):
        spec = self.spec
        if spec.agents == 0:
            return
        if spec.placement == "lattice":
            self._place_lattice()
            return
        w = np.array([l.weight for l in spec.lanes], dtype=np.float64)
        quota = np.floor(w / w.sum() * spec.agents).astype(int)
        quota[: spec.agents - quota.sum()] += 1
        self.lane_of = np.repeat(np.arange(len(spec.lanes)), quota)
        spacing = self.spawn_gap
        for i in range(spec.agents):
            lane = spec.lanes[self.lane_of[i]]
            p = self._sample_in(self._corridor(lane), spacing)
            if p is not None:
                self.pos[i] = p
                self.active[i] = True

    def _place_lattice(self):
        spec = self.spec
        n = spec.agents
        aspect = spec.width / spec.height
        cols = int(np.ceil(np.sqrt(n * aspect)))
        rows = int(np.ceil(n / cols))
        dx, dy = spec.width / cols, spec.height / rows
        cells = [(c, r) for r in range(rows) for c in range(cols)]
        keep = np.sort(self.rng.choice(len(cells), size=n, replace=False))
        jit = min(dx, dy) * 0.12
        for i, k in enumerate(keep):
            c, r = cells[k]
            self.pos[i] = [(c + 0.5) * dx + self.rng.uniform(-jit, jit), (r + 0.5) * dy + self.rng.uniform(-jit, jit)]
        self.active[:] = True

    # -- dynamics -------------------------------------------------------

    def _desired(self, i: int) -> np.ndarray:
        lane = self.spec.lanes[self.lane_of[i]]
        d = lane.direction
        gap = self.spec.bottleneck
        if gap is None or self.passed_gap[i]:
            return d
        c = np.array(_center(gap))
        n = np.array([-d[1], d[0]])
        gw, gh = gap[2] - gap[0], gap[3] - gap[1]
        half_depth = (abs(d[0]) * gw + abs(d[1]) * gh) / 2
        half_open = max(0.0, (abs(n[0]) * gw + abs(n[1]) * gh) / 2 - self.r)
        p = self.pos[i]
        if np.dot(c - p, d) < -half_depth:
            self.passed_gap[i] = True
            return d
        lat = float(np.dot(p - c, n))
        if abs(lat) <= half_open:
            return d
        # steer toward the nearest usable point of the gap mouth
        target = c + n * np.clip(lat, -half_open, half_open) - d * half_depth
        to = target - p
        norm = np.hypot(*to)
        return to / norm if norm > 1e-9 else d

    def step(self, t: int):
        spec = self.spec
        obstacles = self._obstacles(t)
        idx = np.flatnonzero(self.active)
        obs_pos = {}
        lateral = np.zeros((spec.agents, 2))
        blocked = np.zeros(spec.agents, dtype=bool)
        if idx.size == 0:
            return obs_pos, blocked
        if not spec.lanes:
            return {i: self.pos[i].copy() for i in idx}, blocked
        p = self.pos[idx]
        desired = np.array([self._desired(i) for i in idx])
        speed = np.array([spec.lanes[self.lane_of[i]].speed for i in idx])
        v = desired * speed[:, None]
        moving = speed > 0
        # agent repulsion
        diff = p[:, None, :] - p[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        np.fill_diagonal(dist, np.inf)
        mag = np.clip(np.exp(-dist / self.d0) - np.exp(-self.cutoff / self.d0), 0.0, None)
        unit = diff / np.maximum(dist, 1e-9)[..., None]
        rep = np.sum(unit * mag[..., None], axis=1)
        a_rep = 8.0 * np.maximum(speed, 1e-12)
        v = v + rep * a_rep[:, None]
        # keep agents inside their lane band
        for k, i in enumerate(idx):
            lo, hi, n = self.band[self.lane_of[i]]
            lat = float(np.dot(p[k], n))
            excess = min(0.0, lat - lo) + max(0.0, lat - hi)
            v[k] -= n * 0.5 * excess
        for o in obstacles:
            off = _rect_offset(p, o)
            od = np.hypot(*off.T)
            m = np.where(od < 2.5 * self.r, np.exp(-od / self.r), 0.0)
            v = v + off / np.maximum(od, 1e-9)[:, None] * (m * a_rep)[:, None]
        vmax = 1.5 * speed
        vn = np.hypot(*v.T)
        v = v * np.where(vn > vmax, vmax / np.maximum(vn, 1e-12), 1.0)[:, None]
        v[~moving] = 0.0
        new = p + v
        # hard obstacle constraint: try full move, then each axis, else stay
        for k in range(len(idx)):
            if any(_inside(new[k], o, self.r * 0.8).item() for o in obstacles):
                cand = [np.array([new[k, 0], p[k, 1]]), np.array([p[k, 0], new[k, 1]])]
                ok = [c for c in cand if not any(_inside(c, o, self.r * 0.8).item() for o in obstacles)]
                new[k] = ok[0] if ok else p[k]
                if not ok and any(_inside(p[k], o, 0.0).item() for o in obstacles):
                    # a moving blocker swept over the agent: push it out sideways
                    new[k] = self._eject(p[k], obstacles)
        progress = np.einsum("kd,kd->k", new - p, desired)
        is_blocked = moving & (progress < 0.5 * speed)
        normal = np.column_stack([-desired[:, 1], desired[:, 0]])
        offs = self.rng.uniform(-spec.jitter, spec.jitter, len(idx))
        lat = normal * (offs * is_blocked)[:, None]
        shown = new + lat
        for k in range(len(idx)):
            if any(_inside(shown[k], o, 0.0).item() for o in obstacles):
                shown[k] = new[k]
        self.pos[idx] = new
        blocked[idx] = is_blocked
        for k, i in enumerate(idx):
            obs_pos[i] = shown[k]
        return obs_pos, blocked

    def _eject(self, p: np.ndarray, obstacles: list[Rect]) -> np.ndarray:
        q = p.copy()
        for o in obstacles:
            if _inside(q, o, 0.0).item():
                up, down = q[1] - o[1], o[3] - q[1]
                q[1] = o[1] - self.r if up < down else o[3] + self.r
        return q

    def respawn(self, t: int) -> list[int]:
        """Retire agents that reached their goal and re-enter them at the lane entry."""
        spec = self.spec
        retired = []
        for i in np.flatnonzero(self.active):
            lane = spec.lanes[self.lane_of[i]]
            if lane.speed <= 0:
                continue
            p = self.pos[i]
            out = not (0 <= p[0] < spec.width and 0 <= p[1] < spec.height)
            if _inside(p, lane.goal).item() or out:
                self.active[i] = False
                retired.append(i)
        if spec.respawn:
            for i in np.flatnonzero(~self.active):
                lane = spec.lanes[self.lane_of[i]]
                q = self._sample_in(lane.entry, self.spawn_gap, tries=4, t=t)
                if q is not None:
                    self.pos[i] = q
                    self.active[i] = True
                    self.passed_gap[i] = False
        return retired


def generate_scenario(spec: ScenarioSpec) -> tuple[list[Frame], GroundTruth]:
    """Simulate and render ``spec``; fully determined by ``spec.seed``."""
    spec.validate()
    sim = _Sim(spec)
    tex_rng = np.random.default_rng([spec.seed, 1])
    background = value_noise(spec.width, spec.height, tex_rng, amplitude=spec.texture)
    noise_rng = np.random.default_rng([spec.seed, 2])
    sim.place_initial()

    open_tracks: dict[int, dict] = {}
    trajectories: list[dict] = []
    heads: list[np.ndarray] = []
    blocked_centroids: list[np.ndarray | None] = []
    frames: list[Frame] = []

    def record(t, shown):
        for i, q in shown.items():
            tr = open_tracks.get(i)
            if tr is None:
                tr = {"agent": int(i), "lane": int(sim.lane_of[i]), "start_frame": t, "points": []}
                open_tracks[i] = tr
            tr["points"].append(q.copy())

    for t in range(spec.frames):
        if t == 0:
            shown = {i: sim.pos[i].copy() for i in np.flatnonzero(sim.active)}
            blocked = np.zeros(spec.agents, dtype=bool)
        else:
            shown, blocked = sim.step(t)
        record(t, shown)
        pts = np.array([shown[i] for i in sorted(shown)]).reshape(-1, 2)
        group = sim.blocker_heads(t)
        pts = np.vstack([pts, group])
        visible = (pts[:, 0] >= 0) & (pts[:, 0] < spec.width) & (pts[:, 1] >= 0) & (pts[:, 1] < spec.height)
        heads.append(pts[visible])
        bl = [shown[i] for i in sorted(shown) if blocked[i]]
        blocked_centroids.append(np.mean(bl, axis=0) if bl else None)

        img = background.copy()
        for i in sorted(shown):
            q = shown[i]
            render_blob(img, q[0], q[1], float(spec.radius_at(q[1])), sim.depth[i])
        for q in group:
            render_blob(img, q[0], q[1], float(spec.radius_at(q[1])), 0.45)
        if spec.noise > 0:
            img = img + noise_rng.normal(0.0, spec.noise, img.shape)
        frames.append(Frame(np.clip(img, 0.0, 1.0), t))

        if spec.lanes and t < spec.frames - 1:
            for i in sim.respawn(t):
                trajectories.append(open_tracks.pop(i))
    trajectories.extend(open_tracks[i] for i in sorted(open_tracks))
    for tr in trajectories:
        tr["points"] = np.array(tr["points"]).reshape(-1, 2)
    trajectories.sort(key=lambda tr: (tr["start_frame"], tr["agent"]))

    lane_agents = [int(np.sum(sim.lane_of == k)) for k in range(len(spec.lanes))]
    center = None if spec.bottleneck is None else np.array(_center(spec.bottleneck))
    track = None
    if spec.blockers:
        b = spec.blockers[0]
        track = [np.array(_center(b.rect(t))) for t in range(spec.frames)]
    gt = GroundTruth(
        trajectories=trajectories,
        lane_directions=[l.direction for l in spec.lanes],
        congestion_center=center,
        per_frame_heads=heads,
        lane_agents=lane_agents,
        congestion_track=track,
        blocked_centroids=blocked_centroids,
    )
    return frames, gt


def write_scenario(out_dir: str | os.PathLike, frames: list[Frame], gt: GroundTruth, spec: ScenarioSpec | None = None) -> Path:
    d = Path(out_dir)
    write_sequence(d, frames, ".pgm")
    with open(d / "ground_truth.json", "w") as fh:
        json.dump(gt.to_dict(), fh)
    if spec is not None:
        with open(d / "scenario.json", "w") as fh:
            json.dump(spec.to_dict(), fh, indent=1)
    return d


# -- builtin scenarios ----------------------------------------------------


def _free_flow() -> ScenarioSpec:
    w, h = 192, 128
    lanes = [Lane((0, y - 3, 12, y + 3), (w - 2, y - 3, w, y + 3), 1.5) for y in (24, 52, 80, 108)]
    return ScenarioSpec(
        "free_flow", w, h, frames=130, agents=32, lanes=lanes, blob_radius=4.0, seed=11,
        analysis={"segment_length": 40},
    )


def _two_lanes() -> ScenarioSpec:
    w, h = 192, 160
    lanes = [
        Lane((0, 33, 14, 57), (w - 2, 33, w, 57), 2.2),
        Lane((w - 14, 103, w, 127), (0, 103, 2, 127), 2.2),
    ]
    return ScenarioSpec(
        "two_lanes_opposing", w, h, frames=175, agents=110, lanes=lanes, blob_radius=4.0, seed=7,
        spawn_gap=1.2,
        analysis={"segment_length": 100, "lcs_eps": 30.0, "min_net_displacement": 40.0,
                  "min_cluster_size": 10},
    )


def _bottleneck() -> ScenarioSpec:
    w, h = 192, 144
    wall_x0, wall_x1 = 116, 126
    gap = (wall_x0, 62.0, wall_x1, 82.0)
    obstacles = [(wall_x0, 0, wall_x1, gap[1]), (wall_x0, gap[3], wall_x1, h)]
    lanes = [Lane((0, 8, 16, h - 8), (w - 2, 8, w, h - 8), 1.5)]
    return ScenarioSpec(
        "bottleneck_fixed", w, h, frames=190, agents=100, lanes=lanes, obstacles=obstacles,
        bottleneck=gap, blob_radius=4.0, seed=3, analysis={"segment_length": 40},
    )


def _moving_blockage() -> ScenarioSpec:
    w, h = 192, 208
    lanes = [Lane((0, 6, 16, h - 6), (w - 2, 6, w, h - 6), 1.5)]
    blocker = Blocker(start=(112.0, 30.0), velocity=(0.0, 0.7), size=(22.0, 44.0))
    return ScenarioSpec(
        "moving_blockage", w, h, frames=190, agents=130, lanes=lanes, blockers=[blocker],
        blob_radius=4.0, seed=5, analysis={"segment_length": 40, "min_region_area": 2},
    )


def _dense_static() -> ScenarioSpec:
    return ScenarioSpec(
        "dense_static_200", 320, 256, frames=3, agents=200, lanes=[], blob_radius=5.0, seed=21,
        noise=0.05, placement="lattice", respawn=False,
    )


_BUILTINS = {
    "free_flow": _free_flow,
    "two_lanes_opposing": _two_lanes,
    "bottleneck_fixed": _bottleneck,
    "moving_blockage": _moving_blockage,
    "dense_static_200": _dense_static,
}


def builtin_scenarios() -> dict[str, ScenarioSpec]:
    return {name: make() for name, make in _BUILTINS.items()}


def get_scenario(name: str) -> ScenarioSpec:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise InvalidSpec(f"unknown scenario {name!r}; choose from {sorted(_BUILTINS)}") from None


def load_scenario(path: str | os.PathLike) -> ScenarioSpec:
    with open(path) as fh:
        return ScenarioSpec.from_dict(json.load(fh)).validate()
