"""Command-line entry point: ``crowdscope <subcommand> [options]``.

Every subcommand writes its outputs plus ``run_manifest.json`` into the
output directory. Files are staged in a scratch directory and moved into
place only when the whole run succeeds, so a failed run leaves nothing
behind. Errors are reported as one JSON object on stderr.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import shutil
import sys
import tempfile
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from . import congestion as cg
from . import counting as ct
from . import flowsum as fs
from . import geometry as geo
from .config import PipelineConfig
from .errors import CrowdError, HomographyRequired, UsageError
from .frames import Frame, list_frames, read_image, read_sequence, write_image, write_sequence
from .pipeline import analyze_congestion, analyze_count, analyze_flows, segment_tracklets

SUBCOMMANDS = ("rectify", "panorama", "flows", "congestion", "count", "synth", "pipeline")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through the JSON error path
        raise UsageError(message)


# -- output staging ---------------------------------------------------------


class Outputs:
    """Collects a run's files in a scratch dir next to ``root``."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.parent.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(prefix=".partial-", dir=self.root.parent))
        self.inputs: dict[str, str] = {}

    def path(self, name: str) -> Path:
        p = self.stage / name
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def json(self, name: str, payload: dict) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(payload, fh, indent=1, sort_keys=True)
            fh.write("\n")

    def image(self, name: str, frame: Frame) -> None:
        write_image(self.path(name), frame)

    def track_input(self, path: str | os.PathLike) -> None:
        p = Path(path)
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for q in files:
            self.inputs[str(q)] = _sha256(q)

    def commit(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        for src in sorted(self.stage.rglob("*")):
            if src.is_file():
                dst = self.root / src.relative_to(self.stage)
                dst.parent.mkdir(parents=True, exist_ok=True)
                os.replace(src, dst)
        shutil.rmtree(self.stage, ignore_errors=True)

    def discard(self) -> None:
        shutil.rmtree(self.stage, ignore_errors=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions() -> dict:
    import cv2
    import numba
    import scipy

    return {
        "crowdscope": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "opencv": cv2.__version__,
        "numba": numba.__version__,
    }


def manifest(command: str, cfg: PipelineConfig, inputs: dict[str, str], extra: dict | None = None) -> dict:
    m = {
        "schema": 1,
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "seed": int(cfg.seed),
        "versions": _versions(),
        "inputs": dict(sorted(inputs.items())),
    }
    if extra:
        m.update(extra)
    return m


# -- argument handling ------------------------------------------------------


def _floats(text: str, n: int, what: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"{what} must be {n} comma-separated numbers, got {text!r}") from None
    if len(vals) != n:
        raise UsageError(f"{what} must be {n} comma-separated numbers, got {text!r}")
    return vals


def build_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    overrides = {
        "input": args.input,
        "output": args.output,
        "seed": args.seed,
        "threads": args.threads,
        "homography_file": getattr(args, "homography", None),
    }
    if getattr(args, "perspective", None):
        overrides["perspective"] = _floats(args.perspective, 2, "--perspective")
    if getattr(args, "max_det", None) is not None:
        overrides["max_detections"] = args.max_det
    if getattr(args, "kernel", None):
        overrides["kernel_file"] = args.kernel
    if getattr(args, "segment_length", None) is not None:
        overrides["segment_length"] = args.segment_length
    return cfg.updated(**overrides).validate()


def _add_common(p: argparse.ArgumentParser, needs_input: bool = True) -> None:
    p.add_argument("--input", required=needs_input, help="input directory or file")
    p.add_argument("--output", help="output directory (default: ./out)")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="random seed recorded in the manifest")
    p.add_argument("--threads", type=int, help="worker threads for optical flow")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crowdscope", description="Crowd motion, congestion and counting toolkit.")
    parser.add_argument("--version", action="version", version=f"crowdscope {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rectify", help="warp frames onto the ground plane")
    _add_common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--homography", help="image-to-ground homography file")
    g.add_argument("--correspondences", help="'u v X Y' correspondence file")
    p.add_argument("--extent", required=True, help="ground rectangle x0,y0,x1,y1 in meters")
    p.add_argument("--resolution", type=float, default=10.0, help="canvas pixels per meter")

    p = sub.add_parser("panorama", help="fuse several rectified views")
    _add_common(p, needs_input=False)
    p.add_argument("--view", nargs=2, action="append", required=True, metavar=("IMAGE", "HOMOGRAPHY"))
    p.add_argument("--extent", required=True, help="ground rectangle x0,y0,x1,y1 in meters")
    p.add_argument("--resolution", type=float, default=10.0, help="canvas pixels per meter")

    for name, text in (("flows", "dominant flows per segment"), ("congestion", "congestion regions")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--segment-length", type=int, help="segment length in frames")
        if name == "flows":
            p.add_argument("--homography", help="homography for speeds in m/s")
            p.add_argument("--save-tracklets", action="store_true", help="also write tracklet JSON")

    p = sub.add_parser("count", help="detect and count heads in one frame")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--response", help="response map file (CRM1 or PGM)")
    src.add_argument("--baseline", action="store_true", help="use the built-in template detector")
    p.add_argument("--perspective", help="head radius model a,b with r(y) = a*y + b")
    p.add_argument("--homography", help="image-to-ground homography; enables density output")
    p.add_argument("--density", action="store_true", help="require density output")
    p.add_argument("--kernel", help="response kernel file (whitespace matrix)")
    p.add_argument("--max-det", type=int, help="maximum number of detections")
    p.add_argument("--frame", type=int, help="frame index when --input is a directory (default: middle)")
    p.add_argument("--out-json", default="count.json", help="detections file name inside --output")
    p.add_argument("--out-overlay", default="count_overlay.png", help="overlay file name inside --output")

    p = sub.add_parser("synth", help="render a synthetic scenario")
    p.add_argument("--scenario", required=True, help="builtin name or scenario JSON file")
    p.add_argument("--out", "--output", dest="output", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--config", help=argparse.SUPPRESS)
    p.add_argument("--input", help=argparse.SUPPRESS)
    p.add_argument("--threads", type=int, help=argparse.SUPPRESS)

    p = sub.add_parser("pipeline", help="flows, congestion and baseline count in one run")
    _add_common(p)
    p.add_argument("--segment-length", type=int, help="segment length in frames")
    p.add_argument("--homography", help="homography for m/s speeds and density")
    return parser


# -- subcommands ------------------------------------------------------------


def _homography(cfg: PipelineConfig):
    return geo.read_homography(cfg.homography_file) if cfg.homography_file else None


def _write_flows(out: Outputs, frames, cfg, segments) -> None:
    payload = {"schema": 1, "segments": []}
    half = cfg.segment_length // 2
    for seg in segments:
        payload["segments"].append(fs.flow_summary_dict(seg.segment_start, seg.flows))
        mid = min(len(frames) - 1, seg.segment_start + half)
        out.image(f"flows_{seg.segment_start:05d}.png", fs.render_flow_overlay(frames[mid], seg.flows))
    out.json("flows.json", payload)


def _write_congestion(out: Outputs, frames, cfg, regions, segments) -> None:
    payload = cg.congestion_dict(regions)
    payload["segments"] = [
        {"segment_start": int(s.segment_start), "candidates": len(s.candidates)} for s in segments
    ]
    out.json("congestion.json", payload)
    half = cfg.segment_length // 2
    for s in segments:
        mid = min(len(frames) - 1, s.segment_start + half)
        out.image(f"heatmap_{s.segment_start:05d}.png", cg.render_heatmap(frames[mid], s.oscillation))


def _count_payload(res) -> dict:
    d = res.detections.to_dict()
    d["count"] = len(res.detections)
    d["density"] = res.density.to_dict() if res.density is not None else None
    return d


def cmd_rectify(args, cfg: PipelineConfig, out: Outputs) -> None:
    extent = _floats(args.extent, 4, "--extent")
    if args.homography:
        h = geo.read_homography(args.homography)
        out.track_input(args.homography)
    else:
        img_pts, ground_pts = geo.read_correspondences(args.correspondences)
        h = geo.estimate_homography(img_pts, ground_pts)
        out.track_input(args.correspondences)
    layout = geo.PanoramaLayout([("view", h)], extent, args.resolution)
    src = Path(args.input)
    paths = list_frames(src) if src.is_dir() else [src]
    out.track_input(src)
    for i, p in enumerate(paths):
        frame = read_image(p, timestamp=i, gray=False)
        out.image(f"rectified_{i:05d}.png", geo.rectify(frame, h, layout))
    geo.write_homography(out.path("homography.txt"), h)


def cmd_panorama(args, cfg: PipelineConfig, out: Outputs) -> None:
    extent = _floats(args.extent, 4, "--extent")
    frames, views = [], []
    for i, (img, hfile) in enumerate(args.view):
        frames.append(read_image(img, gray=False))
        views.append((f"view{i}", geo.read_homography(hfile)))
        out.track_input(img)
        out.track_input(hfile)
    if len({f.channels for f in frames}) > 1:
        frames = [f.rgb() for f in frames]
    layout = geo.PanoramaLayout(views, extent, args.resolution)
    out.image("panorama.png", geo.fuse_panorama(frames, layout))


def cmd_flows(args, cfg: PipelineConfig, out: Outputs) -> None:
    frames = read_sequence(cfg.input)
    out.track_input(cfg.input)
    h = _homography(cfg)
    _, sets = segment_tracklets(frames, cfg)
    segments = analyze_flows(frames, cfg, h, sets)
    _write_flows(out, frames, cfg, segments)
    if getattr(args, "save_tracklets", False):
        for ts in sets:
            out.json(f"tracklets_{ts.segment_start:05d}.json", ts.to_dict())


def cmd_congestion(args, cfg: PipelineConfig, out: Outputs) -> None:
    frames = read_sequence(cfg.input)
    out.track_input(cfg.input)
    regions, segments = analyze_congestion(frames, cfg)
    _write_congestion(out, frames, cfg, regions, segments)


def cmd_count(args, cfg: PipelineConfig, out: Outputs) -> None:
    if args.density and not cfg.homography_file:
        raise HomographyRequired("--density needs --homography")
    src = Path(cfg.input)
    if src.is_dir():
        paths = list_frames(src)
        k = len(paths) // 2 if args.frame is None else args.frame
        if not 0 <= k < len(paths):
            raise UsageError(f"--frame {k} outside 0..{len(paths) - 1}")
        src = paths[k]
    frame = read_image(src)
    out.track_input(src)
    response = None
    if args.response:
        response = ct.read_response_map(args.response, cfg.stride)
        out.track_input(args.response)
    h = _homography(cfg)
    res = analyze_count(frame, cfg, response, h, want_density=args.density)
    out.json(Path(args.out_json).name, _count_payload(res))
    out.image(Path(args.out_overlay).name, ct.render_detections(frame, res.detections))


def cmd_synth(args, cfg: PipelineConfig, out: Outputs) -> None:
    from .synth import generate_scenario, get_scenario, load_scenario

    name = args.scenario
    spec = load_scenario(name) if name.endswith(".json") or Path(name).is_file() else get_scenario(name)
    if args.seed is not None:
        spec.seed = int(args.seed)
    frames, gt = generate_scenario(spec)
    write_sequence(out.stage, frames, ".pgm")
    out.json("ground_truth.json", gt.to_dict())
    out.json("scenario.json", spec.to_dict())
    # suggested analysis settings, usable as --config for the other subcommands
    out.json("analysis_config.json", dict(spec.analysis))
    return {"scenario": spec.name, "seed": int(spec.seed)}


def cmd_pipeline(args, cfg: PipelineConfig, out: Outputs) -> None:
    frames = read_sequence(cfg.input)
    out.track_input(cfg.input)
    h = _homography(cfg)
    _, sets = segment_tracklets(frames, cfg)
    _write_flows(out, frames, cfg, analyze_flows(frames, cfg, h, sets))
    regions, segments = analyze_congestion(frames, cfg, sets)
    _write_congestion(out, frames, cfg, regions, segments)
    mid = frames[len(frames) // 2]
    res = analyze_count(mid, cfg, None, h)
    out.json("count.json", _count_payload(res))
    out.image("count_overlay.png", ct.render_detections(mid, res.detections))


COMMANDS: dict[str, Callable] = {
    "rectify": cmd_rectify,
    "panorama": cmd_panorama,
    "flows": cmd_flows,
    "congestion": cmd_congestion,
    "count": cmd_count,
    "synth": cmd_synth,
    "pipeline": cmd_pipeline,
}


def _report(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    out = None
    try:
        args = make_parser().parse_args(argv)
        if args.output is None:
            args.output = "out"
        cfg = build_config(args)
        out = Outputs(args.output)
        if args.config:
            out.track_input(args.config)
        extra = COMMANDS[args.command](args, cfg, out)
        out.json("run_manifest.json", manifest(args.command, cfg, out.inputs, extra))
        out.commit()
        return 0
    except CrowdError as exc:
        _report(exc.to_dict())
        code = exc.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except Exception as exc:  # pragma: no cover - defensive
        _report({"schema": 1, "error": "InternalError", "message": f"{type(exc).__name__}: {exc}"})
        code = 4
    if out is not None:
        out.discard()
    return code


if __name__ == "__main__":
    sys.exit(main())
