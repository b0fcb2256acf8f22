"""Render each builtin scenario and summarize what the analysis finds.

    python3 scripts/run_scenarios.py [name ...]
"""

import argparse
import time

import numpy as np

from crowdscope.config import PipelineConfig
from crowdscope.pipeline import analyze_congestion, analyze_flows, segment_tracklets
from crowdscope.synth import builtin_scenarios, generate_scenario


def summarize(name, spec):
    t0 = time.perf_counter()
    frames, gt = generate_scenario(spec)
    cfg = PipelineConfig().updated(**spec.analysis).validate()
    plan, sets = segment_tracklets(frames, cfg)
    flows = analyze_flows(frames, cfg, tracklet_sets=sets)
    regions, _ = analyze_congestion(frames, cfg, sets)
    print(f"== {name}: {len(frames)} frames, {len(plan.starts)} segments")
    for seg in flows:
        heads = ", ".join(f"({f.direction[0]:+.2f},{f.direction[1]:+.2f}) d={f.density}" for f in seg.flows)
        print(f"  flows @ {seg.segment_start:4d}: {heads or '-'}")
    for r in regions:
        print(f"  region {r.kind}: centroid ({r.centroid[0]:.1f}, {r.centroid[1]:.1f}) confidence {r.confidence:.2f}")
    if gt.congestion_center is not None:
        print(f"  ground-truth congestion at {np.round(gt.congestion_center, 1).tolist()}")
    print(f"  {time.perf_counter() - t0:.1f} s")


def main():
    specs = builtin_scenarios()
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help=f"any of: {', '.join(specs)}")
    args = ap.parse_args()
    for name in args.names or [n for n in specs if n != "dense_static_200"]:
        summarize(name, specs[name])


if __name__ == "__main__":
    main()
