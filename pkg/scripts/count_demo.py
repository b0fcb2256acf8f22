"""Count heads in the dense static scenario and score against ground truth.

    python3 scripts/count_demo.py [--seed N] [--overlay out.png]
"""

import argparse

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from crowdscope.config import PipelineConfig
from crowdscope.counting import render_detections
from crowdscope.frames import write_image
from crowdscope.pipeline import analyze_count
from crowdscope.synth import generate_scenario, get_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--overlay", default=None)
    args = ap.parse_args()

    spec = get_scenario("dense_static_200")
    if args.seed is not None:
        spec.seed = args.seed
    frames, gt = generate_scenario(spec)
    cfg = PipelineConfig().updated(**spec.analysis).validate()
    k = len(frames) // 2
    res = analyze_count(frames[k], cfg)

    truth = np.asarray(gt.per_frame_heads[k])
    pts = res.detections.points
    d = cdist(pts, truth)
    rows, cols = linear_sum_assignment(d)
    radius = cfg.perspective[1]
    matched = int(np.sum(d[rows, cols] <= radius))
    print(f"seed {spec.seed}: {len(pts)} detections, {len(truth)} heads, "
          f"{matched} matched within {radius:.0f} px ({100 * matched / max(len(pts), 1):.1f}%)")
    if args.overlay:
        write_image(args.overlay, render_detections(frames[k], res.detections))


if __name__ == "__main__":
    main()
