import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import congestion_run, scenario
from crowdscope.congestion import (
    OscillationMap,
    QuantizedMap,
    Region,
    build_oscillation_map,
    candidate_regions,
    localize_congestion,
    oscillation_score,
    quantize_map,
    render_heatmap,
    save_congestion,
)
from crowdscope.errors import TrackletTooShort
from crowdscope.frames import Frame
from crowdscope.motion import Tracklet, TrackletSet


def sinusoid(n=40, amp=2.0, period=8.0):
    t = np.arange(n + 1, dtype=float)
    return np.column_stack([t, amp * np.sin(2 * np.pi * t / period)])


def reference_score(pts, window):
    """Zero crossings times mean lateral amplitude over the centered window."""
    steps = np.diff(pts, axis=0)
    n = len(steps)
    out = []
    for i in range(n + 1):
        s = min(max(i - window // 2, 0), n - window)
        w = steps[s : s + window]
        m = w.mean(axis=0)
        mag = np.hypot(*m)
        if mag < 1e-6:
            out.append(0.0)
            continue
        normal = np.array([-m[1], m[0]]) / mag
        lat = w @ normal
        zc = sum(1 for a, b in zip(lat[:-1], lat[1:]) if a * b < 0)
        out.append(zc * np.mean(np.abs(lat)) / window)
    return np.array(out)


def qmap(labels, levels=4, cell=16.0):
    return QuantizedMap(levels, np.asarray(labels), cell)


def omap(scores, cell=16.0):
    s = np.asarray(scores, dtype=float)
    return OscillationMap(s.shape[1], s.shape[0], cell, s, (s > 0).astype(float))


# -- oscillation score -----------------------------------------------------


def test_straight_scores_zero():
    pts = np.column_stack([np.arange(30) * 1.5, np.arange(30) * 0.5])
    assert np.all(oscillation_score(pts, 16) < 1e-9)


def test_stationary_scores_zero():
    assert np.all(oscillation_score(np.full((30, 2), 7.0), 16) == 0)


def test_sinusoid_oracle():
    pts = sinusoid()
    s = oscillation_score(Tracklet(0, 0, pts), 16)
    straight = oscillation_score(np.column_stack([np.arange(41.0), np.zeros(41)]), 16)
    assert np.mean(s) >= 100 * max(np.mean(straight), 1e-12)
    np.testing.assert_allclose(s, reference_score(pts, 16), atol=1e-9, rtol=0)


def test_score_too_short():
    with pytest.raises(TrackletTooShort):
        oscillation_score(np.zeros((10, 2)), 16)
    with pytest.raises(TrackletTooShort):
        oscillation_score(np.zeros((10, 2)), 3)


@given(st.floats(0, 2 * np.pi), st.floats(-500, 500), st.floats(-500, 500))
def test_score_rigid_invariance(theta, dx, dy):
    pts = sinusoid()
    c, s = np.cos(theta), np.sin(theta)
    moved = pts @ np.array([[c, s], [-s, c]]) + [dx, dy]
    np.testing.assert_allclose(oscillation_score(moved, 16), oscillation_score(pts, 16), atol=1e-7)


@given(st.floats(0.5, 5.0))
def test_score_linear_in_amplitude(amp):
    base = oscillation_score(sinusoid(amp=1.0), 16).mean()
    assert oscillation_score(sinusoid(amp=amp), 16).mean() == pytest.approx(amp * base, rel=0.01)


# -- maps ------------------------------------------------------------------


def test_map_straight_all_zero():
    ts = [Tracklet(i, 0, np.column_stack([np.arange(30.0) * 2, np.full(30, 10.0 + 12 * i)])) for i in range(5)]
    m = build_oscillation_map(ts, 64, 64)
    assert np.all(m.scores < 1e-9)
    assert m.scores.shape == (4, 4)


def test_map_locality():
    wiggle = Tracklet(0, 0, sinusoid(40) * [0.25, 1.0] + [3, 8])  # stays in x < 16, y < 16
    straight = Tracklet(1, 0, np.column_stack([np.arange(41.0), np.full(41, 40.0)]))
    m = build_oscillation_map([wiggle, straight], 64, 64)
    assert m.scores[0, 0] > 0
    mask = np.ones_like(m.scores, bool)
    mask[0, 0] = False
    assert np.all(m.scores[mask] == 0)


def test_map_matches_grouping(rng):
    ts = []
    for i in range(12):
        start = rng.uniform(5, 90, 2)
        amp = rng.choice([0.0, 1.0, 3.0])
        t = np.arange(31.0)
        heading = rng.normal(0, 1, 2)
        heading /= np.hypot(*heading)
        pts = start + np.outer(t, heading) + np.outer(amp * np.sin(t * np.pi / 2), [-heading[1], heading[0]])
        ts.append(Tracklet(i, 0, np.clip(pts, 0, 99)))
    m = build_oscillation_map(TrackletSet(0, ts), 100, 100, 16, 16)
    groups = {}
    for t in ts:
        for (x, y), s in zip(t.points, reference_score(t.points, 16)):
            groups.setdefault((int(y // 16), int(x // 16)), []).append(s)
    for (r, c), vals in groups.items():
        assert m.scores[r, c] == pytest.approx(np.mean(vals), abs=1e-9)
        assert m.counts[r, c] == len(vals)
    assert np.all(m.scores[m.counts == 0] == 0)
    assert np.all(m.scores >= 0)


def test_map_skips_short_tracklets():
    m = build_oscillation_map([Tracklet(0, 0, sinusoid(10))], 64, 64)
    assert not m.counts.any()


# -- quantization ----------------------------------------------------------


def test_quantize_zero_map():
    assert not quantize_map(omap(np.zeros((3, 3)))).labels.any()


def test_quantize_two_values():
    q = quantize_map(omap([[0.1, 1.0]]), levels=4, noise_fraction=0.05)
    assert q.labels.tolist() == [[1, 3]]


def test_quantize_uniform():
    q = quantize_map(omap(np.full((2, 3), 0.4)), levels=5)
    assert np.all(q.labels == 4)


def test_quantize_min_score_floor():
    q = quantize_map(omap([[0.01, 0.02]]), levels=4, min_score=0.05)
    assert not q.labels.any()


@given(st.lists(st.floats(0, 10), min_size=2, max_size=40), st.integers(2, 8), st.floats(0, 0.5))
def test_quantize_monotone(vals, levels, noise):
    s = np.array(vals)[None, :]
    q = quantize_map(omap(s), levels, noise).labels[0]
    order = np.argsort(s[0], kind="stable")
    assert np.all(np.diff(q[order]) >= 0)
    assert q.min() >= 0 and q.max() <= levels - 1


# -- regions ---------------------------------------------------------------


def test_regions_empty():
    assert candidate_regions(qmap(np.zeros((5, 5), int))) == []


def test_regions_block():
    lab = np.zeros((8, 8), int)
    lab[2:5, 3:6] = 3
    (r,) = candidate_regions(qmap(lab), 2, 4)
    assert r.area == 9
    np.testing.assert_allclose(r.centroid, [4.5 * 16, 3.5 * 16])


def test_regions_split_by_zero_row():
    lab = np.zeros((9, 6), int)
    lab[1:4, 1:4] = 2
    lab[5:8, 1:4] = 2
    assert len(candidate_regions(qmap(lab), 2, 4)) == 2
    lab[4, 2] = 2
    assert len(candidate_regions(qmap(lab), 2, 4)) == 1


def test_regions_diagonal_connected_and_area_filter():
    lab = np.eye(5, dtype=int) * 3
    (r,) = candidate_regions(qmap(lab), 2, 4)
    assert r.area == 5
    assert candidate_regions(qmap(lab), 2, 6) == []


# -- chaining --------------------------------------------------------------


def reg(x, y, area=6):
    return Region(np.array([x, y], float), area)


def test_localize_same_everywhere():
    segs = [(75 * k, [reg(100, 60)]) for k in range(6)]
    (r,) = localize_congestion(segs)
    assert r.confidence == 1.0 and r.kind == "fixed"
    assert r.segments_present == [75 * k for k in range(6)]


def test_localize_drift_dynamic():
    # 30 px per segment keeps the chain within match_radius 48; total 3 x 48
    segs = [(k, [reg(50 + 30 * k, 80)]) for k in range(6)]
    (r,) = localize_congestion(segs, 0.5, 48)
    assert r.kind == "dynamic" and r.confidence == 1.0
    assert len(r.track) == 6


def test_localize_below_persistence():
    segs = [(k, [reg(40, 40)] if k in (3, 4) else []) for k in range(10)]
    assert localize_congestion(segs, 0.5) == []


def test_localize_break_starts_new_chain():
    segs = [(k, [reg(40 if k < 3 else 200, 40)]) for k in range(6)]
    out = localize_congestion(segs, 0.5)
    assert len(out) == 2 and all(r.confidence == 0.5 for r in out)


@given(st.lists(st.lists(st.tuples(st.floats(0, 300), st.floats(0, 300)), max_size=3), min_size=1, max_size=8), st.floats(0.1, 1))
def test_localize_invariants(cents, persistence):
    segs = [(10 * k, [reg(x, y) for x, y in c]) for k, c in enumerate(cents)]
    for r in localize_congestion(segs, persistence):
        assert 0 <= r.confidence <= 1 and r.confidence >= persistence - 1e-9
        assert r.segments_present == sorted(r.segments_present) and r.segments_present
        assert r.kind in ("fixed", "dynamic")


def test_congestion_json(tmp_path):
    import json

    segs = [(k, [reg(10, 20)]) for k in range(2)]
    save_congestion(tmp_path / "c.json", localize_congestion(segs))
    d = json.loads((tmp_path / "c.json").read_text())
    assert d["schema"] == 1
    assert {"centroid", "area_cells", "confidence", "kind", "segments"} <= set(d["regions"][0])


def test_heatmap_shape():
    m = omap(np.eye(4))
    out = render_heatmap(Frame(np.full((60, 64), 0.5)), m)
    assert out.pixels.shape == (60, 64, 3)
    assert np.allclose(render_heatmap(Frame(np.zeros((20, 20))), omap(np.zeros((2, 2)))).pixels, 0)


# -- scenario properties ---------------------------------------------------


def test_free_flow_no_regions():
    _, regions, _ = congestion_run("free_flow")
    assert regions == []


def test_bottleneck_single_fixed_region():
    _, _, gt, cfg = scenario("bottleneck_fixed")
    _, regions, _ = congestion_run("bottleneck_fixed")
    assert len(regions) == 1
    (r,) = regions
    assert r.kind == "fixed"
    assert np.hypot(*(r.centroid - gt.congestion_center)) <= 2 * cfg.cell_size
