import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import squareform

from conftest import flow_run, lcs_brute, random_track_pair, scenario
from crowdscope.errors import DegenerateTracklet, EmptyCluster
from crowdscope.frames import Frame
from crowdscope.flowsum import (
    SPEED_COLORS,
    DominantFlow,
    FlowCluster,
    SimilarityMatrix,
    arrow_width,
    build_similarity_matrix,
    cluster_tracklets,
    dominant_flows,
    lcs_similarity,
    render_flow_overlay,
    resample_path,
    save_flow_summary,
    speed_bin,
    summarize_cluster,
)
from crowdscope.geometry import Homography
from crowdscope.motion import Tracklet, TrackletSet


def line(i, start, step, n=11):
    pts = np.asarray(start, float) + np.outer(np.arange(n), step)
    return Tracklet(i, 0, pts)


def block_sim(sizes, inside=0.9, across=0.0):
    n = sum(sizes)
    v = np.full((n, n), across)
    k = 0
    for s in sizes:
        v[k : k + s, k : k + s] = inside
        k += s
    np.fill_diagonal(v, 1.0)
    return SimilarityMatrix(list(range(n)), v)


# -- LCS -------------------------------------------------------------------


def test_lcs_identical_and_disjoint():
    t = line(0, (0, 0), (2, 1))
    assert lcs_similarity(t, t) == 1.0
    far = line(1, (100, 100), (2, 1))
    assert lcs_similarity(t, far, 10) == 0.0


def test_lcs_min_normalization():
    long = line(0, (0, 0), (1, 0), n=20)
    short = Tracklet(1, 0, long.points[5:10])
    assert lcs_similarity(long, short, 0.1) == 1.0


def test_lcs_degenerate():
    with pytest.raises(DegenerateTracklet):
        lcs_similarity(Tracklet(0, 0, [[0, 0]]), line(1, (0, 0), (1, 0)))
    with pytest.raises(DegenerateTracklet):
        lcs_similarity(line(0, (0, 0), (1, 0)), line(1, (0, 0), (1, 0)), eps=0)


def test_lcs_matches_brute_force(rng):
    for _ in range(60):
        a, b = random_track_pair(rng)
        expected = lcs_brute(a, b, 1.0) / min(len(a), len(b))
        assert lcs_similarity(Tracklet(0, 0, a), Tracklet(1, 0, b), 1.0) == expected


coords = st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8)), min_size=2, max_size=12)


@given(coords, coords, st.floats(0.5, 4), st.tuples(st.floats(-100, 100), st.floats(-100, 100)))
def test_lcs_properties(a, b, eps, shift):
    ta, tb = Tracklet(0, 0, a), Tracklet(1, 0, b)
    s = lcs_similarity(ta, tb, eps)
    assert 0.0 <= s <= 1.0
    assert s == lcs_similarity(tb, ta, eps)
    assert lcs_similarity(ta, ta, eps) == 1.0
    # dyadic shift keeps the integer grid exact
    d = np.round(np.asarray(shift) * 4) / 4
    moved = lcs_similarity(Tracklet(0, 0, ta.points + d), Tracklet(1, 0, tb.points + d), eps)
    assert moved == s


# -- similarity matrix -----------------------------------------------------


def test_matrix_single():
    m = build_similarity_matrix([line(4, (0, 0), (1, 0))])
    assert m.values.tolist() == [[1.0]]
    assert m.ids == [4]


def test_matrix_two_identical_one_distant():
    t = line(0, (0, 0), (1, 0))
    m = build_similarity_matrix([t, Tracklet(1, 0, t.points), line(2, (200, 200), (1, 0))], eps=5)
    off = sorted(m.values[np.triu_indices(3, 1)].tolist())
    assert off == [0.0, 0.0, 1.0]


def test_matrix_matches_pairwise(rng):
    ts = [Tracklet(i, 0, np.cumsum(rng.normal(0, 2, (rng.integers(5, 15), 2)), axis=0)) for i in range(6)]
    m = build_similarity_matrix(ts, eps=3)
    for i in range(6):
        for j in range(6):
            assert m.values[i, j] == lcs_similarity(ts[i], ts[j], 3)
    assert np.all(np.diag(m.values) == 1) and np.array_equal(m.values, m.values.T)


def test_matrix_empty():
    with pytest.raises(EmptyCluster):
        build_similarity_matrix([])


# -- clustering ------------------------------------------------------------


def test_all_similar_one_cluster():
    sim = SimilarityMatrix(list(range(7)), np.ones((7, 7)))
    (c,) = cluster_tracklets(sim, 0.5, 1)
    assert c.member_ids == tuple(range(7))


def test_block_diagonal_two_clusters():
    clusters = cluster_tracklets(block_sim([5, 5]), 0.5, 5)
    assert sorted(c.member_ids for c in clusters) == [(0, 1, 2, 3, 4), (5, 6, 7, 8, 9)]


def test_small_clusters_dropped():
    clusters = cluster_tracklets(block_sim([5, 2]), 0.5, 3)
    assert [c.size for c in clusters] == [5]


def test_tie_break_lowest_pair():
    # d(10, 11) ties d(10, 12); the lower pair merges and 12 stays alone
    sim = SimilarityMatrix([10, 11, 12], np.array([[1, 0.6, 0.6], [0.6, 1, 0.3], [0.6, 0.3, 1.0]]))
    clusters = cluster_tracklets(sim, 0.45, 1)
    assert [c.member_ids for c in clusters] == [(10, 11), (12,)]


def random_sim(seed, n):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0, 1, (n, 2))
    d = np.hypot(*(centers[:, None] - centers[None]).transpose(2, 0, 1))
    s = np.clip(1 - d, 0, 1)
    np.fill_diagonal(s, 1)
    return s


@given(st.integers(0, 10_000), st.integers(2, 25), st.floats(0.05, 0.95))
def test_clusters_match_scipy(seed, n, cut):
    s = random_sim(seed, n)
    ours = cluster_tracklets(SimilarityMatrix(list(range(n)), s), cut, 1)
    labels = fcluster(linkage(squareform(1 - s, checks=False), "average"), cut, "distance")
    theirs = sorted(tuple(np.flatnonzero(labels == k).tolist()) for k in np.unique(labels))
    assert sorted(c.member_ids for c in ours) == theirs


@given(st.integers(0, 10_000), st.integers(2, 20), st.permutations(range(20)), st.integers(1, 4))
def test_cluster_order_invariant(seed, n, perm, min_size):
    s = random_sim(seed, n)
    ids = [100 + k for k in range(n)]
    perm = [p for p in perm if p < n]
    a = cluster_tracklets(SimilarityMatrix(ids, s), 0.5, min_size)
    b = cluster_tracklets(SimilarityMatrix([ids[p] for p in perm], s[np.ix_(perm, perm)]), 0.5, min_size)
    assert a == b
    covered = [i for c in a for i in c.member_ids]
    assert len(covered) == len(set(covered)) <= n
    if min_size == 1:
        assert sorted(covered) == ids


# -- summaries -------------------------------------------------------------


def test_summary_straight():
    ts = TrackletSet(0, [line(i, (0, 0), (2, 0)) for i in range(5)])
    f = summarize_cluster(FlowCluster(tuple(range(5))), ts, fps=25)
    np.testing.assert_allclose(f.representative_path, np.column_stack([np.linspace(0, 20, 20), np.zeros(20)]), atol=1e-12)
    np.testing.assert_allclose(f.direction, [1, 0])
    assert f.mean_speed == pytest.approx(50.0)
    assert f.density == 5 and f.mean_speed_m_s is None


def test_summary_mirror():
    a = Tracklet(0, 0, np.column_stack([np.arange(11.0) * 3, 50 + 5 * np.sin(np.arange(11.0))]))
    b = Tracklet(1, 0, np.column_stack([a.points[:, 0], 100 - a.points[:, 1]]))
    f = summarize_cluster(FlowCluster((0, 1)), TrackletSet(0, [a, b]))
    np.testing.assert_allclose(f.representative_path[:, 1], 50.0, atol=1e-9)


def test_summary_noisy_lane(rng):
    heading = np.array([np.cos(np.pi / 6), np.sin(np.pi / 6)])
    tr = []
    for i in range(30):
        start = rng.uniform(0, 40, 2)
        pts = start + np.outer(np.arange(61), 1.5 * heading) + rng.normal(0, 0.5, (61, 2))
        tr.append(Tracklet(i, 0, pts))
    f = summarize_cluster(FlowCluster(tuple(range(30))), TrackletSet(0, tr))
    angle = np.degrees(np.arccos(np.clip(f.direction @ heading, -1, 1)))
    assert angle < 5.0
    assert np.hypot(*f.direction) == pytest.approx(1.0)


def test_summary_metric_speed():
    ts = TrackletSet(0, [line(i, (0, 0), (2, 0)) for i in range(3)])
    f = summarize_cluster(FlowCluster((0, 1, 2)), ts, h=Homography(np.diag([0.1, 0.1, 1.0])), fps=25)
    assert f.mean_speed_m_s == pytest.approx(5.0)


def test_summary_empty():
    with pytest.raises(EmptyCluster):
        summarize_cluster(FlowCluster(()), TrackletSet(0, []))


def test_speed_bins():
    assert [speed_bin(s, 10) for s in (0, 1.9, 2, 5, 9.99, 10, 50)] == [0, 0, 1, 2, 4, 4, 4]
    assert speed_bin(3, 0) == 0


def test_resample_arc_length():
    p = resample_path(np.array([[0, 0], [10, 0], [10, 10]], float), 5)
    np.testing.assert_allclose(p, [[0, 0], [5, 0], [10, 0], [10, 5], [10, 10]])


@given(st.lists(st.integers(1, 200), min_size=2, max_size=10), st.floats(0.1, 2))
def test_width_monotone(dens, scale):
    dens = sorted(dens)
    w = [arrow_width(d, scale) for d in dens]
    assert all(a <= b for a, b in zip(w, w[1:]))
    assert all(2 <= x <= 40 for x in w)


# -- rendering -------------------------------------------------------------


def flat_flow(density, y=50.0, color_bin=2):
    path = np.column_stack([np.linspace(10, 150, 20), np.full(20, y)])
    return DominantFlow(path, 30.0, None, density, np.array([1.0, 0.0]), color_bin, arrow_width(density, 0.5))


def stroke_rows(img, x, color):
    return int(np.sum(np.all(np.abs(img[:, x] - np.array(color) / 255) < 1e-9, axis=1)))


def test_overlay_empty_is_rgb():
    px = np.random.default_rng(0).random((40, 50))
    out = render_flow_overlay(Frame(px), [])
    np.testing.assert_allclose(out.pixels, np.round(np.repeat(px[:, :, None], 3, 2) * 255) / 255)
    assert out.pixels.shape == (40, 50, 3)


def test_overlay_width():
    out = render_flow_overlay(Frame(np.zeros((100, 160))), [flat_flow(10)], scale=0.5)
    assert stroke_rows(out.pixels, 60, SPEED_COLORS[2]) == 5


def test_overlay_wider_for_denser():
    frame = Frame(np.zeros((100, 160)))
    thin = stroke_rows(render_flow_overlay(frame, [flat_flow(10)]).pixels, 60, SPEED_COLORS[2])
    thick = stroke_rows(render_flow_overlay(frame, [flat_flow(40)]).pixels, 60, SPEED_COLORS[2])
    assert thick > thin


def test_summary_json(tmp_path):
    import json

    save_flow_summary(tmp_path / "f.json", 75, [flat_flow(12)])
    d = json.loads((tmp_path / "f.json").read_text())
    assert d["segment_start"] == 75 and d["schema"] == 1
    (f,) = d["flows"]
    assert set(f) == {"path", "mean_speed_px_s", "mean_speed_m_s", "density", "direction", "color_bin"}
    assert f["mean_speed_m_s"] is None and f["density"] == 12


def test_dominant_flows_empty():
    assert dominant_flows(TrackletSet(0, [])) == []


# -- scenario property -----------------------------------------------------


def test_two_lanes_two_opposing_flows():
    _, _, gt, cfg = scenario("two_lanes_opposing")
    _, segments = flow_run("two_lanes_opposing")
    for seg in segments:
        assert len(seg.flows) == 2
        a, b = (f.direction for f in seg.flows)
        angle = np.degrees(np.arccos(np.clip(a @ b, -1, 1)))
        assert abs(angle - 180) <= 15
        assert sum(f.density for f in seg.flows) <= len(seg.tracklets)
        assert all(f.density >= cfg.min_cluster_size for f in seg.flows)
