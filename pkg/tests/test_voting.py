import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamtag.errors import OutOfPlane
from beamtag.geometry import rotation_angle
from beamtag.pipeline import DetectorConfig, detect_tags
from beamtag.pose import TemplateAlignment, template_corners
from beamtag.synth import WHITE, render_scene_with_truth
from beamtag.voting import (_vote, BitEstimate, GridCell, TagDetection, build_grid, cell_index,
                            equal_weight_vote, gaussian_sigma2, gaussian_vote, map_to_template,
                            payload_word)

from conftest import angle_between, make_target

IDENT = TemplateAlignment(np.eye(3), np.zeros(3), 0.0)


def test_template_corners_map_to_themselves():
    T = template_corners(0.6)
    uv, _ = map_to_template(T, np.zeros(4), IDENT, 0.6)
    assert np.allclose(uv, T[:, 1:])


def test_out_of_plane_rejected():
    pts = np.column_stack([np.full(20, 0.2), np.zeros(20), np.zeros(20)])
    with pytest.raises(OutOfPlane):
        map_to_template(pts, np.zeros(20), IDENT, 0.6)


def test_points_outside_marker_dropped():
    pts = np.array([[0, 0.0, 0.0], [0, 0.5, 0.0]])
    uv, inten = map_to_template(pts, np.array([0.1, 0.9]), IDENT, 0.6)
    assert len(uv) == 1 and inten[0] == 0.1


def test_rendered_points_land_in_their_cells(rendered_tag):
    tgt, scan, truth = rendered_tag
    on = truth.on_marker
    # Tag frame -> template is the identity for an un-turned tag.
    R = tgt.rotation.T
    al = TemplateAlignment(R, -R @ tgt.translation, 0.0)
    uv, _ = map_to_template(scan.positions[on], scan.intensity[on], al, tgt.tag_size)
    assert len(uv) == np.count_nonzero(on)
    assert np.array_equal(cell_index(uv, tgt.tag_size, 4), truth.cell[on])


def test_sigma2_formula():
    assert gaussian_sigma2(0.6, 4) == pytest.approx(0.025)


def cell_with(intensities, positions=None, center=(0.0, 0.0)):
    n = len(intensities)
    pos = np.zeros((n, 2)) if positions is None else np.asarray(positions, dtype=float)
    return GridCell(0, np.asarray(center, dtype=float), pos, np.asarray(intensities, float))


@given(st.floats(0, 1), st.lists(st.tuples(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05)),
                                 min_size=5, max_size=30))
def test_constant_cell(c, pos):
    cell = cell_with([c] * len(pos), pos)
    g = gaussian_vote([cell], 0.6, 4)[0]
    e = equal_weight_vote([cell])[0]
    assert g.P_k == pytest.approx(c) and e.P_k == pytest.approx(c)
    assert g.bit == e.bit == int(c > 0.5)


def test_bad_bit():
    b = gaussian_vote([cell_with([0.9] * 4)], 0.6, 4)[0]
    assert b.is_bad and b.bit is None and b.n_points == 4


def test_single_point_cells_agree():
    cells = [cell_with([v], [[0.02, -0.01]]) for v in (0.2, 0.7)]
    g = gaussian_vote(cells, 0.6, 4, min_points=1)
    e = equal_weight_vote(cells, min_points=1)
    assert [b.P_k for b in g] == pytest.approx([b.P_k for b in e])


def gauss_oracle(pos, inten, center, s2):
    w = [np.exp(-((x - center[0]) ** 2 + (y - center[1]) ** 2) / (2 * s2)) for x, y in pos]
    return sum(wi * ii for wi, ii in zip(w, inten)) / sum(w)


@given(st.lists(st.tuples(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.floats(0, 1)),
                min_size=5, max_size=40), st.randoms(use_true_random=False))
@settings(max_examples=80)
def test_vote_matches_oracle_and_is_permutation_invariant(rows, rnd):
    pos = [(x, y) for x, y, _ in rows]
    inten = [i for _, _, i in rows]
    b = gaussian_vote([cell_with(inten, pos)], 0.6, 4)[0]
    assert b.P_k == pytest.approx(gauss_oracle(pos, inten, (0, 0), 0.025))
    assert min(inten) - 1e-12 <= b.P_k <= max(inten) + 1e-12
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    b2 = gaussian_vote([cell_with([inten[i] for i in perm], [pos[i] for i in perm])], 0.6, 4)[0]
    assert b2.P_k == pytest.approx(b.P_k)
    # Weights enter numerator and denominator alike, so rescaling them is a no-op.
    cell = cell_with(inten, pos)
    w = np.random.default_rng(len(rows)).uniform(0.1, 1.0, len(rows))
    base = _vote([cell], lambda c: w, 0.5, 5)[0]
    scaled = _vote([cell], lambda c: 37.5 * w, 0.5, 5)[0]
    assert scaled.P_k == pytest.approx(base.P_k, rel=1e-12)


def test_grid_covers_marker():
    uv = np.array([[0.29, 0.29], [-0.29, -0.29], [0.0, 0.0], [0.31, 0.0]])
    cells = build_grid(uv, np.zeros(4), 0.6, 4)
    assert len(cells) == 36
    assert len(cells[0]) == 1 and len(cells[35]) == 1
    assert sum(len(c) for c in cells) == 3


def test_payload_word_order():
    bits = [BitEstimate(0.1, 9, False, 0) for _ in range(36)]
    bits[1 * 6 + 1] = BitEstimate(0.9, 9, False, 1)     # top-left inner cell = MSB
    bits[4 * 6 + 4] = BitEstimate(float("nan"), 2, True, None)
    word, unknown = payload_word(bits, 4)
    assert word == 1 << 15 and unknown == 1


def detect(scan, table, **kw):
    return detect_tags(scan, table, DetectorConfig(tag_size=0.6, **kw))


def test_quarter_turn_decodes(family, table, desk):
    for k in range(4):
        tgt = make_target(family, tag_id=7, in_plane=np.pi / 2 * k, tilt=0.2, tilt_axis=1.0)
        scan, _ = render_scene_with_truth(desk, tgt)
        res = detect(scan, table)
        assert len(res.detections) == 1
        d = res.detections[0]
        assert (d.tag_id, d.rotation_k) == (7, k)
        assert np.linalg.norm(d.mu - tgt.translation) < 0.02 * 0.6
        assert angle_between(d.normal, tgt.normal) < 1.0
        assert np.degrees(rotation_angle(d.rotation.T @ tgt.rotation)) < 2.0
        q = d.quaternion
        assert abs(np.linalg.norm(q) - 1) < 1e-9


def test_blank_plane_rejected(family, table, desk):
    tgt = make_target(family)
    scan, truth = render_scene_with_truth(desk, tgt)
    blank = scan.replace(intensity=np.where(truth.target == 0, WHITE, scan.intensity))
    res = detect(blank, table)
    assert res.detections == []
    assert res.rejections


def test_two_sparse_cells_still_decode(family, table, desk):
    tgt = make_target(family, tag_id=12, distance=2.5)
    scan, truth = render_scene_with_truth(desk, tgt)
    keep = np.ones(len(scan), dtype=bool)
    for cell in (2 * 6 + 2, 3 * 6 + 3):
        idx = np.flatnonzero(truth.cell == cell)
        keep[idx[3:]] = False
    res = detect(scan.subset(keep), table)
    assert len(res.detections) == 1
    d = res.detections[0]
    assert d.tag_id == 12 and d.bad_bits == 2


def test_three_sparse_cells_rejected(family, table, desk):
    tgt = make_target(family, tag_id=12, distance=2.5)
    scan, truth = render_scene_with_truth(desk, tgt)
    keep = np.ones(len(scan), dtype=bool)
    for cell in (2 * 6 + 2, 3 * 6 + 3, 2 * 6 + 3):
        idx = np.flatnonzero(truth.cell == cell)
        keep[idx[3:]] = False
    res = detect(scan.subset(keep), table)
    assert res.detections == []
    assert any(r.reason == "TooManyBadBits" for r in res.rejections)


def test_equal_weights_match_on_noiseless_tag(family, table, rendered_tag):
    _, scan, _ = rendered_tag
    g = detect(scan, table).detections
    e = detect(scan, table, weighting="equal").detections
    assert [d.tag_id for d in g] == [d.tag_id for d in e]


def test_detection_json_fields(table, rendered_tag):
    _, scan, _ = rendered_tag
    d = detect(scan, table).detections[0]
    js = d.to_json()
    assert set(js) == {"tag_id", "mu", "q", "rotation_k", "hamming_distance", "bad_bits",
                       "timings_ms"}
    assert set(js["timings_ms"]) == {"edges", "clustering", "fill", "validation",
                                     "extraction", "pose", "voting", "decoding"}
    assert isinstance(d, TagDetection)
