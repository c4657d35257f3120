import json

import numpy as np
import pytest

from beamtag.codebook import rotate_int
from beamtag.errors import TargetBehindSensor, TargetOutOfRange
from beamtag.geometry import quat_from_matrix, rot_x, tag_pose
from beamtag.synth import (BLACK, WHITE, Box, LidarModel, NoiseModel, TagTarget, apply_noise,
                           load_scene, puck32, random_clutter, render_scene,
                           render_scene_with_truth, transition_adjacent)

from conftest import make_target


def test_lidar_model_invariants():
    with pytest.raises(ValueError):
        LidarModel(2, np.array([0.1, 0.0]), 0.01)
    with pytest.raises(ValueError):
        LidarModel(2, np.array([0.0, 0.1]), 0.0)
    m = puck32()
    assert m.num_beams == 32 and m.columns * m.num_beams == 120_000
    assert LidarModel.from_json(m.to_json()).columns == m.columns


def test_puck_returns_exceed_cluster_bound(family):
    # 2 m range, 32 beams packed into 20 degrees.
    tgt = make_target(family, distance=2.0, azimuth=0.0, elevation=0.0)
    scan, truth = render_scene_with_truth(puck32(), tgt)
    assert np.count_nonzero(truth.on_marker) >= 5 * (4 + 4) ** 2


def test_render_is_deterministic(family, desk):
    tgt = make_target(family, tilt=0.2)
    assert render_scene(desk, tgt).same_as(render_scene(desk, tgt))


def test_returns_lie_on_plate_plane(rendered_tag):
    tgt, scan, truth = rendered_tag
    on = scan.positions[truth.target == 0]
    dist = (on - tgt.translation) @ tgt.normal
    assert np.max(np.abs(dist)) < 1e-9


def cell_oracle(tgt, positions):
    """Pattern cell of each point, from the tag frame directly."""
    local = (positions - tgt.translation) @ tgt.rotation
    d = tgt.family.d
    half = tgt.tag_size / 2
    col = np.floor((half - local[:, 1]) / tgt.cell_size).astype(int)
    row = np.floor((half - local[:, 2]) / tgt.cell_size).astype(int)
    return row, col


def test_intensity_matches_pattern(rendered_tag):
    tgt, scan, truth = rendered_tag
    on = truth.on_marker
    row, col = cell_oracle(tgt, scan.positions[on])
    word = tgt.codeword
    d = tgt.family.d
    expect = np.full(len(row), BLACK)
    inner = (row >= 1) & (row <= d) & (col >= 1) & (col <= d)
    bit = (word >> (d * d - 1 - ((row - 1) * d + (col - 1)))) & 1
    expect[inner & (bit == 1)] = WHITE
    assert np.array_equal(scan.intensity[on], expect)
    assert np.array_equal(truth.cell[on], row * (d + 2) + col)


def test_half_turn_gives_rotated_pattern(family, desk):
    R, t = tag_pose(3.0, 0.05, 0.0)
    a = TagTarget(family, 11, 0.6, R, t)
    b = TagTarget(family, 11, 0.6, R @ rot_x(np.pi), t)
    sa, ta = render_scene_with_truth(desk, a)
    sb, tb = render_scene_with_truth(desk, b)
    assert np.allclose(sa.positions, sb.positions, atol=1e-12)
    n = family.d + 2
    # Cell (r, c) under a half turn shows cell (n-1-r, n-1-c) of the original.
    pa = a.pattern()
    assert np.array_equal(b.pattern(), pa)  # the printed pattern is the same ...
    on = ta.on_marker & tb.on_marker
    r, c = np.divmod(ta.cell[on], n)
    assert np.array_equal(tb.cell[on], (n - 1 - r) * n + (n - 1 - c))  # ... seen turned
    rotated = rotate_int(family.codewords[11], family.d, 2)
    grid = np.array([(rotated >> (15 - i)) & 1 for i in range(16)]).reshape(4, 4)
    seen = np.zeros((n, n), dtype=int) - 1
    seen[r, c] = (sb.intensity[on] > 0.5).astype(int)
    assert np.array_equal(seen[1:-1, 1:-1], grid)


def test_background_only_scene(family, desk):
    # Tag off to the side of the 60 degree window.
    tgt = make_target(family, azimuth=1.2)
    scan, truth = render_scene_with_truth(desk, tgt)
    assert not np.any(truth.target == 0)


def test_render_errors(family, desk):
    R, t = tag_pose(3.0)
    with pytest.raises(TargetBehindSensor):
        render_scene(desk, TagTarget(family, 0, 0.6, R @ rot_x(0) @ np.diag([-1, -1, 1]), t))
    with pytest.raises(TargetOutOfRange):
        render_scene(desk, TagTarget(family, 0, 0.6, *tag_pose(150.0)), background_range=200)
    with pytest.raises(ValueError):
        render_scene(desk, TagTarget(family, 0, 0.6, R, t), background_range=2.0)


def test_noise_identity(rendered_tag):
    _, scan, _ = rendered_tag
    assert apply_noise(scan, NoiseModel()).same_as(scan)


def brute_transition_adjacent(scan):
    out = set()
    for rng in scan.beams:
        idx = list(rng)
        for a, b in zip(idx, idx[1:]):
            ia, ib = scan.intensity[a], scan.intensity[b]
            if (ia < 0.3 and ib > 0.7) or (ia > 0.7 and ib < 0.3):
                out.update((a, b))
    return out


def test_full_transition_dropout(rendered_tag):
    _, scan, _ = rendered_tag
    adj = brute_transition_adjacent(scan)
    assert set(np.flatnonzero(transition_adjacent(scan))) == adj
    noisy, kept = apply_noise(scan, NoiseModel(transition_dropout_prob=1.0), return_kept=True)
    assert len(noisy) == len(scan) - len(adj)
    assert not adj & set(kept.tolist())


def test_noise_deterministic_and_clamped(rendered_tag):
    _, scan, _ = rendered_tag
    nm = NoiseModel(range_sigma=0.01, intensity_sigma=0.5, transition_dropout_prob=0.3, seed=9)
    a, b = apply_noise(scan, nm), apply_noise(scan, nm)
    assert a.same_as(b)
    assert a.intensity.min() >= 0.0 and a.intensity.max() <= 1.0
    assert not a.same_as(apply_noise(scan, NoiseModel(range_sigma=0.01, seed=10)))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel(transition_dropout_prob=1.5)
    with pytest.raises(ValueError):
        NoiseModel(range_sigma=-1)


def test_clutter_occludes_background(family, desk):
    tgt = make_target(family)
    box = Box((6.0, -1.0, -1.0), (7.0, -0.5, 1.0), 0.55)
    scan, truth = render_scene_with_truth(desk, tgt, clutter=[box])
    hit = truth.clutter == 0
    assert hit.any()
    assert np.all(scan.positions[hit, 0] >= 6.0 - 1e-9)
    assert np.allclose(scan.intensity[hit], 0.55)
    prims = random_clutter(np.random.default_rng(0), 10, keep_out=[tgt.translation])
    assert len(prims) == 10


def test_scene_file(tmp_path, family):
    R, t = tag_pose(2.5, 0.1)
    doc = {"lidar": {"preset": "dense_desk"}, "family": "default", "tag_id": 3,
           "tag_size": 0.6, "pose": {"translation": t.tolist(),
                                     "quaternion": quat_from_matrix(R).tolist()},
           "noise": {"range_sigma": 0.01}, "seed": 4}
    p = tmp_path / "scene.json"
    p.write_text(json.dumps(doc))
    s1, t1 = load_scene(p).render()
    s2, _ = load_scene(p).render()
    assert s1.same_as(s2)
    assert not s1.same_as(load_scene(p, seed=5).render()[0])
    js = t1.to_json()
    assert js["tag_id"] == 3 and np.allclose(js["mu"], t)
    assert len(js["labels"]["cell"]) == len(s1)
