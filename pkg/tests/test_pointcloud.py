import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamtag.errors import BeamOutOfRange, DuplicateReturn, ScanFormatError
from beamtag.pointcloud import (Point, Scan, analyze_scan, build_scan, normalize_intensity,
                                read_scan_csv, scan_from_rows, write_scan_csv)
from beamtag.synth import render_scene_with_truth


def pt(beam, az, x=1.0, inten=0.5):
    return Point((x, float(az), 0.0), inten, beam, az)


def test_empty_build_has_all_beams():
    scan = build_scan([], 32)
    assert scan.num_beams == 32
    assert len(scan.beams) == 32
    assert all(len(b) == 0 for b in scan.beams)


def test_beam_sorted_by_azimuth():
    scan = build_scan([pt(0, 5), pt(0, 2), pt(0, 9)], 4)
    assert scan.azimuth_index[scan.beam_slice(0)].tolist() == [2, 5, 9]


def test_duplicate_return_rejected():
    with pytest.raises(DuplicateReturn):
        build_scan([pt(1, 4), pt(1, 4, x=2.0)], 4)


def test_beam_out_of_range():
    with pytest.raises(BeamOutOfRange):
        build_scan([pt(4, 0)], 4)
    with pytest.raises(BeamOutOfRange):
        build_scan([pt(-1, 0)], 4)


def test_intensity_range_enforced():
    with pytest.raises(ValueError):
        build_scan([pt(0, 0, inten=1.5)], 1)


def test_scan_is_read_only():
    scan = build_scan([pt(0, 1)], 1)
    with pytest.raises(ValueError):
        scan.positions[0, 0] = 3.0


def test_analyze_empty():
    s = analyze_scan(build_scan([], 32))
    assert s.total_points == 0 and s.min_per_beam == 0 and s.max_per_beam == 0
    assert s.mean_per_beam == 0.0
    assert s.points_per_beam == (0,) * 32


def test_analyze_counts():
    pts = [pt(0, i) for i in range(10)] + [pt(1, i) for i in range(20)]
    s = analyze_scan(build_scan(pts, 2))
    assert s.points_per_beam == (10, 20)
    assert s.total_points == 30
    assert s.mean_per_beam == 15
    assert (s.min_per_beam, s.max_per_beam) == (10, 20)


def test_analyze_matches_renderer_count(rendered_tag):
    _, scan, truth = rendered_tag
    assert analyze_scan(scan).total_points == truth.emitted


point_sets = st.lists(
    st.tuples(st.integers(0, 3), st.integers(0, 50),
              st.floats(-5, 5), st.floats(0, 1)),
    max_size=40, unique_by=lambda t: (t[0], t[1]))


@given(point_sets, st.randoms(use_true_random=False))
@settings(max_examples=60, deadline=None)
def test_build_is_permutation_invariant(rows, rnd):
    pts = [Point((x, 0.0, 1.0), i, b, a) for b, a, x, i in rows]
    shuffled = pts[:]
    rnd.shuffle(shuffled)
    s1, s2 = build_scan(pts, 4), build_scan(shuffled, 4)
    assert s1.same_as(s2)
    assert analyze_scan(s1).total_points == len(pts)
    for rng_ in s1.beams:
        az = s1.azimuth_index[rng_.start:rng_.stop]
        assert np.all(np.diff(az) > 0)
    for m, rng_ in enumerate(s1.beams):
        assert np.all(s1.beam[rng_.start:rng_.stop] == m)


def test_csv_round_trip(tmp_path):
    scan = scan_from_rows([(0, 3, 1.5, -2.25, 0.125, 0.5), (1, 0, 3.0, 0.0, -1.0, 0.9),
                           (0, 1, 1.0, 2.0, 3.0, 0.1)], 2)
    path = tmp_path / "s.csv"
    write_scan_csv(scan, path)
    raw = path.read_bytes()
    assert raw.startswith(b"beam,azimuth_index,x,y,z,intensity\n")
    assert b"\r" not in raw
    back = read_scan_csv(path, num_beams=2)
    assert back.same_as(scan)


def test_csv_malformed_line_number():
    text = "beam,azimuth_index,x,y,z,intensity\n0,1,1,2,3,0.5\n0,2,1,2,oops,0.5\n"
    with pytest.raises(ScanFormatError) as exc:
        read_scan_csv(io.StringIO(text))
    assert exc.value.line == 3


def test_csv_missing_header():
    with pytest.raises(ScanFormatError) as exc:
        read_scan_csv(io.StringIO("0,1,1,2,3,0.5\n"))
    assert exc.value.line == 1


def test_csv_intensity_scaling():
    text = "beam,azimuth_index,x,y,z,intensity\n0,0,1,0,0,255\n0,1,1,1,0,51\n"
    scan = read_scan_csv(io.StringIO(text), intensity_scale=255.0)
    assert np.allclose(scan.intensity, [1.0, 0.2])


def test_normalize_intensity_clips():
    assert np.allclose(normalize_intensity([0, 127.5, 255, 300]), [0, 0.5, 1, 1])


def test_box_query_matches_brute_force(rendered_tag):
    _, scan, _ = rendered_tag
    rng = np.random.default_rng(3)
    for _ in range(20):
        c = scan.positions[rng.integers(len(scan))]
        half = rng.uniform(0.05, 1.5, size=3)
        got = scan.indices_in_box(c - half, c + half)
        p = scan.positions
        want = np.flatnonzero(np.all((p >= c - half) & (p <= c + half), axis=1))
        assert np.array_equal(got, want)
    everything = scan.indices_in_box([-1e9] * 3, [1e9] * 3)
    assert np.array_equal(everything, np.arange(len(scan)))


def test_subset_keeps_order():
    scan = scan_from_rows([(0, i, 1.0, i, 0.0, 0.5) for i in range(5)], 1)
    sub = scan.subset(np.array([4, 1, 3]))
    assert sub.azimuth_index.tolist() == [1, 3, 4]
    assert len(Scan.empty(3)) == 0
