import numpy as np
import pytest

from beamtag.codebook import build_hash_table, default_family
from beamtag.geometry import tag_pose
from beamtag.synth import TagTarget, dense_desk, render_scene_with_truth


@pytest.fixture(scope="session")
def family():
    return default_family()


@pytest.fixture(scope="session")
def table(family):
    return build_hash_table(family)


@pytest.fixture(scope="session")
def desk():
    return dense_desk()


def make_target(family, tag_id=7, distance=3.0, azimuth=0.1, elevation=0.02,
                in_plane=0.0, tilt=0.0, tilt_axis=0.0, tag_size=0.6):
    R, t = tag_pose(distance, azimuth, elevation, in_plane=in_plane, tilt=tilt,
                    tilt_axis=tilt_axis)
    return TagTarget(family, tag_id, tag_size, R, t)


@pytest.fixture(scope="session")
def rendered_tag(family, desk):
    """A noiseless tag 3 m ahead with a mild tilt, plus its truth labels."""
    tgt = make_target(family, tilt=0.3, tilt_axis=0.7)
    scan, truth = render_scene_with_truth(desk, tgt)
    return tgt, scan, truth


def angle_between(a, b):
    c = np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


ACCEPTANCE_LINES = []


def report(number: int, passed: bool, detail: str) -> None:
    """Record and print one acceptance line."""
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
