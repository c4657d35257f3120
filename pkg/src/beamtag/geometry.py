"""Small rotation helpers: axis rotations, quaternions, tag-facing frames.

Quaternions are ``[w, x, y, z]`` with ``w >= 0``.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_axis(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * angle).as_matrix()


def quat_from_matrix(R) -> np.ndarray:
    x, y, z, w = Rotation.from_matrix(np.asarray(R, dtype=float)).as_quat()
    q = np.array([w, x, y, z])
    if q[0] < 0 or (q[0] == 0 and next(v for v in q if v != 0) < 0):
        q = -q
    return q / np.linalg.norm(q)


def matrix_from_quat(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float)
    return Rotation.from_quat([x, y, z, w]).as_matrix()


def rotation_angle(R) -> float:
    """Angle of a rotation matrix, radians."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def facing_rotation(direction) -> np.ndarray:
    """Tag-frame rotation whose front face (-x) looks back along ``direction``.

    Tag-frame x maps onto the viewing ray, z onto the upward direction
    orthogonal to it, so a tag straight ahead on the x axis gets the identity.
    """
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    left = np.cross([0.0, 0.0, 1.0], u)
    if np.linalg.norm(left) < 1e-9:
        left = np.array([0.0, 1.0, 0.0])
    left /= np.linalg.norm(left)
    up = np.cross(u, left)
    return np.column_stack([u, left, up])


def tag_pose(distance: float, azimuth: float = 0.0, elevation: float = 0.0,
             in_plane: float = 0.0, tilt: float = 0.0,
             tilt_axis: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Mount pose of a tag facing the sensor.

    ``in_plane`` spins the tag about its normal; ``tilt`` then rotates it
    about an in-plane axis at angle ``tilt_axis`` from the tag's y axis.
    All angles in radians.  Returns ``(R, t)`` mapping tag frame to sensor.
    """
    u = np.array([np.cos(elevation) * np.cos(azimuth),
                  np.cos(elevation) * np.sin(azimuth),
                  np.sin(elevation)])
    R_tilt = rot_axis([0.0, np.cos(tilt_axis), np.sin(tilt_axis)], tilt) if tilt else np.eye(3)
    R = facing_rotation(u) @ R_tilt @ rot_x(in_plane)
    return R, distance * u
