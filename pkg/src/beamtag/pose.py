"""Marker pose: PCA plane, corner fitting, and template alignment.

The template is the marker laid in the plane x = 0 about the origin, face
toward -x, matching the tag frame used by :mod:`beamtag.synth`.  Corner
lists everywhere run counter-clockwise as seen from the sensor, starting at
the top-right corner.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import CornerFitFailed, DegenerateGeometry, IllConditioned


@dataclass(frozen=True, eq=False)
class PartialPose:
    mu: np.ndarray
    normal: np.ndarray
    in_plane_axes: np.ndarray  # (2, 3): first principal axis, then normal x first
    plane_residual_rms: float


@dataclass(frozen=True, eq=False)
class TemplateAlignment:
    rotation: np.ndarray
    translation: np.ndarray
    residual: float

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation


def template_corners(tag_size: float) -> np.ndarray:
    h = tag_size / 2
    return np.array([[0, -h, h], [0, h, h], [0, h, -h], [0, -h, -h]], dtype=float)


def estimate_partial_pose(points, weights=None) -> PartialPose:
    """Centroid and PCA plane of marker returns.

    The normal is the least principal direction, signed to face the sensor
    at the origin.  ``weights`` turn the centroid into a weighted mean; the
    plane fit itself is unweighted.

    Raises
    ------
    DegenerateGeometry
        Fewer than three points, or the points are collinear.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) < 3:
        raise DegenerateGeometry(f"need at least 3 points, got {len(p)}")
    if weights is None:
        mu = p.sum(axis=0) / len(p)
    else:
        w = np.asarray(weights, dtype=float)
        mu = (w[:, None] * p).sum(axis=0) / w.sum()
    y = p - mu
    _, s, vt = np.linalg.svd(y, full_matrices=False)
    scale = s[0] if s[0] > 0 else 1.0
    if s[0] == 0 or s[1] <= 1e-9 * scale:
        raise DegenerateGeometry("points are collinear")
    normal = vt[2]
    if normal @ mu > 0:
        normal = -normal
    a1 = vt[0]
    a2 = np.cross(normal, a1)
    rms = float(s[2] / np.sqrt(len(p))) if len(s) > 2 else 0.0
    return PartialPose(mu, normal, np.vstack([a1, a2]), rms)


def footprint_weights(points) -> np.ndarray:
    """Relative surface area each return stands for on a plane.

    A ray's footprint on a plane at perpendicular distance D grows as
    r^3 / D, so near returns are denser per unit area than far ones.
    Weighting by r^3 removes that perspective bias from the centroid.
    """
    r = np.linalg.norm(np.asarray(points, dtype=float).reshape(-1, 3), axis=1)
    return (r / r.max()) ** 3 if len(r) else r


def picture_frame(normal) -> tuple[np.ndarray, np.ndarray]:
    """(right, up) unit vectors of the plane as seen from the sensor.

    ``up`` follows the sensor z axis projected into the plane and
    ``right x up = normal``.
    """
    n = np.asarray(normal, dtype=float)
    up = np.array([0.0, 0.0, 1.0]) - n[2] * n
    if np.linalg.norm(up) < 1e-6:
        up = np.array([1.0, 0.0, 0.0]) - n[0] * n
    up /= np.linalg.norm(up)
    right = np.cross(up, n)
    return right, up


def _square_distance(uv, half):
    """Distance of 2-D points to the perimeter of an axis-aligned square."""
    a = np.abs(uv[..., 0]) - half
    b = np.abs(uv[..., 1]) - half
    inside = (a <= 0) & (b <= 0)
    outside = np.hypot(np.maximum(a, 0), np.maximum(b, 0))
    return np.where(inside, np.minimum(-a, -b), outside)


def _rotate2(uv, theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([c * uv[..., 0] + s * uv[..., 1],
                     -s * uv[..., 0] + c * uv[..., 1]], axis=-1)


def square_orientation(uv, side: float) -> float:
    """In-plane angle in [-45, 45) deg that best fits a centred square of ``side``."""
    half = side / 2
    grid = np.deg2rad(np.arange(-45.0, 45.0, 1.0))
    rot = _rotate2(uv[None, :, :], grid[:, None])
    cost = np.sum(_square_distance(rot, half) ** 2, axis=1)
    t0 = grid[int(np.argmin(cost))]
    res = minimize_scalar(lambda t: np.sum(_square_distance(_rotate2(uv, t), half) ** 2),
                          bounds=(t0 - np.deg2rad(1.0), t0 + np.deg2rad(1.0)),
                          method="bounded", options={"xatol": 1e-10})
    t = float(res.x)
    return (t + np.pi / 4) % (np.pi / 2) - np.pi / 4


def _tls_line(pts):
    c = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - c)
    return c, vt[0]


def _intersect(c1, d1, c2, d2):
    a = np.column_stack([d1, -d2])
    if abs(np.linalg.det(a)) < 1e-6:
        raise CornerFitFailed("adjacent sides are nearly parallel")
    s = np.linalg.solve(a, c2 - c1)
    return c1 + s[0] * d1


def estimate_corners(boundary, pose: PartialPose, tag_size: float,
                     min_side_points: int = 3, max_side_skew_deg: float = 5.0) -> np.ndarray:
    """Four marker corners from boundary returns.

    Boundary points are projected into the picture plane about ``pose.mu``,
    a square of the known size gives the principal orientation, and the
    points are split into the four sides by quadrant in that aligned frame.
    Each side with enough spread is fit by total least squares.  A side
    that is missing (beams run parallel to it, so it is rarely sampled)
    falls back to the square prior: parallel to the orientation and one
    tag width from the opposite side, or half a width from the centre.

    Returns
    -------
    (4, 3) ndarray
        Counter-clockwise as seen from the sensor, starting with the corner
        nearest the upper-right diagonal.

    Raises
    ------
    CornerFitFailed
        No side could be fitted, or adjacent sides do not intersect cleanly.
    """
    b = np.asarray(boundary, dtype=float).reshape(-1, 3)
    if len(b) < 2:
        raise CornerFitFailed("need boundary points")
    right, up = picture_frame(pose.normal)
    rel = b - pose.mu
    uv = np.column_stack([rel @ right, rel @ up])
    theta = square_orientation(uv, tag_size)
    aligned = _rotate2(uv, theta)
    ax, ay = aligned[:, 0], aligned[:, 1]
    # side order: right, top, left, bottom; outward normals in aligned frame
    masks = [ax >= np.abs(ay), ay > np.abs(ax), ax <= -np.abs(ay), ay < -np.abs(ax)]
    normals = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    offsets = [None] * 4
    lines = [None] * 4
    for s, m in enumerate(masks):
        pts = aligned[m]
        if len(pts) < min_side_points:
            continue
        along = pts @ normals[s][::-1]
        if np.ptp(along) < tag_size / 2:
            continue
        c, dvec = _tls_line(pts)
        skew = np.degrees(np.arccos(min(1.0, abs(dvec @ normals[s][::-1]))))
        if skew > max_side_skew_deg:
            continue
        lines[s] = (c, dvec)
        offsets[s] = float(c @ normals[s])
    if all(line is None for line in lines):
        raise CornerFitFailed("no side of the marker could be fitted")
    for s in range(4):
        if lines[s] is not None:
            continue
        opp = (s + 2) % 4
        off = tag_size - offsets[opp] if offsets[opp] is not None else tag_size / 2
        lines[s] = (normals[s] * off, normals[s][::-1].copy())
    corners2 = []
    # corner between side s and side s+1: right/top, top/left, left/bottom, bottom/right
    for s in range(4):
        c1, d1 = lines[s]
        c2, d2 = lines[(s + 1) % 4]
        corners2.append(_intersect(c1, d1, c2, d2))
    corners2 = _rotate2(np.array(corners2), -theta)
    ang = np.arctan2(corners2[:, 1], corners2[:, 0])
    order = np.argsort(ang)
    start = int(np.argmin(np.abs(np.angle(np.exp(1j * (ang[order] - np.pi / 4))))))
    order = np.roll(order, -start)
    c = corners2[order]
    return pose.mu + np.outer(c[:, 0], right) + np.outer(c[:, 1], up)


def procrustes_align(corners, template, partial: PartialPose) -> TemplateAlignment:
    """Rotation taking centred marker corners onto the template corners.

    Solves min ||R P - X||_F over rotations with ``P`` the corners relative
    to ``partial.mu`` and ``X`` the template corners, via the SVD of
    ``X P^T``; a reflection is turned into the nearest proper rotation by
    flipping the last left singular vector.  The translation sends the
    centroid to the template origin.

    Raises
    ------
    IllConditioned
        The corners do not span a plane.
    """
    P = (np.asarray(corners, dtype=float) - partial.mu).T
    X = np.asarray(template, dtype=float).T
    M = X @ P.T
    U, s, Vt = np.linalg.svd(M)
    if s[0] <= 0 or s[1] <= 1e-9 * s[0]:
        raise IllConditioned(f"singular values {s} indicate rank < 2")
    if np.linalg.det(U @ Vt) < 0:
        U[:, -1] = -U[:, -1]
    R = U @ Vt
    T = -R @ partial.mu
    residual = float(np.linalg.norm(R @ P - X))
    return TemplateAlignment(R, T, residual)
