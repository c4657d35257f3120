"""Candidate-tag localisation: edges, clustering, fill, validation.

Point sets are integer index arrays into a :class:`~beamtag.pointcloud.Scan`,
kept sorted so that they stay in scan order (beam-major, azimuth-ascending).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .codebook import TagFamily
from .pointcloud import Scan


@dataclass(frozen=True)
class EdgeParams:
    ell_distance: int = 2
    distance_threshold: float = 0.2
    ell_intensity: int = 1
    intensity_threshold: float = 0.4

    def __post_init__(self):
        if self.ell_distance < 1 or self.ell_intensity < 1:
            raise ValueError("neighbour offsets must be >= 1")
        if self.distance_threshold <= 0 or self.intensity_threshold <= 0:
            raise ValueError("thresholds must be positive")


def _neighbour_gradient(values: np.ndarray, beam: np.ndarray, ell: int) -> np.ndarray:
    """max(|v[i+ell] - v[i]|, |v[i-ell] - v[i]|) within each beam.

    Missing neighbours (beam ends) contribute 0, so boundary points use the
    one-sided difference.
    """
    n = len(values)
    grad = np.zeros(n)
    if n <= ell:
        return grad
    diff = values[ell:] - values[:-ell]
    mag = np.linalg.norm(diff, axis=1) if diff.ndim == 2 else np.abs(diff)
    mag = np.where(beam[ell:] == beam[:-ell], mag, 0.0)
    grad[:-ell] = mag
    np.maximum(grad[ell:], mag, out=grad[ell:])
    return grad


def detect_edges(scan: Scan, params: EdgeParams = EdgeParams()) -> np.ndarray:
    """Indices of returns at a range discontinuity along their beam."""
    grad = _neighbour_gradient(scan.positions, scan.beam, params.ell_distance)
    return np.flatnonzero(grad > params.distance_threshold)


@dataclass(frozen=True, eq=False)
class Cluster:
    """Axis-aligned box of edge points, later filled with raw returns.

    ``lo``/``hi`` are the per-axis bounds (the six face positions);
    ``edge_points`` and ``filled_points`` index into the scan.
    """

    edge_points: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    tau: float
    filled_points: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def bounds(self) -> tuple[float, ...]:
        """(x_min, x_max, y_min, y_max, z_min, z_max)."""
        return tuple(float(v) for pair in zip(self.lo, self.hi) for v in pair)

    def contains(self, points, eps: float = 0.0) -> np.ndarray:
        p = np.asarray(points).reshape(-1, 3)
        return np.all((p >= self.lo - eps) & (p <= self.hi + eps), axis=1)


@numba.njit(cache=True)
def _single_pass_link(pts, tau):
    n = pts.shape[0]
    lo = np.empty((n, 3))
    hi = np.empty((n, 3))
    label = np.empty(n, dtype=np.int64)
    nc = 0
    for i in range(n):
        x, y, z = pts[i, 0], pts[i, 1], pts[i, 2]
        found = -1
        for c in range(nc):
            if (lo[c, 0] - tau <= x <= hi[c, 0] + tau
                    and lo[c, 1] - tau <= y <= hi[c, 1] + tau
                    and lo[c, 2] - tau <= z <= hi[c, 2] + tau):
                found = c
                break
        if found < 0:
            lo[nc, 0], lo[nc, 1], lo[nc, 2] = x - tau, y - tau, z - tau
            hi[nc, 0], hi[nc, 1], hi[nc, 2] = x + tau, y + tau, z + tau
            label[i] = nc
            nc += 1
        else:
            lo[found, 0] = min(lo[found, 0], x)
            lo[found, 1] = min(lo[found, 1], y)
            lo[found, 2] = min(lo[found, 2], z)
            hi[found, 0] = max(hi[found, 0], x)
            hi[found, 1] = max(hi[found, 1], y)
            hi[found, 2] = max(hi[found, 2], z)
            label[i] = found
    return label, lo[:nc].copy(), hi[:nc].copy()


def cluster_edges(points, tag_size: float, tau: float | None = None,
                  ids=None) -> list[Cluster]:
    """Greedy single-linkage grouping of edge points into boxes.

    Points are visited in the given order.  A point joins the first cluster
    whose bounds, widened by ``tau`` on every side, contain it, growing
    that cluster's bounds; otherwise it seeds a new cluster spanning
    ``point +/- tau``.  Clusters are never merged afterwards.

    Parameters
    ----------
    points : (N, 3) array_like
        Edge positions in scan order.
    tag_size : float
        Marker side length; ``tau`` defaults to ``tag_size / 4``.
    ids : (N,) array_like, optional
        Labels stored in ``Cluster.edge_points`` (scan indices); defaults to
        row numbers of ``points``.
    """
    if tag_size <= 0:
        raise ValueError("tag_size must be positive")
    tau = tag_size / 4 if tau is None else float(tau)
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    ids = np.arange(len(pts)) if ids is None else np.asarray(ids, dtype=np.int64)
    if len(pts) == 0:
        return []
    label, lo, hi = _single_pass_link(pts, tau)
    order = np.argsort(label, kind="stable")
    starts = np.searchsorted(label[order], np.arange(len(lo) + 1))
    return [Cluster(ids[order[starts[c]:starts[c + 1]]], lo[c], hi[c], tau)
            for c in range(len(lo))]


def fill_cluster(scan: Scan, cluster: Cluster) -> Cluster:
    """Attach every scan return lying inside the cluster box (inclusive)."""
    return replace(cluster, filled_points=scan.indices_in_box(cluster.lo, cluster.hi))


class RejectReason(enum.Enum):
    NONE = "None"
    TOO_FEW_POINTS = "TooFewPoints"
    TOO_FEW_PAYLOAD_EDGES = "TooFewPayloadEdges"


def min_cluster_points(d: int) -> int:
    """Five returns per cell over the roughly (d+4) x (d+4) tag."""
    return 5 * (d + 4) ** 2


def min_payload_edges(d: int) -> int:
    return 2 * (d + 2)


@dataclass(frozen=True)
class ValidationReport:
    eta: int
    psi: int
    passed: bool
    reject_reason: RejectReason


def validate_cluster(cluster: Cluster, family: TagFamily | int,
                     payload_edges) -> ValidationReport:
    """Check the filled-point count and payload-edge count against the family."""
    d = family if isinstance(family, int) else family.d
    eta = len(cluster.filled_points)
    psi = len(payload_edges)
    if eta < min_cluster_points(d):
        reason = RejectReason.TOO_FEW_POINTS
    elif psi < min_payload_edges(d):
        reason = RejectReason.TOO_FEW_PAYLOAD_EDGES
    else:
        reason = RejectReason.NONE
    return ValidationReport(eta, psi, reason is RejectReason.NONE, reason)


def extract_payload_edges(scan: Scan, cluster: Cluster,
                          params: EdgeParams = EdgeParams()) -> np.ndarray:
    """Filled points at an intensity step along their beam (scan indices).

    Neighbours are taken within the filled set, so a return's neighbour is
    the next filled return on the same beam.
    """
    idx = cluster.filled_points
    if len(idx) == 0:
        return idx
    grad = _neighbour_gradient(scan.intensity[idx], scan.beam[idx], params.ell_intensity)
    return idx[grad > params.intensity_threshold]
