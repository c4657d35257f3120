"""Gridding marker returns and voting each cell black or white."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .codebook import DecodingTable, decode_codeword
from .detection import Cluster, EdgeParams
from .errors import BeamTagError, OutOfPlane, TooManyBadBits
from .geometry import quat_from_matrix, rot_x
from .pointcloud import Scan
from .pose import (TemplateAlignment, estimate_corners, estimate_partial_pose,
                   footprint_weights, procrustes_align, template_corners)

MIN_CELL_POINTS = 5


@dataclass(frozen=True, eq=False)
class GridCell:
    index: int
    center: np.ndarray          # (y, z) in the template plane
    positions: np.ndarray       # (n, 2)
    intensity: np.ndarray       # (n,)
    weights: np.ndarray | None = None

    def __len__(self):
        return len(self.intensity)


@dataclass(frozen=True)
class BitEstimate:
    P_k: float
    n_points: int
    is_bad: bool
    bit: int | None


def map_to_template(points, intensity, alignment: TemplateAlignment,
                    tag_size: float, max_off_plane: float = 0.1,
                    max_off_plane_fraction: float = 0.05):
    """Carry marker returns into the template plane.

    Returns ``(uv, intensity)``: template (y, z) coordinates of the points
    that land within the 1.1 x tag_size square, with their intensities.

    Raises
    ------
    OutOfPlane
        More than ``max_off_plane_fraction`` of the points sit farther than
        ``max_off_plane * tag_size`` from the template plane.
    """
    x = alignment.apply(np.asarray(points, dtype=float).reshape(-1, 3))
    intensity = np.asarray(intensity, dtype=float)
    if len(x):
        off = np.abs(x[:, 0]) > max_off_plane * tag_size
        if off.mean() > max_off_plane_fraction:
            raise OutOfPlane(f"{off.sum()} of {len(x)} points off the template plane")
    uv = x[:, 1:3]
    keep = np.all(np.abs(uv) <= 0.55 * tag_size, axis=1)
    return uv[keep], intensity[keep]


def cell_centers(tag_size: float, d: int) -> np.ndarray:
    """(k, 2) template (y, z) centre of every cell, row-major from the top-left."""
    n = d + 2
    cs = tag_size / n
    r, c = np.divmod(np.arange(n * n), n)
    return np.column_stack([tag_size / 2 - (c + 0.5) * cs, tag_size / 2 - (r + 0.5) * cs])


def cell_index(uv, tag_size: float, d: int) -> np.ndarray:
    """Cell of each template point, -1 outside the marker."""
    n = d + 2
    cs = tag_size / n
    half = tag_size / 2
    col = np.floor((half - uv[:, 0]) / cs).astype(np.int64)
    row = np.floor((half - uv[:, 1]) / cs).astype(np.int64)
    ok = (col >= 0) & (col < n) & (row >= 0) & (row < n)
    return np.where(ok, row * n + col, -1)


def build_grid(uv, intensity, tag_size: float, d: int) -> list[GridCell]:
    """Bucket template points into the (d+2)^2 marker cells; outsiders are dropped."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    intensity = np.asarray(intensity, dtype=float)
    k = cell_index(uv, tag_size, d)
    centers = cell_centers(tag_size, d)
    cells = []
    for i in range((d + 2) ** 2):
        m = k == i
        cells.append(GridCell(i, centers[i], uv[m], intensity[m]))
    return cells


def gaussian_sigma2(tag_size: float, d: int) -> float:
    """Variance parameter of the vote weights, tag_size / (4 (d + 2))."""
    return tag_size / (4 * (d + 2))


def _vote(cells, weight_fn, threshold: float, min_points: int) -> list[BitEstimate]:
    out = []
    for cell in cells:
        n = len(cell)
        if n == 0:
            out.append(BitEstimate(float("nan"), 0, True, None))
            continue
        w = weight_fn(cell)
        p = float(np.sum(w * cell.intensity) / np.sum(w))
        bad = n < min_points
        out.append(BitEstimate(p, n, bad, None if bad else int(p > threshold)))
    return out


def gaussian_vote(cells, tag_size: float, d: int, sigma2: float | None = None,
                  threshold: float = 0.5, min_points: int = MIN_CELL_POINTS) -> list[BitEstimate]:
    """Weighted mean intensity per cell, weights Gaussian in the offset from the centre.

    The density is left unnormalised since the constant cancels.  Cells with
    fewer than ``min_points`` returns are bad bits with ``bit = None``.
    """
    s2 = gaussian_sigma2(tag_size, d) if sigma2 is None else sigma2

    def weights(cell):
        r2 = np.sum((cell.positions - cell.center) ** 2, axis=1)
        return np.exp(-r2 / (2 * s2))

    return _vote(cells, weights, threshold, min_points)


def equal_weight_vote(cells, threshold: float = 0.5,
                      min_points: int = MIN_CELL_POINTS) -> list[BitEstimate]:
    """Plain mean intensity per cell."""
    return _vote(cells, lambda c: np.ones(len(c)), threshold, min_points)


def payload_word(bits: list[BitEstimate], d: int) -> tuple[int, int]:
    """(word, unknown_mask) from the inner d x d cells, MSB = top-left."""
    n = d + 2
    word = 0
    unknown = 0
    for r in range(1, d + 1):
        for c in range(1, d + 1):
            b = bits[r * n + c]
            word <<= 1
            unknown <<= 1
            if b.bit is None:
                unknown |= 1
            else:
                word |= b.bit
    return word, unknown


def border_is_dark(bits: list[BitEstimate], d: int, threshold: float = 0.5) -> bool:
    n = d + 2
    vals = [bits[r * n + c].P_k for r in range(n) for c in range(n)
            if (r in (0, n - 1) or c in (0, n - 1)) and bits[r * n + c].n_points > 0]
    return bool(vals) and float(np.mean(vals)) < threshold


STAGE_KEYS = ("edges", "clustering", "fill", "validation", "extraction",
              "pose", "voting", "decoding")


@dataclass(frozen=True, eq=False)
class TagDetection:
    """A decoded marker with its full pose.

    ``rotation`` maps the tag frame (face toward -x, +z up) into the sensor
    frame and ``mu`` is the centroid of the marker returns.
    """

    tag_id: int
    mu: np.ndarray
    rotation: np.ndarray
    rotation_k: int
    hamming_distance: int
    bits: tuple
    corners: np.ndarray
    timings_ms: dict = field(default_factory=dict)

    @property
    def quaternion(self) -> np.ndarray:
        return quat_from_matrix(self.rotation)

    @property
    def normal(self) -> np.ndarray:
        return -self.rotation[:, 0]

    @property
    def bad_bits(self) -> int:
        return sum(b.is_bad for b in self.bits)

    def to_json(self, timings: bool = True) -> dict:
        doc = {
            "tag_id": int(self.tag_id),
            "mu": [round(float(v), 9) for v in self.mu],
            "q": [round(float(v), 9) for v in self.quaternion],
            "rotation_k": int(self.rotation_k),
            "hamming_distance": int(self.hamming_distance),
            "bad_bits": int(self.bad_bits),
        }
        if timings:
            doc["timings_ms"] = {k: float(self.timings_ms.get(k, 0.0)) for k in STAGE_KEYS}
        return doc


@dataclass(frozen=True)
class Rejection:
    stage: str
    reason: str


@dataclass(frozen=True)
class DecodeParams:
    tag_size: float
    edge_params: EdgeParams = EdgeParams()
    sigma2: float | None = None
    weighting: str = "gaussian"
    max_bad_bits: int | None = None
    bit_threshold: float = 0.5
    dark_level: float = 0.3
    min_cell_points: int = MIN_CELL_POINTS

    def __post_init__(self):
        if self.tag_size <= 0:
            raise ValueError("tag_size must be positive")
        if self.weighting not in ("gaussian", "equal"):
            raise ValueError("weighting must be 'gaussian' or 'equal'")


def marker_points(scan: Scan, payload_edges, dark_level: float = 0.3):
    """Marker returns and their outline, from the dark payload edges.

    On each beam the marker spans from the first to the last dark
    intensity-edge return; everything between (inclusive) is kept.  The two
    ends of each span are the outline points used for corner fitting.

    Returns
    -------
    (marker, boundary) : index arrays into ``scan``
    """
    e = np.asarray(payload_edges, dtype=np.int64)
    e = e[scan.intensity[e] < dark_level]
    if len(e) == 0:
        return e, e
    beams = scan.beam[e]
    starts = np.flatnonzero(np.r_[True, beams[1:] != beams[:-1]])
    ends = np.r_[starts[1:], len(e)] - 1
    first, last = e[starts], e[ends]
    marker = np.concatenate([np.arange(a, b + 1) for a, b in zip(first, last)])
    boundary = np.unique(np.concatenate([first, last]))
    return marker, boundary


def _ms(t0):
    return (time.perf_counter() - t0) * 1e3


def decode_tag(scan: Scan, cluster: Cluster, payload_edges, table: DecodingTable,
               params: DecodeParams, timings: dict | None = None):
    """Full pose and identity of one validated cluster.

    Returns a :class:`TagDetection`, or a :class:`Rejection` naming the stage
    that failed.  Stage durations are written into ``timings`` when given.
    """
    timings = {} if timings is None else timings
    fam = table.family
    d = fam.d
    ts = params.tag_size
    t0 = time.perf_counter()
    try:
        marker, boundary = marker_points(scan, payload_edges, params.dark_level)
        pts = scan.positions[marker]
        partial = estimate_partial_pose(pts, footprint_weights(pts))
        corners = estimate_corners(scan.positions[boundary], partial, ts)
        align = procrustes_align(corners, template_corners(ts), partial)
    except BeamTagError as exc:
        timings["pose"] = _ms(t0)
        return Rejection("pose", type(exc).__name__)
    timings["pose"] = _ms(t0)

    t0 = time.perf_counter()
    try:
        uv, inten = map_to_template(pts, scan.intensity[marker], align, ts)
    except OutOfPlane:
        timings["voting"] = _ms(t0)
        return Rejection("voting", "OutOfPlane")
    cells = build_grid(uv, inten, ts, d)
    if params.weighting == "gaussian":
        bits = gaussian_vote(cells, ts, d, params.sigma2, params.bit_threshold,
                             params.min_cell_points)
    else:
        bits = equal_weight_vote(cells, params.bit_threshold, params.min_cell_points)
    timings["voting"] = _ms(t0)

    t0 = time.perf_counter()
    try:
        if not border_is_dark(bits, d, params.bit_threshold):
            return Rejection("decoding", "BorderNotDark")
        word, unknown = payload_word(bits, d)
        max_bad = fam.max_correctable if params.max_bad_bits is None else params.max_bad_bits
        try:
            res = decode_codeword(table, word, unknown, max_bad)
        except TooManyBadBits:
            return Rejection("decoding", "TooManyBadBits")
        if res is None:
            return Rejection("decoding", "NoMatch")
        # Template frame = Rx(90 k) * tag frame, and R* takes sensor to template.
        rotation = align.rotation.T @ rot_x(np.pi / 2 * res.rotation_k)
        return TagDetection(res.tag_id, partial.mu, rotation, res.rotation_k,
                            res.hamming_distance, tuple(bits), corners, timings)
    finally:
        timings["decoding"] = _ms(t0)
