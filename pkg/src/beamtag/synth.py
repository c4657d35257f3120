"""Synthetic multi-beam LiDAR renderer used as ground truth for the detector.

Rays leave the origin on a (beam elevation x azimuth column) grid and stop at
the nearest of: tag plates, clutter primitives, or a background sphere.
Every return carries labels (which object, which marker cell) so tests can
check each pipeline stage against the geometry that produced it.

Tag frame convention: the marker lies in the plane x = 0, centred at the
origin, with its printed face looking toward -x.  Seen from the front,
+z is up and +y is to the viewer's left.  Cell (row, col) counts rows from
the top and columns from the viewer's left; payload bits are row-major over
the inner d x d cells, most significant bit first, 1 = white.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .codebook import TagFamily, default_family
from .errors import TargetBehindSensor, TargetOutOfRange
from .geometry import matrix_from_quat, quat_from_matrix
from .pointcloud import Scan

WHITE = 0.9
BLACK = 0.1
BACKGROUND_INTENSITY = 0.45

# Transition classes used by the noise model: below/above these are black/white.
_BLACK_MAX = 0.3
_WHITE_MIN = 0.7


@dataclass(frozen=True)
class LidarModel:
    """Spinning multi-beam sensor.

    Beams are ordered by ascending elevation.  Azimuth column ``j`` points at
    ``azimuth_start + j * azimuth_step``; ``azimuth_count`` defaults to a full
    revolution.
    """

    num_beams: int
    elevation_angles: tuple[float, ...]
    azimuth_step: float
    max_range: float = 100.0
    azimuth_start: float = -np.pi
    azimuth_count: int | None = None

    def __post_init__(self):
        el = np.asarray(self.elevation_angles, dtype=float)
        if len(el) != self.num_beams:
            raise ValueError("one elevation angle per beam required")
        if np.any(np.diff(el) <= 0):
            raise ValueError("elevation angles must be strictly increasing")
        if self.azimuth_step <= 0:
            raise ValueError("azimuth_step must be positive")
        object.__setattr__(self, "elevation_angles", tuple(float(v) for v in el))

    @property
    def columns(self) -> int:
        if self.azimuth_count is not None:
            return int(self.azimuth_count)
        return int(round(2 * np.pi / self.azimuth_step))

    @classmethod
    def uniform(cls, num_beams: int, fov_deg: tuple[float, float],
                azimuth_step_deg: float, max_range: float = 100.0,
                azimuth_fov_deg: tuple[float, float] | None = None) -> "LidarModel":
        el = np.deg2rad(np.linspace(fov_deg[0], fov_deg[1], num_beams))
        step = np.deg2rad(azimuth_step_deg)
        if azimuth_fov_deg is None:
            return cls(num_beams, tuple(el), step, max_range)
        a0, a1 = np.deg2rad(azimuth_fov_deg)
        count = int(round((a1 - a0) / step)) + 1
        return cls(num_beams, tuple(el), step, max_range, a0, count)

    def directions(self) -> np.ndarray:
        """(num_beams, columns, 3) unit ray directions."""
        el = np.asarray(self.elevation_angles)[:, None]
        az = (self.azimuth_start + self.azimuth_step * np.arange(self.columns))[None, :]
        return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az),
                         np.sin(el) * np.ones_like(az)], axis=-1)

    def to_json(self) -> dict:
        doc = {"num_beams": self.num_beams,
               "elevation_deg": [float(np.rad2deg(e)) for e in self.elevation_angles],
               "azimuth_step_deg": float(np.rad2deg(self.azimuth_step)),
               "max_range": self.max_range}
        if self.azimuth_count is not None:
            doc["azimuth_start_deg"] = float(np.rad2deg(self.azimuth_start))
            doc["azimuth_count"] = self.azimuth_count
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "LidarModel":
        if "preset" in doc:
            return PRESETS[doc["preset"]]()
        if "elevation_deg" in doc:
            el = np.deg2rad(doc["elevation_deg"])
            return cls(len(el), tuple(el), np.deg2rad(doc["azimuth_step_deg"]),
                       doc.get("max_range", 100.0),
                       np.deg2rad(doc.get("azimuth_start_deg", -180.0)),
                       doc.get("azimuth_count"))
        return cls.uniform(doc["num_beams"], tuple(doc["fov_deg"]),
                           doc["azimuth_step_deg"], doc.get("max_range", 100.0),
                           tuple(doc["azimuth_fov_deg"]) if "azimuth_fov_deg" in doc else None)


def puck32() -> LidarModel:
    """32 beams packed into a 20 degree band, 3750 columns: 120,000 rays."""
    return LidarModel.uniform(32, (-10.0, 10.0), 360.0 / 3750)


def dense_desk() -> LidarModel:
    """160 beams over +/-16 deg, 0.1 deg columns over a 60 deg window."""
    return LidarModel.uniform(160, (-16.0, 16.0), 0.1, azimuth_fov_deg=(-30.0, 30.0))


def sparse_desk() -> LidarModel:
    """48 beams over +/-12 deg, 0.2 deg columns over a 60 deg window."""
    return LidarModel.uniform(48, (-12.0, 12.0), 0.2, azimuth_fov_deg=(-30.0, 30.0))


PRESETS = {"puck32": puck32, "dense_desk": dense_desk, "sparse_desk": sparse_desk}


@dataclass(frozen=True, eq=False)
class TagTarget:
    """A marker on a freestanding plate.

    ``tag_size`` is the side of the printed (d+2) x (d+2) marker;
    ``backing_extent`` is the white plate margin around it.
    """

    family: TagFamily
    tag_id: int
    tag_size: float
    rotation: np.ndarray
    translation: np.ndarray
    backing_extent: float | None = None

    def __post_init__(self):
        if not 0 <= self.tag_id < len(self.family.codewords):
            raise ValueError(f"tag_id {self.tag_id} not in family")
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=float))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=float))
        if self.backing_extent is None:
            object.__setattr__(self, "backing_extent",
                               self.tag_size / (self.family.d + 2))

    @property
    def codeword(self) -> int:
        return self.family.codewords[self.tag_id]

    @property
    def cell_size(self) -> float:
        return self.tag_size / (self.family.d + 2)

    @property
    def normal(self) -> np.ndarray:
        """Unit normal of the printed face, pointing out of the marker."""
        return -self.rotation[:, 0]

    def pattern(self) -> np.ndarray:
        """(d+2, d+2) grid of 0/1 cells, 1 = white."""
        d = self.family.d
        grid = np.zeros((d + 2, d + 2), dtype=np.uint8)
        n = d * d
        word = self.codeword
        for i in range(n):
            grid[1 + i // d, 1 + i % d] = (word >> (n - 1 - i)) & 1
        return grid

    def corners(self) -> np.ndarray:
        """Marker corners in the sensor frame, counter-clockwise from top-right."""
        h = self.tag_size / 2
        local = np.array([[0, -h, h], [0, h, h], [0, h, -h], [0, -h, -h]], dtype=float)
        return local @ self.rotation.T + self.translation

    def quaternion(self) -> np.ndarray:
        return quat_from_matrix(self.rotation)


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    intensity: float = 0.5


@dataclass(frozen=True)
class Cylinder:
    """Vertical cylinder."""

    center: tuple[float, float]
    radius: float
    z_min: float
    z_max: float
    intensity: float = 0.5


@dataclass(frozen=True)
class NoiseModel:
    range_sigma: float = 0.0
    intensity_sigma: float = 0.0
    transition_dropout_prob: float = 0.0
    transition_jitter: float = 0.0
    uniform_dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("transition_dropout_prob", "uniform_dropout_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("range_sigma", "intensity_sigma", "transition_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-return labels aligned with the rendered scan's point order.

    ``target`` / ``clutter`` hold the object index hit (-1 for none);
    ``cell`` is ``row * (d+2) + col`` on the marker, -1 elsewhere.
    """

    targets: tuple[TagTarget, ...]
    target: np.ndarray
    clutter: np.ndarray
    cell: np.ndarray
    emitted: int

    @property
    def on_marker(self) -> np.ndarray:
        return self.cell >= 0

    def target_count(self, i: int = 0) -> int:
        return int(np.count_nonzero(self.target == i))

    def subset(self, keep) -> "GroundTruth":
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        keep = np.sort(keep)
        return GroundTruth(self.targets, self.target[keep], self.clutter[keep],
                           self.cell[keep], len(keep))

    def to_json(self, i: int = 0) -> dict:
        t = self.targets[i]
        return {
            "tag_id": t.tag_id,
            "mu": [float(v) for v in t.translation],
            "q": [float(v) for v in t.quaternion()],
            "corners": [[float(v) for v in c] for c in t.corners()],
            "labels": {"target": self.target.tolist(),
                       "cell": self.cell.tolist()},
        }


def _hit_plate(dirs, target: TagTarget):
    R, t = target.rotation, target.translation
    n = R[:, 0]
    denom = dirs @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = (t @ n) / denom
    pts = dirs * dist[:, None]
    local = (pts - t) @ R
    half = target.tag_size / 2 + target.backing_extent
    ok = (np.abs(denom) > 1e-12) & (dist > 0) \
        & (np.abs(local[:, 1]) <= half) & (np.abs(local[:, 2]) <= half)
    return np.where(ok, dist, np.inf), local


def _hit_box(dirs, box: Box):
    lo, hi = np.asarray(box.lo), np.asarray(box.hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1, t2 = lo * inv, hi * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    ok = (tmax >= tmin) & (tmin > 0)
    return np.where(ok, tmin, np.inf)


def _hit_cylinder(dirs, cyl: Cylinder):
    cx, cy = cyl.center
    a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
    b = -2 * (dirs[:, 0] * cx + dirs[:, 1] * cy)
    c = cx * cx + cy * cy - cyl.radius ** 2
    disc = b * b - 4 * a * c
    with np.errstate(invalid="ignore", divide="ignore"):
        t = (-b - np.sqrt(disc)) / (2 * a)
    z = t * dirs[:, 2]
    ok = (disc >= 0) & (t > 0) & (z >= cyl.z_min) & (z <= cyl.z_max)
    return np.where(ok, t, np.inf)


def _check_target(model: LidarModel, target: TagTarget, background_range: float):
    t = target.translation
    dist = float(np.linalg.norm(t))
    if dist == 0 or float(target.normal @ (-t)) <= 0:
        raise TargetBehindSensor("marker face does not point at the sensor")
    if dist > model.max_range:
        raise TargetOutOfRange(f"target at {dist:.2f} m beyond max_range {model.max_range}")
    if background_range <= dist:
        raise ValueError("background_range must exceed the target distance")


def render_scene_with_truth(model: LidarModel, targets, background_range: float = 10.0,
                            clutter: Sequence = ()) -> tuple[Scan, GroundTruth]:
    """Ray-cast one scan and label every return."""
    if isinstance(targets, TagTarget):
        targets = (targets,)
    targets = tuple(targets)
    for tgt in targets:
        _check_target(model, tgt, background_range)
    dirs3 = model.directions()
    nb, nc, _ = dirs3.shape
    dirs = dirs3.reshape(-1, 3)
    n = len(dirs)
    best = np.full(n, float(background_range))
    intensity = np.full(n, BACKGROUND_INTENSITY)
    target_lbl = np.full(n, -1, dtype=np.int64)
    clutter_lbl = np.full(n, -1, dtype=np.int64)
    cell = np.full(n, -1, dtype=np.int64)

    for j, prim in enumerate(clutter):
        dist = _hit_box(dirs, prim) if isinstance(prim, Box) else _hit_cylinder(dirs, prim)
        win = dist < best
        best[win] = dist[win]
        intensity[win] = prim.intensity
        clutter_lbl[win] = j
        target_lbl[win] = -1
        cell[win] = -1

    for i, tgt in enumerate(targets):
        dist, local = _hit_plate(dirs, tgt)
        win = dist < best
        if not win.any():
            continue
        best[win] = dist[win]
        target_lbl[win] = i
        clutter_lbl[win] = -1
        d = tgt.family.d
        half = tgt.tag_size / 2
        ly, lz = local[win, 1], local[win, 2]
        on = (np.abs(ly) <= half) & (np.abs(lz) <= half)
        col = np.clip(np.floor((half - ly) / tgt.cell_size), 0, d + 1).astype(np.int64)
        row = np.clip(np.floor((half - lz) / tgt.cell_size), 0, d + 1).astype(np.int64)
        pat = tgt.pattern()
        inten = np.where(on, np.where(pat[row, col] == 1, WHITE, BLACK), WHITE)
        intensity[win] = inten
        cell[win] = np.where(on, row * (d + 2) + col, -1)

    keep = best <= model.max_range
    beam = np.repeat(np.arange(nb), nc)
    az = np.tile(np.arange(nc), nb)
    pos = dirs * best[:, None]
    idx = np.flatnonzero(keep)
    # Rays are generated beam-major and azimuth-ascending, already scan order.
    scan = Scan(pos[idx], intensity[idx], beam[idx], az[idx], nb)
    truth = GroundTruth(targets, target_lbl[idx], clutter_lbl[idx], cell[idx], len(idx))
    return scan, truth


def render_scene(model: LidarModel, target, background_range: float = 10.0,
                 clutter: Sequence = ()) -> Scan:
    """Noiseless scan of one or more tags in front of a flat background.

    Raises
    ------
    TargetBehindSensor
        The printed face points away from the sensor.
    TargetOutOfRange
        The tag centre lies beyond ``model.max_range``.
    """
    return render_scene_with_truth(model, target, background_range, clutter)[0]


def transition_adjacent(scan: Scan) -> np.ndarray:
    """Mask of returns whose beam neighbour sits across a black/white transition."""
    n = len(scan)
    if n < 2:
        return np.zeros(n, dtype=bool)
    inten = scan.intensity
    black = inten < _BLACK_MAX
    white = inten > _WHITE_MIN
    same_beam = scan.beam[1:] == scan.beam[:-1]
    flip = same_beam & ((black[1:] & white[:-1]) | (white[1:] & black[:-1]))
    adj = np.zeros(n, dtype=bool)
    adj[1:] |= flip
    adj[:-1] |= flip
    return adj


def apply_noise(scan: Scan, noise: NoiseModel, return_kept: bool = False):
    """Perturb a scan with the unstructured-return effects of real sensors.

    Returns next to a black/white transition are dropped with
    ``transition_dropout_prob`` and the survivors jittered sideways by
    ``transition_jitter`` (std, metres).  Ranges and intensities then receive
    Gaussian noise; intensities are clamped back into [0, 1].  Deterministic
    for a given ``noise.seed``.
    """
    rng = np.random.default_rng(noise.seed)
    n = len(scan)
    adj = transition_adjacent(scan)
    u_trans = rng.random(n)
    u_any = rng.random(n)
    jitter = rng.standard_normal(n)
    dr = rng.standard_normal(n)
    di = rng.standard_normal(n)

    keep = ~(adj & (u_trans < noise.transition_dropout_prob))
    if noise.uniform_dropout_prob > 0:
        keep &= u_any >= noise.uniform_dropout_prob
    pos = scan.positions.copy()
    inten = scan.intensity.copy()
    if noise.transition_jitter > 0 and adj.any():
        tangent = np.stack([-pos[:, 1], pos[:, 0], np.zeros(n)], axis=1)
        norm = np.linalg.norm(tangent, axis=1, keepdims=True)
        tangent = np.divide(tangent, norm, out=np.zeros_like(tangent), where=norm > 0)
        pos[adj] += tangent[adj] * (noise.transition_jitter * jitter[adj])[:, None]
    if noise.range_sigma > 0:
        r = np.linalg.norm(pos, axis=1)
        scale = np.divide(r + noise.range_sigma * dr, r, out=np.ones(n), where=r > 0)
        pos *= scale[:, None]
    if noise.intensity_sigma > 0:
        inten = np.clip(inten + noise.intensity_sigma * di, 0.0, 1.0)
    idx = np.flatnonzero(keep)
    out = Scan(pos[idx], inten[idx], scan.beam[idx], scan.azimuth_index[idx],
               scan.num_beams, scan.timestamp)
    return (out, idx) if return_kept else out


def random_clutter(rng: np.random.Generator, count: int, keep_out=(),
                   keep_out_radius: float = 1.5, r_range=(2.0, 9.0)) -> list:
    """Boxes and poles scattered around the sensor, clear of ``keep_out`` points."""
    prims = []
    keep_out = [np.asarray(p, dtype=float) for p in keep_out]
    while len(prims) < count:
        r = rng.uniform(*r_range)
        a = rng.uniform(-np.pi, np.pi)
        c = np.array([r * np.cos(a), r * np.sin(a)])
        if any(np.linalg.norm(c - k[:2]) < keep_out_radius for k in keep_out):
            continue
        inten = float(rng.uniform(0.35, 0.65))
        if rng.random() < 0.5:
            half = rng.uniform(0.1, 0.6, size=2)
            z0 = rng.uniform(-1.5, -0.5)
            z1 = z0 + rng.uniform(0.5, 2.5)
            prims.append(Box((c[0] - half[0], c[1] - half[1], z0),
                             (c[0] + half[0], c[1] + half[1], z1), inten))
        else:
            prims.append(Cylinder((float(c[0]), float(c[1])), float(rng.uniform(0.03, 0.2)),
                                  -1.5, float(rng.uniform(0.0, 2.0)), inten))
    return prims


# -- scene documents ---------------------------------------------------------

@dataclass
class Scene:
    model: LidarModel
    targets: list[TagTarget]
    background_range: float = 10.0
    noise: NoiseModel | None = None
    clutter: list = field(default_factory=list)

    def render(self) -> tuple[Scan, GroundTruth]:
        scan, truth = render_scene_with_truth(self.model, self.targets,
                                              self.background_range, self.clutter)
        if self.noise is not None:
            scan, kept = apply_noise(scan, self.noise, return_kept=True)
            truth = truth.subset(kept)
        return scan, truth


def _load_family(ref, base: Path | None) -> TagFamily:
    if ref in (None, "default", "lex16h5"):
        return default_family()
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    return TagFamily.load(path)


def scene_from_json(doc: dict, base: Path | None = None, seed: int | None = None) -> Scene:
    """Build a :class:`Scene` from a JSON document.

    Keys: ``lidar`` (``{"preset": name}`` or explicit beams), ``family``
    (``"default"`` or a family file path), ``tag_id``, ``tag_size``,
    ``pose`` (``translation`` + ``quaternion`` [w, x, y, z]),
    ``backing_extent``, ``background_range``, ``noise``, ``seed``,
    optional ``clutter`` list and ``extra_targets``.
    """
    model = LidarModel.from_json(doc.get("lidar", {"preset": "puck32"}))
    family = _load_family(doc.get("family"), base)
    tag_size = float(doc["tag_size"])

    def target(spec):
        pose = spec["pose"]
        return TagTarget(family, int(spec["tag_id"]), float(spec.get("tag_size", tag_size)),
                         matrix_from_quat(pose.get("quaternion", [1, 0, 0, 0])),
                         np.asarray(pose["translation"], dtype=float),
                         spec.get("backing_extent"))

    targets = [target(doc)] + [target(t) for t in doc.get("extra_targets", [])]
    noise = None
    if doc.get("noise"):
        kw = dict(doc["noise"])
        kw.setdefault("seed", doc.get("seed", 0) if seed is None else seed)
        if seed is not None:
            kw["seed"] = seed
        noise = NoiseModel(**kw)
    clutter = []
    for c in doc.get("clutter", []):
        if c.get("type", "box") == "box":
            clutter.append(Box(tuple(c["lo"]), tuple(c["hi"]), c.get("intensity", 0.5)))
        else:
            clutter.append(Cylinder(tuple(c["center"]), c["radius"], c["z_min"],
                                    c["z_max"], c.get("intensity", 0.5)))
    return Scene(model, targets, float(doc.get("background_range", 10.0)), noise, clutter)


def load_scene(path, seed: int | None = None) -> Scene:
    path = Path(path)
    return scene_from_json(json.loads(path.read_text(encoding="utf-8")), path.parent, seed)
