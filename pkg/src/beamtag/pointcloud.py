"""Beam-organized LiDAR scans.

A :class:`Scan` stores one revolution of returns as flat, read-only numpy
arrays sorted beam-major and azimuth-ascending.  That order is the canonical
"scan order" every later stage relies on: per-beam neighbours are adjacent
rows, and any index array into the scan can be sorted to recover it.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BeamOutOfRange, DuplicateReturn, ScanFormatError

CSV_HEADER = ("beam", "azimuth_index", "x", "y", "z", "intensity")

# Angular bin width used by the spatial lookup behind box queries.
_AZ_BIN = np.deg2rad(0.5)


@dataclass(frozen=True)
class Point:
    position: tuple[float, float, float]
    intensity: float
    beam: int
    azimuth_index: int


def _readonly(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Scan:
    """Immutable beam-organized point cloud.

    Attributes
    ----------
    positions : (N, 3) float64
    intensity : (N,) float64, normalized to [0, 1]
    beam : (N,) int32
    azimuth_index : (N,) int64
    num_beams : int
    timestamp : float or None
    """

    positions: np.ndarray
    intensity: np.ndarray
    beam: np.ndarray
    azimuth_index: np.ndarray
    num_beams: int
    timestamp: float | None = None
    _offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "positions", _readonly(self.positions, np.float64).reshape(-1, 3))
        set_(self, "intensity", _readonly(self.intensity, np.float64))
        set_(self, "beam", _readonly(self.beam, np.int32))
        set_(self, "azimuth_index", _readonly(self.azimuth_index, np.int64))
        n = len(self.positions)
        if not (len(self.intensity) == len(self.beam) == len(self.azimuth_index) == n):
            raise ValueError("scan arrays must have equal length")
        offsets = np.searchsorted(self.beam, np.arange(self.num_beams + 1))
        set_(self, "_offsets", _readonly(offsets, np.int64))

    @classmethod
    def from_arrays(cls, positions, intensity, beam, azimuth_index, num_beams,
                    timestamp=None) -> "Scan":
        """Validate and sort raw arrays into a scan."""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        intensity = np.asarray(intensity, dtype=np.float64).reshape(-1)
        beam = np.asarray(beam, dtype=np.int64).reshape(-1)
        azimuth_index = np.asarray(azimuth_index, dtype=np.int64).reshape(-1)
        if len(beam) and (beam.min() < 0 or beam.max() >= num_beams):
            bad = int(beam[(beam < 0) | (beam >= num_beams)][0])
            raise BeamOutOfRange(f"beam {bad} outside [0, {num_beams})")
        if len(intensity) and (intensity.min() < 0.0 or intensity.max() > 1.0):
            raise ValueError("intensity must lie in [0, 1]")
        order = np.lexsort((azimuth_index, beam))
        beam, azimuth_index = beam[order], azimuth_index[order]
        dup = (beam[1:] == beam[:-1]) & (azimuth_index[1:] == azimuth_index[:-1])
        if dup.any():
            i = int(np.flatnonzero(dup)[0])
            raise DuplicateReturn(
                f"two returns at beam={beam[i]}, azimuth_index={azimuth_index[i]}")
        return cls(positions[order], intensity[order], beam, azimuth_index,
                   int(num_beams), timestamp)

    @classmethod
    def empty(cls, num_beams: int) -> "Scan":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0), np.zeros(0), num_beams)

    def __len__(self):
        return len(self.positions)

    @property
    def beams(self) -> list[range]:
        """Index range of every beam within the flat arrays."""
        o = self._offsets
        return [range(int(o[m]), int(o[m + 1])) for m in range(self.num_beams)]

    def beam_slice(self, m: int) -> slice:
        return slice(int(self._offsets[m]), int(self._offsets[m + 1]))

    def points(self) -> Iterable[Point]:
        for i in range(len(self)):
            yield self.point(i)

    def point(self, i: int) -> Point:
        return Point(tuple(float(v) for v in self.positions[i]),
                     float(self.intensity[i]), int(self.beam[i]),
                     int(self.azimuth_index[i]))

    def subset(self, keep) -> "Scan":
        """Scan restricted to a boolean mask or index array (order preserved)."""
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        keep = np.sort(keep)
        return Scan(self.positions[keep], self.intensity[keep], self.beam[keep],
                    self.azimuth_index[keep], self.num_beams, self.timestamp)

    def replace(self, positions=None, intensity=None) -> "Scan":
        return Scan(self.positions if positions is None else positions,
                    self.intensity if intensity is None else intensity,
                    self.beam, self.azimuth_index, self.num_beams, self.timestamp)

    def same_as(self, other: "Scan") -> bool:
        return (self.num_beams == other.num_beams
                and np.array_equal(self.beam, other.beam)
                and np.array_equal(self.azimuth_index, other.azimuth_index)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.intensity, other.intensity))

    # -- spatial lookup ---------------------------------------------------
    @cached_property
    def _az_lookup(self):
        az = np.arctan2(self.positions[:, 1], self.positions[:, 0])
        bins = np.floor((az + np.pi) / _AZ_BIN).astype(np.int64)
        nbins = int(np.ceil(2 * np.pi / _AZ_BIN)) + 1
        order = np.argsort(bins, kind="stable")
        starts = np.searchsorted(bins[order], np.arange(nbins + 1))
        return order, starts, nbins

    def indices_in_box(self, lo, hi) -> np.ndarray:
        """Sorted indices of returns with ``lo <= position <= hi`` on every axis."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        order, starts, nbins = self._az_lookup
        cand = None
        # Restrict to the azimuth wedge spanned by the box when it excludes the z axis.
        if not (lo[0] <= 0.0 <= hi[0] and lo[1] <= 0.0 <= hi[1]):
            cx = np.array([lo[0], hi[0], lo[0], hi[0]])
            cy = np.array([lo[1], lo[1], hi[1], hi[1]])
            ang = np.arctan2(cy, cx)
            ref = ang[0]
            rel = np.angle(np.exp(1j * (ang - ref)))
            a0 = ref + rel.min()
            a1 = ref + rel.max()
            b0 = int(np.floor((a0 + np.pi) / _AZ_BIN)) - 1
            b1 = int(np.floor((a1 + np.pi) / _AZ_BIN)) + 1
            if b1 - b0 < nbins - 2:
                b = np.arange(b0, b1 + 1) % nbins
                runs = [order[starts[k]:starts[k + 1]] for k in b]
                cand = np.concatenate(runs) if runs else np.zeros(0, dtype=np.int64)
        if cand is None:
            cand = np.arange(len(self))
        p = self.positions[cand]
        inside = np.all((p >= lo) & (p <= hi), axis=1)
        return np.sort(cand[inside])


def build_scan(points: Iterable[Point], num_beams: int, timestamp=None) -> Scan:
    """Assemble an unordered collection of returns into a :class:`Scan`.

    Raises
    ------
    DuplicateReturn
        Two returns share ``(beam, azimuth_index)``.
    BeamOutOfRange
        A return's beam is outside ``[0, num_beams)``.
    """
    points = list(points)
    if not points:
        return Scan.empty(num_beams)
    pos = np.array([p.position for p in points], dtype=float)
    inten = np.array([p.intensity for p in points], dtype=float)
    beam = np.array([p.beam for p in points], dtype=np.int64)
    az = np.array([p.azimuth_index for p in points], dtype=np.int64)
    return Scan.from_arrays(pos, inten, beam, az, num_beams, timestamp)


@dataclass(frozen=True)
class ScanStats:
    points_per_beam: tuple[int, ...]
    total_points: int
    min_per_beam: int
    max_per_beam: int
    mean_per_beam: float


def analyze_scan(scan: Scan) -> ScanStats:
    """Per-beam return counts of a scan."""
    counts = np.diff(scan._offsets).astype(int)
    total = int(counts.sum())
    return ScanStats(
        points_per_beam=tuple(int(c) for c in counts),
        total_points=total,
        min_per_beam=int(counts.min()) if len(counts) else 0,
        max_per_beam=int(counts.max()) if len(counts) else 0,
        mean_per_beam=total / scan.num_beams if scan.num_beams else 0.0,
    )


def normalize_intensity(raw, scale: float = 255.0) -> np.ndarray:
    """Map raw sensor intensities (e.g. Velodyne 0-255) onto [0, 1]."""
    return np.clip(np.asarray(raw, dtype=float) / scale, 0.0, 1.0)


# -- CSV ------------------------------------------------------------------

def write_scan_csv(scan: Scan, path_or_file) -> None:
    """Write ``beam,azimuth_index,x,y,z,intensity`` rows with a header."""
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for i in range(len(scan)):
        x, y, z = scan.positions[i]
        buf.write(f"{scan.beam[i]},{scan.azimuth_index[i]},"
                  f"{x:.9f},{y:.9f},{z:.9f},{scan.intensity[i]:.6f}\n")
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text, encoding="utf-8", newline="\n")


def read_scan_csv(path_or_file, num_beams: int | None = None,
                  intensity_scale: float = 1.0) -> Scan:
    """Parse a scan CSV.

    ``num_beams`` defaults to one more than the largest beam index seen.
    Raw intensities are divided by ``intensity_scale`` before the [0, 1]
    range check.

    Raises
    ------
    ScanFormatError
        On a missing header or a malformed row; carries the line number.
    """
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        text = Path(path_or_file).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise ScanFormatError("expected header " + ",".join(CSV_HEADER), line=1)
    n = len(rows) - 1
    beam = np.empty(n, dtype=np.int64)
    az = np.empty(n, dtype=np.int64)
    pos = np.empty((n, 3))
    inten = np.empty(n)
    k = 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 6:
            raise ScanFormatError(f"expected 6 fields, got {len(row)}", line=lineno)
        try:
            beam[k] = int(row[0])
            az[k] = int(row[1])
            pos[k] = [float(row[2]), float(row[3]), float(row[4])]
            inten[k] = float(row[5]) / intensity_scale
        except ValueError as exc:
            raise ScanFormatError(str(exc), line=lineno) from None
        if not np.all(np.isfinite(pos[k])) or not 0.0 <= inten[k] <= 1.0:
            raise ScanFormatError("non-finite position or intensity outside [0, 1]",
                                  line=lineno)
        k += 1
    beam, az, pos, inten = beam[:k], az[:k], pos[:k], inten[:k]
    if num_beams is None:
        num_beams = int(beam.max()) + 1 if k else 0
    return Scan.from_arrays(pos, inten, beam, az, num_beams)


def scan_from_rows(rows: Sequence[Sequence[float]], num_beams: int) -> Scan:
    """Build a scan from ``(beam, azimuth_index, x, y, z, intensity)`` tuples."""
    a = np.asarray(rows, dtype=float).reshape(-1, 6)
    return Scan.from_arrays(a[:, 2:5], a[:, 5], a[:, 0].astype(int),
                            a[:, 1].astype(int), num_beams)
