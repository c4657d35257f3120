"""Scan-level detection: localise candidate tags, then decode each one."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .codebook import DecodingTable
from .detection import (EdgeParams, cluster_edges, detect_edges, extract_payload_edges,
                        fill_cluster, validate_cluster)
from .pointcloud import Scan
from .voting import STAGE_KEYS, DecodeParams, Rejection, TagDetection, decode_tag


@dataclass(frozen=True)
class DetectorConfig:
    """Tunables for :func:`detect_tags`.

    ``linkage_tau`` is the clustering slack; ``None`` means one tag width,
    which keeps the left and right outline of a marker in one cluster.
    """

    tag_size: float = 0.6
    edge_params: EdgeParams = EdgeParams()
    linkage_tau: float | None = None
    sigma2: float | None = None
    weighting: str = "gaussian"
    max_bad_bits: int | None = None
    bit_threshold: float = 0.5
    dark_level: float = 0.3
    workers: int = 1

    def __post_init__(self):
        if self.tag_size <= 0:
            raise ValueError("tag_size must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.decode_params()  # validates weighting

    def decode_params(self) -> DecodeParams:
        return DecodeParams(self.tag_size, self.edge_params, self.sigma2, self.weighting,
                            self.max_bad_bits, self.bit_threshold, self.dark_level)

    @classmethod
    def from_json(cls, doc: dict) -> "DetectorConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "edge_params" in doc:
            doc["edge_params"] = EdgeParams(**doc["edge_params"])
        return cls(**doc)


@dataclass(eq=False)
class DetectionResult:
    detections: list[TagDetection]
    rejections: list[Rejection]
    timings_ms: dict = field(default_factory=dict)
    counts: dict = field(default_factory=dict)

    def to_json(self, timings: bool = True) -> dict:
        doc = {"detections": [d.to_json(timings) for d in self.detections]}
        doc["rejections"] = [{"stage": r.stage, "reason": r.reason} for r in self.rejections]
        doc["counts"] = dict(self.counts)
        if timings:
            doc["timings_ms"] = {k: float(self.timings_ms.get(k, 0.0))
                                 for k in STAGE_KEYS + ("total",)}
        return doc


def _process(scan, cluster, table, config, params):
    t = {}
    t0 = time.perf_counter()
    cluster = fill_cluster(scan, cluster)
    t["fill"] = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    payload = extract_payload_edges(scan, cluster, config.edge_params)
    t["extraction"] = (time.perf_counter() - t0) * 1e3
    t0 = time.perf_counter()
    report = validate_cluster(cluster, table.family, payload)
    t["validation"] = (time.perf_counter() - t0) * 1e3
    if not report.passed:
        return Rejection("validation", report.reject_reason.value), t
    return decode_tag(scan, cluster, payload, table, params, t), t


def detect_tags(scan: Scan, table: DecodingTable,
                config: DetectorConfig = DetectorConfig()) -> DetectionResult:
    """Run edge detection, clustering, validation and decoding over a scan.

    Detections are sorted by tag id then centroid, so the output does not
    depend on ``config.workers``.
    """
    timings = dict.fromkeys(STAGE_KEYS, 0.0)
    start = time.perf_counter()
    edges = detect_edges(scan, config.edge_params)
    timings["edges"] = (time.perf_counter() - start) * 1e3
    t0 = time.perf_counter()
    tau = config.tag_size if config.linkage_tau is None else config.linkage_tau
    clusters = cluster_edges(scan.positions[edges], config.tag_size, tau, ids=edges)
    timings["clustering"] = (time.perf_counter() - t0) * 1e3

    # A box far smaller or larger than a marker cannot hold one.
    def plausible(c):
        span = c.hi - c.lo
        return np.max(span) <= 3 * config.tag_size + 2 * tau
    clusters = [c for c in clusters if plausible(c)]

    params = config.decode_params()
    work = [(scan, c, table, config, params) for c in clusters]
    if config.workers > 1 and len(work) > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(lambda a: _process(*a), work))
    else:
        results = [_process(*a) for a in work]

    detections, rejections = [], []
    for out, t in results:
        for k, v in t.items():
            timings[k] += v
        if isinstance(out, TagDetection):
            out.timings_ms.update(edges=timings["edges"], clustering=timings["clustering"])
            detections.append(out)
        else:
            rejections.append(out)
    detections.sort(key=lambda d: (d.tag_id, *np.round(d.mu, 9)))
    timings["total"] = (time.perf_counter() - start) * 1e3
    counts = {"points": len(scan), "edges": int(len(edges)), "clusters": len(clusters),
              "detections": len(detections)}
    return DetectionResult(detections, rejections, timings, counts)
