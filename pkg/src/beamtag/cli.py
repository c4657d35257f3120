"""``beamtag`` command line: synth, detect, codebook, bench.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from . import bench
from .codebook import (TagFamily, build_hash_table, default_family, family_min_distance,
                       generate_lexicode, verify_family)
from .errors import BeamTagError
from .pipeline import DetectorConfig, detect_tags
from .pointcloud import read_scan_csv, write_scan_csv
from .synth import PRESETS, NoiseModel, load_scene

EXIT_OK, EXIT_VERIFY, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _dump(doc, fmt: str, text: str | None = None) -> None:
    if fmt == "text" and text is not None:
        print(text)
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))


def load_config(path) -> tuple[DetectorConfig, dict]:
    """Detector settings plus the remaining keys (``family``, ``intensity_scale``)."""
    if path is None:
        return DetectorConfig(), {}
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    known = {f.name for f in fields(DetectorConfig)}
    extra = {k: v for k, v in doc.items() if k not in known}
    unknown = set(extra) - {"family", "intensity_scale", "seed"}
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    if "family" in extra and not Path(extra["family"]).is_absolute() \
            and extra["family"] != "default":
        extra["family"] = str(path.parent / extra["family"])
    try:
        cfg = DetectorConfig.from_json({k: v for k, v in doc.items() if k in known})
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad config: {exc}") from exc
    return cfg, extra


def _family(ref) -> TagFamily:
    if ref in (None, "default"):
        return default_family()
    try:
        fam = TagFamily.load(ref)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot load family {ref}: {exc}") from exc
    return fam


def _apply_overrides(cfg: DetectorConfig, args) -> DetectorConfig:
    from dataclasses import replace
    if getattr(args, "workers", None):
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "tag_size", None):
        cfg = replace(cfg, tag_size=args.tag_size)
    return cfg


def cmd_synth(args) -> int:
    try:
        scene = load_scene(args.scene, seed=args.seed)
        scan, truth = scene.render()
    except FileNotFoundError as exc:
        raise InputError(f"missing file: {exc.filename}") from exc
    except (BeamTagError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"invalid scene: {exc}") from exc
    out = Path(args.out)
    write_scan_csv(scan, out)
    sidecar = out.with_suffix(".truth.json")
    sidecar.write_text(json.dumps(truth.to_json(), sort_keys=True) + "\n", encoding="utf-8")
    if args.format == "text":
        print(f"wrote {len(scan)} returns to {out} and truth to {sidecar}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg, extra = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    fam = _family(args.family or extra.get("family"))
    try:
        scan = read_scan_csv(args.scan, num_beams=args.num_beams,
                             intensity_scale=float(extra.get("intensity_scale", 1.0)))
    except OSError as exc:
        raise InputError(f"cannot read {args.scan}: {exc}") from exc
    except BeamTagError as exc:
        raise InputError(str(exc)) from exc
    res = detect_tags(scan, build_hash_table(fam), cfg)
    doc = res.to_json(timings=not args.no_timings)
    lines = [f"{len(res.detections)} detection(s), {res.counts['clusters']} cluster(s)"]
    for d in res.detections:
        lines.append(f"  id {d.tag_id}  k {d.rotation_k}  mu {[round(float(v), 4) for v in d.mu]}"
                     f"  hamming {d.hamming_distance}")
    _dump(doc, args.format, "\n".join(lines))
    return EXIT_OK


def cmd_codebook(args) -> int:
    if args.action == "generate":
        try:
            fam = generate_lexicode(args.d, args.h, rng_seed=args.seed or 0,
                                    max_codewords=args.max_codewords)
        except BeamTagError as exc:
            raise InputError(str(exc)) from exc
        if args.name:
            fam = TagFamily(fam.d, fam.h, fam.codewords, args.name)
        fam.save(args.out)
        _dump({"path": str(args.out), "codewords": len(fam.codewords), "d": fam.d, "h": fam.h},
              args.format, f"wrote {len(fam.codewords)} codewords to {args.out}")
        return EXIT_OK
    fam = _family(args.family)
    if args.action == "verify":
        problems = verify_family(fam)
        _dump({"ok": not problems, "problems": problems}, args.format,
              "ok" if not problems else "\n".join(problems))
        return EXIT_OK if not problems else EXIT_VERIFY
    info = {"name": fam.name, "codewords": len(fam.codewords), "d": fam.d, "h": fam.h,
            "min_distance": family_min_distance(fam) if len(fam.codewords) > 1 else None}
    _dump(info, args.format, " ".join(f"{k}={v}" for k, v in info.items()))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg, extra = load_config(args.config)
    cfg = _apply_overrides(cfg, args)
    fam = _family(args.family or extra.get("family"))
    table = build_hash_table(fam)
    seed = args.seed if args.seed is not None else int(extra.get("seed", 0))
    scans = []
    try:
        for path in args.scenes:
            scans.append(load_scene(path, seed=seed).render()[0])
    except FileNotFoundError as exc:
        raise InputError(f"missing file: {exc.filename}") from exc
    except (BeamTagError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InputError(f"invalid scene: {exc}") from exc
    if not scans:
        trial = bench.random_trials(PRESETS["puck32"](), fam, 1, seed=seed,
                                    tag_size=cfg.tag_size)[0]
        scans.append(trial.scene.render()[0])
    timing = bench.time_pipeline(scans, table, cfg, repetitions=args.repetitions)
    doc = {"timing": timing.to_json()}
    text = [bench.format_table(timing.columns)]
    if args.accuracy_trials:
        noise = NoiseModel(range_sigma=0.01, transition_dropout_prob=0.3)
        trials = bench.random_trials(PRESETS[args.accuracy_model](), fam, args.accuracy_trials,
                                     seed=seed, tag_size=cfg.tag_size, noise=noise)
        acc = bench.decode_accuracy(trials, table, cfg)
        doc["accuracy"] = acc
        text.append("accuracy  " + "  ".join(f"{k} {v:.4f}" for k, v in acc.items()))
    _dump(doc, args.format, "\n".join(text))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="detector config JSON")
    common.add_argument("--seed", type=int, help="RNG seed (u64)")
    common.add_argument("--workers", type=int, help="decode worker threads")
    common.add_argument("--format", choices=("json", "text"), default="json")

    p = argparse.ArgumentParser(prog="beamtag", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="render a scene to CSV + truth")
    s.add_argument("scene")
    s.add_argument("out")
    s.set_defaults(func=cmd_synth)

    d = sub.add_parser("detect", parents=[common], help="detect tags in a scan CSV")
    d.add_argument("scan")
    d.add_argument("--family", help="family JSON (default: built-in)")
    d.add_argument("--tag-size", type=float)
    d.add_argument("--num-beams", type=int)
    d.add_argument("--no-timings", action="store_true",
                   help="omit timings so output is byte-reproducible")
    d.set_defaults(func=cmd_detect)

    c = sub.add_parser("codebook", parents=[common], help="generate, verify or inspect families")
    c.add_argument("action", choices=("generate", "verify", "info"))
    c.add_argument("family", nargs="?", help="family JSON for verify/info")
    c.add_argument("-d", type=int, default=4)
    c.add_argument("--h", type=int, default=5)
    c.add_argument("--max-codewords", type=int)
    c.add_argument("--name", default="")
    c.add_argument("--out", default="family.json")
    c.set_defaults(func=cmd_codebook)

    b = sub.add_parser("bench", parents=[common], help="per-stage timing table")
    b.add_argument("scenes", nargs="*")
    b.add_argument("--family")
    b.add_argument("--tag-size", type=float)
    b.add_argument("--repetitions", type=int, default=10)
    b.add_argument("--accuracy-trials", type=int, default=0)
    b.add_argument("--accuracy-model", choices=sorted(PRESETS), default="dense_desk")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "codebook" and args.action != "generate" and not args.family:
        args.family = "default"
    try:
        return args.func(args)
    except InputError as exc:
        print(f"beamtag: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
