"""Command-line front end: ``panoharris detect|describe|match|stitch|bench``.

Every failure exits with the code of its error class (see
:mod:`panoharris.errors`); argument errors exit 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .descriptor import descriptors_to_bytes, descriptors_to_json
from .errors import DimensionMismatch, PanoError, PipelineFailure, UsageError
from .evaluation import emit_report, generate_sequence, required_master_size, run_bench, textured_master, timings_csv
from .harris import corners_to_json
from .pipeline import CLASSIC, OPTIMIZED, extract_features, match_pair
from .pixels import GrayImage, load_image, save_image
from .stitcher import stitch_sequence


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _config(args):
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["matcher.seed"] = str(args.seed)
    return load_config(args.config, overrides)


def _write_text(text: str, path) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _write_bytes(data: bytes, path) -> None:
    if path is None or path == "-":
        sys.stdout.buffer.write(data)
    else:
        Path(path).write_bytes(data)


def annotate(img: GrayImage, points, size: int = 3) -> np.ndarray:
    """RGB copy of ``img`` with a red cross at every ``(x, y)``."""
    rgb = np.repeat(np.asarray(img.data)[:, :, None], 3, axis=2).copy()
    h, w = img.shape
    for x, y in points:
        x, y = int(x), int(y)
        for d in range(-size, size + 1):
            if 0 <= y < h and 0 <= x + d < w:
                rgb[y, x + d] = (255, 0, 0)
            if 0 <= x < w and 0 <= y + d < h:
                rgb[y + d, x] = (255, 0, 0)
    return rgb


def _corners_csv(corners) -> str:
    lines = ["x,y,response"] + [f"{c.x},{c.y},{c.response!r}" for c in corners]
    return "\n".join(lines) + "\n"


def cmd_detect(args) -> int:
    cfg = _config(args)
    img = load_image(args.image)
    feats = extract_features(img, cfg, OPTIMIZED)
    corners = feats.corners
    if args.format == "json":
        text = corners_to_json(corners) + "\n"
    elif args.format == "csv":
        text = _corners_csv(corners)
    else:
        text = "".join(f"{c.x} {c.y} {c.response!r}\n" for c in corners)
    _write_text(text, args.output)
    if args.annotate:
        from PIL import Image

        Image.fromarray(annotate(img, [(c.x, c.y) for c in corners])).save(args.annotate, format="PNG")
    return 0


def cmd_describe(args) -> int:
    cfg = _config(args)
    variant = CLASSIC if args.variant == "classic" else OPTIMIZED
    feats = extract_features(load_image(args.image), cfg, variant)
    if args.format == "bin":
        _write_bytes(descriptors_to_bytes(feats.descriptors), args.output)
    else:
        _write_text(descriptors_to_json(feats.descriptors) + "\n", args.output)
    s = feats.stats
    print(
        f"described {s.described}, rejected {s.rejected} (border {s.rejected_border}, "
        f"zero gradient {s.rejected_zero_gradient}, zero descriptor {s.rejected_zero_descriptor})",
        file=sys.stderr,
    )
    return 0


def cmd_match(args) -> int:
    cfg = _config(args)
    a = load_image(args.image_a)
    b = load_image(args.image_b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{args.image_a} is {a.width}x{a.height}, {args.image_b} is {b.width}x{b.height}")
    variant = CLASSIC if args.full else OPTIMIZED
    fa = extract_features(a, cfg, variant)
    fb = extract_features(b, cfg, variant)
    res = match_pair(fa, fb, a.width, cfg, variant)
    out = {
        "matches": [
            {**m.to_dict(),
             "xa": fa.descriptors[m.index_a].corner.x, "ya": fa.descriptors[m.index_a].corner.y,
             "xb": fb.descriptors[m.index_b].corner.x, "yb": fb.descriptors[m.index_b].corner.y}
            for m in res.matches
        ],
        "candidate_pairs": res.candidate_pairs,
        "transform": None if res.transform is None else res.transform.to_dict(),
    }
    _write_text(json.dumps(out, indent=1) + "\n", args.output)
    if res.error is not None:
        raise res.error
    return 0


def _sidecar(output: str, suffix: str) -> Path:
    p = Path(output)
    return p.with_name(p.stem + suffix)


def cmd_stitch(args) -> int:
    if len(args.images) < 2:
        raise UsageError(f"stitch needs at least 2 images, got {len(args.images)}")
    cfg = _config(args)
    frames = [load_image(p) for p in args.images]
    log_path = args.log or _sidecar(args.output, "_transforms.json")
    timing_path = args.timings or _sidecar(args.output, "_timings.csv")
    try:
        pan, log = stitch_sequence(frames, cfg, threads=args.threads)
    except PipelineFailure as exc:
        save_image(exc.panorama.canvas, args.output)
        Path(log_path).write_text(exc.log.transforms_json() + "\n")
        Path(timing_path).write_text(exc.log.timings_csv())
        raise
    save_image(pan.canvas, args.output)
    Path(log_path).write_text(log.transforms_json() + "\n")
    Path(timing_path).write_text(log.timings_csv())
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    seed = 0 if args.seed is None else args.seed
    fw, fh = args.frame_size
    if args.master:
        master = load_image(args.master)
    else:
        need_w, need_h, _ = required_master_size(args.frames, args.dx, args.theta, (fw, fh))
        master = textured_master(max(need_w, 1024), max(need_h, 576), seed=seed)
    seq = generate_sequence(master, args.frames, args.dx, args.theta, args.noise, seed=seed, frame_size=(fw, fh))
    reports = run_bench(seq, cfg)
    _write_text(emit_report(reports, args.format), args.output)
    if args.timings:
        Path(args.timings).write_text(timings_csv(reports))
    return 0


def _frame_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}") from None
    return w, h


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="config override, e.g. harris.k=0.05 (repeatable; wins over --config)")
    common.add_argument("--seed", type=int, help="consensus seed (bench: also the sequence seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for feature extraction")

    parser = argparse.ArgumentParser(prog="panoharris", description="Harris/CORDIC panorama stitching toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", parents=[common], help="Harris corners of one image")
    p.add_argument("image")
    p.add_argument("-o", "--output", help="corner file (default stdout)")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")
    p.add_argument("--annotate", metavar="PNG", help="also write the image with corners marked")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("describe", parents=[common], help="descriptors of one image")
    p.add_argument("image")
    p.add_argument("-o", "--output", help="descriptor file (default stdout)")
    p.add_argument("--format", choices=("json", "bin"), default="json")
    p.add_argument("--variant", choices=("optimized", "classic"), default="optimized")
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("match", parents=[common], help="match two images and estimate B -> A")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("-o", "--output", help="match JSON (default stdout)")
    p.add_argument("--full", action="store_true", help="classic full-frame search instead of half overlap")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("stitch", parents=[common], help="stitch an ordered image sequence")
    p.add_argument("images", nargs="*")
    p.add_argument("-o", "--output", required=True, help="panorama image (.pgm or .png)")
    p.add_argument("--log", help="transform log JSON (default <output>_transforms.json)")
    p.add_argument("--timings", help="stage timing CSV (default <output>_timings.csv)")
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("bench", parents=[common], help="classic-full vs optimized-half on a synthetic pan")
    p.add_argument("--master", help="master image (generated from --seed when omitted)")
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--dx", type=float, default=48.0, help="pan per frame in pixels (<= 10%% of width)")
    p.add_argument("--theta", type=float, default=0.0, help="rotation per frame in degrees (<= 1.2)")
    p.add_argument("--noise", type=float, default=2.0, help="Gaussian noise sigma in gray levels")
    p.add_argument("--frame-size", type=_frame_size, default=(640, 480), metavar="WxH")
    p.add_argument("-o", "--output", help="report file (default stdout)")
    p.add_argument("--format", choices=("csv", "json", "text"), default="csv")
    p.add_argument("--timings", help="write per-stage timings CSV here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PanoError as exc:
        print(f"panoharris {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
