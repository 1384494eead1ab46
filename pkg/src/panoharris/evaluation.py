"""Benchmark harness: classic full-frame matching vs. the optimized half-overlap pipeline.

Sequences are crops of a master image with known motion, so every match
and every estimated transform can be scored against ground truth.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .config import Config
from .errors import MasterTooSmall, MotionEnvelopeError, UsageError
from .matcher import FrameTransform
from .pipeline import CLASSIC, OPTIMIZED, VARIANTS, extract_features, match_pair
from .pixels import GrayImage, as_gray_image
from .stitcher import _bilinear

MAX_DX_FRACTION = 0.10
MAX_THETA_DEG = 1.2
CORRECT_TOL_PX = 2.0

REPORT_NOTE = (
    "classic-full approximates a classic SIFT-style matcher: Gaussian-weighted "
    "orientation (sigma 1.5, radius 4.5, 36 bins) and full-frame search; "
    "optimized-half uses 3x3 unweighted orientation folded to 18 bins and "
    "half-frame overlap regions"
)


def textured_master(width: int = 1024, height: int = 576, seed: int = 0) -> GrayImage:
    """Deterministic multi-scale smoothed-noise texture, stretched to [16, 240]."""
    rng = np.random.default_rng(seed)
    acc = np.zeros((height, width))
    for sigma in (1.5, 3.0, 6.0):
        acc += sigma * ndimage.gaussian_filter(rng.normal(size=(height, width)), sigma, mode="wrap")
    lo, hi = acc.min(), acc.max()
    acc = (acc - lo) / (hi - lo) * 224.0 + 16.0
    return GrayImage(np.floor(acc + 0.5).astype(np.uint8))


@dataclass
class Sequence:
    frames: list[GrayImage]
    ground_truth: list[FrameTransform]  # frame k -> frame 0 coordinates

    def pair_truth(self, k: int) -> FrameTransform:
        """Ground-truth transform from frame ``k`` into frame ``k - 1``."""
        return self.ground_truth[k - 1].inverse().compose(self.ground_truth[k])


def required_master_size(
    n_frames: int, dx_per_frame: float, theta_per_frame: float = 0.0, frame_size: tuple[int, int] = (640, 480)
) -> tuple[int, int, int]:
    """``(width, height, margin)`` of the smallest master that fits the sequence."""
    fw, fh = frame_size
    total_theta = math.radians(abs(theta_per_frame) * (n_frames - 1))
    margin = 0 if total_theta == 0 else math.ceil(math.sin(total_theta) * math.hypot(fw, fh) / 2) + 2
    span = abs(dx_per_frame) * (n_frames - 1)
    return fw + math.ceil(span) + 2 * margin, fh + 2 * margin, margin


def generate_sequence(
    master,
    n_frames: int,
    dx_per_frame: float,
    theta_per_frame: float = 0.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
    frame_size: tuple[int, int] = (640, 480),
    check_envelope: bool = True,
) -> Sequence:
    """Crops of ``master`` panning by ``dx_per_frame`` and rotating by ``theta_per_frame``.

    ``frame_size`` is ``(width, height)``.  Integer motion without rotation
    gives exact pixel crops; otherwise frames are bilinearly resampled.
    Frame ``k`` is rotated by ``k * theta_per_frame`` about its own center.
    """
    master = as_gray_image(master)
    fw, fh = frame_size
    if n_frames < 1:
        raise UsageError(f"n_frames must be >= 1, got {n_frames}")
    if check_envelope:
        if abs(dx_per_frame) > MAX_DX_FRACTION * fw:
            raise MotionEnvelopeError(
                f"dx_per_frame {dx_per_frame} exceeds the motion envelope of "
                f"{MAX_DX_FRACTION:.0%} of the frame width ({MAX_DX_FRACTION * fw:g} px)"
            )
        if abs(theta_per_frame) > MAX_THETA_DEG:
            raise MotionEnvelopeError(
                f"theta_per_frame {theta_per_frame} exceeds the {MAX_THETA_DEG} deg per-frame envelope"
            )

    need_w, need_h, margin = required_master_size(n_frames, dx_per_frame, theta_per_frame, frame_size)
    span = abs(dx_per_frame) * (n_frames - 1)
    if need_w > master.width or need_h > master.height:
        raise MasterTooSmall(
            f"master {master.width}x{master.height} too small; need {need_w}x{need_h}"
        )
    x0 = margin + (math.ceil(span) if dx_per_frame < 0 else 0)
    y0 = margin
    c = np.array([(fw - 1) / 2.0, (fh - 1) / 2.0])

    rng = np.random.default_rng(seed)
    frames, truth = [], []
    gy, gx = np.mgrid[0:fh, 0:fw].astype(np.float64)
    for k in range(n_frames):
        theta = k * theta_per_frame
        shift = k * dx_per_frame
        # pure rotation about the center, then the pan
        rc = FrameTransform(0.0, 0.0, theta).apply(c)[0]
        gt = FrameTransform(float(c[0] - rc[0] + shift), float(c[1] - rc[1]), float(theta))
        if theta == 0 and float(shift).is_integer():
            sx = x0 + int(shift)
            data = master.data[y0:y0 + fh, sx:sx + fw].astype(np.float64)
        else:
            pts = gt.apply(np.column_stack([gx.ravel(), gy.ravel()]))
            data = _bilinear(master.data, pts[:, 0] + x0, pts[:, 1] + y0).reshape(fh, fw)
        if noise_sigma > 0:
            data = data + rng.normal(0.0, noise_sigma, size=data.shape)
        frames.append(GrayImage(np.clip(np.floor(data + 0.5), 0, 255).astype(np.uint8)))
        truth.append(gt)
    return Sequence(frames, truth)


@dataclass
class BenchReport:
    variant: str
    pairs: int = 0
    corners_detected: int = 0
    descriptors: int = 0
    candidate_pairs: int = 0
    matches_attempted: int = 0
    matches_accepted: int = 0
    matches_correct: int = 0
    precision: float = 0.0
    transform_error_px: float = float("nan")
    failures: int = 0
    fallbacks: int = 0
    timings_ms: dict = field(default_factory=dict)

    def row(self, include_timings: bool = False) -> dict:
        d = asdict(self)
        timings = d.pop("timings_ms")
        if include_timings:
            for stage in sorted(timings):
                d[f"ms_{stage}"] = round(timings[stage], 3)
        return d


def match_correctness(matches, pts_a, pts_b, truth_ba: FrameTransform, tol: float = CORRECT_TOL_PX) -> np.ndarray:
    """Boolean per match: does ``truth_ba`` carry point b within ``tol`` of point a?"""
    if not matches:
        return np.zeros(0, dtype=bool)
    ia = np.array([m.index_a for m in matches])
    ib = np.array([m.index_b for m in matches])
    err = np.linalg.norm(truth_ba.apply(pts_b[ib]) - pts_a[ia], axis=1)
    return err <= tol


def transform_error(est: FrameTransform, truth: FrameTransform, width: int, height: int) -> float:
    """Displacement between estimated and true mapping of the frame center, in pixels."""
    c = np.array([[(width - 1) / 2.0, (height - 1) / 2.0]])
    return float(np.linalg.norm(est.apply(c) - truth.apply(c)))


def run_variant(seq: Sequence, variant: str = OPTIMIZED, config: Config | None = None) -> BenchReport:
    """Full pipeline over every adjacent pair of ``seq``, scored against ground truth.

    Per-pair estimation failures are counted in ``failures`` rather than raised.
    """
    if variant not in VARIANTS:
        raise UsageError(f"variant must be one of {VARIANTS}, got {variant!r}")
    config = config or Config()
    frames = seq.frames
    h, w = frames[0].shape
    report = BenchReport(variant)
    timings: dict = {}

    def add_times(d):
        for stage, ms in d.items():
            timings[stage] = timings.get(stage, 0.0) + ms

    feats = []
    for f in frames:
        ft = extract_features(f, config, variant)
        add_times(ft.timings_ms)
        report.corners_detected += len(ft.corners)
        report.descriptors += len(ft.descriptors)
        feats.append(ft)

    errors = []
    for k in range(1, len(frames)):
        fa, fb = feats[k - 1], feats[k]
        res = match_pair(fa, fb, w, config, variant)
        add_times(res.timings_ms)
        report.pairs += 1
        report.candidate_pairs += res.candidate_pairs
        report.matches_attempted += len(res.region_a)
        report.matches_accepted += len(res.matches)
        pa = np.array([[d.corner.x, d.corner.y] for d in fa.descriptors], dtype=np.float64).reshape(-1, 2)
        pb = np.array([[d.corner.x, d.corner.y] for d in fb.descriptors], dtype=np.float64).reshape(-1, 2)
        truth = seq.pair_truth(k)
        report.matches_correct += int(match_correctness(res.matches, pa, pb, truth).sum())
        report.fallbacks += int(res.fallback)
        if res.error is not None:
            report.failures += 1
        else:
            errors.append(transform_error(res.transform, truth, w, h))

    if report.matches_accepted:
        report.precision = report.matches_correct / report.matches_accepted
    if errors:
        report.transform_error_px = float(np.mean(errors))
    report.timings_ms = timings
    return report


def run_bench(seq: Sequence, config: Config | None = None, variants=(CLASSIC, OPTIMIZED)) -> list[BenchReport]:
    return [run_variant(seq, v, config) for v in variants]


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.4f}"
    return str(v)


def emit_report(reports, fmt: str = "text", include_timings: bool = False) -> str:
    """Render reports side by side, one row per variant.

    Timing columns are wall-clock and therefore excluded unless requested,
    keeping the default output byte-identical across seeded runs.
    """
    reports = list(reports)
    if not reports:
        raise UsageError("emit_report needs at least one report")
    rows = [r.row(include_timings) for r in reports]
    cols = list(rows[0])
    for r in rows[1:]:
        cols += [c for c in r if c not in cols]

    if fmt == "json":
        payload = {"note": REPORT_NOTE, "reports": [{c: r.get(c) for c in cols} for r in rows]}
        return json.dumps(payload, indent=1, allow_nan=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in cols])
        return buf.getvalue()
    if fmt == "text":
        cells = [cols] + [[_fmt(r.get(c, "")) for c in cols] for r in rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
        lines = ["# " + REPORT_NOTE]
        for row in cells:
            lines.append("  ".join(s.ljust(wd) for s, wd in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"
    raise UsageError(f"format must be text, csv or json, got {fmt!r}")


def timings_csv(reports) -> str:
    """Per-variant stage timings (summed over the sequence) as CSV."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["variant", "stage", "milliseconds"])
    for r in reports:
        for stage in sorted(r.timings_ms):
            wr.writerow([r.variant, stage, f"{r.timings_ms[stage]:.3f}"])
    return buf.getvalue()
