"""Panorama accumulation with feathered blending."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import Config
from .errors import DegenerateTransform, DimensionMismatch, PipelineFailure, UsageError
from .matcher import IDENTITY, FrameTransform
from .pipeline import OPTIMIZED, extract_features, match_pair
from .pixels import GrayImage, as_gray_image

# cumulative rotation allowed when compositing; per-pair rotation is bounded by the matcher
MAX_CUMULATIVE_THETA_DEG = 45.0
_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Panorama:
    """Blended canvas plus the accumulators needed to keep compositing.

    ``origin_offset`` is the canvas position of frame 0's pixel (0, 0).
    ``coverage`` counts the frames covering each canvas pixel; ``weight`` is
    the summed feather weight.
    """

    accum: np.ndarray
    weight: np.ndarray
    coverage: np.ndarray
    origin_offset: tuple[int, int] = (0, 0)

    @classmethod
    def empty(cls) -> "Panorama":
        z = np.zeros((0, 0))
        return cls(z, z.copy(), np.zeros((0, 0), dtype=np.int32), (0, 0))

    @property
    def is_empty(self) -> bool:
        return self.accum.size == 0

    @property
    def width(self) -> int:
        return self.accum.shape[1]

    @property
    def height(self) -> int:
        return self.accum.shape[0]

    @property
    def canvas(self) -> GrayImage:
        out = np.zeros(self.accum.shape, dtype=np.float64)
        covered = self.weight > 0
        out[covered] = self.accum[covered] / self.weight[covered]
        return GrayImage(np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8))


def feather_weights(px: np.ndarray, py: np.ndarray, width: int, height: int) -> np.ndarray:
    """Distance to the nearest frame edge plus one, so edge pixels still count."""
    d = np.minimum(np.minimum(px, width - 1 - px), np.minimum(py, height - 1 - py))
    return np.maximum(d, 0.0) + 1.0


def _bilinear(data: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    h, w = data.shape
    x0 = np.clip(np.floor(px).astype(np.int64), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(py).astype(np.int64), 0, max(h - 2, 0))
    fx = px - x0
    fy = py - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    d = data.astype(np.float64)
    top = d[y0, x0] * (1 - fx) + d[y0, x1] * fx
    bot = d[y1, x0] * (1 - fx) + d[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def composite(pan: Panorama, frame, t: FrameTransform = IDENTITY) -> Panorama:
    """Warp ``frame`` by the cumulative transform ``t`` (frame -> frame-0 coordinates) onto ``pan``.

    The canvas grows to the exact warped bounds; samples are bilinear
    (inverse mapping) and overlaps are feathered by distance to each
    source frame's nearest edge.
    """
    frame = as_gray_image(frame)
    if not t.is_finite():
        raise DegenerateTransform(f"non-finite transform {t}")
    if abs(t.theta_deg) > MAX_CUMULATIVE_THETA_DEG:
        raise DegenerateTransform(
            f"cumulative rotation {t.theta_deg:.3f} deg exceeds +-{MAX_CUMULATIVE_THETA_DEG} deg"
        )
    h, w = frame.shape
    corners = np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=np.float64)
    warped = t.apply(corners)
    fx0 = math.floor(warped[:, 0].min() + _EPS)
    fx1 = math.ceil(warped[:, 0].max() - _EPS)
    fy0 = math.floor(warped[:, 1].min() + _EPS)
    fy1 = math.ceil(warped[:, 1].max() - _EPS)

    if pan.is_empty:
        ox, oy = -fx0, -fy0
        H, W = fy1 - fy0 + 1, fx1 - fx0 + 1
        accum = np.zeros((H, W))
        weight = np.zeros((H, W))
        coverage = np.zeros((H, W), dtype=np.int32)
    else:
        ox, oy = pan.origin_offset
        # current canvas extent in frame-0 coordinates
        cx0, cy0 = -ox, -oy
        cx1, cy1 = cx0 + pan.width - 1, cy0 + pan.height - 1
        nx0, ny0 = min(cx0, fx0), min(cy0, fy0)
        nx1, ny1 = max(cx1, fx1), max(cy1, fy1)
        H, W = ny1 - ny0 + 1, nx1 - nx0 + 1
        accum = np.zeros((H, W))
        weight = np.zeros((H, W))
        coverage = np.zeros((H, W), dtype=np.int32)
        sy, sx = cy0 - ny0, cx0 - nx0
        accum[sy:sy + pan.height, sx:sx + pan.width] = pan.accum
        weight[sy:sy + pan.height, sx:sx + pan.width] = pan.weight
        coverage[sy:sy + pan.height, sx:sx + pan.width] = pan.coverage
        ox, oy = -nx0, -ny0

    # inverse-map the frame's bounding box on the canvas
    rows = np.arange(fy0, fy1 + 1, dtype=np.float64)
    cols = np.arange(fx0, fx1 + 1, dtype=np.float64)
    gx, gy = np.meshgrid(cols, rows)
    rt = t.rotation.T
    qx = gx - t.dx
    qy = gy - t.dy
    px = rt[0, 0] * qx + rt[0, 1] * qy
    py = rt[1, 0] * qx + rt[1, 1] * qy
    # snap round-off so integer-aligned frames sample exactly
    px = np.where(np.abs(px - np.round(px)) < _EPS, np.round(px), px)
    py = np.where(np.abs(py - np.round(py)) < _EPS, np.round(py), py)
    inside = (px >= 0) & (px <= w - 1) & (py >= 0) & (py <= h - 1)

    vals = _bilinear(frame.data, px[inside], py[inside])
    fw = feather_weights(px[inside], py[inside], w, h)
    r_idx = (gy[inside] + oy).astype(np.int64)
    c_idx = (gx[inside] + ox).astype(np.int64)
    accum[r_idx, c_idx] += fw * vals
    weight[r_idx, c_idx] += fw
    coverage[r_idx, c_idx] += 1
    return Panorama(accum, weight, coverage, (int(ox), int(oy)))


@dataclass
class StitchLog:
    """Per-pair transform records and per-stage timings of a sequence run."""

    pairs: list
    timings: list  # (frame_index, stage, milliseconds)

    def transforms_json(self) -> str:
        return json.dumps(self.pairs, indent=1)

    def timings_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame_index", "stage", "milliseconds"])
        for idx, stage, ms in self.timings:
            w.writerow([idx, stage, f"{ms:.3f}"])
        return buf.getvalue()


def stitch_sequence(frames, config: Config | None = None, threads: int = 1) -> tuple[Panorama, StitchLog]:
    """Run the full pipeline over adjacent pairs and composite every frame.

    Raises :class:`PipelineFailure` at the first pair whose transform cannot
    be estimated; the exception carries the panorama of the frames before
    that pair and the log so far.
    """
    config = config or Config()
    frames = [as_gray_image(f) for f in frames]
    if len(frames) < 2:
        raise UsageError(f"need at least 2 frames, got {len(frames)}")
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise DimensionMismatch(f"frame {i} is {f.width}x{f.height}, expected {shape[1]}x{shape[0]}")

    log = StitchLog([], [])
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        feats = list(pool.map(lambda f: extract_features(f, config, OPTIMIZED), frames))
    for i, ft in enumerate(feats):
        for stage, ms in ft.timings_ms.items():
            log.timings.append((i, stage, ms))

    t0 = time.perf_counter()
    pan = composite(Panorama.empty(), frames[0], IDENTITY)
    log.timings.append((0, "composite", (time.perf_counter() - t0) * 1000.0))
    cumulative = IDENTITY
    for k in range(1, len(frames)):
        res = match_pair(feats[k - 1], feats[k], shape[1], config, OPTIMIZED)
        for stage, ms in res.timings_ms.items():
            log.timings.append((k, stage, ms))
        if res.error is not None:
            raise PipelineFailure(k, res.error, pan, log)
        cumulative = cumulative.compose(res.transform)
        log.pairs.append({
            "pair": [k - 1, k],
            "matches": len(res.matches),
            "candidate_pairs": res.candidate_pairs,
            "full_frame_fallback": res.fallback,
            "transform": res.transform.to_dict(),
            "cumulative": cumulative.to_dict(),
        })
        t0 = time.perf_counter()
        try:
            pan = composite(pan, frames[k], cumulative)
        except DegenerateTransform as exc:
            raise PipelineFailure(k, exc, pan, log) from exc
        log.timings.append((k, "composite", (time.perf_counter() - t0) * 1000.0))
    return pan, log
