"""Per-frame feature extraction and per-pair matching shared by the drivers."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .errors import InsufficientMatches, NoConsensus, PanoError
from .descriptor import DescribeStats, Descriptor, describe_all
from .harris import Corner, ResponseMap, corner_response, detect_corners
from .matcher import FrameTransform, Match, estimate_transform, match_descriptors, overlap_regions, region_indices
from .pixels import GradientField, as_gray_image, compute_gradients

OPTIMIZED = "optimized-half"
CLASSIC = "classic-full"
VARIANTS = (OPTIMIZED, CLASSIC)


@dataclass
class FrameFeatures:
    grads: GradientField
    response: ResponseMap
    corners: list[Corner]
    descriptors: list[Descriptor]
    stats: DescribeStats
    timings_ms: dict = field(default_factory=dict)


@dataclass
class PairResult:
    matches: list[Match]
    transform: FrameTransform | None
    region_a: np.ndarray
    region_b: np.ndarray
    candidate_pairs: int
    timings_ms: dict = field(default_factory=dict)
    error: Exception | None = None
    fallback: bool = False


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def extract_features(img, config: Config, variant: str = OPTIMIZED) -> FrameFeatures:
    """Gradients, Harris corners and descriptors of one frame."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    img = as_gray_image(img)
    h = config.harris
    timings = {}
    t0 = time.perf_counter()
    grads = compute_gradients(img, config.cordic.iterations, config.cordic.frac_bits)
    timings["gradients"] = _ms(t0)

    t0 = time.perf_counter()
    resp = corner_response(grads, h.window, h.k)
    corners = detect_corners(resp, h.target_count, h.alpha, h.nms_radius)
    timings["harris"] = _ms(t0)

    t0 = time.perf_counter()
    descs, stats = describe_all(grads, corners, "optimized" if variant == OPTIMIZED else "classic")
    timings["describe"] = _ms(t0)
    return FrameFeatures(grads, resp, corners, descs, stats, timings)


def _match_and_estimate(fa, fb, ia, ib, m, timings):
    t0 = time.perf_counter()
    sub_a = [fa.descriptors[i] for i in ia]
    sub_b = [fb.descriptors[i] for i in ib]
    local = match_descriptors(sub_a, sub_b, m.ratio_max)
    matches = [Match(int(ia[x.index_a]), int(ib[x.index_b]), x.distance, x.ratio) for x in local]
    timings["match"] = timings.get("match", 0.0) + _ms(t0)

    t0 = time.perf_counter()
    transform = None
    error = None
    try:
        transform = estimate_transform(
            matches, fa.descriptors, fb.descriptors,
            model=m.model, iterations=m.ransac_iters, inlier_tol=m.inlier_tol, seed=m.seed,
        )
    except PanoError as exc:
        error = exc
    timings["transform"] = timings.get("transform", 0.0) + _ms(t0)
    return matches, transform, error


def match_pair(fa: FrameFeatures, fb: FrameFeatures, width: int, config: Config, variant: str = OPTIMIZED) -> PairResult:
    """Match two frames' descriptors and estimate the B-to-A transform.

    The optimized variant restricts each side to its half of the frame
    facing the other; ``classic-full`` searches the whole frame.  When the
    half-frame search finds no consensus (e.g. near-zero motion, where the
    halves do not overlap) and ``matcher.full_fallback`` is set, the pair is
    retried over the full frames and the candidate count includes both
    searches.  Estimation errors are captured in ``PairResult.error``
    rather than raised.
    """
    m = config.matcher
    timings = {}
    all_a = np.arange(len(fa.descriptors))
    all_b = np.arange(len(fb.descriptors))
    if variant == OPTIMIZED and m.half_overlap:
        ra, rb = overlap_regions(width, config.stitch.direction)
        ia = region_indices(fa.descriptors, ra)
        ib = region_indices(fb.descriptors, rb)
    else:
        ia, ib = all_a, all_b
    candidates = len(ia) * len(ib)
    matches, transform, error = _match_and_estimate(fa, fb, ia, ib, m, timings)
    fallback = False
    if (
        isinstance(error, (InsufficientMatches, NoConsensus))
        and variant == OPTIMIZED and m.half_overlap and m.full_fallback
    ):
        fallback = True
        ia, ib = all_a, all_b
        candidates += len(ia) * len(ib)
        matches, transform, error = _match_and_estimate(fa, fb, ia, ib, m, timings)
    return PairResult(matches, transform, ia, ib, candidates, timings, error, fallback)
