"""Harris corner response, adaptive threshold and non-maximal suppression."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from scipy.ndimage import maximum_filter

from ._jit import compile_kernel
from .errors import EmptyResponse, ImageTooSmall
from .pixels import GradientField

DEFAULT_K = 0.04
DEFAULT_WINDOW = 5
DEFAULT_NMS_RADIUS = 3
DEFAULT_ALPHA = 0.01
DEFAULT_TARGET_COUNT = 512

# k is applied as a small rational so the tensor arithmetic stays integral
_K_MAX_DENOMINATOR = 200


@dataclass(frozen=True, eq=False)
class ResponseMap:
    """Harris response plane; the ``border`` band on every side is zero."""

    r: np.ndarray
    border: int = 0

    @property
    def width(self) -> int:
        return self.r.shape[1]

    @property
    def height(self) -> int:
        return self.r.shape[0]

    def valid_mask(self) -> np.ndarray:
        mask = np.zeros(self.r.shape, dtype=bool)
        b = self.border
        h, w = self.r.shape
        if h > 2 * b and w > 2 * b:
            mask[b:h - b, b:w - b] = True
        return mask


@dataclass(frozen=True)
class Corner:
    x: int
    y: int
    response: float

    def to_dict(self) -> dict:
        return {"x": int(self.x), "y": int(self.y), "response": float(self.response)}


def corners_to_json(corners) -> str:
    return json.dumps([c.to_dict() for c in corners], indent=1)


def corners_from_json(text: str) -> list[Corner]:
    return [Corner(int(d["x"]), int(d["y"]), float(d["response"])) for d in json.loads(text)]


def k_as_fraction(k: float) -> Fraction:
    return Fraction(k).limit_denominator(_K_MAX_DENOMINATOR)


def _box_sum(a: np.ndarray, window: int) -> np.ndarray:
    """Sum over a ``window x window`` box centred on each pixel (valid centres only)."""
    h, w = a.shape
    s = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(a, axis=0, dtype=np.int64), axis=1, out=s[1:, 1:])
    out = np.zeros((h, w), dtype=np.int64)
    r = window // 2
    if h < window or w < window:
        return out
    out[r:h - r, r:w - r] = (
        s[window:, window:] - s[:-window, window:] - s[window:, :-window] + s[:-window, :-window]
    )
    return out


def _response_numpy(ix, iy, window, kn, kd):
    ix = ix.astype(np.int64)
    iy = iy.astype(np.int64)
    a = _box_sum(ix * ix, window)
    b = _box_sum(iy * iy, window)
    c = _box_sum(ix * iy, window)
    num = kd * (a * b - c * c) - kn * (a + b) ** 2
    return num.astype(np.float64) / kd


def _response_loop(ix, iy, window, kn, kd):
    h, w = ix.shape
    sa = np.zeros((h + 1, w + 1), dtype=np.int64)
    sb = np.zeros((h + 1, w + 1), dtype=np.int64)
    sc = np.zeros((h + 1, w + 1), dtype=np.int64)
    for y in range(h):
        ra = 0
        rb = 0
        rc = 0
        for x in range(w):
            gx = np.int64(ix[y, x])
            gy = np.int64(iy[y, x])
            ra += gx * gx
            rb += gy * gy
            rc += gx * gy
            sa[y + 1, x + 1] = sa[y, x + 1] + ra
            sb[y + 1, x + 1] = sb[y, x + 1] + rb
            sc[y + 1, x + 1] = sc[y, x + 1] + rc
    out = np.zeros((h, w), dtype=np.float64)
    r = window // 2
    for y in range(r, h - r):
        for x in range(r, w - r):
            y1 = y + r + 1
            x1 = x + r + 1
            y0 = y - r
            x0 = x - r
            a = sa[y1, x1] - sa[y0, x1] - sa[y1, x0] + sa[y0, x0]
            b = sb[y1, x1] - sb[y0, x1] - sb[y1, x0] + sb[y0, x0]
            c = sc[y1, x1] - sc[y0, x1] - sc[y1, x0] + sc[y0, x0]
            t = a + b
            num = kd * (a * b - c * c) - kn * (t * t)
            out[y, x] = np.float64(num) / kd
    return out


_response_compiled = compile_kernel(_response_loop)


def corner_response(
    grads: GradientField, window: int = DEFAULT_WINDOW, k: float = DEFAULT_K, backend: str = "auto"
) -> ResponseMap:
    """Harris response ``det(M) - k trace(M)^2`` with a box-filtered structure tensor.

    The tensor sums are exact 64-bit integers; ``k`` is used as the nearest
    fraction with denominator <= 200 (0.04 is exactly 1/25).  ``backend``
    selects the compiled loop (``"auto"``) or the numpy form (``"numpy"``);
    both give identical maps.
    """
    if window not in (3, 5, 7):
        raise ValueError(f"window must be 3, 5 or 7, got {window}")
    if not 0.04 <= k <= 0.06:
        raise ValueError(f"k must be in [0.04, 0.06], got {k}")
    h, w = grads.shape
    border = window // 2 + 1
    if h <= 2 * border or w <= 2 * border:
        raise ImageTooSmall(f"{w}x{h} leaves no interior for a {window}x{window} Harris window")

    kf = k_as_fraction(k)
    kernel = _response_numpy if backend == "numpy" or _response_compiled is None else _response_compiled
    r = kernel(grads.ix, grads.iy, window, kf.numerator, kf.denominator)

    r[:border, :] = 0.0
    r[h - border:, :] = 0.0
    r[:, :border] = 0.0
    r[:, w - border:] = 0.0
    r.flags.writeable = False
    return ResponseMap(r, border)


def _nms_mask_numpy(r, threshold, radius, valid):
    h, w = r.shape
    local_max = maximum_filter(r, size=2 * radius + 1, mode="constant", cval=-np.inf)
    cand = (r >= threshold) & (r == local_max) & valid
    ys, xs = np.nonzero(cand)
    vals = r[ys, xs]
    keep = np.ones(ys.size, dtype=bool)
    # equal values earlier in scan order win the tie
    for dy in range(-radius, 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx >= 0:
                break
            ny = ys + dy
            nx = xs + dx
            inside = (ny >= 0) & (nx >= 0) & (nx < w)
            tie = np.zeros(ys.size, dtype=bool)
            tie[inside] = r[ny[inside], nx[inside]] == vals[inside]
            keep &= ~tie
    cand[ys[~keep], xs[~keep]] = False
    return cand


def _nms_mask_loop(r, threshold, radius, border):
    h, w = r.shape
    out = np.zeros((h, w), dtype=np.bool_)
    for y in range(border, h - border):
        for x in range(border, w - border):
            v = r[y, x]
            if not v >= threshold:
                continue
            ok = True
            for ny in range(max(y - radius, 0), min(y + radius + 1, h)):
                for nx in range(max(x - radius, 0), min(x + radius + 1, w)):
                    u = r[ny, nx]
                    if u > v or (u == v and (ny < y or (ny == y and nx < x))):
                        ok = False
                        break
                if not ok:
                    break
            out[y, x] = ok
    return out


_nms_mask_compiled = compile_kernel(_nms_mask_loop)


def non_max_suppress(
    resp: ResponseMap,
    threshold: float,
    radius: int = DEFAULT_NMS_RADIUS,
    backend: str = "auto",
    limit: int | None = None,
) -> list[Corner]:
    """Local maxima of ``resp`` at or above ``threshold``.

    A pixel survives when it beats every other pixel in its
    ``(2 radius + 1)^2`` window, where an equal value only loses to a pixel
    earlier in row-major scan order.  Candidates are restricted to the valid
    (non-border) region.  Output is sorted by descending response, ties in
    scan order, truncated to ``limit`` entries when given.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    r = np.ascontiguousarray(resp.r, dtype=np.float64)
    if backend == "numpy" or _nms_mask_compiled is None:
        mask = _nms_mask_numpy(r, threshold, radius, resp.valid_mask())
    else:
        mask = _nms_mask_compiled(r, float(threshold), int(radius), int(resp.border))
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return []
    vals = r[ys, xs]
    # np.nonzero yields scan order; a stable sort on -value preserves it for ties
    order = np.argsort(-vals, kind="stable")[:limit]
    return [Corner(int(xs[i]), int(ys[i]), float(vals[i])) for i in order]


def adaptive_threshold(
    resp: ResponseMap,
    target_count: int = DEFAULT_TARGET_COUNT,
    alpha: float = DEFAULT_ALPHA,
    radius: int = DEFAULT_NMS_RADIUS,
) -> float:
    """Per-frame detection threshold.

    Starts at ``alpha * max(R)``.  When more than ``target_count`` local
    maxima clear that level, the threshold is raised to the response of the
    ``target_count``-th strongest maximum.  Equal responses straddling the
    cap are then cut in scan order by :func:`detect_corners`.
    """
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    peak = float(resp.r.max()) if resp.r.size else 0.0
    if not peak > 0.0:
        raise EmptyResponse("response map has no positive value")
    threshold = alpha * peak
    maxima = non_max_suppress(resp, threshold, radius)
    if len(maxima) > target_count:
        threshold = maxima[target_count - 1].response
    return threshold


def detect_corners(
    resp: ResponseMap,
    target_count: int = DEFAULT_TARGET_COUNT,
    alpha: float = DEFAULT_ALPHA,
    radius: int = DEFAULT_NMS_RADIUS,
) -> list[Corner]:
    """Adaptive threshold + NMS, capped at ``target_count`` corners.

    A map without positive response yields an empty list.
    """
    if target_count < 1:
        raise ValueError(f"target_count must be >= 1, got {target_count}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    peak = float(resp.r.max()) if resp.r.size else 0.0
    if not peak > 0.0:
        return []
    # survival does not depend on the threshold beyond R >= T, so raising T
    # to the cap value equals truncating the sorted list
    return non_max_suppress(resp, alpha * peak, radius, limit=target_count)
