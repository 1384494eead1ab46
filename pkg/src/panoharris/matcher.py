"""Half-overlap descriptor matching and robust inter-frame motion estimation.

Transforms map frame-B pixel coordinates into frame-A coordinates::

    p_a = R(theta) @ p_b + (dx, dy)

so a camera panning left-to-right by 48 px gives ``dx = +48``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .descriptor import Descriptor, descriptor_matrix, descriptor_positions
from .errors import DegenerateTransform, InsufficientMatches, NoConsensus

DEFAULT_RATIO_MAX = 0.7
DEFAULT_INLIER_TOL = 2.0
DEFAULT_ITERATIONS = 200
DEFAULT_SEED = 0
MIN_CONSENSUS = 4
MAX_PAIR_THETA_DEG = 5.0

LEFT_TO_RIGHT = "left-to-right"
RIGHT_TO_LEFT = "right-to-left"


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    distance: float
    ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FrameTransform:
    dx: float = 0.0
    dy: float = 0.0
    theta_deg: float = 0.0
    inliers: int = 0
    residual_rms: float = 0.0
    seed: int | None = None

    @property
    def rotation(self) -> np.ndarray:
        t = math.radians(self.theta_deg)
        c, s = math.cos(t), math.sin(t)
        return np.array([[c, -s], [s, c]])

    def apply(self, points) -> np.ndarray:
        """Map ``(n, 2)`` frame-B points ``(x, y)`` into frame-A coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return pts @ self.rotation.T + np.array([self.dx, self.dy])

    def compose(self, other: "FrameTransform") -> "FrameTransform":
        """``self o other``: apply ``other`` first, then ``self``."""
        t = self.apply([[other.dx, other.dy]])[0]
        return FrameTransform(
            float(t[0]), float(t[1]), self.theta_deg + other.theta_deg,
            min(self.inliers, other.inliers), 0.0, self.seed,
        )

    def inverse(self) -> "FrameTransform":
        rt = self.rotation.T
        t = -(rt @ np.array([self.dx, self.dy]))
        return FrameTransform(float(t[0]), float(t[1]), -self.theta_deg, self.inliers, self.residual_rms, self.seed)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.dx, self.dy, self.theta_deg))

    def to_dict(self) -> dict:
        return {
            "dx": float(self.dx),
            "dy": float(self.dy),
            "theta_deg": float(self.theta_deg),
            "inliers": int(self.inliers),
            "residual_rms": float(self.residual_rms),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameTransform":
        return cls(float(d["dx"]), float(d["dy"]), float(d.get("theta_deg", 0.0)),
                   int(d.get("inliers", 0)), float(d.get("residual_rms", 0.0)), d.get("seed"))


IDENTITY = FrameTransform()


def overlap_regions(width: int, direction: str = LEFT_TO_RIGHT) -> tuple[tuple[int, int], tuple[int, int]]:
    """Half-frame x-ranges ``[start, stop)`` of frames A and B that take part in matching.

    >>> overlap_regions(640)
    ((320, 640), (0, 320))
    """
    if width < 32:
        raise ValueError(f"width must be >= 32, got {width}")
    half = width // 2
    if direction == LEFT_TO_RIGHT:
        return (half, width), (0, half)
    if direction == RIGHT_TO_LEFT:
        return (0, half), (half, width)
    raise ValueError(f"direction must be {LEFT_TO_RIGHT!r} or {RIGHT_TO_LEFT!r}, got {direction!r}")


def region_indices(descs, x_range) -> np.ndarray:
    """Indices of descriptors whose corner x lies in ``[start, stop)``."""
    lo, hi = x_range
    return np.array([i for i, d in enumerate(descs) if lo <= d.corner.x < hi], dtype=np.int64)


def _as_matrix(descs) -> np.ndarray:
    if isinstance(descs, np.ndarray):
        return np.atleast_2d(descs).astype(np.float64, copy=False)
    return descriptor_matrix(list(descs))


def match_descriptors(a, b, ratio_max: float = DEFAULT_RATIO_MAX) -> list[Match]:
    """Mutual-nearest L2 matches passing the nearest/second-nearest ratio test.

    ``a`` and ``b`` are descriptor lists or ``(n, 128)`` arrays.  A match
    (i, j) is emitted when ``b[j]`` is the nearest neighbour of ``a[i]``,
    ``a[i]`` is the nearest neighbour of ``b[j]``, and
    ``d1 / d2 <= ratio_max``.  With a single candidate in ``b`` the ratio is
    0; when both distances are 0 it is 1.  Ties go to the lower index.
    Output is sorted by ascending ratio, then ``index_a``.
    """
    if not 0.0 < ratio_max < 1.0:
        raise ValueError(f"ratio_max must be in (0, 1), got {ratio_max}")
    A = _as_matrix(a)
    B = _as_matrix(b)
    na, nb = len(A), len(B)
    if na == 0 or nb == 0:
        return []

    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    np.maximum(d2, 0.0, out=d2)
    nn_ab = np.argmin(d2, axis=1)
    nn_ba = np.argmin(d2, axis=0)
    rows = np.arange(na)
    best = np.linalg.norm(A - B[nn_ab], axis=1)
    if nb > 1:
        masked = d2.copy()
        masked[rows, nn_ab] = np.inf
        second_idx = np.argmin(masked, axis=1)
        second = np.linalg.norm(A - B[second_idx], axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(second > 0, best / second, 1.0)
    else:
        ratio = np.zeros(na)

    ok = (nn_ba[nn_ab] == rows) & (ratio <= ratio_max)
    out = [Match(int(i), int(nn_ab[i]), float(best[i]), float(ratio[i])) for i in np.nonzero(ok)[0]]
    out.sort(key=lambda m: (m.ratio, m.index_a))
    return out


def _positions(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.astype(np.float64, copy=False).reshape(-1, 2)
    points = list(points)
    if points and isinstance(points[0], Descriptor):
        return descriptor_positions(points)
    if points and hasattr(points[0], "x"):
        return np.array([[p.x, p.y] for p in points], dtype=np.float64)
    return np.asarray(points, dtype=np.float64).reshape(-1, 2)


def _fit_translation(pa, pb):
    t = (pa - pb).mean(axis=0)
    return 0.0, t


def _fit_rigid(pa, pb):
    ca = pa.mean(axis=0)
    cb = pb.mean(axis=0)
    qa = pa - ca
    qb = pb - cb
    dot = (qa * qb).sum()
    cross = (qb[:, 0] * qa[:, 1] - qb[:, 1] * qa[:, 0]).sum()
    theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return math.degrees(theta), ca - R @ cb


def _residuals(pa, pb, theta_deg, t):
    th = math.radians(theta_deg)
    c, s = math.cos(th), math.sin(th)
    R = np.array([[c, -s], [s, c]])
    return np.linalg.norm(pa - (pb @ R.T + t), axis=1)


def estimate_transform(
    matches,
    corners_a,
    corners_b,
    model: str = "translation",
    iterations: int = DEFAULT_ITERATIONS,
    inlier_tol: float = DEFAULT_INLIER_TOL,
    seed: int = DEFAULT_SEED,
) -> FrameTransform:
    """Consensus estimate of the B-to-A motion from matched points.

    Each of ``iterations`` rounds samples a minimal set (one match for
    ``"translation"``, two for ``"similarity"``: rotation plus translation,
    scale fixed at 1), counts matches within ``inlier_tol`` pixels, and keeps
    the largest set; the winner is refit by least squares.  The RNG is
    ``numpy.random.default_rng(seed)``.
    """
    if model not in ("translation", "similarity"):
        raise ValueError(f"model must be 'translation' or 'similarity', got {model!r}")
    matches = list(matches)
    if len(matches) < MIN_CONSENSUS:
        raise InsufficientMatches(f"{len(matches)} matches, need at least {MIN_CONSENSUS}")
    pa_all = _positions(corners_a)
    pb_all = _positions(corners_b)
    ia = np.array([m.index_a for m in matches])
    ib = np.array([m.index_b for m in matches])
    pa = pa_all[ia]
    pb = pb_all[ib]
    n = len(matches)

    rng = np.random.default_rng(seed)
    best_mask = None
    best_count = 0
    best_err = math.inf
    for _ in range(iterations):
        if model == "translation":
            k = int(rng.integers(n))
            theta, t = 0.0, pa[k] - pb[k]
        else:
            i, j = rng.choice(n, size=2, replace=False)
            va = pa[j] - pa[i]
            vb = pb[j] - pb[i]
            if not (va.any() and vb.any()):
                continue
            theta = math.degrees(math.atan2(vb[0] * va[1] - vb[1] * va[0], vb @ va))
            if abs(theta) > MAX_PAIR_THETA_DEG:
                continue
            theta, t = _fit_rigid(pa[[i, j]], pb[[i, j]])
        res = _residuals(pa, pb, theta, t)
        mask = res <= inlier_tol
        count = int(mask.sum())
        err = float(res[mask].sum()) if count else math.inf
        if count > best_count or (count == best_count and err < best_err):
            best_mask, best_count, best_err = mask, count, err

    if best_count < MIN_CONSENSUS:
        raise NoConsensus(f"largest consensus set has {best_count} matches, need {MIN_CONSENSUS}")

    fit = _fit_translation if model == "translation" else _fit_rigid
    theta, t = fit(pa[best_mask], pb[best_mask])
    if abs(theta) > MAX_PAIR_THETA_DEG:
        raise NoConsensus(f"refit rotation {theta:.2f} deg is outside the +-{MAX_PAIR_THETA_DEG} deg envelope")
    res = _residuals(pa[best_mask], pb[best_mask], theta, t)
    rms = float(np.sqrt(np.mean(res * res)))
    return FrameTransform(float(t[0]), float(t[1]), float(theta), best_count, rms, seed)


def check_transform(t: FrameTransform, max_theta_deg: float = MAX_PAIR_THETA_DEG) -> FrameTransform:
    if not t.is_finite():
        raise DegenerateTransform(f"non-finite transform {t}")
    if abs(t.theta_deg) > max_theta_deg:
        raise DegenerateTransform(f"rotation {t.theta_deg:.3f} deg exceeds +-{max_theta_deg} deg")
    return t


def matches_to_json(matches) -> str:
    return json.dumps([m.to_dict() for m in matches])
