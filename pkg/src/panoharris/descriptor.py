"""Pyramid-free SIFT-style characterisation of corners.

Main orientation comes from an unweighted 3x3 gradient histogram (36 bins
folded pairwise to 18).  The descriptor samples a 12x12 grid, 4x4 cells of
3x3 samples, in a frame rotated to the main orientation and accumulates
gradient magnitude into 8 relative-orientation bins per cell with bilinear
cell weights and linear orientation weights.  The per-sample geometry
(cell indices and weights) is a fixed table computed once.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .cordic import trig_lut_array
from .errors import TooCloseToBorder, ZeroDescriptor, ZeroGradientNeighborhood
from .harris import Corner
from .pixels import DIR_BINS, GradientField

N_CELLS = 4
CELL_SIZE = 3
N_ORIENT = 8
DESCRIPTOR_SIZE = N_CELLS * N_CELLS * N_ORIENT
FOLDED_BINS = 18
CLAMP = 0.2
# 12x12 grid rotated: max reach 5.5*sqrt(2) ~ 7.8 -> 8, plus the Sobel border, plus slack
BORDER_MARGIN = 10
CLASSIC_SIGMA = 1.5
CLASSIC_RADIUS = 3 * CLASSIC_SIGMA

_SUPPORT = N_CELLS * CELL_SIZE
_BIN_RECORD = struct.Struct("<HHf" + "f" * DESCRIPTOR_SIZE)


@dataclass(frozen=True, eq=False)
class Descriptor:
    corner: Corner
    main_angle_deg: float
    vec: np.ndarray

    def to_dict(self) -> dict:
        return {
            "x": int(self.corner.x),
            "y": int(self.corner.y),
            "angle": float(self.main_angle_deg),
            "vec": [float(v) for v in self.vec],
        }


@dataclass
class DescribeStats:
    described: int = 0
    rejected_border: int = 0
    rejected_zero_gradient: int = 0
    rejected_zero_descriptor: int = 0

    @property
    def rejected(self) -> int:
        return self.rejected_border + self.rejected_zero_gradient + self.rejected_zero_descriptor


def _grid_table():
    # sample offsets sit on half-pel positions so the grid is symmetric about the corner
    offs = np.arange(_SUPPORT, dtype=np.float64) - (_SUPPORT - 1) / 2.0
    pos = (offs + _SUPPORT / 2.0) / CELL_SIZE - 0.5
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    twice = (2 * offs).astype(np.int64)
    return twice, lo, frac


_OFF2, _CELL_LO, _CELL_FRAC = _grid_table()


def _check_margin(grads: GradientField, xs: np.ndarray, ys: np.ndarray, margin: int) -> np.ndarray:
    h, w = grads.shape
    return (xs >= margin) & (ys >= margin) & (xs < w - margin) & (ys < h - margin)


def orientation_histograms(
    grads: GradientField,
    xs: np.ndarray,
    ys: np.ndarray,
    radius: float = 1.0,
    sigma: float | None = None,
) -> np.ndarray:
    """36-bin magnitude histograms over a disc (or the 3x3 square for ``radius=1``).

    Returns an ``(n, 36)`` float array.  Without ``sigma`` the weights are the
    raw fixed-point magnitudes (exact integers); with ``sigma`` they are
    Gaussian-weighted real magnitudes.
    """
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    if radius == 1.0:
        inside = np.ones(dx.shape, dtype=bool)
    else:
        inside = dx * dx + dy * dy <= radius * radius
    dy = dy[inside]
    dx = dx[inside]
    py = ys[:, None] + dy[None, :]
    px = xs[:, None] + dx[None, :]
    dirs = grads.dir[py, px].astype(np.int64)
    if sigma is None:
        weights = grads.mag[py, px].astype(np.float64)
    else:
        g = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
        weights = grads.magnitude_float()[py, px] * g[None, :]
    n = xs.size
    idx = np.arange(n)[:, None] * DIR_BINS + dirs
    hist = np.bincount(idx.ravel(), weights=weights.ravel(), minlength=n * DIR_BINS)
    return hist.reshape(n, DIR_BINS)


def fold_histogram(hist36: np.ndarray) -> np.ndarray:
    """Merge adjacent 10-degree bins pairwise into 20-degree bins."""
    hist36 = np.asarray(hist36)
    return hist36[..., 0::2] + hist36[..., 1::2]


def bin_center(index, bins: int) -> np.ndarray:
    return (np.asarray(index, dtype=np.float64) + 0.5) * (360.0 / bins)


def _orientation_bins_batch(grads, xs, ys, variant):
    if variant == "optimized":
        hist = fold_histogram(orientation_histograms(grads, xs, ys))
        bins = FOLDED_BINS
    elif variant == "classic":
        hist = orientation_histograms(grads, xs, ys, CLASSIC_RADIUS, CLASSIC_SIGMA)
        bins = DIR_BINS
    else:
        raise ValueError(f"unknown orientation variant {variant!r}")
    # argmax takes the first maximum: ties go to the smaller angle
    return np.argmax(hist, axis=1), hist.sum(axis=1) > 0, bins


def main_orientation(grads: GradientField, c: Corner) -> float:
    """Dominant gradient direction around ``c``, as an 18-bin center angle.

    Histogram of the 3x3 neighbourhood (magnitude-weighted, no Gaussian
    window) in 36 bins, folded pairwise into 18; the center of the winning
    folded bin is returned (smaller angle on ties).
    """
    xs = np.array([c.x])
    ys = np.array([c.y])
    if not _check_margin(grads, xs, ys, 1)[0]:
        raise TooCloseToBorder(f"corner ({c.x}, {c.y}) has no full 3x3 neighbourhood")
    idx, ok, bins = _orientation_bins_batch(grads, xs, ys, "optimized")
    if not ok[0]:
        raise ZeroGradientNeighborhood(f"all gradients around ({c.x}, {c.y}) are zero")
    return float(bin_center(idx[0], bins))


def classic_orientation(grads: GradientField, c: Corner) -> float:
    """Gaussian-weighted (sigma 1.5, radius 4.5) 36-bin orientation, for the baseline."""
    xs = np.array([c.x])
    ys = np.array([c.y])
    if not _check_margin(grads, xs, ys, int(np.ceil(CLASSIC_RADIUS)))[0]:
        raise TooCloseToBorder(f"corner ({c.x}, {c.y}) too close to the border")
    idx, ok, bins = _orientation_bins_batch(grads, xs, ys, "classic")
    if not ok[0]:
        raise ZeroGradientNeighborhood(f"all gradients around ({c.x}, {c.y}) are zero")
    return float(bin_center(idx[0], bins))


def _raw_descriptors(grads: GradientField, xs, ys, main_idx, bins: int) -> np.ndarray:
    """Unnormalised ``(n, 128)`` histograms; ``main_idx`` indexes ``bins`` directions."""
    n = xs.size
    frac_bits = 16
    cos_raw, sin_raw = trig_lut_array(bins, frac_bits)
    cs = cos_raw[main_idx][:, None, None]
    sn = sin_raw[main_idx][:, None, None]
    v2 = _OFF2[None, :, None]
    u2 = _OFF2[None, None, :]
    # positions in units of 2**-(frac_bits + 1), rounded to the nearest pixel
    half = 1 << frac_bits
    shift = frac_bits + 1
    px = ((xs[:, None, None] << shift) + u2 * cs - v2 * sn + half) >> shift
    py = ((ys[:, None, None] << shift) + u2 * sn + v2 * cs + half) >> shift

    mag = grads.magnitude_float()[py, px]
    sample_bin = grads.dir[py, px].astype(np.int64) * bins // DIR_BINS
    rel = (sample_bin - main_idx[:, None, None]) % bins
    opos = rel * (N_ORIENT / bins)
    o_lo = np.floor(opos).astype(np.int64)
    o_frac = opos - o_lo

    out = np.zeros(n * DESCRIPTOR_SIZE, dtype=np.float64)
    base = (np.arange(n) * DESCRIPTOR_SIZE)[:, None, None]
    for kr in (0, 1):
        row = (_CELL_LO + kr)[None, :, None]
        wr = (_CELL_FRAC if kr else 1.0 - _CELL_FRAC)[None, :, None]
        row_ok = (row >= 0) & (row < N_CELLS)
        for kc in (0, 1):
            col = (_CELL_LO + kc)[None, None, :]
            wc = (_CELL_FRAC if kc else 1.0 - _CELL_FRAC)[None, None, :]
            cell_ok = row_ok & (col >= 0) & (col < N_CELLS)
            for ko in (0, 1):
                ob = (o_lo + ko) % N_ORIENT
                wo = o_frac if ko else 1.0 - o_frac
                idx = base + (row * N_CELLS + col) * N_ORIENT + ob
                wgt = mag * wr * wc * wo
                sel = np.broadcast_to(cell_ok, idx.shape)
                out += np.bincount(idx[sel], weights=wgt[sel], minlength=out.size)
    return out.reshape(n, DESCRIPTOR_SIZE)


def normalize_descriptor(raw: np.ndarray, clamp: float = CLAMP, return_stages: bool = False):
    """L2-normalise, clamp each entry at ``clamp``, renormalise.

    Works row-wise on ``(n, 128)`` input.  Rows with zero energy come back
    as zeros.  With ``return_stages`` the clamped intermediate is returned
    as well.
    """
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    norm = np.linalg.norm(raw, axis=1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    clamped = np.minimum(raw / safe, clamp)
    norm2 = np.linalg.norm(clamped, axis=1, keepdims=True)
    final = clamped / np.where(norm2 > 0, norm2, 1.0)
    if return_stages:
        return final, clamped
    return final


def build_descriptor(
    grads: GradientField,
    c: Corner,
    main_angle: float,
    orientation_bins: int = FOLDED_BINS,
) -> Descriptor:
    """128-element descriptor of ``c`` in the frame rotated by ``main_angle``.

    ``main_angle`` must be a bin center of an ``orientation_bins``-direction
    quantisation (18 for the optimized pipeline, 36 for the classic one).
    """
    xs = np.array([c.x], dtype=np.int64)
    ys = np.array([c.y], dtype=np.int64)
    if not _check_margin(grads, xs, ys, BORDER_MARGIN)[0]:
        raise TooCloseToBorder(
            f"corner ({c.x}, {c.y}) is closer than {BORDER_MARGIN} px to the border"
        )
    spacing = 360.0 / orientation_bins
    idx = int(round((main_angle % 360.0) / spacing - 0.5)) % orientation_bins
    raw = _raw_descriptors(grads, xs, ys, np.array([idx]), orientation_bins)
    if not raw.any():
        raise ZeroDescriptor(f"no gradient energy around ({c.x}, {c.y})")
    vec = normalize_descriptor(raw)[0]
    return Descriptor(c, float(bin_center(idx, orientation_bins)), vec)


def describe_all(
    grads: GradientField,
    corners,
    variant: str = "optimized",
) -> tuple[list[Descriptor], DescribeStats]:
    """Describe every usable corner; rejects are dropped and counted.

    ``variant`` selects the orientation stage: ``"optimized"`` (3x3,
    unweighted, 18 folded bins) or ``"classic"`` (Gaussian-weighted radius
    4.5 window, 36 bins).
    """
    corners = list(corners)
    stats = DescribeStats()
    if not corners:
        return [], stats
    xs = np.array([c.x for c in corners], dtype=np.int64)
    ys = np.array([c.y for c in corners], dtype=np.int64)

    inside = _check_margin(grads, xs, ys, BORDER_MARGIN)
    stats.rejected_border = int((~inside).sum())
    keep = np.nonzero(inside)[0]
    if keep.size == 0:
        return [], stats

    idx, ok, bins = _orientation_bins_batch(grads, xs[keep], ys[keep], variant)
    stats.rejected_zero_gradient = int((~ok).sum())
    keep, idx = keep[ok], idx[ok]
    if keep.size == 0:
        return [], stats

    raw = _raw_descriptors(grads, xs[keep], ys[keep], idx, bins)
    nonzero = raw.any(axis=1)
    stats.rejected_zero_descriptor = int((~nonzero).sum())
    keep, idx, raw = keep[nonzero], idx[nonzero], raw[nonzero]
    vecs = normalize_descriptor(raw)
    angles = bin_center(idx, bins)

    out = [Descriptor(corners[k], float(a), v) for k, a, v in zip(keep, angles, vecs)]
    stats.described = len(out)
    return out, stats


def descriptor_matrix(descs) -> np.ndarray:
    if not descs:
        return np.zeros((0, DESCRIPTOR_SIZE))
    return np.stack([d.vec for d in descs])


def descriptor_positions(descs) -> np.ndarray:
    if not descs:
        return np.zeros((0, 2))
    return np.array([[d.corner.x, d.corner.y] for d in descs], dtype=np.float64)


def descriptors_to_json(descs) -> str:
    return json.dumps([d.to_dict() for d in descs])


def descriptors_from_json(text: str) -> list[Descriptor]:
    out = []
    for d in json.loads(text):
        vec = np.asarray(d["vec"], dtype=np.float64)
        if vec.shape != (DESCRIPTOR_SIZE,):
            raise ValueError(f"descriptor vector must have {DESCRIPTOR_SIZE} entries")
        out.append(Descriptor(Corner(int(d["x"]), int(d["y"]), float(d.get("response", 0.0))), float(d["angle"]), vec))
    return out


def descriptors_to_bytes(descs) -> bytes:
    """Little-endian records: u16 x, u16 y, f32 angle, 128 x f32."""
    return b"".join(
        _BIN_RECORD.pack(d.corner.x, d.corner.y, d.main_angle_deg, *(float(v) for v in d.vec))
        for d in descs
    )


def descriptors_from_bytes(data: bytes) -> list[Descriptor]:
    if len(data) % _BIN_RECORD.size:
        raise ValueError(f"descriptor stream length {len(data)} is not a multiple of {_BIN_RECORD.size}")
    out = []
    for rec in _BIN_RECORD.iter_unpack(data):
        x, y, angle = rec[:3]
        out.append(Descriptor(Corner(x, y, 0.0), angle, np.asarray(rec[3:], dtype=np.float64)))
    return out
