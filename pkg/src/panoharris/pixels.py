"""Frame ingestion, grayscale conversion and the shared gradient pass."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .cordic import DEFAULT_FRAC_BITS, DEFAULT_ITERATIONS, cordic_vectoring_array
from .errors import (
    CorruptImage,
    DimensionMismatch,
    ImageFileNotFound,
    ImageTooSmall,
    UnsupportedFormat,
)

DIR_BINS = 36
DIR_BIN_DEG = 360 // DIR_BINS

_PGM_MAGIC = b"P5"
_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-channel 8-bit image; ``data`` is a row-major ``(height, width)`` array."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DimensionMismatch(f"expected a 2-D array, got shape {data.shape}")
        if data.dtype != np.uint8:
            if data.size and (np.any(data < 0) or np.any(data > 255) or np.any(data != np.round(data))):
                raise ValueError("pixel values must be integers in [0, 255]")
            data = data.astype(np.uint8)
        data = np.ascontiguousarray(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    @classmethod
    def from_values(cls, width: int, height: int, values) -> "GrayImage":
        values = np.asarray(values)
        if values.size != width * height:
            raise DimensionMismatch(
                f"{values.size} values for a {width}x{height} image"
            )
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)


def as_gray_image(img) -> GrayImage:
    return img if isinstance(img, GrayImage) else GrayImage(np.asarray(img))


@dataclass(frozen=True, eq=False)
class GradientField:
    """Per-pixel Sobel derivatives with CORDIC magnitude and 10-degree direction bins.

    ``mag`` holds raw fixed-point values with ``frac_bits`` fractional bits.
    The one-pixel border is all zero.
    """

    ix: np.ndarray
    iy: np.ndarray
    mag: np.ndarray
    dir: np.ndarray
    frac_bits: int = DEFAULT_FRAC_BITS
    cordic_iterations: int = DEFAULT_ITERATIONS

    @property
    def width(self) -> int:
        return self.ix.shape[1]

    @property
    def height(self) -> int:
        return self.ix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.ix.shape

    def magnitude_float(self) -> np.ndarray:
        return self.mag / float(1 << self.frac_bits)


def to_grayscale(r, g, b) -> GrayImage:
    """Luma ``round(0.299 r + 0.587 g + 0.114 b)`` in exact integer arithmetic."""
    r = np.asarray(r, dtype=np.int64)
    g = np.asarray(g, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if not (r.shape == g.shape == b.shape):
        raise DimensionMismatch(f"channel shapes differ: {r.shape}, {g.shape}, {b.shape}")
    luma = (299 * r + 587 * g + 114 * b + 500) // 1000
    luma = np.clip(luma, 0, 255).astype(np.uint8)
    if luma.ndim == 0:
        luma = luma.reshape(1, 1)
    return GrayImage(luma)


def _parse_pgm(raw: bytes) -> GrayImage:
    tokens = []
    pos = 2
    n = len(raw)
    while len(tokens) < 3:
        while pos < n and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos:pos + 1] == b"#":
            while pos < n and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not raw[pos:pos + 1].isspace() and raw[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptImage("truncated PGM header")
        tokens.append(raw[start:pos])
    if pos >= n or not raw[pos:pos + 1].isspace():
        raise CorruptImage("truncated PGM header")
    pos += 1
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise CorruptImage(f"bad PGM header: {exc}") from None
    if width <= 0 or height <= 0:
        raise CorruptImage(f"bad PGM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormat(f"only 8-bit PGM with maxval 255 is supported (maxval={maxval})")
    body = raw[pos:pos + width * height]
    if len(body) < width * height:
        raise CorruptImage(f"PGM data truncated: {len(body)} of {width * height} bytes")
    return GrayImage(np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy())


def _decode_png(raw: bytes) -> GrayImage:
    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                return GrayImage(np.array(im, dtype=np.uint8))
            if mode in ("I;16", "I;16B", "I", "F"):
                raise UnsupportedFormat(f"unsupported PNG pixel mode {mode}")
            if mode == "LA":
                return GrayImage(np.array(im.getchannel("L"), dtype=np.uint8))
            rgb = np.array(im.convert("RGB"), dtype=np.uint8)
    except UnsupportedFormat:
        raise
    except (OSError, SyntaxError, UnidentifiedImageError, ValueError) as exc:
        raise CorruptImage(f"cannot decode PNG: {exc}") from None
    return to_grayscale(rgb[..., 0], rgb[..., 1], rgb[..., 2])


def load_image(path) -> GrayImage:
    """Read a binary PGM (P5, maxval 255) or PNG file as a grayscale image."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise ImageFileNotFound(f"no such file: {path}") from None
    except IsADirectoryError:
        raise ImageFileNotFound(f"not a file: {path}") from None
    if raw.startswith(_PGM_MAGIC):
        return _parse_pgm(raw)
    if raw.startswith(_PNG_MAGIC):
        return _decode_png(raw)
    if len(raw) < 8 and (_PNG_MAGIC.startswith(raw) and raw):
        raise CorruptImage(f"truncated PNG: {path}")
    raise UnsupportedFormat(f"unrecognised image format: {path}")


def encode_pgm(img: GrayImage) -> bytes:
    img = as_gray_image(img)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.data.tobytes()


def save_image(img, path) -> None:
    """Write as PGM or PNG depending on the file suffix."""
    img = as_gray_image(img)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        path.write_bytes(encode_pgm(img))
    elif suffix == ".png":
        buf = io.BytesIO()
        Image.fromarray(img.data, mode="L").save(buf, format="PNG")
        path.write_bytes(buf.getvalue())
    else:
        raise UnsupportedFormat(f"cannot write {suffix or 'suffix-less'} files; use .pgm or .png")


def sobel(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """3x3 Sobel derivatives (x right, y down) with a zero one-pixel border."""
    a = np.asarray(data, dtype=np.int32)
    h, w = a.shape
    ix = np.zeros((h, w), dtype=np.int32)
    iy = np.zeros((h, w), dtype=np.int32)
    if h < 3 or w < 3:
        return ix, iy
    left = a[:-2, :-2] + 2 * a[1:-1, :-2] + a[2:, :-2]
    right = a[:-2, 2:] + 2 * a[1:-1, 2:] + a[2:, 2:]
    top = a[:-2, :-2] + 2 * a[:-2, 1:-1] + a[:-2, 2:]
    bottom = a[2:, :-2] + 2 * a[2:, 1:-1] + a[2:, 2:]
    ix[1:-1, 1:-1] = right - left
    iy[1:-1, 1:-1] = bottom - top
    return ix, iy


def direction_bins(angle_raw: np.ndarray, frac_bits: int = DEFAULT_FRAC_BITS) -> np.ndarray:
    return (np.asarray(angle_raw) // (DIR_BIN_DEG << frac_bits)).astype(np.uint8)


def orientation_from_derivatives(
    ix: np.ndarray,
    iy: np.ndarray,
    cordic_iters: int = DEFAULT_ITERATIONS,
    frac_bits: int = DEFAULT_FRAC_BITS,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw magnitude and direction-bin planes from integer derivatives."""
    ix64 = np.asarray(ix, dtype=np.int64) << frac_bits
    iy64 = np.asarray(iy, dtype=np.int64) << frac_bits
    mag, ang = cordic_vectoring_array(ix64, iy64, cordic_iters, frac_bits)
    return mag, direction_bins(ang, frac_bits)


def compute_gradients(
    img,
    cordic_iters: int = DEFAULT_ITERATIONS,
    frac_bits: int = DEFAULT_FRAC_BITS,
) -> GradientField:
    """Sobel derivatives plus CORDIC magnitude/direction for every pixel.

    >>> ramp = GrayImage(np.tile(np.arange(8, dtype=np.uint8), (8, 1)))
    >>> g = compute_gradients(ramp)
    >>> int(g.ix[4, 4]), int(g.iy[4, 4]), int(g.dir[4, 4])
    (8, 0, 0)
    """
    img = as_gray_image(img)
    if img.width < 3 or img.height < 3:
        raise ImageTooSmall(f"image {img.width}x{img.height} is smaller than the 3x3 derivative kernel")
    ix, iy = sobel(img.data)
    mag, dirs = orientation_from_derivatives(ix, iy, cordic_iters, frac_bits)
    for plane in (ix, iy, mag, dirs):
        plane.flags.writeable = False
    return GradientField(ix, iy, mag, dirs, frac_bits, cordic_iters)
