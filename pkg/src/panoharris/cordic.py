"""Fixed-point CORDIC vectoring and trig lookup tables.

The vectoring datapath uses integer adds, subtracts and shifts only, plus a
single multiply by the reciprocal CORDIC gain at the end.  Inputs are
normalised (block floating point) before iterating so the angle is invariant
to power-of-two scaling of the input vector.

All functions are pure; the cached tables are immutable tuples/arrays marked
read-only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._jit import compile_kernel

DEFAULT_FRAC_BITS = 16
DEFAULT_ITERATIONS = 16
MAX_ITERATIONS = 30
MAX_FRAC_BITS = 30

# Normalised operands occupy [2**(_NORM_BITS - 1), 2**_NORM_BITS).
_NORM_BITS = 28


@dataclass(frozen=True)
class Fixed:
    """Signed Q-format number: ``value = raw / 2**frac_bits``."""

    raw: int
    frac_bits: int = DEFAULT_FRAC_BITS

    def __post_init__(self):
        if not 0 <= self.frac_bits <= MAX_FRAC_BITS:
            raise ValueError(f"frac_bits must be in [0, {MAX_FRAC_BITS}], got {self.frac_bits}")
        object.__setattr__(self, "raw", int(self.raw))

    @classmethod
    def from_float(cls, value: float, frac_bits: int = DEFAULT_FRAC_BITS) -> "Fixed":
        if not math.isfinite(value):
            raise ValueError(f"cannot represent {value!r} in fixed point")
        return cls(math.floor(value * (1 << frac_bits) + 0.5), frac_bits)

    def to_float(self) -> float:
        return self.raw / (1 << self.frac_bits)

    __float__ = to_float

    def _check(self, other: "Fixed") -> None:
        if not isinstance(other, Fixed):
            raise TypeError(f"expected Fixed, got {type(other).__name__}")
        if other.frac_bits != self.frac_bits:
            raise ValueError(
                f"frac_bits mismatch: Q.{self.frac_bits} vs Q.{other.frac_bits}"
            )

    def __add__(self, other: "Fixed") -> "Fixed":
        self._check(other)
        return Fixed(self.raw + other.raw, self.frac_bits)

    def __sub__(self, other: "Fixed") -> "Fixed":
        self._check(other)
        return Fixed(self.raw - other.raw, self.frac_bits)

    def __neg__(self) -> "Fixed":
        return Fixed(-self.raw, self.frac_bits)

    def __mul__(self, other: "Fixed") -> "Fixed":
        self._check(other)
        prod = self.raw * other.raw
        if self.frac_bits == 0:
            return Fixed(prod, 0)
        # round half up
        return Fixed((prod + (1 << (self.frac_bits - 1))) >> self.frac_bits, self.frac_bits)

    def __rshift__(self, n: int) -> "Fixed":
        return Fixed(self.raw >> n, self.frac_bits)

    def __lshift__(self, n: int) -> "Fixed":
        return Fixed(self.raw << n, self.frac_bits)

    def __lt__(self, other: "Fixed") -> bool:
        self._check(other)
        return self.raw < other.raw

    def __le__(self, other: "Fixed") -> bool:
        self._check(other)
        return self.raw <= other.raw

    def __gt__(self, other: "Fixed") -> bool:
        self._check(other)
        return self.raw > other.raw

    def __ge__(self, other: "Fixed") -> bool:
        self._check(other)
        return self.raw >= other.raw

    def __repr__(self) -> str:
        return f"Fixed({self.to_float()!r}, Q.{self.frac_bits})"


@dataclass(frozen=True)
class CordicResult:
    magnitude: Fixed
    angle_deg: Fixed

    def __post_init__(self):
        if self.magnitude.raw < 0:
            raise ValueError("magnitude must be non-negative")
        full = 360 << self.angle_deg.frac_bits
        if not 0 <= self.angle_deg.raw < full:
            raise ValueError("angle must lie in [0, 360)")


def _check_params(iterations: int, frac_bits: int) -> None:
    if not 1 <= iterations <= MAX_ITERATIONS:
        raise ValueError(f"iterations must be in [1, {MAX_ITERATIONS}], got {iterations}")
    if not 0 <= frac_bits <= MAX_FRAC_BITS:
        raise ValueError(f"frac_bits must be in [0, {MAX_FRAC_BITS}], got {frac_bits}")


@lru_cache(maxsize=None)
def atan_table(iterations: int = DEFAULT_ITERATIONS, frac_bits: int = DEFAULT_FRAC_BITS) -> tuple[int, ...]:
    """Raw ``atan(2**-i)`` in degrees for ``i < iterations``."""
    _check_params(iterations, frac_bits)
    scale = 1 << frac_bits
    return tuple(
        math.floor(math.degrees(math.atan(2.0 ** -i)) * scale + 0.5) for i in range(iterations)
    )


@lru_cache(maxsize=None)
def inverse_gain(iterations: int = DEFAULT_ITERATIONS, frac_bits: int = DEFAULT_FRAC_BITS) -> int:
    """Raw reciprocal of the CORDIC gain after ``iterations`` micro-rotations."""
    _check_params(iterations, frac_bits)
    gain = 1.0
    for i in range(iterations):
        gain *= math.sqrt(1.0 + 2.0 ** (-2 * i))
    return math.floor((1 << frac_bits) / gain + 0.5)


def _bit_length(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    bl = np.frexp(values.astype(np.float64))[1].astype(np.int64)
    # the float conversion may round up to the next power of two
    return bl - ((values >> np.maximum(bl - 1, 0)) == 0) * (values > 0)


def _vectoring_numpy(x, y, iterations, frac_bits):
    ax = np.abs(x)
    ay = np.abs(y)
    m = np.maximum(ax, ay)
    zero = m == 0
    shift = np.where(zero, 0, _NORM_BITS - _bit_length(m))
    left = np.maximum(shift, 0)
    right = np.maximum(-shift, 0)
    # normalised operands stay below 2**_NORM_BITS, so growth fits in int32
    cx = ((ax << left) >> right).astype(np.int32)
    cy = ((ay << left) >> right).astype(np.int32)
    z = np.zeros(cx.shape, dtype=np.int32 if frac_bits <= 22 else np.int64)
    mask = np.empty_like(cx)
    tmp = np.empty_like(cx)
    ztmp = np.empty_like(z)

    for i, step in enumerate(atan_table(iterations, frac_bits)):
        # mask is 0 where y > 0 (rotate clockwise) and -1 elsewhere;
        # (v ^ mask) - mask negates v under the mask
        np.subtract(cy, 1, out=mask)
        np.right_shift(mask, 31, out=mask)
        np.right_shift(cy, i, out=tmp)
        np.bitwise_xor(tmp, mask, out=tmp)
        np.subtract(tmp, mask, out=tmp)
        dy = cx >> i
        np.add(cx, tmp, out=cx)
        np.bitwise_xor(dy, mask, out=dy)
        np.subtract(dy, mask, out=dy)
        np.subtract(cy, dy, out=cy)
        np.bitwise_xor(mask, step, out=ztmp)
        np.subtract(ztmp, mask, out=ztmp)
        np.add(z, ztmp, out=z)

    cx = cx.astype(np.int64)
    z = z.astype(np.int64)
    quarter = 90 << frac_bits
    z = np.clip(z, 0, quarter)
    # zero-detect on either component pins axis-aligned vectors exactly
    z = np.where(ay == 0, 0, np.where(ax == 0, quarter, z))

    # unfold the first-quadrant angle back to the input's quadrant
    neg_x = x < 0
    neg_y = y < 0
    angle = np.where(
        neg_x,
        np.where(neg_y, 2 * quarter + z, 2 * quarter - z),
        np.where(neg_y, 4 * quarter - z, z),
    )
    angle = np.where(angle == 4 * quarter, 0, angle)

    # gain compensation, then undo the normalisation shift with rounding
    prod = cx * inverse_gain(iterations, frac_bits)
    total = frac_bits + shift
    down = np.maximum(total, 0)
    up = np.maximum(-total, 0)
    half = np.where(down > 0, np.int64(1) << np.maximum(down - 1, 0), 0)
    mag = ((prod + half) >> down) << up

    mag = np.where(zero, 0, mag)
    angle = np.where(zero, 0, angle)
    return mag, angle


def _vectoring_scalar_loop(x, y, table, inv_gain, frac_bits, mag, angle):
    # same arithmetic as _vectoring_numpy, one element at a time
    quarter = 90 << frac_bits
    for k in range(x.size):
        xv = x[k]
        yv = y[k]
        ax = abs(xv)
        ay = abs(yv)
        m = max(ax, ay)
        if m == 0:
            mag[k] = 0
            angle[k] = 0
            continue
        bl = math.frexp(float(m))[1]
        if (m >> (bl - 1)) == 0:
            bl -= 1
        s = _NORM_BITS - bl
        if s >= 0:
            cx = ax << s
            cy = ay << s
        else:
            cx = ax >> -s
            cy = ay >> -s
        z = 0
        for i in range(table.size):
            # mask is 0 when y > 0 (rotate clockwise), -1 otherwise
            msk = (cy - 1) >> 63
            dx = ((cy >> i) ^ msk) - msk
            dy = ((cx >> i) ^ msk) - msk
            cx += dx
            cy -= dy
            z += (table[i] ^ msk) - msk
        if z < 0:
            z = 0
        elif z > quarter:
            z = quarter
        if ay == 0:
            z = 0
        elif ax == 0:
            z = quarter
        if xv < 0:
            a = 2 * quarter + z if yv < 0 else 2 * quarter - z
        else:
            a = 4 * quarter - z if yv < 0 else z
        if a == 4 * quarter:
            a = 0
        angle[k] = a
        prod = cx * inv_gain
        total = frac_bits + s
        if total > 0:
            mag[k] = (prod + (1 << (total - 1))) >> total
        else:
            mag[k] = prod << -total


_vectoring_compiled = compile_kernel(_vectoring_scalar_loop)


def cordic_vectoring_array(
    x: np.ndarray,
    y: np.ndarray,
    iterations: int = DEFAULT_ITERATIONS,
    frac_bits: int = DEFAULT_FRAC_BITS,
    backend: str = "auto",
) -> tuple[np.ndarray, np.ndarray]:
    """Vectoring-mode CORDIC over arrays of raw fixed-point components.

    Parameters
    ----------
    x, y : array_like of int
        Raw Q-format components (same ``frac_bits``), any matching shape.
    iterations : int
        Number of micro-rotations, 1..30.
    frac_bits : int
        Fractional bits of both the inputs and the outputs.
    backend : {"auto", "numpy", "compiled"}
        ``"compiled"`` runs a numba per-element loop; ``"numpy"`` the
        vectorised form.  Both are bit-identical; ``"auto"`` prefers the
        compiled loop when numba is importable.

    Returns
    -------
    magnitude, angle : np.ndarray of int64
        Raw magnitude and raw angle in degrees within ``[0, 360)``.
        The zero vector maps to ``(0, 0)``.
    """
    _check_params(iterations, frac_bits)
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if backend not in ("auto", "numpy", "compiled"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "compiled" and _vectoring_compiled is None:
        raise RuntimeError("the compiled backend needs numba")
    if backend == "numpy" or _vectoring_compiled is None:
        return _vectoring_numpy(x, y, iterations, frac_bits)

    xf = np.ascontiguousarray(x).ravel()
    yf = np.ascontiguousarray(y).ravel()
    mag = np.empty(xf.size, dtype=np.int64)
    ang = np.empty(xf.size, dtype=np.int64)
    table = np.array(atan_table(iterations, frac_bits), dtype=np.int64)
    _vectoring_compiled(xf, yf, table, inverse_gain(iterations, frac_bits), frac_bits, mag, ang)
    return mag.reshape(x.shape), ang.reshape(x.shape)


def cordic_vectoring(x: Fixed, y: Fixed, iterations: int = DEFAULT_ITERATIONS) -> CordicResult:
    """Magnitude and angle of ``(x, y)``; ``(0, 0)`` maps to magnitude 0, angle 0.

    >>> r = cordic_vectoring(Fixed.from_float(3.0), Fixed.from_float(4.0))
    >>> round(r.magnitude.to_float(), 3), round(r.angle_deg.to_float(), 2)
    (5.0, 53.13)
    """
    x._check(y)
    mag, ang = cordic_vectoring_array(
        np.array([x.raw]), np.array([y.raw]), iterations, x.frac_bits
    )
    return CordicResult(Fixed(int(mag[0]), x.frac_bits), Fixed(int(ang[0]), x.frac_bits))


def build_trig_lut(bins: int, frac_bits: int = DEFAULT_FRAC_BITS) -> list[tuple[Fixed, Fixed]]:
    """(cos, sin) of each bin-center angle ``(i + 0.5) * 360 / bins``."""
    cos_raw, sin_raw = trig_lut_array(bins, frac_bits)
    return [(Fixed(int(c), frac_bits), Fixed(int(s), frac_bits)) for c, s in zip(cos_raw, sin_raw)]


@lru_cache(maxsize=None)
def trig_lut_array(bins: int, frac_bits: int = DEFAULT_FRAC_BITS) -> tuple[np.ndarray, np.ndarray]:
    """Raw int64 arrays behind :func:`build_trig_lut` (read-only, cached)."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    scale = 1 << frac_bits
    cos_raw = np.empty(bins, dtype=np.int64)
    sin_raw = np.empty(bins, dtype=np.int64)
    for i in range(bins):
        theta = math.radians((i + 0.5) * 360.0 / bins)
        cos_raw[i] = math.floor(math.cos(theta) * scale + 0.5)
        sin_raw[i] = math.floor(math.sin(theta) * scale + 0.5)
    cos_raw.flags.writeable = False
    sin_raw.flags.writeable = False
    return cos_raw, sin_raw


def dump_lut(lut: list[tuple[Fixed, Fixed]], path) -> None:
    """Write one ``index cos sin`` line per entry."""
    lines = [f"{i} {c.to_float()!r} {s.to_float()!r}\n" for i, (c, s) in enumerate(lut)]
    Path(path).write_text("".join(lines))


def load_lut(path, frac_bits: int = DEFAULT_FRAC_BITS) -> list[tuple[Fixed, Fixed]]:
    out = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        _, c, s = line.split()
        out.append((Fixed.from_float(float(c), frac_bits), Fixed.from_float(float(s), frac_bits)))
    return out
