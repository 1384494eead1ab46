import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panoharris.cordic import build_trig_lut
from panoharris.descriptor import (
    BORDER_MARGIN,
    CLAMP,
    DESCRIPTOR_SIZE,
    FOLDED_BINS,
    Descriptor,
    build_descriptor,
    classic_orientation,
    describe_all,
    descriptors_from_bytes,
    descriptors_from_json,
    descriptors_to_bytes,
    descriptors_to_json,
    fold_histogram,
    main_orientation,
    normalize_descriptor,
    orientation_histograms,
)
from panoharris.errors import TooCloseToBorder, ZeroDescriptor, ZeroGradientNeighborhood
from panoharris.harris import Corner
from panoharris.pixels import GradientField, GrayImage, compute_gradients


def field_from(mag, dirs):
    mag = np.asarray(mag, dtype=np.int64)
    dirs = np.asarray(dirs, dtype=np.uint8)
    z = np.zeros(mag.shape, dtype=np.int32)
    return GradientField(z, z, mag, dirs)


def orientation_oracle(mag, dirs, x, y):
    """Float 36-bin histogram of the 3x3 block, folded, first maximum wins."""
    hist = [0.0] * 36
    for yy in range(y - 1, y + 2):
        for xx in range(x - 1, x + 2):
            hist[int(dirs[yy, xx])] += float(mag[yy, xx])
    folded = [hist[2 * j] + hist[2 * j + 1] for j in range(18)]
    best = max(range(18), key=lambda j: (folded[j], -j))
    return best * 20.0 + 10.0


def descriptor_oracle(grads, x, y, main_idx, bins=FOLDED_BINS):
    """Per-sample loop over the 12x12 grid with explicit bilinear weights."""
    cos_f, sin_f = build_trig_lut(bins)[main_idx]
    cs, sn = cos_f.raw, sin_f.raw
    mag = grads.magnitude_float()
    out = np.zeros((4, 4, 8))
    for vi in range(12):
        for ui in range(12):
            u2, v2 = 2 * ui - 11, 2 * vi - 11  # twice the half-pel offsets
            px = ((x << 17) + u2 * cs - v2 * sn + (1 << 16)) >> 17
            py = ((y << 17) + u2 * sn + v2 * cs + (1 << 16)) >> 17
            m = mag[py, px]
            rel = (int(grads.dir[py, px]) * bins // 36 - main_idx) % bins
            o = rel * 8.0 / bins
            r_pos = (vi + 0.5) / 3.0 - 0.5
            c_pos = (ui + 0.5) / 3.0 - 0.5
            r0, c0, o0 = math.floor(r_pos), math.floor(c_pos), math.floor(o)
            dr, dc, do = r_pos - r0, c_pos - c0, o - o0
            for k in (0, 1):
                for mm in (0, 1):
                    for n in (0, 1):
                        r, c = r0 + k, c0 + mm
                        if not (0 <= r < 4 and 0 <= c < 4):
                            continue
                        w = (dr ** k * (1 - dr) ** (1 - k)) * (dc ** mm * (1 - dc) ** (1 - mm)) * (do ** n * (1 - do) ** (1 - n))
                        out[r, c, (o0 + n) % 8] += m * w
    return out.ravel()


@pytest.fixture(scope="module")
def grads(texture256):
    return compute_gradients(texture256)


def test_orientation_single_direction():
    g = field_from(np.full((5, 5), 100), np.zeros((5, 5)))
    assert main_orientation(g, Corner(2, 2, 1.0)) == 10.0


def test_orientation_majority_mass():
    dirs = np.zeros((5, 5))
    dirs[1, 1:4] = 9
    dirs[2, 1:3] = 9  # five pixels near 90 degrees, four near 0
    g = field_from(np.full((5, 5), 100), dirs)
    assert main_orientation(g, Corner(2, 2, 1.0)) == 90.0


def test_orientation_tie_goes_to_smaller_angle():
    dirs = np.full((5, 5), 20)
    dirs[1, :] = 2
    dirs[2, 1] = 2
    mag = np.full((5, 5), 10)
    mag[2, 2] = 0  # 4 + 4 split
    assert main_orientation(field_from(mag, dirs), Corner(2, 2, 1.0)) == 30.0


@given(st.integers(0, 2**32 - 1))
def test_orientation_matches_float_oracle(seed):
    rng = np.random.default_rng(seed)
    mag = rng.integers(0, 4, (5, 5)) * rng.integers(1, 2**20)
    dirs = rng.integers(0, 36, (5, 5))
    g = field_from(mag, dirs)
    if not mag[1:4, 1:4].any():
        with pytest.raises(ZeroGradientNeighborhood):
            main_orientation(g, Corner(2, 2, 1.0))
        return
    assert main_orientation(g, Corner(2, 2, 1.0)) == orientation_oracle(mag, dirs, 2, 2)


def test_orientation_border():
    with pytest.raises(TooCloseToBorder):
        main_orientation(field_from(np.ones((5, 5)), np.zeros((5, 5))), Corner(0, 2, 1.0))


def test_fold_pairs_adjacent_bins():
    h = np.arange(36)
    assert fold_histogram(h).tolist() == [4 * j + 1 for j in range(18)]


def test_histogram_is_raw_magnitude_sum(grads):
    xs, ys = np.array([30, 100]), np.array([40, 90])
    hist = orientation_histograms(grads, xs, ys)
    for k in range(2):
        block = grads.mag[ys[k] - 1:ys[k] + 2, xs[k] - 1:xs[k] + 2]
        assert hist[k].sum() == block.sum()


def test_classic_orientation_is_36_bin_center(grads):
    a = classic_orientation(grads, Corner(100, 100, 1.0))
    assert (a - 5.0) % 10.0 == 0.0


def test_uniform_direction_energy_in_bin_zero():
    ramp = GrayImage(np.tile((np.arange(40) * 3).astype(np.uint8), (40, 1)))
    g = compute_gradients(ramp)
    c = Corner(20, 20, 1.0)
    angle = main_orientation(g, c)
    assert angle == 10.0
    d = build_descriptor(g, c, angle)
    bin0 = d.vec.reshape(16, 8)[:, 0]
    assert np.isclose((bin0 ** 2).sum(), 1.0)
    assert not d.vec.reshape(16, 8)[:, 1:].any()


@pytest.mark.parametrize("seed", range(6))
def test_descriptor_matches_loop_oracle(grads, seed):
    rng = np.random.default_rng(seed)
    x, y = (int(v) for v in rng.integers(BORDER_MARGIN, 256 - BORDER_MARGIN, 2))
    c = Corner(x, y, 1.0)
    angle = main_orientation(grads, c)
    idx = int(angle // 20)
    d = build_descriptor(grads, c, angle)
    raw = descriptor_oracle(grads, x, y, idx)
    assert np.allclose(d.vec, normalize_descriptor(raw)[0], atol=1e-12)


def test_descriptor_invariants(grads):
    rng = np.random.default_rng(0)
    pts = rng.integers(BORDER_MARGIN, 256 - BORDER_MARGIN, (100, 2))
    corners = [Corner(int(x), int(y), 1.0) for x, y in pts]
    descs, stats = describe_all(grads, corners)
    assert len(descs) == 100 and stats.rejected == 0 and stats.described == 100
    for d in descs:
        assert d.vec.shape == (DESCRIPTOR_SIZE,)
        assert (d.vec >= 0).all()
        assert abs(np.linalg.norm(d.vec) - 1.0) <= 1e-6
        assert (d.main_angle_deg - 10.0) % 20.0 == 0.0 and 0 <= d.main_angle_deg < 360


def test_normalization_stages():
    rng = np.random.default_rng(2)
    raw = rng.exponential(size=(50, DESCRIPTOR_SIZE)) ** 4
    final, clamped = normalize_descriptor(raw, return_stages=True)
    assert (clamped <= CLAMP + 1e-6).all()
    assert np.allclose(np.linalg.norm(final, axis=1), 1.0)
    assert np.allclose(final, clamped / np.linalg.norm(clamped, axis=1, keepdims=True))


def test_describe_all_order_and_rejects(grads):
    corners = [Corner(100, 100, 3.0), Corner(2, 50, 2.0), Corner(50, 60, 1.0)]
    descs, stats = describe_all(grads, corners)
    assert [d.corner for d in descs] == [corners[0], corners[2]]
    assert stats.rejected_border == 1 and stats.rejected == 1


def test_describe_all_empty(grads):
    descs, stats = describe_all(grads, [])
    assert descs == [] and stats.rejected == 0


def test_describe_all_single_border_corner(grads):
    descs, stats = describe_all(grads, [Corner(2, 128, 1.0)])
    assert descs == [] and stats.rejected == 1 and stats.rejected_border == 1


def test_flat_patch_rejected():
    img = np.full((64, 64), 100, dtype=np.uint8)
    img[:, 40:] = 200  # gradients only far to the right
    g = compute_gradients(GrayImage(img))
    descs, stats = describe_all(g, [Corner(15, 30, 1.0)])
    assert descs == [] and stats.rejected_zero_gradient == 1
    with pytest.raises(ZeroDescriptor):
        build_descriptor(g, Corner(15, 30, 1.0), 10.0)
    with pytest.raises(TooCloseToBorder):
        build_descriptor(g, Corner(5, 30, 1.0), 10.0)


@given(st.integers(0, 3))
def test_brightness_power_of_two(k):
    rng = np.random.default_rng(k)
    base = rng.integers(0, 256 >> 3, (48, 48)).astype(np.uint8) << 3
    a = compute_gradients(GrayImage(base))
    b = compute_gradients(GrayImage(base >> k))
    c = Corner(24, 24, 1.0)
    da = build_descriptor(a, c, main_orientation(a, c))
    db = build_descriptor(b, c, main_orientation(b, c))
    assert da.main_angle_deg == db.main_angle_deg
    assert np.abs(da.vec - db.vec).max() <= 1e-6


def test_deterministic(grads):
    corners = [Corner(int(x), int(y), 1.0) for x, y in [(50, 50), (120, 80), (200, 200)]]
    a, _ = describe_all(grads, corners)
    b, _ = describe_all(grads, corners)
    assert all(np.array_equal(x.vec, y.vec) for x, y in zip(a, b))


def test_serialisation_roundtrip(grads):
    descs, _ = describe_all(grads, [Corner(60, 70, 5.0), Corner(150, 40, 2.0)])
    back = descriptors_from_json(descriptors_to_json(descs))
    assert [(d.corner.x, d.corner.y, d.main_angle_deg) for d in back] == [
        (d.corner.x, d.corner.y, d.main_angle_deg) for d in descs
    ]
    assert all(np.array_equal(a.vec, b.vec) for a, b in zip(back, descs))
    raw = descriptors_to_bytes(descs)
    assert len(raw) == 2 * (2 + 2 + 4 + 4 * DESCRIPTOR_SIZE)
    back = descriptors_from_bytes(raw)
    assert all(np.allclose(a.vec, b.vec, atol=1e-7) for a, b in zip(back, descs))
    assert isinstance(back[0], Descriptor)


@pytest.mark.xfail(
    strict=True,
    reason="90 deg is 4.5 folded 20-deg bins, so the rotated sampling grid never lines up; median distance is about 0.41",
)
def test_rot90_distance_bound(master):
    rng = np.random.default_rng(0)
    xs = rng.integers(0, master.width - 65, 200)
    ys = rng.integers(0, master.height - 65, 200)
    c = Corner(32, 32, 1.0)
    dists = []
    for x, y in zip(xs, ys):
        p = master.data[y:y + 65, x:x + 65]
        pair = []
        for q in (p, np.rot90(p)):
            g = compute_gradients(GrayImage(np.ascontiguousarray(q)))
            pair.append(build_descriptor(g, c, main_orientation(g, c)).vec)
        dists.append(float(np.linalg.norm(pair[0] - pair[1])))
    assert max(dists) <= 0.3
