import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from panoharris.errors import EmptyResponse, ImageTooSmall
from panoharris.harris import (
    Corner,
    ResponseMap,
    adaptive_threshold,
    corner_response,
    corners_from_json,
    corners_to_json,
    detect_corners,
    k_as_fraction,
    non_max_suppress,
)
from panoharris._jit import HAVE_NUMBA
from panoharris.pixels import GrayImage, compute_gradients


def nms_oracle(r, threshold, radius, border):
    """Exhaustive NMS straight from the definition."""
    h, w = r.shape
    out = []
    for y in range(border, h - border):
        for x in range(border, w - border):
            v = r[y, x]
            if v < threshold:
                continue
            ok = True
            for ny in range(max(0, y - radius), min(h, y + radius + 1)):
                for nx in range(max(0, x - radius), min(w, x + radius + 1)):
                    if (ny, nx) == (y, x):
                        continue
                    u = r[ny, nx]
                    if u > v or (u == v and (ny, nx) < (y, x)):
                        ok = False
            if ok:
                out.append((y, x, v))
    out.sort(key=lambda t: (-t[2], t[0], t[1]))
    return [Corner(x, y, float(v)) for y, x, v in out]


def response_oracle(img, window, k):
    g = compute_gradients(img)
    ix = g.ix.astype(object)
    iy = g.iy.astype(object)
    h, w = ix.shape
    kf = k_as_fraction(k)
    r = np.zeros((h, w))
    half = window // 2
    border = half + 1
    for y in range(border, h - border):
        for x in range(border, w - border):
            sx = ix[y - half:y + half + 1, x - half:x + half + 1]
            sy = iy[y - half:y + half + 1, x - half:x + half + 1]
            a = int((sx * sx).sum())
            b = int((sy * sy).sum())
            c = int((sx * sy).sum())
            num = kf.denominator * (a * b - c * c) - kf.numerator * (a + b) ** 2
            r[y, x] = float(num) / kf.denominator
    return r


def random_map(seed, shape=(24, 30), levels=None, border=3):
    rng = np.random.default_rng(seed)
    if levels:
        r = rng.integers(0, levels, shape).astype(np.float64)
    else:
        r = rng.normal(size=shape)
    r[:border] = 0
    r[-border:] = 0
    r[:, :border] = 0
    r[:, -border:] = 0
    return ResponseMap(r, border)


def square_image(size=48, lo=20, hi=220, at=(20, 20)):
    a = np.full((size, size), lo, dtype=np.uint8)
    a[at[1]:, at[0]:] = hi
    return GrayImage(a)


def test_k_fraction():
    assert k_as_fraction(0.04) == pytest.approx(1 / 25)
    assert k_as_fraction(0.04).denominator == 25


def test_constant_image_zero_response():
    g = compute_gradients(GrayImage(np.full((32, 32), 77, dtype=np.uint8)))
    assert not corner_response(g).r.any()


def test_step_edge_suppressed():
    a = np.zeros((32, 32), dtype=np.uint8)
    a[:, 16:] = 255
    r = corner_response(compute_gradients(GrayImage(a))).r
    on_edge = r[6:-6, 15:17]
    assert (on_edge < 0).all()
    assert r.max() <= 0


def test_square_corner_peak():
    r = corner_response(compute_gradients(square_image())).r
    y, x = np.unravel_index(np.argmax(r), r.shape)
    # (20, 20) is the square's corner pixel; the box window pulls the peak
    # at most one pixel into the square
    assert abs(x - 20) <= 1 and abs(y - 20) <= 1


@pytest.mark.parametrize("window", [3, 5, 7])
@pytest.mark.parametrize("k", [0.04, 0.05, 0.06])
def test_response_matches_exact_oracle(window, k):
    rng = np.random.default_rng(window)
    img = GrayImage(rng.integers(0, 256, (20, 22)).astype(np.uint8))
    resp = corner_response(compute_gradients(img), window, k)
    assert resp.border == window // 2 + 1
    assert np.array_equal(resp.r, response_oracle(img, window, k))


@pytest.mark.skipif(not HAVE_NUMBA, reason="needs numba")
def test_response_backends_agree(texture256):
    g = compute_gradients(texture256)
    for window in (3, 5, 7):
        a = corner_response(g, window, 0.05)
        b = corner_response(g, window, 0.05, backend="numpy")
        assert np.array_equal(a.r, b.r)


def test_response_border_zero(texture256):
    resp = corner_response(compute_gradients(texture256))
    assert not resp.r[~resp.valid_mask()].any()
    assert resp.r.shape == texture256.shape


def test_response_parameter_checks(texture256):
    g = compute_gradients(texture256)
    with pytest.raises(ValueError):
        corner_response(g, 4)
    with pytest.raises(ValueError):
        corner_response(g, 5, 0.1)
    with pytest.raises(ImageTooSmall):
        corner_response(compute_gradients(GrayImage(np.zeros((6, 6), dtype=np.uint8))))


def test_single_peak():
    r = np.zeros((20, 20))
    r[10, 12] = 5.0
    assert non_max_suppress(ResponseMap(r, 3), 1.0) == [Corner(12, 10, 5.0)]


def test_adjacent_tie_keeps_first_in_scan_order():
    r = np.zeros((20, 20))
    r[10, 10] = r[10, 11] = 5.0
    assert non_max_suppress(ResponseMap(r, 3), 1.0) == [Corner(10, 10, 5.0)]
    r = np.zeros((20, 20))
    r[10, 10] = r[9, 11] = 5.0
    assert non_max_suppress(ResponseMap(r, 3), 1.0) == [Corner(11, 9, 5.0)]


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("radius", [1, 2, 3])
def test_nms_matches_oracle(seed, radius):
    levels = 4 if seed % 2 else None  # odd seeds are tie-heavy
    resp = random_map(seed, levels=levels)
    thr = 0.5 if levels else 0.0
    expect = nms_oracle(resp.r, thr, radius, resp.border)
    assert non_max_suppress(resp, thr, radius) == expect
    assert non_max_suppress(resp, thr, radius, backend="numpy") == expect


@given(st.integers(0, 10_000), st.floats(-1.0, 2.0))
def test_monotone_threshold(seed, t):
    resp = random_map(seed)
    low = set((c.x, c.y) for c in non_max_suppress(resp, t))
    high = set((c.x, c.y) for c in non_max_suppress(resp, t + 0.5))
    assert high <= low


def test_output_sorted_and_above_threshold():
    resp = random_map(3, shape=(60, 60))
    cs = non_max_suppress(resp, 0.3)
    vals = [c.response for c in cs]
    assert vals == sorted(vals, reverse=True)
    assert all(v >= 0.3 for v in vals)
    b = resp.border
    assert all(b <= c.x < 60 - b and b <= c.y < 60 - b for c in cs)


def test_nms_radius_check():
    with pytest.raises(ValueError):
        non_max_suppress(random_map(0), 0.0, 0)


def test_threshold_alpha_branch():
    r = np.zeros((40, 40))
    for i, v in enumerate([1000, 50, 40, 30, 20]):
        r[8 + 6 * i, 10] = v
    r[30, 30] = 5  # below alpha * max
    assert adaptive_threshold(ResponseMap(r, 3), 500, 0.01) == 10.0


def test_threshold_cap_with_ties():
    r = np.zeros((130, 130))
    r[5:125:4, 5:125:4] = 7.0  # 30 x 30 = 900 equal maxima
    resp = ResponseMap(r, 3)
    assert adaptive_threshold(resp, 500) == 7.0
    cs = detect_corners(resp, 500)
    assert len(cs) == 500
    # ties cut in scan order
    assert [(c.y, c.x) for c in cs] == sorted((c.y, c.x) for c in cs)
    assert (cs[0].y, cs[0].x) == (5, 5)


def test_threshold_empty_response():
    with pytest.raises(EmptyResponse):
        adaptive_threshold(ResponseMap(np.zeros((20, 20)), 3))
    assert detect_corners(ResponseMap(np.zeros((20, 20)), 3)) == []


def test_threshold_parameter_checks():
    resp = random_map(0)
    with pytest.raises(ValueError):
        adaptive_threshold(resp, 0)
    with pytest.raises(ValueError):
        adaptive_threshold(resp, 10, 1.5)
    with pytest.raises(ValueError):
        detect_corners(resp, 0)


@given(st.integers(0, 10_000), st.integers(1, 40))
def test_cap_guarantee(seed, cap):
    resp = random_map(seed, shape=(40, 40), levels=3 if seed % 3 == 0 else None)
    if resp.r.max() <= 0:
        return
    cs = detect_corners(resp, cap, 0.01, 1)
    assert len(cs) <= cap
    thr = adaptive_threshold(resp, cap, 0.01, 1)
    assert all(c.response >= thr for c in cs)


def test_detect_equals_threshold_then_nms(texture256):
    resp = corner_response(compute_gradients(texture256))
    for cap in (10, 100, 512):
        thr = adaptive_threshold(resp, cap)
        assert detect_corners(resp, cap) == non_max_suppress(resp, thr)[:cap]


def _vertex_offsets(cs):
    # interior vertices sit between pixels 8k - 1 and 8k, i.e. at 8k - 0.5
    return [max(abs(c.x + 0.5 - 8 * round((c.x + 0.5) / 8)), abs(c.y + 0.5 - 8 * round((c.y + 0.5) / 8))) for c in cs]


def test_checkerboard_vertices(checkerboard):
    cs = detect_corners(corner_response(compute_gradients(checkerboard), window=3))
    assert len(cs) == 49
    assert max(_vertex_offsets(cs)) <= 1


def test_checkerboard_plateau_default_window(checkerboard):
    # a 5x5 box sees the same X-junction from a 4x4 block of centres; the
    # scan-order tie rule keeps the block's top-left pixel
    cs = detect_corners(corner_response(compute_gradients(checkerboard)))
    assert len(cs) == 49
    assert max(_vertex_offsets(cs)) == 1.5


def test_corner_json_roundtrip():
    cs = [Corner(3, 4, 1.5), Corner(10, 2, -0.25)]
    assert corners_from_json(corners_to_json(cs)) == cs
