import json

import numpy as np
import pytest

from panoharris.config import Config
from panoharris.errors import MasterTooSmall, MotionEnvelopeError, UsageError
from panoharris.evaluation import (
    BenchReport,
    emit_report,
    generate_sequence,
    match_correctness,
    required_master_size,
    run_bench,
    run_variant,
    textured_master,
    timings_csv,
    transform_error,
)
from panoharris.matcher import FrameTransform
from panoharris.pipeline import CLASSIC, OPTIMIZED, extract_features, match_pair


def test_textured_master_deterministic():
    a = textured_master(200, 100, seed=4)
    b = textured_master(200, 100, seed=4)
    assert a == b and a.shape == (100, 200)
    assert a.data.min() == 16 and a.data.max() == 240


def test_zero_motion_pair(master):
    seq = generate_sequence(master, 2, 0)
    assert seq.frames[0] == seq.frames[1]
    assert seq.pair_truth(1) == FrameTransform(0.0, 0.0, 0.0)


def test_pan_offsets(master):
    seq = generate_sequence(master, 5, 48)
    for k, f in enumerate(seq.frames):
        assert np.array_equal(f.data, master.data[:480, 48 * k:48 * k + 640])
        assert seq.ground_truth[k].dx == 48 * k


def test_negative_pan(master):
    seq = generate_sequence(master, 3, -40)
    assert np.array_equal(seq.frames[0].data, master.data[:480, 80:720])
    assert np.array_equal(seq.frames[2].data, master.data[:480, 0:640])
    assert seq.pair_truth(1).dx == -40


def test_rotating_sequence_deterministic(master):
    a = generate_sequence(master, 3, 32, 1.0, noise_sigma=2.0, seed=7)
    b = generate_sequence(master, 3, 32, 1.0, noise_sigma=2.0, seed=7)
    assert all(x == y for x, y in zip(a.frames, b.frames))
    assert a.ground_truth == b.ground_truth
    assert a.pair_truth(2).theta_deg == pytest.approx(1.0)


def test_rotation_ground_truth(master):
    seq = generate_sequence(master, 2, 10, 1.0, frame_size=(200, 150))
    t = seq.ground_truth[1]
    # the frame centre maps to the master position shifted by dx only
    c = np.array([[99.5, 74.5]])
    assert np.allclose(t.apply(c), c + [10, 0])


def test_envelope(master):
    with pytest.raises(MotionEnvelopeError, match="10%"):
        generate_sequence(master, 3, 65)
    with pytest.raises(MotionEnvelopeError):
        generate_sequence(master, 3, 10, 1.3)
    with pytest.raises(MasterTooSmall):
        generate_sequence(master, 9, 64)
    with pytest.raises(UsageError):
        generate_sequence(master, 0, 10)


def test_required_master_size():
    assert required_master_size(5, 48) == (832, 480, 0)
    w, h, m = required_master_size(3, 10, 1.0, (200, 100))
    assert m > 0 and w == 200 + 20 + 2 * m and h == 100 + 2 * m


@pytest.mark.parametrize("variant", [OPTIMIZED, CLASSIC])
def test_zero_motion_noiseless(master, variant):
    seq = generate_sequence(master, 3, 0)
    r = run_variant(seq, variant)
    assert r.transform_error_px <= 0.5 and r.precision >= 0.99 and r.failures == 0


def test_half_overlap_evaluates_fewer_pairs(master):
    seq = generate_sequence(master, 3, 48, seed=0)
    opt, cls = run_variant(seq, OPTIMIZED), run_variant(seq, CLASSIC)
    assert opt.candidate_pairs < cls.candidate_pairs
    for r in (opt, cls):
        assert 0 <= r.precision <= 1
        assert r.matches_accepted <= r.matches_attempted
        assert r.matches_correct <= r.matches_accepted


def test_precision_two_paths(master):
    # correspondences re-derived from the crop offsets, independent of FrameTransform
    seq = generate_sequence(master, 3, 40, seed=0)
    cfg = Config()
    feats = [extract_features(f, cfg, OPTIMIZED) for f in seq.frames]
    total_a = total_b = 0
    for k in (1, 2):
        res = match_pair(feats[k - 1], feats[k], 640, cfg, OPTIMIZED)
        fa, fb = feats[k - 1].descriptors, feats[k].descriptors
        pa = np.array([[d.corner.x, d.corner.y] for d in fa], dtype=float)
        pb = np.array([[d.corner.x, d.corner.y] for d in fb], dtype=float)
        total_a += int(match_correctness(res.matches, pa, pb, seq.pair_truth(k)).sum())
        for m in res.matches:
            xa, ya = fa[m.index_a].corner.x, fa[m.index_a].corner.y
            xb, yb = fb[m.index_b].corner.x, fb[m.index_b].corner.y
            total_b += int(np.hypot(xb + 40 - xa, yb - ya) <= 2.0)
    assert total_a == total_b
    assert run_variant(seq, OPTIMIZED, cfg).matches_correct == total_a


def test_transform_error():
    assert transform_error(FrameTransform(3.0, 4.0), FrameTransform(), 640, 480) == 5.0


def test_unknown_variant(master):
    with pytest.raises(UsageError):
        run_variant(generate_sequence(master, 2, 0), "sift")


def test_emit_report_formats():
    a = BenchReport("classic-full", pairs=1, precision=0.5, timings_ms={"match": 1.0})
    b = BenchReport("optimized-half", pairs=1, precision=0.75)
    text = emit_report([a], "text")
    lines = text.splitlines()
    assert lines[0].startswith("# ") and len(lines) == 3 and lines[2].startswith("classic-full")
    csv_lines = emit_report([a, b], "csv").splitlines()
    assert len(csv_lines) == 3 and csv_lines[0].startswith("variant,")
    assert "ms_match" not in csv_lines[0]
    assert "ms_match" in emit_report([a, b], "csv", include_timings=True)
    payload = json.loads(emit_report([a, b], "json"))
    assert [r["variant"] for r in payload["reports"]] == ["classic-full", "optimized-half"]
    assert "note" in payload
    with pytest.raises(UsageError):
        emit_report([], "csv")
    with pytest.raises(UsageError):
        emit_report([a], "xml")


def test_bench_deterministic(master):
    seq = generate_sequence(master, 3, 48, noise_sigma=2.0, seed=3)
    a = emit_report(run_bench(seq), "csv")
    b = emit_report(run_bench(generate_sequence(master, 3, 48, noise_sigma=2.0, seed=3)), "csv")
    assert a == b


def test_timings_csv():
    r = BenchReport("classic-full", timings_ms={"match": 1.23456, "gradients": 2.0})
    assert timings_csv([r]).splitlines() == [
        "variant,stage,milliseconds", "classic-full,gradients,2.000", "classic-full,match,1.235"
    ]
