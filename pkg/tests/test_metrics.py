import math

import numpy as np
import pytest

from kinema.errors import (EmptyCloud, EmptyFrame, EmptyInput, FrameTooSmall,
                           ShapeMismatch, TooFewFrames)
from kinema.metrics import (MetricReport, PSNR_INF, chamfer,
                            evaluate_sequences, fscore, psnr, ssim,
                            success_rate_diff, temporal_metric)
from kinema.projection import PointMapFrame, PointMapSequence


def brute_chamfer(a, b, order):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    d_ab, d_ba = d.min(axis=1), d.min(axis=0)
    if order == "l2":
        d_ab, d_ba = d_ab ** 2, d_ba ** 2
    return 0.5 * (d_ab.mean() + d_ba.mean())


def brute_fscore(a, b, tau):
    d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    p = (d.min(axis=1) <= tau).mean()
    r = (d.min(axis=0) <= tau).mean()
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


# --- chamfer ---

def test_chamfer_identical_zero(rng):
    a = rng.normal(size=(50, 3))
    assert chamfer(a, a, "l1") == 0.0
    assert chamfer(a, a, "l2") == 0.0


def test_chamfer_single_pair():
    a = [[0, 0, 0]]
    b = [[0, 0, 0.3]]
    assert math.isclose(chamfer(a, b, "l1"), 0.3, abs_tol=1e-15)
    assert math.isclose(chamfer(a, b, "l2"), 0.09, abs_tol=1e-15)


def test_chamfer_matches_brute_force(rng):
    for _ in range(10):
        a = rng.normal(size=(200, 3))
        b = rng.normal(size=(200, 3))
        for order in ("l1", "l2"):
            assert abs(chamfer(a, b, order) - brute_chamfer(a, b, order)) < 1e-12


def test_chamfer_symmetric(rng):
    a, b = rng.normal(size=(80, 3)), rng.normal(size=(120, 3))
    assert chamfer(a, b, "l1") == chamfer(b, a, "l1")


def test_chamfer_rigid_invariance(rng):
    from kinema.transforms import RigidTransform
    a, b = rng.normal(size=(60, 3)), rng.normal(size=(70, 3))
    g = RigidTransform.from_axis_angle([1, 0.5, -0.2], 1.1, [0.3, -1, 2])
    base = chamfer(a, b, "l1")
    moved = chamfer(g.apply(a), g.apply(b), "l1")
    assert abs(base - moved) < 1e-9


def test_chamfer_empty_cloud():
    with pytest.raises(EmptyCloud):
        chamfer([], [[0, 0, 0]], "l1")


def test_chamfer_unknown_order():
    with pytest.raises(ValueError):
        chamfer([[0, 0, 0]], [[0, 0, 0]], "l3")


# --- fscore ---

def test_fscore_identical(rng):
    a = rng.normal(size=(40, 3))
    assert fscore(a, a, 0.01) == 1.0


def test_fscore_beyond_threshold():
    assert fscore([[0, 0, 0]], [[0, 0, 0.02]], 0.01) == 0.0


def test_fscore_partial_overlap():
    # a within tau of b entirely; half of b within tau of a
    a = [[0, 0, 0], [1, 0, 0]]
    b = [[0, 0, 0.005], [1, 0, 0.005], [5, 0, 0], [6, 0, 0]]
    f = fscore(a, b, 0.01)
    assert math.isclose(f, 2 * 1.0 * 0.5 / 1.5, abs_tol=1e-12)


def test_fscore_matches_brute_force(rng):
    for _ in range(10):
        a = rng.normal(size=(150, 3)) * 0.05
        b = rng.normal(size=(150, 3)) * 0.05
        assert abs(fscore(a, b, 0.01) - brute_fscore(a, b, 0.01)) < 1e-12


def test_fscore_monotone_in_tau(rng):
    a = rng.normal(size=(100, 3)) * 0.03
    b = rng.normal(size=(100, 3)) * 0.03
    taus = np.linspace(0.001, 0.1, 10)
    scores = [fscore(a, b, t) for t in taus]
    assert all(s1 <= s2 + 1e-15 for s1, s2 in zip(scores, scores[1:]))


def test_fscore_invalid_tau():
    with pytest.raises(ValueError):
        fscore([[0, 0, 0]], [[0, 0, 0]], 0.0)


# --- temporal ---

def frame_from_points(points, h=4, w=8):
    coords = np.zeros((h, w, 3))
    valid = np.zeros((h, w), bool)
    flat = coords.reshape(-1, 3)
    for i, p in enumerate(points):
        flat[i] = p
        valid.reshape(-1)[i] = True
    return PointMapFrame(coords, valid)


def test_temporal_static_sequence(rng):
    pts = rng.normal(size=(20, 3))
    seq = PointMapSequence([frame_from_points(pts) for _ in range(5)])
    assert temporal_metric(seq, "chamfer_l1") == 0.0
    assert temporal_metric(seq, "chamfer_l2") == 0.0
    assert temporal_metric(seq, "fscore") == 1.0


def test_temporal_two_frames_one_pair(rng):
    a, b = rng.normal(size=(10, 3)), rng.normal(size=(10, 3))
    seq = PointMapSequence([frame_from_points(a), frame_from_points(b)])
    expected = chamfer(a, b, "l1")
    assert temporal_metric(seq, "chamfer_l1") == expected


def test_temporal_small_steps_under_tau(rng):
    base = rng.normal(size=(30, 3))
    frames = [frame_from_points(base + [0.005 * t, 0, 0]) for t in range(5)]
    seq = PointMapSequence(frames)
    assert temporal_metric(seq, "fscore", tau=0.01) == 1.0


def test_temporal_too_few_frames(rng):
    seq = PointMapSequence([frame_from_points(rng.normal(size=(5, 3)))])
    with pytest.raises(TooFewFrames):
        temporal_metric(seq)


def test_temporal_empty_frame(rng):
    seq = PointMapSequence([
        frame_from_points(rng.normal(size=(5, 3))),
        PointMapFrame(np.zeros((4, 8, 3)), np.zeros((4, 8), bool))])
    with pytest.raises(EmptyFrame):
        temporal_metric(seq)


# --- psnr / ssim ---

def test_psnr_identical_inf(rng):
    a = rng.random((8, 8, 3))
    assert psnr(a, a) == PSNR_INF


def test_psnr_uniform_error():
    a = np.zeros((16, 16, 3))
    b = np.full((16, 16, 3), 16.0 / 255.0)
    expected = 20.0 * math.log10(255.0 / 16.0)
    assert math.isclose(psnr(a, b), expected, rel_tol=1e-12)


def test_psnr_symmetric(rng):
    a, b = rng.random((8, 8, 3)), rng.random((8, 8, 3))
    assert psnr(a, b) == psnr(b, a)


def test_psnr_shape_mismatch(rng):
    with pytest.raises(ShapeMismatch):
        psnr(rng.random((4, 4)), rng.random((4, 5)))


def test_ssim_identical(rng):
    a = rng.random((16, 16, 3))
    assert math.isclose(ssim(a, a), 1.0, abs_tol=1e-12)


def test_ssim_inverted_below_one(rng):
    a = rng.random((16, 16, 3))
    assert ssim(a, 1.0 - a) < 1.0


def test_ssim_constant_frames():
    a = np.full((16, 16, 3), 0.4)
    assert math.isclose(ssim(a, a.copy()), 1.0, abs_tol=1e-12)


def test_ssim_range(rng):
    a, b = rng.random((20, 20, 3)), rng.random((20, 20, 3))
    assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_frame_too_small(rng):
    with pytest.raises(FrameTooSmall):
        ssim(rng.random((5, 5)), rng.random((5, 5)))


def test_ssim_sequence_mean(rng):
    a = rng.random((3, 16, 16, 3))
    b = rng.random((3, 16, 16, 3))
    per_frame = [ssim(a[t], b[t]) for t in range(3)]
    assert math.isclose(ssim(a, b), float(np.mean(per_frame)), abs_tol=1e-12)


# --- policy diff ---

def test_success_rate_diff_paper_case():
    sim = [True] * 56 + [False] * 44
    real = [True] * 48 + [False] * 52
    rs, rr, diff = success_rate_diff(sim, real)
    assert (rs, rr) == (0.56, 0.48)
    assert math.isclose(diff, 0.08, abs_tol=1e-15)


def test_success_rate_identical_zero_diff(rng):
    flags = rng.random(40) < 0.5
    _, _, diff = success_rate_diff(flags, flags)
    assert diff == 0.0


def test_success_rate_30_of_50():
    flags = [True] * 30 + [False] * 20
    rs, _, _ = success_rate_diff(flags, [True])
    assert rs == 0.6


def test_success_rate_empty():
    with pytest.raises(EmptyInput):
        success_rate_diff([], [True])


# --- report / evaluate ---

def test_evaluate_self_is_perfect(rng):
    frames = [frame_from_points(rng.normal(size=(15, 3))) for _ in range(3)]
    seq = PointMapSequence(frames)
    report = evaluate_sequences(seq, seq)
    assert report.scalars["cd_l1"] == 0.0
    assert report.scalars["cd_l2"] == 0.0
    assert report.scalars["fscore"] == 1.0


def test_report_table_and_json(tmp_path, rng):
    frames = [frame_from_points(rng.normal(size=(15, 3))) for _ in range(3)]
    seq = PointMapSequence(frames)
    report = evaluate_sequences(seq, seq)
    report.scalars["psnr"] = PSNR_INF
    text = report.table()
    assert "CD-L1" in text and "F-score temp" in text
    report.save(tmp_path / "r.json")
    import json
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["scalars"]["psnr"] == "inf"
    assert back["chamfer_convention"] == "half mean symmetric"
