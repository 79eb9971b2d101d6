import numpy as np
import pytest

from kinema.curation import (Episode, FailureSynthesisConfig, curate_episode,
                             read_manifest, segment_bounds, stratified_split,
                             synthesize_failures, write_manifest)
from kinema.errors import LengthMismatch, TooShort
from kinema.projection import PointMapFrame, PointMapSequence


def make_actions(t=60, rng=None):
    rng = rng or np.random.default_rng(0)
    return rng.normal(size=(t, 7))


def make_pm(t, h=6, w=8):
    frames = []
    for i in range(t):
        valid = np.zeros((h, w), bool)
        valid[i % h, :] = True
        coords = np.zeros((h, w, 3))
        coords[valid] = float(i)
        frames.append(PointMapFrame(coords, valid))
    return PointMapSequence(frames)


# --- failure synthesis ---

def test_nine_failures_default():
    out = synthesize_failures(make_actions(), seed=1)
    assert len(out) == 9


def test_single_sigma_three_failures():
    cfg = FailureSynthesisConfig(sigmas=(0.5,))
    assert len(synthesize_failures(make_actions(), cfg, seed=1)) == 3


def test_gripper_channel_bitwise_unchanged():
    actions = make_actions()
    for traj in synthesize_failures(actions, seed=2):
        assert np.array_equal(traj[:, 6], actions[:, 6])


def test_pose_dims_perturbed_from_segment_start():
    actions = make_actions(t=30)
    cfg = FailureSynthesisConfig()
    bounds = segment_bounds(30, 3)
    out = synthesize_failures(actions, cfg, seed=3)
    k = 0
    for (start, _) in bounds:
        for _sigma in cfg.sigmas:
            traj = out[k]
            k += 1
            # untouched before the segment, perturbed from its start onward
            assert np.array_equal(traj[:start], actions[:start])
            assert np.abs(traj[start:, :6] - actions[start:, :6]).max() > 0


def test_failures_diverge_over_100_seeds():
    actions = make_actions(t=12)
    for seed in range(100):
        out = synthesize_failures(actions, seed=seed)
        for traj in out:
            assert np.abs(traj[:, :6] - actions[:, :6]).max() > 0


def test_cumulative_noise_grows():
    # random walk: later-frame deviation variance exceeds early-frame
    actions = np.zeros((200, 7))
    devs = []
    for seed in range(30):
        traj = synthesize_failures(actions, seed=seed)[0]  # segment 0
        devs.append(traj[:, 0])
    devs = np.abs(np.array(devs))
    assert devs[:, -1].mean() > devs[:, 5].mean()


def test_too_short_trajectory():
    with pytest.raises(TooShort):
        synthesize_failures(make_actions(t=2))


def test_deterministic_per_seed():
    a = synthesize_failures(make_actions(), seed=5)
    b = synthesize_failures(make_actions(), seed=5)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_config_validation():
    with pytest.raises(ValueError):
        FailureSynthesisConfig(sigmas=())
    with pytest.raises(ValueError):
        FailureSynthesisConfig(pose_dims=(0, 1), gripper_dims=(1,))


def test_segment_bounds_remainder():
    assert segment_bounds(10, 3) == [(0, 3), (3, 6), (6, 10)]
    assert segment_bounds(9, 3) == [(0, 3), (3, 6), (6, 9)]


# --- episode curation ---

def test_curate_identity_49(tmp_path, rng):
    rgb = rng.random((49, 6, 8, 3))
    pm = make_pm(49)
    actions = make_actions(49, rng)
    ep = curate_episode("ep0", "libero", rgb, pm, actions, True, None, tmp_path)
    assert ep.frame_count == 49
    back = np.load(ep.rgb_ref)
    assert np.array_equal(back, rgb)


def test_curate_shared_indices(tmp_path, rng):
    t_in = 147
    rgb = np.arange(t_in, dtype=float).reshape(-1, 1, 1, 1) * np.ones((1, 6, 8, 3))
    pm = make_pm(t_in)
    actions = np.arange(t_in, dtype=float).reshape(-1, 1) * np.ones((1, 7))
    ep = curate_episode("ep1", "droid", rgb, pm, actions, True, None, tmp_path)
    rgb_ds = np.load(ep.rgb_ref)
    act_ds = np.load(ep.actions_ref)
    expected = [(i * 146) // 48 for i in range(49)]
    assert np.array_equal(rgb_ds[:, 0, 0, 0], expected)
    assert np.array_equal(act_ds[:, 0], expected)


def test_curate_length_mismatch(tmp_path, rng):
    with pytest.raises(LengthMismatch):
        curate_episode("e", "x", rng.random((100, 2, 2, 3)), make_pm(99),
                       make_actions(100), True, None, tmp_path)


def test_curate_too_short(tmp_path, rng):
    with pytest.raises(TooShort):
        curate_episode("e", "x", rng.random((10, 2, 2, 3)), make_pm(10),
                       make_actions(10), True, None, tmp_path)


def test_manifest_round_trip(tmp_path):
    eps = [Episode(f"e{i}", "droid", 49, "r", "p", "a", i % 2 == 0)
           for i in range(5)]
    path = tmp_path / "manifest.jsonl"
    write_manifest(eps, path)
    back = read_manifest(path)
    assert len(back) == 5
    assert back[3].id == "e3" and back[3].success is False


def test_manifest_append(tmp_path):
    path = tmp_path / "m.jsonl"
    write_manifest([Episode("a", "s", 49, "r", "p", "x", True)], path)
    write_manifest([Episode("b", "s", 49, "r", "p", "x", True)], path)
    assert [e.id for e in read_manifest(path)] == ["a", "b"]


# --- stratified split ---

def _episodes(source, n):
    return [Episode(f"{source}-{i}", source, 49, "r", "p", "a", True)
            for i in range(n)]


def test_split_zero_fraction():
    eps = _episodes("droid", 10)
    train, val = stratified_split(eps, {"droid": 0.0})
    assert val == [] and len(train) == 10


def test_split_counts_2000_1000():
    eps = _episodes("droid", 2000) + _episodes("bridge", 1000)
    train, val = stratified_split(eps, {"droid": 0.1, "bridge": 0.1}, seed=0)
    by_source = {}
    for e in val:
        by_source[e.source] = by_source.get(e.source, 0) + 1
    assert by_source == {"droid": 200, "bridge": 100}


def test_split_round_half_up():
    eps = _episodes("rt1", 5)
    _, val = stratified_split(eps, {"rt1": 0.5})  # 2.5 -> 3
    assert len(val) == 3


def test_split_partition():
    eps = _episodes("a", 30) + _episodes("b", 20)
    train, val = stratified_split(eps, {"a": 0.3, "b": 0.5}, seed=7)
    train_ids = {e.id for e in train}
    val_ids = {e.id for e in val}
    assert train_ids | val_ids == {e.id for e in eps}
    assert train_ids & val_ids == set()


def test_split_deterministic():
    eps = _episodes("a", 50)
    _, v1 = stratified_split(eps, {"a": 0.2}, seed=3)
    _, v2 = stratified_split(eps, {"a": 0.2}, seed=3)
    assert [e.id for e in v1] == [e.id for e in v2]
