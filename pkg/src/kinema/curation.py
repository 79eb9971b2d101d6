"""Episode curation and controlled failure synthesis.

Successful demonstrations are downsampled to a fixed frame count and
persisted as episode records in a JSON-lines manifest. Failure variants are
synthesized by injecting cumulative Gaussian noise into the pose dimensions
of each of three temporal segments, at several intensities, while the
gripper channel is copied through untouched.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .control_signal import downsample_indices
from .errors import LengthMismatch, TooShort
from .projection import CameraModel, PointMapSequence

DEFAULT_SIGMAS = (0.5, 0.8, 1.2)
DEFAULT_SEGMENTS = 3
TARGET_FRAMES = 49


@dataclass
class FailureSynthesisConfig:
    sigmas: tuple = DEFAULT_SIGMAS
    segments: int = DEFAULT_SEGMENTS
    pose_dims: tuple = (0, 1, 2, 3, 4, 5)
    gripper_dims: tuple = (6,)
    cumulative: bool = True   # noise persists as a random walk from segment start

    def __post_init__(self):
        if not self.sigmas or any(s <= 0 for s in self.sigmas):
            raise ValueError("sigmas must be nonempty and positive")
        if set(self.pose_dims) & set(self.gripper_dims):
            raise ValueError("pose_dims and gripper_dims must be disjoint")


def segment_bounds(length: int, segments: int) -> list[tuple[int, int]]:
    """Equal thirds by frame index; remainder frames go to the last segment."""
    size = length // segments
    bounds = [(s * size, (s + 1) * size) for s in range(segments)]
    bounds[-1] = (bounds[-1][0], length)
    return bounds


def synthesize_failures(success_actions: np.ndarray,
                        config: FailureSynthesisConfig = FailureSynthesisConfig(),
                        seed: int = 0) -> list[np.ndarray]:
    """Derive len(sigmas) * segments failure trajectories from one success.

    For each (segment, sigma) pair, Gaussian noise is injected into the pose
    dimensions from the segment start onward; with cumulative mode the
    per-frame draws accumulate so the deviation grows over time. The gripper
    dimensions are copied bitwise.
    """
    actions = np.asarray(success_actions, dtype=np.float64)
    t = len(actions)
    if t < config.segments:
        raise TooShort(f"trajectory of {t} frames cannot host "
                       f"{config.segments} segments")
    bounds = segment_bounds(t, config.segments)
    pose = list(config.pose_dims)
    out = []
    for si, (start, _) in enumerate(bounds):
        for gi, sigma in enumerate(config.sigmas):
            rng = np.random.default_rng(
                np.random.SeedSequence(seed, spawn_key=(si, gi)))
            traj = actions.copy()
            deviation = np.zeros(len(pose))
            for f in range(start, t):
                draw = rng.normal(0.0, sigma, size=len(pose))
                if config.cumulative:
                    deviation = deviation + draw
                else:
                    deviation = draw
                traj[f, pose] += deviation
            out.append(traj)
    return out


@dataclass
class Episode:
    id: str
    source: str
    frame_count: int
    rgb_ref: str
    pointmap_ref: str
    actions_ref: str
    success: bool
    camera: Optional[CameraModel] = None
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"id": self.id, "source": self.source,
                "frame_count": self.frame_count,
                "rgb_ref": self.rgb_ref, "pointmap_ref": self.pointmap_ref,
                "actions_ref": self.actions_ref, "success": self.success,
                "camera": self.camera.to_json() if self.camera else None,
                "meta": self.meta}

    @staticmethod
    def from_json(obj: dict) -> "Episode":
        cam = CameraModel.from_json(obj["camera"]) if obj.get("camera") else None
        return Episode(obj["id"], obj["source"], obj["frame_count"],
                       obj["rgb_ref"], obj["pointmap_ref"], obj["actions_ref"],
                       obj["success"], cam, obj.get("meta", {}))


def curate_episode(episode_id: str, source: str,
                   rgb: np.ndarray, pointmap: PointMapSequence,
                   actions: np.ndarray, success: bool,
                   camera: Optional[CameraModel], out_dir,
                   target_frames: int = TARGET_FRAMES) -> Episode:
    """Downsample all modalities with one shared index set and persist them."""
    from .control_signal import downsample_temporal
    from .projection import save_pointmap_sequence

    t_rgb, t_pm, t_act = len(rgb), len(pointmap.frames), len(actions)
    if not (t_rgb == t_pm == t_act):
        raise LengthMismatch(
            f"modalities disagree: rgb {t_rgb}, pointmap {t_pm}, actions {t_act}")
    if t_rgb < target_frames:
        raise TooShort(f"{t_rgb} frames < target {target_frames}")

    idx = downsample_indices(t_rgb, target_frames)
    rgb_ds = np.asarray(rgb)[idx]
    pm_ds = downsample_temporal(pointmap, target_frames)
    act_ds = np.asarray(actions)[idx]

    out_dir = Path(out_dir) / episode_id
    out_dir.mkdir(parents=True, exist_ok=True)
    np.save(out_dir / "rgb.npy", rgb_ds)
    save_pointmap_sequence(pm_ds, out_dir / "pointmap.kpm", camera)
    np.save(out_dir / "actions.npy", act_ds)
    return Episode(episode_id, source, target_frames,
                   str(out_dir / "rgb.npy"), str(out_dir / "pointmap.kpm"),
                   str(out_dir / "actions.npy"), success, camera)


def write_manifest(episodes: list[Episode], path) -> None:
    with open(path, "a") as f:
        for ep in episodes:
            f.write(json.dumps(ep.to_json()) + "\n")


def read_manifest(path) -> list[Episode]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(Episode.from_json(json.loads(line)))
    return out


def stratified_split(episodes: list[Episode], fractions: dict[str, float],
                     seed: int = 0) -> tuple[list[Episode], list[Episode]]:
    """Seeded per-source validation sampling; round-half-up episode counts.

    Returns (train, validation); the two partition the input.
    """
    by_source: dict[str, list[Episode]] = {}
    for ep in episodes:
        by_source.setdefault(ep.source, []).append(ep)
    val_ids = set()
    for source, group in sorted(by_source.items()):
        frac = fractions.get(source, 0.0)
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"fraction for {source!r} must be in [0,1]")
        n = int(np.floor(frac * len(group) + 0.5))  # round half up
        rng = np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(zlib.crc32(source.encode()),)))
        chosen = rng.choice(len(group), size=n, replace=False)
        val_ids.update(group[i].id for i in chosen)
    train = [ep for ep in episodes if ep.id not in val_ids]
    val = [ep for ep in episodes if ep.id in val_ids]
    return train, val
