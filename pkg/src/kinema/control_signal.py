"""Conditioning-signal preparation for rendered robot sequences.

Soft occupancy masks, per-sequence min/max normalization, temporal extension
of the initial world image, width-wise concatenation into the conditioning
layout, uniform temporal downsampling to a fixed frame count, seeded
perturbations, and lossless pseudo-RGB frame export.

All randomness derives per-frame from (seed, frame index) so results are
independent of execution order or parallelism.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (EmptySequence, IoFailure, LengthMismatch, ShapeMismatch,
                     TooShort)
from .projection import PointMapFrame, PointMapSequence

DEFAULT_SOFT_RATIO = 0.1
DEFAULT_SOFT_VALUE = 0.5
DEFAULT_TARGET_FRAMES = 49


def _frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(frame,)))


def soft_mask(occupancy: np.ndarray, soft_ratio: float = DEFAULT_SOFT_RATIO,
              soft_value: float = DEFAULT_SOFT_VALUE, seed: int = 0) -> np.ndarray:
    """Occupancy mask with a random fraction of occupied pixels softened.

    Per frame, exactly round(soft_ratio * occupied) occupied pixels are set
    to soft_value, the rest to 1, background to 0.
    """
    if not 0.0 <= soft_ratio <= 1.0:
        raise ValueError(f"soft_ratio must be in [0,1], got {soft_ratio}")
    occupancy = np.asarray(occupancy)
    out = occupancy.astype(np.float64)
    for t in range(occupancy.shape[0]):
        occ_idx = np.flatnonzero(occupancy[t])
        n_soft = round(soft_ratio * len(occ_idx))
        if n_soft == 0:
            continue
        rng = _frame_rng(seed, t)
        chosen = rng.choice(occ_idx, size=n_soft, replace=False)
        flat = out[t].reshape(-1)
        flat[chosen] = soft_value
    return out


@dataclass
class NormalizedPointMapSequence:
    values: np.ndarray     # (T, H, W, 3) in [0,1] at valid pixels
    valid: np.ndarray      # (T, H, W) bool
    vmin: float
    vmax: float
    degenerate: bool = False


def normalize_sequence(pm: PointMapSequence) -> NormalizedPointMapSequence:
    """Map valid coordinates to [0,1] using the extrema over the whole sequence."""
    valid = pm.occupancy()
    if not valid.any():
        raise EmptySequence("no valid pixels in sequence")
    data = np.stack([f.coords for f in pm.frames])
    vals = data[valid]
    vmin, vmax = float(vals.min()), float(vals.max())
    out = np.zeros_like(data)
    if vmax == vmin:
        out[valid] = 0.5
        return NormalizedPointMapSequence(out, valid, vmin, vmax, degenerate=True)
    out[valid] = (data[valid] - vmin) / (vmax - vmin)
    return NormalizedPointMapSequence(out, valid, vmin, vmax)


def denormalize(npm: NormalizedPointMapSequence) -> PointMapSequence:
    """Invert normalize_sequence using the recorded extrema."""
    data = np.zeros_like(npm.values)
    if npm.degenerate:
        data[npm.valid] = npm.vmin
    else:
        data[npm.valid] = npm.values[npm.valid] * (npm.vmax - npm.vmin) + npm.vmin
    return PointMapSequence([PointMapFrame(data[t], npm.valid[t].copy())
                             for t in range(data.shape[0])])


def extend_world_image(world: np.ndarray, t: int, mode: str = "zero_pad",
                       robot_rgb: Optional[np.ndarray] = None) -> np.ndarray:
    """Extend the initial world image along time; frame 1 is always the world."""
    world = np.asarray(world, dtype=np.float64)
    out = np.zeros((t,) + world.shape)
    out[0] = world
    if mode == "zero_pad":
        if robot_rgb is not None:
            raise LengthMismatch("robot_rgb only valid in robot_rgb mode")
        return out
    if mode != "robot_rgb":
        raise ValueError(f"unknown mode {mode!r}")
    if robot_rgb is None:
        raise LengthMismatch("robot_rgb mode requires the robot RGB sequence")
    robot_rgb = np.asarray(robot_rgb, dtype=np.float64)
    if len(robot_rgb) == t:          # drop the robot frame the world replaces
        robot_rgb = robot_rgb[1:]
    if len(robot_rgb) != t - 1:
        raise LengthMismatch(
            f"robot_rgb must have {t - 1} or {t} frames, got {len(robot_rgb)}")
    out[1:] = robot_rgb
    return out


def pseudo_rgb(npm: NormalizedPointMapSequence) -> np.ndarray:
    """Normalized pointmap as pseudo-RGB (x->R, y->G, z->B); invalid black."""
    out = npm.values.copy()
    out[~npm.valid] = 0.0
    return out


def concat_width(rgb: np.ndarray, npm: NormalizedPointMapSequence) -> np.ndarray:
    """Per frame, concatenate RGB (left) and pseudo-RGB pointmap (right)."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape != npm.values.shape:
        raise ShapeMismatch(f"rgb {rgb.shape} vs pointmap {npm.values.shape}")
    return np.concatenate([rgb, pseudo_rgb(npm)], axis=2)


def downsample_indices(t_in: int, target: int) -> np.ndarray:
    """Uniform selection keeping first and last frames."""
    if target == 1:
        return np.array([0])
    i = np.arange(target)
    return (i * (t_in - 1)) // (target - 1)


def downsample_temporal(seq, target: int = DEFAULT_TARGET_FRAMES,
                        pad_short: bool = False):
    """Uniformly downsample any indexable frame sequence to `target` frames."""
    t_in = len(seq)
    if t_in < target:
        if not pad_short:
            raise TooShort(f"sequence has {t_in} frames, need {target}")
        idx = np.concatenate([np.arange(t_in),
                              np.full(target - t_in, t_in - 1)])
    else:
        idx = downsample_indices(t_in, target)
    if isinstance(seq, PointMapSequence):
        return PointMapSequence([seq.frames[i] for i in idx])
    if isinstance(seq, np.ndarray):
        return seq[idx]
    return [seq[i] for i in idx]


@dataclass
class PerturbationSpec:
    """One of the pointmap robustness perturbations.

    kind "remove": magnitude is the fraction of valid pixels to drop.
    kind "gaussian": magnitude is sigma in coordinate units.
    kind "translate": magnitude is (du, dv) integer pixels.
    kind "rotate": magnitude is the angle in degrees.
    """
    kind: str
    magnitude: object
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("remove", "gaussian", "translate", "rotate"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "remove" and not 0.0 <= float(self.magnitude) <= 1.0:
            raise ValueError("remove fraction must be in [0,1]")

    @staticmethod
    def parse(text: str, seed: int = 0) -> "PerturbationSpec":
        """Parse CLI form "kind:magnitude", e.g. "remove:0.05", "translate:3,-2"."""
        kind, _, mag = text.partition(":")
        if kind == "translate":
            du, dv = (int(x) for x in mag.split(","))
            return PerturbationSpec(kind, (du, dv), seed)
        return PerturbationSpec(kind, float(mag), seed)


def perturb(pm: PointMapSequence, spec: PerturbationSpec) -> PointMapSequence:
    """Apply a robustness perturbation; deterministic per (seed, frame)."""
    out = []
    for t, frame in enumerate(pm.frames):
        if spec.kind == "remove":
            out.append(_perturb_remove(frame, float(spec.magnitude),
                                       _frame_rng(spec.seed, t)))
        elif spec.kind == "gaussian":
            out.append(_perturb_gaussian(frame, float(spec.magnitude),
                                         _frame_rng(spec.seed, t)))
        elif spec.kind == "translate":
            du, dv = spec.magnitude
            out.append(_perturb_translate(frame, int(du), int(dv)))
        else:
            out.append(_perturb_rotate(frame, float(spec.magnitude)))
    return PointMapSequence(out)


def _perturb_remove(frame, fraction, rng):
    valid = frame.valid.copy()
    idx = np.flatnonzero(valid)
    n_drop = round(fraction * len(idx))
    coords = frame.coords.copy()
    if n_drop:
        drop = rng.choice(idx, size=n_drop, replace=False)
        valid.reshape(-1)[drop] = False
        coords.reshape(-1, 3)[drop] = 0.0
    return PointMapFrame(coords, valid)


def _perturb_gaussian(frame, sigma, rng):
    coords = frame.coords.copy()
    if sigma > 0 and frame.valid.any():
        noise = rng.normal(0.0, sigma, size=(int(frame.valid.sum()), 3))
        coords[frame.valid] += noise
    return PointMapFrame(coords, frame.valid.copy())


def _perturb_translate(frame, du, dv):
    if du == 0 and dv == 0:
        return PointMapFrame(frame.coords.copy(), frame.valid.copy())
    h, w = frame.valid.shape
    coords = np.zeros_like(frame.coords)
    valid = np.zeros_like(frame.valid)
    src_i = np.arange(h) - dv
    src_j = np.arange(w) - du
    ok_i = (src_i >= 0) & (src_i < h)
    ok_j = (src_j >= 0) & (src_j < w)
    ii = np.ix_(np.flatnonzero(ok_i), np.flatnonzero(ok_j))
    src = np.ix_(src_i[ok_i], src_j[ok_j])
    valid[ii] = frame.valid[src]
    coords[ii] = frame.coords[src]
    coords[~valid] = 0.0
    return PointMapFrame(coords, valid)


def _perturb_rotate(frame, angle_deg):
    if angle_deg == 0.0:
        return PointMapFrame(frame.coords.copy(), frame.valid.copy())
    h, w = frame.valid.shape
    if not frame.valid.any():
        return PointMapFrame(frame.coords.copy(), frame.valid.copy())
    ci, cj = np.nonzero(frame.valid)
    pivot_i, pivot_j = ci.mean(), cj.mean()
    ang = math.radians(angle_deg)
    cos_a, sin_a = math.cos(ang), math.sin(ang)
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    # inverse-rotate each output pixel back to its nearest source pixel
    di, dj = ii - pivot_i, jj - pivot_j
    src_i = np.rint(pivot_i + cos_a * di + sin_a * dj).astype(int)
    src_j = np.rint(pivot_j - sin_a * di + cos_a * dj).astype(int)
    ok = (src_i >= 0) & (src_i < h) & (src_j >= 0) & (src_j < w)
    valid = np.zeros_like(frame.valid)
    coords = np.zeros_like(frame.coords)
    valid[ok] = frame.valid[src_i[ok], src_j[ok]]
    coords[valid] = frame.coords[src_i[valid], src_j[valid]]
    return PointMapFrame(coords, valid)


def export_pseudo_rgb(npm: NormalizedPointMapSequence, directory) -> list[Path]:
    """Write one lossless 8-bit PNG per frame plus a metadata sidecar."""
    from PIL import Image

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frames = pseudo_rgb(npm)
    paths = []
    try:
        for t in range(frames.shape[0]):
            img = np.rint(255.0 * frames[t]).astype(np.uint8)
            p = directory / f"frame_{t:05d}.png"
            Image.fromarray(img, mode="RGB").save(p)
            paths.append(p)
        meta = {"frame_count": int(frames.shape[0]),
                "height": int(frames.shape[1]), "width": int(frames.shape[2]),
                "vmin": npm.vmin, "vmax": npm.vmax,
                "degenerate": npm.degenerate,
                "channel_order": "xyz->rgb"}
        with open(directory / "meta.json", "w") as f:
            json.dump(meta, f, indent=2)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return paths


def import_pseudo_rgb(directory) -> tuple[np.ndarray, dict]:
    """Read exported frames back as floats in [0,1] (exact to quantization)."""
    from PIL import Image

    directory = Path(directory)
    try:
        meta = json.loads((directory / "meta.json").read_text())
        frames = []
        for t in range(meta["frame_count"]):
            img = Image.open(directory / f"frame_{t:05d}.png")
            frames.append(np.asarray(img, dtype=np.float64) / 255.0)
    except OSError as e:
        raise IoFailure(str(e)) from e
    return np.stack(frames), meta
