"""Geometric and image-quality evaluation.

Chamfer distance (L1/L2), F-score at a distance threshold, self-temporal
variants over consecutive frames, PSNR, SSIM, and policy success-rate
comparison. Chamfer convention: symmetric mean, halved; this is stated in
every report so results can be matched against other conventions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve
from scipy.spatial import cKDTree

from .errors import (EmptyCloud, EmptyFrame, EmptyInput, FrameTooSmall,
                     ShapeMismatch, TooFewFrames)
from .projection import PointMapSequence

PSNR_INF = float("inf")
DEFAULT_FSCORE_TAU = 0.01


def _as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise EmptyCloud("point cloud is empty")
    return pts


def _nn_distances(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Euclidean distance from each src point to its nearest dst point."""
    tree = cKDTree(dst)
    d, _ = tree.query(src, k=1)
    return d


def chamfer(a, b, order: str = "l1") -> float:
    """Symmetric Chamfer distance, halved mean of the two directions.

    order "l1" averages Euclidean distances, "l2" averages squared ones.
    """
    a, b = _as_cloud(a), _as_cloud(b)
    d_ab = _nn_distances(a, b)
    d_ba = _nn_distances(b, a)
    if order.lower() == "l2":
        d_ab, d_ba = d_ab ** 2, d_ba ** 2
    elif order.lower() != "l1":
        raise ValueError(f"order must be 'l1' or 'l2', got {order!r}")
    return 0.5 * (d_ab.mean() + d_ba.mean())


def fscore(a, b, tau: float = DEFAULT_FSCORE_TAU) -> float:
    """F-score at threshold tau, in the units of the supplied clouds."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    a, b = _as_cloud(a), _as_cloud(b)
    precision = float((_nn_distances(a, b) <= tau).mean())
    recall = float((_nn_distances(b, a) <= tau).mean())
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def temporal_metric(seq: PointMapSequence, metric: str = "chamfer_l1",
                    tau: float = DEFAULT_FSCORE_TAU) -> float:
    """Self-consistency: mean pairwise metric over consecutive frames."""
    if len(seq.frames) < 2:
        raise TooFewFrames("need at least 2 frames for a temporal metric")
    clouds = []
    for t, f in enumerate(seq.frames):
        pts = f.point_cloud()
        if len(pts) == 0:
            raise EmptyFrame(f"frame {t} has no valid pixels")
        clouds.append(pts)
    vals = []
    for t in range(len(clouds) - 1):
        if metric == "chamfer_l1":
            vals.append(chamfer(clouds[t], clouds[t + 1], "l1"))
        elif metric == "chamfer_l2":
            vals.append(chamfer(clouds[t], clouds[t + 1], "l2"))
        elif metric == "fscore":
            vals.append(fscore(clouds[t], clouds[t + 1], tau))
        else:
            raise ValueError(f"unknown temporal metric {metric!r}")
    return float(np.mean(vals))


def psnr(a, b, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical inputs give +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(max_value ** 2 / mse)


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(a, b, max_value: float = 1.0, window: int = 11,
         sigma: float = 1.5) -> float:
    """Mean local SSIM, Gaussian-windowed, per channel, averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.ndim == 4:  # sequence: average frame scores
        return float(np.mean([ssim(a[t], b[t], max_value, window, sigma)
                              for t in range(a.shape[0])]))
    h, w = a.shape[:2]
    if min(h, w) < window:
        raise FrameTooSmall(f"{h}x{w} smaller than {window}x{window} window")

    kern = _gaussian_kernel(window, sigma)
    c1 = (0.01 * max_value) ** 2
    c2 = (0.03 * max_value) ** 2
    scores = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mu_x = convolve(x, kern, mode="nearest")
        mu_y = convolve(y, kern, mode="nearest")
        xx = convolve(x * x, kern, mode="nearest") - mu_x ** 2
        yy = convolve(y * y, kern, mode="nearest") - mu_y ** 2
        xy = convolve(x * y, kern, mode="nearest") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def success_rate_diff(sim_flags, real_flags) -> tuple[float, float, float]:
    """Success rates of two trial sets and their absolute difference."""
    sim = np.asarray(sim_flags, dtype=bool)
    real = np.asarray(real_flags, dtype=bool)
    if len(sim) == 0 or len(real) == 0:
        raise EmptyInput("flag lists must be nonempty")
    rate_sim = float(sim.mean())
    rate_real = float(real.mean())
    # single division keeps simple ratios (e.g. 0.56 - 0.48 = 0.08) exact
    diff = abs(int(sim.sum()) * len(real) - int(real.sum()) * len(sim)) \
        / (len(sim) * len(real))
    return rate_sim, rate_real, diff


@dataclass
class MetricReport:
    scalars: dict = field(default_factory=dict)
    per_frame: dict = field(default_factory=dict)
    units: str = "metric"   # "metric" (meters) or "normalized"
    chamfer_convention: str = "half mean symmetric"

    def to_json(self) -> dict:
        def enc(v):
            return "inf" if v == PSNR_INF else v
        return {"scalars": {k: enc(v) for k, v in self.scalars.items()},
                "per_frame": self.per_frame, "units": self.units,
                "chamfer_convention": self.chamfer_convention}

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)

    def table(self) -> str:
        """Aligned text block with the standard column layout."""
        cols = ["CD-L1", "CD-L1 temp", "CD-L2", "CD-L2 temp",
                "F-score", "F-score temp"]
        keys = ["cd_l1", "cd_l1_temp", "cd_l2", "cd_l2_temp",
                "fscore", "fscore_temp"]
        header = "  ".join(f"{c:>12}" for c in cols)
        vals = []
        for k in keys:
            v = self.scalars.get(k)
            vals.append(f"{v:>12.6f}" if v is not None else f"{'-':>12}")
        lines = [header, "  ".join(vals)]
        extras = []
        for k in ("psnr", "ssim"):
            if k in self.scalars:
                v = self.scalars[k]
                extras.append(f"{k.upper()}: "
                              + ("inf" if v == PSNR_INF else f"{v:.4f}"))
        if "success_diff" in self.scalars:
            extras.append(f"success sim {self.scalars['success_sim']:.2f} "
                          f"real {self.scalars['success_real']:.2f} "
                          f"diff {self.scalars['success_diff']:.2f}")
        if extras:
            lines.append("  ".join(extras))
        lines.append(f"units: {self.units}; chamfer: {self.chamfer_convention}")
        return "\n".join(lines)


def evaluate_sequences(pred: PointMapSequence, ref: PointMapSequence,
                       tau: float = DEFAULT_FSCORE_TAU,
                       units: str = "metric") -> MetricReport:
    """Frame-aligned geometric comparison plus self-temporal variants."""
    if len(pred.frames) != len(ref.frames):
        raise ShapeMismatch(
            f"{len(pred.frames)} vs {len(ref.frames)} frames")
    cd1, cd2, fs = [], [], []
    for t, (p, r) in enumerate(zip(pred.frames, ref.frames)):
        pc, rc = p.point_cloud(), r.point_cloud()
        if len(pc) == 0 or len(rc) == 0:
            raise EmptyFrame(f"frame {t} has no valid pixels")
        cd1.append(chamfer(pc, rc, "l1"))
        cd2.append(chamfer(pc, rc, "l2"))
        fs.append(fscore(pc, rc, tau))
    report = MetricReport(units=units)
    report.scalars["cd_l1"] = float(np.mean(cd1))
    report.scalars["cd_l2"] = float(np.mean(cd2))
    report.scalars["fscore"] = float(np.mean(fs))
    report.per_frame = {"cd_l1": cd1, "cd_l2": cd2, "fscore": fs}
    if len(pred.frames) >= 2:
        report.scalars["cd_l1_temp"] = temporal_metric(pred, "chamfer_l1")
        report.scalars["cd_l2_temp"] = temporal_metric(pred, "chamfer_l2")
        report.scalars["fscore_temp"] = temporal_metric(pred, "fscore", tau)
    return report
