"""Pinhole projection and software rasterization of posed link geometry.

Produces pixel-aligned pointmaps (camera-space xyz per pixel), binary
occupancy, depth maps, and optional RGB renders. Rasterization fills
triangles with a z-buffer keeping the nearest surface; attributes are
interpolated perspective-correct (1/z weighted). Pixel (i, j) covers
[j, j+1) x [i, i+1) with center (j+0.5, i+0.5); a triangle owns a pixel
iff it covers the center (top-left rule on shared edges). Back faces are
not culled. No anti-aliasing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (BehindCamera, IoFailure, MissingLinkPose,
                     NonpositiveDepth, UnsupportedFormat)
from .kinematics import LinkPoseSequence
from .robot_model import MeshReference, RobotModel
from .transforms import RigidTransform

UNTEXTURED_GREY = 0.7
Z_NEAR = 1e-6


@dataclass
class CameraModel:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsics: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height,
                "extrinsics": self.extrinsics.to_json()}

    @staticmethod
    def from_json(obj: dict) -> "CameraModel":
        return CameraModel(obj["fx"], obj["fy"], obj["cx"], obj["cy"],
                           obj["width"], obj["height"],
                           RigidTransform.from_json(obj["extrinsics"]))

    @staticmethod
    def load(path) -> "CameraModel":
        with open(path) as f:
            return CameraModel.from_json(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=2)


@dataclass
class PointMapFrame:
    """Camera-space (x, y, z) per pixel; invalid pixels carry (0, 0, 0)."""
    coords: np.ndarray  # (H, W, 3) float64
    valid: np.ndarray   # (H, W) bool

    @property
    def shape(self):
        return self.valid.shape

    def point_cloud(self) -> np.ndarray:
        """Valid pixels as an (N, 3) array, row-major pixel order."""
        return self.coords[self.valid]


@dataclass
class PointMapSequence:
    frames: list[PointMapFrame]

    def __len__(self):
        return len(self.frames)

    @property
    def shape(self):
        t = len(self.frames)
        h, w = self.frames[0].shape if t else (0, 0)
        return (t, h, w)

    def occupancy(self) -> np.ndarray:
        """(T, H, W) bool validity stack."""
        return np.stack([f.valid for f in self.frames])


@dataclass
class DepthFrame:
    depth: np.ndarray  # (H, W)
    valid: np.ndarray  # (H, W) bool


def project_point(camera: CameraModel, x_world) -> tuple[float, float, float]:
    """Project a world point to continuous pixel coordinates and depth."""
    x_cam = camera.extrinsics.apply(np.asarray(x_world, dtype=np.float64))
    z = x_cam[2]
    if z <= 0:
        raise BehindCamera(f"point has non-positive camera depth {z}")
    u = camera.cx + camera.fx * x_cam[0] / z
    v = camera.cy + camera.fy * x_cam[1] / z
    return u, v, z


def unproject(camera: CameraModel, u: float, v: float, z: float) -> np.ndarray:
    """Exact inverse of project_point, back to the world frame."""
    if z <= 0:
        raise NonpositiveDepth(f"depth must be positive, got {z}")
    x_cam = np.array([(u - camera.cx) * z / camera.fx,
                      (v - camera.cy) * z / camera.fy,
                      z])
    return camera.extrinsics.inverse().apply(x_cam)


def _is_top_left(ax, ay, bx, by) -> bool:
    dy = by - ay
    return (dy == 0 and bx < ax) or dy < 0


def _raster_triangle(pix, attrs, zbuf, coords, rgb, colors, W, H):
    """Fill one triangle. pix: (3,2) screen (u,v); attrs: (3,3) cam xyz."""
    z = attrs[:, 2]
    u, v = pix[:, 0], pix[:, 1]

    area = (u[1] - u[0]) * (v[2] - v[0]) - (v[1] - v[0]) * (u[2] - u[0])
    if area == 0:
        return
    order = (0, 1, 2) if area > 0 else (0, 2, 1)
    u, v, z = u[list(order)], v[list(order)], z[list(order)]
    attrs = attrs[list(order)]
    if colors is not None:
        colors = colors[list(order)]
    area = abs(area)

    # pixel-center bounding box
    j0 = max(int(np.floor(u.min() - 0.5)), 0)
    j1 = min(int(np.ceil(u.max() - 0.5)), W - 1)
    i0 = max(int(np.floor(v.min() - 0.5)), 0)
    i1 = min(int(np.ceil(v.max() - 0.5)), H - 1)
    if j1 < j0 or i1 < i0:
        return

    px = np.arange(j0, j1 + 1) + 0.5
    py = np.arange(i0, i1 + 1) + 0.5
    PX, PY = np.meshgrid(px, py)

    def edge(ax, ay, bx, by):
        return (bx - ax) * (PY - ay) - (by - ay) * (PX - ax)

    w0 = edge(u[1], v[1], u[2], v[2])
    w1 = edge(u[2], v[2], u[0], v[0])
    w2 = edge(u[0], v[0], u[1], v[1])
    inside = (
        ((w0 > 0) | ((w0 == 0) & _is_top_left(u[1], v[1], u[2], v[2]))) &
        ((w1 > 0) | ((w1 == 0) & _is_top_left(u[2], v[2], u[0], v[0]))) &
        ((w2 > 0) | ((w2 == 0) & _is_top_left(u[0], v[0], u[1], v[1])))
    )
    if not inside.any():
        return

    l0, l1, l2 = w0[inside] / area, w1[inside] / area, w2[inside] / area
    inv_z = l0 / z[0] + l1 / z[1] + l2 / z[2]
    z_pix = 1.0 / inv_z

    ii, jj = np.nonzero(inside)
    ii, jj = ii + i0, jj + j0
    closer = z_pix < zbuf[ii, jj]
    if not closer.any():
        return
    ii, jj = ii[closer], jj[closer]
    l0, l1, l2, z_pix = l0[closer], l1[closer], l2[closer], z_pix[closer]

    zbuf[ii, jj] = z_pix
    # perspective-correct: a = z * sum(l_i * a_i / z_i)
    interp = (l0[:, None] * attrs[0] / z[0] +
              l1[:, None] * attrs[1] / z[1] +
              l2[:, None] * attrs[2] / z[2]) * z_pix[:, None]
    coords[ii, jj] = interp
    if rgb is not None:
        if colors is None:
            rgb[ii, jj] = UNTEXTURED_GREY
        else:
            c = (l0[:, None] * colors[0] / z[0] +
                 l1[:, None] * colors[1] / z[1] +
                 l2[:, None] * colors[2] / z[2]) * z_pix[:, None]
            rgb[ii, jj] = np.clip(c, 0.0, 1.0)


def rasterize_frame(model: RobotModel, link_poses: dict[str, RigidTransform],
                    camera: CameraModel, want_rgb: bool = False
                    ) -> tuple[PointMapFrame, np.ndarray, Optional[np.ndarray]]:
    """Rasterize all link visuals at the given poses.

    Returns (pointmap frame, occupancy grid, rgb frame or None). Occupancy
    equals pointmap validity bitwise.
    """
    H, W = camera.height, camera.width
    zbuf = np.full((H, W), np.inf)
    coords = np.zeros((H, W, 3))
    rgb = np.zeros((H, W, 3)) if want_rgb else None

    for link in model.links:
        if not link.visuals:
            continue
        if link.name not in link_poses:
            raise MissingLinkPose(f"no pose supplied for link {link.name!r}")
        pose = link_poses[link.name]
        for vis in link.visuals:
            if isinstance(vis.shape, MeshReference):
                raise UnsupportedFormat(
                    f"link {link.name!r} has an unresolved mesh reference "
                    f"({vis.shape.filename!r}); call resolve_meshes first")
            mesh = vis.shape
            if mesh.num_triangles == 0:
                continue
            to_cam = camera.extrinsics @ pose @ vis.origin
            v_cam = to_cam.apply(mesh.vertices)
            z = v_cam[:, 2]
            safe = z > Z_NEAR
            with np.errstate(divide="ignore", invalid="ignore"):
                u = camera.cx + camera.fx * v_cam[:, 0] / z
                vv = camera.cy + camera.fy * v_cam[:, 1] / z
            pix = np.stack([u, vv], axis=1)
            for tri in mesh.triangles:
                if not safe[tri].all():
                    continue  # no near-plane clipping; skip partial triangles
                col = mesh.colors[tri] if mesh.colors is not None else None
                _raster_triangle(pix[tri], v_cam[tri], zbuf, coords, rgb,
                                 col, W, H)

    valid = np.isfinite(zbuf)
    coords[~valid] = 0.0
    frame = PointMapFrame(coords, valid)
    return frame, valid.copy(), rgb


def render_sequence(model: RobotModel, poses: LinkPoseSequence,
                    camera: CameraModel, want_rgb: bool = False
                    ) -> tuple[PointMapSequence, np.ndarray, Optional[np.ndarray]]:
    """Rasterize every frame of a pose sequence independently."""
    frames, occ, rgbs = [], [], []
    for frame_poses in poses.frames:
        pm, o, rgb = rasterize_frame(model, frame_poses, camera, want_rgb)
        frames.append(pm)
        occ.append(o)
        rgbs.append(rgb)
    occupancy = np.stack(occ) if occ else np.zeros((0, camera.height, camera.width), bool)
    rgb_seq = np.stack(rgbs) if want_rgb and rgbs else None
    return PointMapSequence(frames), occupancy, rgb_seq


def depth_from_pointmap(frame: PointMapFrame) -> DepthFrame:
    """Extract the z channel; validity copied bitwise."""
    return DepthFrame(frame.coords[..., 2].copy(), frame.valid.copy())


# --- on-disk tensor format: magic, (T,H,W,3) header, float32 LE data,
#     packed validity bitmask; JSON sidecar carries camera/units ---

_MAGIC = b"KPM1"


def save_pointmap_sequence(seq: PointMapSequence, path,
                           camera: Optional[CameraModel] = None,
                           units: str = "meters") -> None:
    path = Path(path)
    t, h, w = seq.shape
    data = np.stack([f.coords for f in seq.frames]).astype("<f4") if t else \
        np.zeros((0, h, w, 3), "<f4")
    valid = seq.occupancy()
    try:
        with open(path, "wb") as f:
            f.write(_MAGIC)
            f.write(struct.pack("<4I", t, h, w, 3))
            f.write(data.tobytes())
            f.write(np.packbits(valid.reshape(-1)).tobytes())
        sidecar = {"frame_count": t, "height": h, "width": w, "units": units,
                   "camera": camera.to_json() if camera else None}
        with open(path.with_suffix(path.suffix + ".json"), "w") as f:
            json.dump(sidecar, f, indent=2)
    except OSError as e:
        raise IoFailure(str(e)) from e


def load_pointmap_sequence(path) -> tuple[PointMapSequence, dict]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise IoFailure(str(e)) from e
    if blob[:4] != _MAGIC:
        raise UnsupportedFormat("not a pointmap tensor file")
    t, h, w, c = struct.unpack_from("<4I", blob, 4)
    if c != 3:
        raise UnsupportedFormat(f"expected 3 channels, got {c}")
    off = 20
    n = t * h * w * 3
    data = np.frombuffer(blob, dtype="<f4", count=n, offset=off).reshape(t, h, w, 3)
    off += n * 4
    nbits = t * h * w
    valid = np.unpackbits(np.frombuffer(blob, dtype=np.uint8, offset=off),
                          count=nbits).astype(bool).reshape(t, h, w)
    frames = [PointMapFrame(data[i].astype(np.float64), valid[i])
              for i in range(t)]
    sidecar_path = path.with_suffix(path.suffix + ".json")
    sidecar = json.loads(sidecar_path.read_text()) if sidecar_path.exists() else {}
    return PointMapSequence(frames), sidecar
