"""Triangle mesh container, OBJ/STL loaders, and primitive tessellation.

Vertices are meters in the link-local frame. Normals are discarded on load
and recomputed at render time when needed.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CorruptGeometry, UnsupportedFormat


@dataclass
class TriangleMesh:
    vertices: np.ndarray            # (N, 3) float64
    triangles: np.ndarray           # (M, 3) int64 indices
    colors: Optional[np.ndarray] = None  # (N, 3) RGB in [0,1] or None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(self.vertices):
                raise CorruptGeometry("color count does not match vertex count")
        if len(self.triangles) and self.triangles.max(initial=-1) >= len(self.vertices):
            raise CorruptGeometry("triangle index out of range")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    def scaled(self, scale) -> "TriangleMesh":
        scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), (3,))
        return TriangleMesh(self.vertices * scale, self.triangles, self.colors)


def load_mesh(data: bytes, fmt: str) -> TriangleMesh:
    """Load mesh bytes in the declared format ("obj", "stl").

    STL vertices are welded by exact coordinate match; OBJ vertex order is
    preserved as written.
    """
    fmt = fmt.lower().lstrip(".")
    if fmt == "obj":
        return _load_obj(data)
    if fmt == "stl":
        return _load_stl(data)
    raise UnsupportedFormat(f"unsupported mesh format: {fmt!r}")


def _load_obj(data: bytes) -> TriangleMesh:
    vertices = []
    colors = []
    faces = []
    for raw in data.decode("utf-8", errors="replace").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] == "v":
            vertices.append([float(x) for x in parts[1:4]])
            if len(parts) >= 7:  # per-vertex color extension
                colors.append([float(x) for x in parts[4:7]])
        elif parts[0] == "f":
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(vertices) + i)
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices:
        raise CorruptGeometry("OBJ contains no vertices")
    col = np.asarray(colors) if len(colors) == len(vertices) and colors else None
    return TriangleMesh(np.asarray(vertices), np.asarray(faces).reshape(-1, 3), col)


def _load_stl(data: bytes) -> TriangleMesh:
    if _looks_ascii_stl(data):
        tri_pts = _read_stl_ascii(data)
    else:
        tri_pts = _read_stl_binary(data)
    if not len(tri_pts):
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    flat = tri_pts.reshape(-1, 3)
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriangleMesh(uniq, inverse.reshape(-1, 3))


def _looks_ascii_stl(data: bytes) -> bool:
    head = data[:512].lstrip()
    if not head.lower().startswith(b"solid"):
        return False
    # binary files may also start with "solid"; ascii bodies contain "facet"
    return b"facet" in data[:2048].lower() or len(data) < 84


def _read_stl_ascii(data: bytes):
    pts = []
    for line in data.decode("ascii", errors="replace").splitlines():
        parts = line.split()
        if parts[:1] == ["vertex"]:
            pts.append([float(x) for x in parts[1:4]])
    if len(pts) % 3 != 0:
        raise CorruptGeometry("ascii STL vertex count not a multiple of 3")
    return np.asarray(pts, dtype=np.float64).reshape(-1, 3, 3)


def _read_stl_binary(data: bytes):
    if len(data) < 84:
        raise CorruptGeometry("binary STL shorter than header")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise CorruptGeometry(
            f"binary STL declares {count} facets but payload holds "
            f"{(len(data) - 84) // 50}")
    out = np.empty((count, 3, 3), dtype=np.float64)
    off = 84
    for i in range(count):
        vals = struct.unpack_from("<12f", data, off)
        out[i] = np.asarray(vals[3:12], dtype=np.float64).reshape(3, 3)
        off += 50
    return out


# --- primitive tessellation (single rasterization path downstream) ---

def box_mesh(size) -> TriangleMesh:
    sx, sy, sz = (float(s) / 2.0 for s in size)
    v = np.array([[x, y, z] for x in (-sx, sx) for y in (-sy, sy) for z in (-sz, sz)])
    f = np.array([
        [0, 1, 3], [0, 3, 2],  # -x
        [4, 6, 7], [4, 7, 5],  # +x
        [0, 4, 5], [0, 5, 1],  # -y
        [2, 3, 7], [2, 7, 6],  # +y
        [0, 2, 6], [0, 6, 4],  # -z
        [1, 5, 7], [1, 7, 3],  # +z
    ])
    return TriangleMesh(v, f)


def cylinder_mesh(radius: float, length: float, segments: int = 32) -> TriangleMesh:
    ang = 2.0 * math.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = length / 2.0
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    verts = np.vstack([bottom, top, [[0, 0, -h]], [[0, 0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + i], [j, segments + j, segments + i]]
        faces += [[cb, j, i], [ct, segments + i, segments + j]]
    return TriangleMesh(verts, np.asarray(faces))


def sphere_mesh(radius: float, segments: int = 32) -> TriangleMesh:
    rings = max(2, segments // 2)
    verts = [[0.0, 0.0, radius]]
    for r in range(1, rings):
        phi = math.pi * r / rings
        z = radius * math.cos(phi)
        s = radius * math.sin(phi)
        for c in range(segments):
            th = 2.0 * math.pi * c / segments
            verts.append([s * math.cos(th), s * math.sin(th), z])
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1

    def ring_idx(r, c):
        return 1 + (r - 1) * segments + (c % segments)

    faces = []
    for c in range(segments):
        faces.append([0, ring_idx(1, c), ring_idx(1, c + 1)])
    for r in range(1, rings - 1):
        for c in range(segments):
            a, b = ring_idx(r, c), ring_idx(r, c + 1)
            d, e = ring_idx(r + 1, c), ring_idx(r + 1, c + 1)
            faces += [[a, d, e], [a, e, b]]
    for c in range(segments):
        faces.append([south, ring_idx(rings - 1, c + 1), ring_idx(rings - 1, c)])
    return TriangleMesh(np.asarray(verts), np.asarray(faces))
