"""URDF parsing into a validated kinematic tree with attached visual geometry.

Supported subset: link/visual/geometry (mesh, box, cylinder, sphere) and
joint (revolute, continuous, prismatic, fixed) with origin/axis/limit.
Collision elements, dynamics, and xacro are out of scope; unsupported
elements are skipped with a recorded warning.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import KinematicCycle, MalformedXml, MissingLink, UnknownJointType
from .meshes import TriangleMesh, box_mesh, cylinder_mesh, load_mesh, sphere_mesh
from .transforms import RigidTransform

JOINT_KINDS = ("revolute", "continuous", "prismatic", "fixed")
DEFAULT_TESSELLATION_SEGMENTS = 32


@dataclass
class MeshReference:
    """Unresolved mesh file reference; resolved lazily by resolve_meshes."""
    filename: str
    scale: np.ndarray


@dataclass
class GeometryInstance:
    origin: RigidTransform
    shape: TriangleMesh | MeshReference


@dataclass
class Link:
    name: str
    visuals: list[GeometryInstance] = field(default_factory=list)


@dataclass
class Joint:
    name: str
    kind: str
    parent: str
    child: str
    origin: RigidTransform = field(default_factory=RigidTransform.identity)
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    limits: Optional[tuple[float, float]] = None

    @property
    def actuated(self) -> bool:
        return self.kind != "fixed"


@dataclass
class RobotModel:
    name: str
    links: list[Link]
    joints: list[Joint]
    root_link: str
    actuated_order: list[str]
    warnings: list[str] = field(default_factory=list)

    def link(self, name: str) -> Link:
        return self._link_map[name]

    def joint(self, name: str) -> Joint:
        return self._joint_map[name]

    @property
    def dof(self) -> int:
        return len(self.actuated_order)

    def __post_init__(self):
        self._link_map = {l.name: l for l in self.links}
        self._joint_map = {j.name: j for j in self.joints}
        self.parent_joint = {j.child: j for j in self.joints}
        self.child_joints: dict[str, list[Joint]] = {l.name: [] for l in self.links}
        for j in self.joints:
            self.child_joints[j.parent].append(j)


def _parse_floats(text, n, default=None):
    if text is None:
        return default
    vals = [float(x) for x in text.split()]
    if len(vals) != n:
        raise MalformedXml(f"expected {n} numbers, got {text!r}")
    return np.asarray(vals, dtype=np.float64)


def _parse_origin(elem) -> RigidTransform:
    if elem is None:
        return RigidTransform.identity()
    xyz = _parse_floats(elem.get("xyz"), 3, np.zeros(3))
    rpy = _parse_floats(elem.get("rpy"), 3, np.zeros(3))
    return RigidTransform.from_rpy(rpy, xyz)


def _parse_geometry(geom, warnings, segments) -> Optional[TriangleMesh | MeshReference]:
    mesh = geom.find("mesh")
    if mesh is not None:
        scale = _parse_floats(mesh.get("scale"), 3, np.ones(3))
        return MeshReference(mesh.get("filename", ""), scale)
    box = geom.find("box")
    if box is not None:
        return box_mesh(_parse_floats(box.get("size"), 3))
    cyl = geom.find("cylinder")
    if cyl is not None:
        return cylinder_mesh(float(cyl.get("radius")), float(cyl.get("length")),
                             segments)
    sph = geom.find("sphere")
    if sph is not None:
        return sphere_mesh(float(sph.get("radius")), segments)
    warnings.append("visual geometry with no supported shape skipped")
    return None


_IGNORED_ELEMENTS = {"transmission", "gazebo", "material", "ros2_control",
                     "sensor", "plugin"}


def parse_urdf(document: str,
               tessellation_segments: int = DEFAULT_TESSELLATION_SEGMENTS) -> RobotModel:
    """Parse a URDF document into a validated RobotModel.

    Mesh filename references stay unresolved (see resolve_meshes); primitive
    shapes are tessellated immediately so rasterization has one path.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as e:
        raise MalformedXml(str(e)) from e
    if root.tag != "robot":
        raise MalformedXml(f"expected <robot> root element, got <{root.tag}>")

    warnings: list[str] = []
    links: list[Link] = []
    for elem in root:
        if elem.tag in _IGNORED_ELEMENTS:
            warnings.append(f"ignored unsupported element <{elem.tag}>")

    for lelem in root.findall("link"):
        name = lelem.get("name")
        if name is None:
            raise MalformedXml("link without a name")
        visuals = []
        for velem in lelem.findall("visual"):
            geom = velem.find("geometry")
            if geom is None:
                continue
            shape = _parse_geometry(geom, warnings, tessellation_segments)
            if shape is not None:
                visuals.append(GeometryInstance(_parse_origin(velem.find("origin")),
                                                shape))
        links.append(Link(name, visuals))

    link_names = {l.name for l in links}
    if len(link_names) != len(links):
        raise MalformedXml("duplicate link names")
    if not links:
        raise MalformedXml("robot declares no links")

    joints: list[Joint] = []
    for jelem in root.findall("joint"):
        name = jelem.get("name")
        kind = jelem.get("type")
        if kind not in JOINT_KINDS:
            raise UnknownJointType(f"joint {name!r} has unsupported type {kind!r}")
        parent = jelem.find("parent")
        child = jelem.find("child")
        if parent is None or child is None:
            raise MalformedXml(f"joint {name!r} missing parent/child")
        pname, cname = parent.get("link"), child.get("link")
        for ref in (pname, cname):
            if ref not in link_names:
                raise MissingLink(f"joint {name!r} references undeclared link {ref!r}")
        axis = _parse_floats(jelem.find("axis").get("xyz"), 3) \
            if jelem.find("axis") is not None else np.array([1.0, 0.0, 0.0])
        limits = None
        lelem = jelem.find("limit")
        if lelem is not None and kind in ("revolute", "prismatic"):
            lower = float(lelem.get("lower", 0.0))
            upper = float(lelem.get("upper", 0.0))
            limits = (lower, upper)
        joints.append(Joint(name, kind, pname, cname,
                            _parse_origin(jelem.find("origin")), axis, limits))

    root_link = _find_root(links, joints)
    actuated = [j.name for j in joints if j.actuated]
    return RobotModel(root.get("name", "robot"), links, joints, root_link,
                      actuated, warnings)


def _find_root(links, joints) -> str:
    children = {j.child for j in joints}
    parent_count: dict[str, int] = {}
    for j in joints:
        parent_count[j.child] = parent_count.get(j.child, 0) + 1
    multi = [n for n, c in parent_count.items() if c > 1]
    if multi:
        raise KinematicCycle(f"link(s) with multiple parent joints: {multi}")
    roots = [l.name for l in links if l.name not in children]
    if not roots:
        raise KinematicCycle("no root link: every link is some joint's child")
    if len(roots) > 1:
        raise MissingLink(f"disconnected tree, multiple roots: {sorted(roots)}")
    # reachability check rules out cycles detached from the root
    adj: dict[str, list[str]] = {l.name: [] for l in links}
    for j in joints:
        adj[j.parent].append(j.child)
    seen = set()
    stack = [roots[0]]
    while stack:
        n = stack.pop()
        if n in seen:
            raise KinematicCycle(f"cycle through link {n!r}")
        seen.add(n)
        stack.extend(adj[n])
    if len(seen) != len(links):
        raise KinematicCycle("links unreachable from root (cycle or orphan subgraph)")
    return roots[0]


def validate(model: RobotModel) -> list[str]:
    """Return diagnostics for violated invariants; empty list means valid."""
    diags = []
    for j in model.joints:
        if j.actuated and abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
            diags.append(f"joint {j.name!r}: axis {list(j.axis)} is not unit length")
        if j.limits is not None and j.limits[0] > j.limits[1]:
            diags.append(f"joint {j.name!r}: lower limit {j.limits[0]} exceeds "
                         f"upper {j.limits[1]}")
    expected = [j.name for j in model.joints if j.actuated]
    if model.actuated_order != expected:
        diags.append("actuated_order out of sync with non-fixed joints")
    for l in model.links:
        if l.name != model.root_link and l.name not in model.parent_joint:
            diags.append(f"link {l.name!r}: no parent joint")
    return diags


def resolve_meshes(model: RobotModel, mesh_dir: str | Path) -> None:
    """Load every MeshReference relative to mesh_dir, applying scale in place."""
    mesh_dir = Path(mesh_dir)
    cache: dict[str, TriangleMesh] = {}
    for link in model.links:
        for vis in link.visuals:
            if not isinstance(vis.shape, MeshReference):
                continue
            ref = vis.shape
            fname = ref.filename
            for prefix in ("package://", "file://"):
                if fname.startswith(prefix):
                    fname = fname[len(prefix):]
            path = mesh_dir / fname
            if not path.exists():
                path = mesh_dir / Path(fname).name
            key = str(path)
            if key not in cache:
                cache[key] = load_mesh(path.read_bytes(), path.suffix)
            vis.shape = cache[key].scaled(ref.scale)


def serialize_urdf(model: RobotModel) -> str:
    """Emit the supported URDF subset; parse_urdf round-trips it."""
    robot = ET.Element("robot", name=model.name)
    for link in model.links:
        ET.SubElement(robot, "link", name=link.name)
    for j in model.joints:
        je = ET.SubElement(robot, "joint", name=j.name, type=j.kind)
        ET.SubElement(je, "parent", link=j.parent)
        ET.SubElement(je, "child", link=j.child)
        rpy = _matrix_to_rpy(j.origin.rotation_matrix())
        ET.SubElement(je, "origin",
                      xyz=" ".join(repr(float(v)) for v in j.origin.translation),
                      rpy=" ".join(repr(float(v)) for v in rpy))
        if j.actuated:
            ET.SubElement(je, "axis", xyz=" ".join(repr(float(v)) for v in j.axis))
        if j.limits is not None:
            ET.SubElement(je, "limit", lower=repr(float(j.limits[0])),
                          upper=repr(float(j.limits[1])))
    return ET.tostring(robot, encoding="unicode")


def _matrix_to_rpy(m):
    sy = np.hypot(m[0, 0], m[1, 0])
    if sy > 1e-9:
        return (np.arctan2(m[2, 1], m[2, 2]),
                np.arctan2(-m[2, 0], sy),
                np.arctan2(m[1, 0], m[0, 0]))
    return (np.arctan2(-m[1, 2], m[1, 1]), np.arctan2(-m[2, 0], sy), 0.0)
