import numpy as np
import pytest

from kinema.robot_model import parse_urdf


PLANAR_2R_URDF = """
<robot name="planar2r">
  <link name="base"/>
  <link name="upper"/>
  <link name="lower"/>
  <link name="tip"/>
  <joint name="shoulder" type="revolute">
    <parent link="base"/><child link="upper"/>
    <origin xyz="0 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.14" upper="3.14"/>
  </joint>
  <joint name="elbow" type="revolute">
    <parent link="upper"/><child link="lower"/>
    <origin xyz="1 0 0"/><axis xyz="0 0 1"/>
    <limit lower="-3.14" upper="3.14"/>
  </joint>
  <joint name="wrist_fix" type="fixed">
    <parent link="lower"/><child link="tip"/>
    <origin xyz="1 0 0"/>
  </joint>
</robot>
"""


def _arm6_urdf():
    # anthropomorphic 6-DoF arm: shoulder yaw/pitch, elbow pitch, wrist 3R
    segs = [
        ("j1", "0 0 0.2", "0 0 1"),
        ("j2", "0 0 0.1", "0 1 0"),
        ("j3", "0 0 0.4", "0 1 0"),
        ("j4", "0.05 0 0.35", "1 0 0"),
        ("j5", "0.3 0 0", "0 1 0"),
        ("j6", "0.1 0 0", "1 0 0"),
    ]
    links = "".join(f'<link name="l{i}"/>' for i in range(len(segs) + 1))
    joints = ""
    for i, (name, xyz, axis) in enumerate(segs):
        joints += (f'<joint name="{name}" type="revolute">'
                   f'<parent link="l{i}"/><child link="l{i + 1}"/>'
                   f'<origin xyz="{xyz}"/><axis xyz="{axis}"/>'
                   f'<limit lower="-2.9" upper="2.9"/></joint>')
    return f'<robot name="arm6">{links}{joints}</robot>'


ARM6_URDF = _arm6_urdf()


@pytest.fixture
def planar_2r():
    return parse_urdf(PLANAR_2R_URDF)


@pytest.fixture
def arm6():
    return parse_urdf(ARM6_URDF)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
