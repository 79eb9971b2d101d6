"""Kinematic 4D control-signal toolkit.

Turns a URDF robot model plus an action sequence into pixel-aligned
pointmap / occupancy-mask / RGB sequences, prepares conditioning signals,
curates fixed-length episodes (including synthetic failures), and evaluates
4D outputs with geometric and image metrics.
"""

__version__ = "0.1.0"
