"""Demonstration-capture pipeline toolkit: simulated encoder/pose/camera
sources, host-side acquisition and resampling, time synchronization,
filtering, frame retargeting, thumb-coupling kinematics, and replay."""

__version__ = "0.1.0"
