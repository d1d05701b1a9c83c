"""Keyframe visual-inertial odometry with bit-level memory models."""

__version__ = "0.1.0"
