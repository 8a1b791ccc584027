"""Differential analysis of planar dynamical systems on the cylinder."""

__version__ = "0.1.0"

from .model import (CylinderPoint, Tangent, PendulumParams, Constant,
                    Sinusoidal, FeedbackLinearizing, HalfAngleGain, External,
                    PlanarSystem, pendulum_system, overdamped_system,
                    wrap_angle, angle_diff, energy)
from .integrate import IntegratorConfig, Trajectory, integrate_state

__all__ = [
    "CylinderPoint", "Tangent", "PendulumParams", "Constant", "Sinusoidal",
    "FeedbackLinearizing", "HalfAngleGain", "External", "PlanarSystem",
    "pendulum_system", "overdamped_system", "wrap_angle", "angle_diff",
    "energy", "IntegratorConfig", "Trajectory", "integrate_state",
]
