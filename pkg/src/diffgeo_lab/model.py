"""Pendulum family, input laws, Jacobians, energy, and the planar-system abstraction.

State lives on the cylinder S x R.  Angles are stored at their canonical
representative in [-pi, pi); every angular arithmetic goes through
``wrap_angle``/``angle_diff``.  Vector fields are evaluated on the wrapped
angle, so integration of the unwrapped angle (used for winding counts) sees
an exactly 2*pi-periodic right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import MismatchedGrids

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Canonical angle representative in [-pi, pi)."""
    w = math.fmod(theta + math.pi, TWO_PI)
    if w < 0.0:
        w += TWO_PI
    return w - math.pi


def angle_diff(a: float, b: float) -> float:
    """Wrapped angular difference a - b in (-pi, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d <= -math.pi:
        d += TWO_PI
    elif d > math.pi:
        d -= TWO_PI
    return d


@dataclass(frozen=True)
class CylinderPoint:
    """State (theta, v); theta is wrapped to [-pi, pi) on construction."""

    theta: float
    v: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.v)):
            raise ValueError("CylinderPoint components must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.v])


@dataclass(frozen=True)
class Tangent:
    """Tangent vector (dtheta, dv) attached to a cylinder point."""

    dtheta: float
    dv: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.dtheta) and math.isfinite(self.dv)):
            raise ValueError("Tangent components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.dtheta, self.dv])

    def norm(self) -> float:
        return math.hypot(self.dtheta, self.dv)


class InputLaw:
    """Torque law u(theta, v, t).

    Laws may depend on the state (feedback) or only on time (exogenous).
    ``d_dtheta``/``d_dv`` are the exact state partials of the torque; they
    vanish for exogenous laws and feed the closed-loop Jacobians.
    """

    def torque(self, theta: float, v: float, t: float) -> float:
        raise NotImplementedError

    def d_dtheta(self, theta: float, v: float, t: float) -> float:
        return 0.0

    def d_dv(self, theta: float, v: float, t: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Constant(InputLaw):
    value: float = 0.0

    def torque(self, theta, v, t):
        return self.value


@dataclass(frozen=True)
class Sinusoidal(InputLaw):
    bias: float = 0.0
    amplitude: float = 0.0
    omega: float = 1.0

    def torque(self, theta, v, t):
        return self.bias + self.amplitude * math.sin(self.omega * t)


@dataclass(frozen=True)
class FeedbackLinearizing(InputLaw):
    """u = sin(theta) + w: cancels gravity, leaving a damped double integrator."""

    w: InputLaw = field(default_factory=Constant)

    def torque(self, theta, v, t):
        return math.sin(theta) + self.w.torque(theta, v, t)

    def d_dtheta(self, theta, v, t):
        return math.cos(theta) + self.w.d_dtheta(theta, v, t)

    def d_dv(self, theta, v, t):
        return self.w.d_dv(theta, v, t)


@dataclass(frozen=True)
class HalfAngleGain(InputLaw):
    """u = cos(theta/2) * r: the uniform-contraction pairing for the overdamped pendulum."""

    r: InputLaw = field(default_factory=Constant)

    def torque(self, theta, v, t):
        return math.cos(0.5 * theta) * self.r.torque(theta, v, t)

    def d_dtheta(self, theta, v, t):
        r = self.r.torque(theta, v, t)
        return (-0.5 * math.sin(0.5 * theta) * r
                + math.cos(0.5 * theta) * self.r.d_dtheta(theta, v, t))

    def d_dv(self, theta, v, t):
        return math.cos(0.5 * theta) * self.r.d_dv(theta, v, t)


@dataclass(frozen=True)
class External(InputLaw):
    """Time-sampled exogenous torque, linearly interpolated, held at the ends."""

    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if len(self.times) != len(self.values) or len(self.times) < 1:
            raise ValueError("External law needs equal-length, nonempty samples")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("External law times must be strictly increasing")

    def torque(self, theta, v, t):
        return float(np.interp(t, self.times, self.values))


@dataclass(frozen=True)
class PendulumParams:
    """Damping coefficient k >= 0 and the applied torque law."""

    k: float = 1.0
    input: InputLaw = field(default_factory=Constant)

    def __post_init__(self):
        if not (math.isfinite(self.k) and self.k >= 0.0):
            raise ValueError("damping coefficient k must be finite and >= 0")


def pendulum_field(p: CylinderPoint, params: PendulumParams, t: float = 0.0) -> Tangent:
    """Velocity (theta_dot, v_dot) = (v, -sin(theta) - k v + u)."""
    u = params.input.torque(p.theta, p.v, t)
    return Tangent(p.v, -math.sin(p.theta) - params.k * p.v + u)


def pendulum_jacobian(p: CylinderPoint, params: PendulumParams, t: float = 0.0) -> np.ndarray:
    """Exact Jacobian of the closed-loop field.

    For exogenous torque this is A(theta, k) = [[0, 1], [-cos(theta), -k]];
    state-feedback laws contribute their torque partials.
    """
    law = params.input
    return np.array([
        [0.0, 1.0],
        [-math.cos(p.theta) + law.d_dtheta(p.theta, p.v, t),
         -params.k + law.d_dv(p.theta, p.v, t)],
    ])


def overdamped_field(theta: float, law: InputLaw, t: float = 0.0) -> float:
    """First-order limit: theta_dot = -sin(theta) + u(theta, t)."""
    th = wrap_angle(theta)
    return -math.sin(th) + law.torque(th, 0.0, t)


def overdamped_jacobian(theta: float, law: InputLaw, t: float = 0.0) -> float:
    th = wrap_angle(theta)
    return -math.cos(th) + law.d_dtheta(th, 0.0, t)


def energy(p: CylinderPoint) -> float:
    """Mechanical energy v^2/2 - cos(theta) (potential minimal at the hanging point).

    Satisfies dE/dt = u*theta_dot - k*v^2 along the flow, so the growth rate
    never exceeds the supplied power.
    """
    return 0.5 * p.v * p.v - math.cos(p.theta)


@dataclass(frozen=True)
class PlanarSystem:
    """A 1- or 2-dimensional system with exact Jacobian.

    ``f``/``jac`` act on raw state arrays (angle components may arrive
    unwrapped from the integrator; implementations wrap them first, which
    keeps the right-hand side exactly periodic).  ``angular`` lists the
    indices of angle components; ``du`` is the input partial of the field
    where it applies.
    """

    kind: str
    dim: int
    space: str
    f: Callable[[np.ndarray, float], np.ndarray]
    jac: Callable[[np.ndarray, float], np.ndarray]
    angular: tuple = (0,)
    params: PendulumParams | None = None
    input: InputLaw | None = None
    du: np.ndarray | None = None


def pendulum_system(params: PendulumParams) -> PlanarSystem:
    """The full pendulum on the cylinder as a PlanarSystem."""
    k = params.k
    law = params.input

    def f(y, t):
        th = wrap_angle(y[0])
        v = y[1]
        return np.array([v, -math.sin(th) - k * v + law.torque(th, v, t)])

    def jac(y, t):
        th = wrap_angle(y[0])
        v = y[1]
        return np.array([
            [0.0, 1.0],
            [-math.cos(th) + law.d_dtheta(th, v, t), -k + law.d_dv(th, v, t)],
        ])

    return PlanarSystem(kind="pendulum", dim=2, space="cylinder", f=f, jac=jac,
                        angular=(0,), params=params, input=law,
                        du=np.array([0.0, 1.0]))


def overdamped_system(law: InputLaw) -> PlanarSystem:
    """The overdamped (first-order) pendulum on the circle as a PlanarSystem."""

    def f(y, t):
        th = wrap_angle(y[0])
        return np.array([-math.sin(th) + law.torque(th, 0.0, t)])

    def jac(y, t):
        th = wrap_angle(y[0])
        return np.array([[-math.cos(th) + law.d_dtheta(th, 0.0, t)]])

    return PlanarSystem(kind="overdamped", dim=1, space="circle", f=f, jac=jac,
                        angular=(0,), params=None, input=law,
                        du=np.array([1.0]))


def incremental_mismatch(traj1, traj2):
    """Increment series (wrapped dtheta, dv) between two trajectories on one grid.

    The angular increment is the wrapped difference in (-pi, pi].  Raises
    MismatchedGrids when the time stamps differ.
    """
    if len(traj1.times) != len(traj2.times) or not np.array_equal(traj1.times, traj2.times):
        raise MismatchedGrids("trajectories do not share a time grid")
    dtheta = np.array([angle_diff(a, b) for a, b in zip(traj1.theta, traj2.theta)])
    dv = traj1.v - traj2.v
    return dtheta, dv
