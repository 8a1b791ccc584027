"""Finsler metrics and Lyapunov functions on the tangent bundle, geodesic
distances on the circle, polyhedral cone fields, and flow-transversal
projections."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError, EquilibriumPoint, ZeroTangent
from .model import (CylinderPoint, HalfAngleGain, PlanarSystem, Tangent,
                    angle_diff, wrap_angle)

TOL_CONE = 1e-9  # relative boundary tolerance after normalizing by |d|


def _weight_denominator(theta: float) -> float:
    """1 + cos(theta); raises at the singular point theta = +-pi."""
    den = 1.0 + math.cos(theta)
    if den <= 0.0:
        raise DomainError("weighted-angle metric is singular at theta = +-pi")
    return den


@dataclass(frozen=True)
class SquaredAngle:
    """V = dtheta^2 (constant metric on the angle component).

    Decay against the free overdamped pendulum holds on the open lower half
    of the circle only; that interval is the default claimed domain.
    """

    domain: tuple = (-0.5 * math.pi, 0.5 * math.pi)

    def value(self, p: CylinderPoint, d: Tangent) -> float:
        return d.dtheta * d.dtheta

    def certified_bounds(self, eta: float = 1e-3):
        return 1.0, 1.0


@dataclass(frozen=True)
class WeightedAngle:
    """V = dtheta^2 / (1 + cos(theta)).

    The weight deforms angular length so decay extends to the whole circle
    minus the unstable point.  Bounds c1 = 1/2 <= weight <= 1/(1+cos(pi-eta))
    are certified on |theta| <= pi - eta.
    """

    domain: tuple = (-math.pi, math.pi)

    def value(self, p: CylinderPoint, d: Tangent) -> float:
        return d.dtheta * d.dtheta / _weight_denominator(p.theta)

    def certified_bounds(self, eta: float = 1e-3):
        if not 0.0 < eta < math.pi:
            raise ValueError("eta must lie in (0, pi)")
        return 0.5, 1.0 / (1.0 + math.cos(math.pi - eta))


@dataclass(frozen=True)
class ConstantQuadratic:
    """V = dx^T P dx for a fixed symmetric positive definite P (1x1 or 2x2)."""

    P: tuple
    domain: tuple = (-math.pi, math.pi)

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] not in (1, 2):
            raise ValueError("P must be a 1x1 or 2x2 matrix")
        if not np.allclose(P, P.T):
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(P)[0] <= 0.0:
            raise ValueError("P must be positive definite")
        object.__setattr__(self, "P", tuple(map(tuple, P)))

    def matrix(self) -> np.ndarray:
        return np.array(self.P)

    def value(self, p: CylinderPoint, d: Tangent) -> float:
        P = self.matrix()
        vec = d.as_array()[: P.shape[0]]
        return float(vec @ P @ vec)

    def certified_bounds(self, eta: float = 1e-3):
        w = np.linalg.eigvalsh(self.matrix())
        return float(w[0]), float(w[-1])


FinslerLyapunov = Union[SquaredAngle, WeightedAngle, ConstantQuadratic]


def eval_V(V: FinslerLyapunov, p: CylinderPoint, d: Tangent) -> float:
    """Value of the Finsler-Lyapunov function at (p, d)."""
    return V.value(p, d)


def _overdamped_weighted_vdot(law, theta: float, dtheta: float, t: float) -> float:
    """Exact V̇ of the weighted-angle function on the overdamped pendulum.

    Algebraic simplification of the chain rule: V̇ = -dtheta^2 + residual with
    residual = dtheta^2 * (u sin(theta)/(1+cos)^2 + 2 u_theta/(1+cos)).
    For the half-angle-gain law the torque part of the residual cancels
    identically, leaving only the gradient of the wrapped signal r; the
    cancellation is applied symbolically so uniform contraction holds to
    round-off rather than to the conditioning of 1/(1+cos)^2.
    """
    den = _weight_denominator(theta)
    d2 = dtheta * dtheta
    if isinstance(law, HalfAngleGain):
        r_theta = law.r.d_dtheta(theta, 0.0, t)
        residual = d2 * 2.0 * math.cos(0.5 * theta) * r_theta / den
    else:
        u = law.torque(theta, 0.0, t)
        u_theta = law.d_dtheta(theta, 0.0, t)
        residual = d2 * (u * math.sin(theta) / (den * den) + 2.0 * u_theta / den)
    return -d2 + residual


def analytic_Vdot(V: FinslerLyapunov, sys: PlanarSystem, p: CylinderPoint,
                  d: Tangent, t: float = 0.0) -> float:
    """Lie derivative of V along the prolonged flow of ``sys`` at (p, d)."""
    if isinstance(V, WeightedAngle) and sys.kind == "overdamped":
        return _overdamped_weighted_vdot(sys.input, p.theta, d.dtheta, t)

    y = p.as_array()[: sys.dim]
    dvec = d.as_array()[: sys.dim]
    f = sys.f(y, t)
    Jd = sys.jac(y, t) @ dvec

    if isinstance(V, SquaredAngle):
        return 2.0 * d.dtheta * Jd[0]
    if isinstance(V, WeightedAngle):
        den = _weight_denominator(p.theta)
        dV_dtheta = d.dtheta * d.dtheta * math.sin(p.theta) / (den * den)
        return dV_dtheta * f[0] + (2.0 * d.dtheta / den) * Jd[0]
    P = V.matrix()
    n = P.shape[0]
    return float(2.0 * dvec[:n] @ P @ Jd[:n])


def _weighted_antiderivative(theta: float) -> float:
    # int d(theta) / sqrt(1 + cos) = sqrt(2) * artanh(sin(theta/2))
    s = math.sin(0.5 * theta)
    if abs(s) >= 1.0:
        raise DomainError("weighted-angle geodesic diverges at theta = +-pi")
    return math.sqrt(2.0) * math.atanh(s)


def geodesic_distance(V: FinslerLyapunov, a: float, b: float) -> float:
    """Geodesic distance between angles a and b in the metric of V.

    Squared-angle: shorter-arc length.  Weighted-angle: the arc through
    +-pi has infinite length, so the distance is the integral over the
    direct arc, |F(b) - F(a)| with F the closed-form antiderivative.
    """
    if isinstance(V, SquaredAngle):
        return abs(angle_diff(a, b))
    if isinstance(V, WeightedAngle):
        aw, bw = wrap_angle(a), wrap_angle(b)
        _weight_denominator(aw)
        _weight_denominator(bw)
        return abs(_weighted_antiderivative(bw) - _weighted_antiderivative(aw))
    raise ValueError("geodesic_distance needs an angular metric "
                     "(squared-angle or weighted-angle)")


def passivating_output(theta: float) -> float:
    """y = integral of sec(s/2) from 0 to theta = 2*artanh(sin(theta/2)).

    Strictly increasing and odd; diverges at |theta| = pi.
    """
    th = wrap_angle(theta)
    s = math.sin(0.5 * th)
    if abs(s) >= 1.0 or abs(abs(th) - math.pi) == 0.0:
        raise DomainError("passivating output diverges at theta = +-pi")
    return 2.0 * math.atanh(s)


@dataclass(frozen=True)
class ConeFieldSpec:
    """Pointwise polyhedral cone {d : a_i(x) . d >= 0} from two functionals.

    ``functionals`` is either a constant 2x2 array (row per functional) or a
    callable point -> 2x2 array for state-dependent cones.
    """

    functionals: object
    name: str = "custom"

    def matrix(self, p: CylinderPoint) -> np.ndarray:
        if callable(self.functionals):
            A = np.asarray(self.functionals(p), dtype=float)
        else:
            A = np.asarray(self.functionals, dtype=float)
        if A.shape != (2, 2):
            raise ValueError("cone spec must provide two functionals on a 2D tangent space")
        return A

    def is_solid_pointed_at(self, p: CylinderPoint, tol: float = 1e-12) -> bool:
        """Solid and pointed iff the two functionals are linearly independent."""
        A = self.matrix(p)
        return abs(float(np.linalg.det(A))) > tol

    def boundary_rays(self, p: CylinderPoint) -> list[np.ndarray]:
        """One generating ray per functional: a_i . ray = 0, a_j . ray > 0.

        Rays are scaled so the largest-magnitude component is 1, matching the
        normalization of the reported invariance margins.
        """
        A = self.matrix(p)
        rays = []
        for i in range(2):
            j = 1 - i
            ray = np.array([-A[i, 1], A[i, 0]])
            if float(A[j] @ ray) < 0.0:
                ray = -ray
            ray = ray / np.max(np.abs(ray))
            rays.append(ray)
        return rays


PENDULUM_CONE = ConeFieldSpec(((1.0, 0.0), (1.0, 1.0)), name="pendulum-default")


@dataclass(frozen=True)
class ConeMembership:
    kind: str                 # "interior" | "boundary" | "outside"
    margin: float             # min_i a_i . d / |d|
    active: tuple = ()        # functionals within TOL_CONE of zero


def cone_membership(cone: ConeFieldSpec, p: CylinderPoint, d: Tangent) -> ConeMembership:
    """Classify d against the cone at p with a scale-invariant margin."""
    nd = d.norm()
    if nd == 0.0:
        raise ZeroTangent("cone membership is undefined for the zero tangent")
    vals = cone.matrix(p) @ d.as_array() / nd
    margin = float(np.min(vals))
    active = tuple(int(i) for i in np.flatnonzero(np.abs(vals) <= TOL_CONE))
    if margin > TOL_CONE:
        kind = "interior"
    elif abs(margin) <= TOL_CONE:
        kind = "boundary"
    else:
        kind = "outside"
    return ConeMembership(kind=kind, margin=margin, active=active)


@dataclass(frozen=True)
class IdentityProjection:
    kind: str = "identity"

    def at(self, sys: PlanarSystem, p: CylinderPoint, t: float = 0.0) -> np.ndarray:
        return np.eye(sys.dim)


@dataclass(frozen=True)
class TransversalToFlow:
    """Orthogonal projector onto the complement of the flow direction."""

    kind: str = "transversal"

    def at(self, sys: PlanarSystem, p: CylinderPoint, t: float = 0.0) -> np.ndarray:
        return transversal_projection(sys, p, t)


Projection = Union[IdentityProjection, TransversalToFlow]


def transversal_projection(sys: PlanarSystem, p: CylinderPoint, t: float = 0.0) -> np.ndarray:
    """I - f f^T / |f|^2 at p; rank dim-1, kills the flow direction."""
    f = sys.f(p.as_array()[: sys.dim], t)
    nf2 = float(f @ f)
    if nf2 < 1e-24:
        raise EquilibriumPoint("no transversal projection at an equilibrium")
    return np.eye(sys.dim) - np.outer(f, f) / nf2
