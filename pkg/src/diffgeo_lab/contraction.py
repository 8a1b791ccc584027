"""Contraction certificates and demonstrations: pointwise decay scans of
Finsler-Lyapunov functions, trajectory-pair convergence in the induced
geodesic distance, uniform-contraction residuals, the two-pendulum
differentially-passive interconnection, and horizontal contraction around
limit cycles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, LeftRegion
from .geometry import (FinslerLyapunov, Projection, TransversalToFlow,
                       WeightedAngle, analytic_Vdot, eval_V, geodesic_distance,
                       passivating_output)
from .integrate import IntegratorConfig, Trajectory, _integrate_raw, integrate_state
from .model import (TWO_PI, CylinderPoint, HalfAngleGain, InputLaw,
                    PendulumParams, PlanarSystem, Tangent, overdamped_system,
                    wrap_angle)
from .orbits import LimitCycle


@dataclass(frozen=True)
class DecayReport:
    """Extrema and violations of V-dot over a grid of unit tangents."""

    metric: str
    vdot_min: float
    vdot_max: float
    argmin: tuple               # (theta, v, direction angle)
    argmax: tuple
    violations: tuple           # up to 10 sample violating grid entries
    violation_count: int
    non_strict_only: bool       # every violation has V-dot == 0 exactly
    n_points: int
    projection: str | None
    profile: tuple = ()         # 1D scans: (theta, vdot at unit tangent, weight,
                                #            geodesic distance from 0)


def _metric_name(V: FinslerLyapunov) -> str:
    return type(V).__name__


def scan_decay(V: FinslerLyapunov, sys: PlanarSystem,
               params: PendulumParams | None, grid=None,
               projection: Projection | None = None,
               n_theta: int = 720, n_directions: int = 64,
               theta_range: tuple | None = None,
               v_range: tuple = (-2.0, 2.0), n_v: int = 9,
               t: float = 0.0) -> DecayReport:
    """Evaluate analytic V-dot on unit tangents over a state grid.

    For 1D systems the tangent directions are +-1; for 2D systems they
    sample the unit circle.  When a projection is supplied the tangents are
    projected (and renormalized) first, realizing horizontal decay.
    """
    # default to the claimed-decay interval, but honor wider requests: the
    # scan is exactly how violations outside the claim are exhibited
    if theta_range is None:
        theta_range = (V.domain[0], V.domain[1])
    thetas = np.linspace(theta_range[0], theta_range[1], n_theta)

    if grid is None:
        if sys.dim == 1:
            grid = [CylinderPoint(th, 0.0) for th in thetas]
        else:
            vs = np.linspace(v_range[0], v_range[1], n_v)
            grid = [CylinderPoint(th, v) for th in thetas for v in vs]
    if sys.dim == 1:
        directions = [np.array([1.0, 0.0]), np.array([-1.0, 0.0])]
    else:
        angles = np.linspace(0.0, TWO_PI, n_directions, endpoint=False)
        directions = [np.array([math.cos(a), math.sin(a)]) for a in angles]

    vdot_min = math.inf
    vdot_max = -math.inf
    argmin = argmax = None
    violations = []
    count = 0
    non_strict = True
    n_evaluated = 0
    profile = []
    for p in grid:
        best_here = math.inf
        for dvec in directions:
            vec = dvec
            if projection is not None:
                pi = projection.at(sys, p, t)
                proj = pi @ np.array([dvec[0], dvec[1]])[: sys.dim]
                nrm = float(np.linalg.norm(proj))
                if nrm < 1e-12:
                    continue
                vec = np.concatenate([proj / nrm, [0.0] * (2 - sys.dim)])
            d = Tangent(vec[0], vec[1] if len(vec) > 1 else 0.0)
            vd = analytic_Vdot(V, sys, p, d, t)
            n_evaluated += 1
            best_here = min(best_here, vd)
            if vd < vdot_min:
                vdot_min, argmin = vd, (p.theta, p.v, math.atan2(vec[1] if len(vec) > 1 else 0.0, vec[0]))
            if vd > vdot_max:
                vdot_max, argmax = vd, (p.theta, p.v, math.atan2(vec[1] if len(vec) > 1 else 0.0, vec[0]))
            if vd >= 0.0:
                count += 1
                if vd != 0.0:
                    non_strict = False
                if len(violations) < 10:
                    violations.append((p.theta, p.v, float(vd)))
        if sys.dim == 1:
            weight = eval_V(V, p, Tangent(1.0, 0.0))
            try:
                geo = geodesic_distance(V, 0.0, p.theta)
            except (DomainError, ValueError):
                geo = math.nan
            profile.append((p.theta, best_here, weight, geo))
    return DecayReport(metric=_metric_name(V), vdot_min=vdot_min,
                       vdot_max=vdot_max, argmin=argmin, argmax=argmax,
                       violations=tuple(violations), violation_count=count,
                       non_strict_only=(count > 0 and non_strict),
                       n_points=n_evaluated,
                       projection=getattr(projection, "kind", None),
                       profile=tuple(profile))


def residual_w(theta: float, dtheta: float, u_value, t: float = 0.0) -> float:
    """Input-induced residual of the weighted-angle decay on the overdamped
    pendulum: V-dot + dtheta^2 under the torque ``u_value``.

    ``u_value`` is a number (constant exogenous torque) or an InputLaw; the
    half-angle-gain pairing cancels the residual identically for exogenous
    gain signals.
    """
    from .model import Constant
    law = u_value if isinstance(u_value, InputLaw) else Constant(float(u_value))
    sys = overdamped_system(law)
    vdot = analytic_Vdot(WeightedAngle(), sys, CylinderPoint(theta),
                         Tangent(dtheta), t)
    return vdot + dtheta * dtheta


@dataclass(frozen=True)
class PairConvergence:
    times: np.ndarray
    distance: np.ndarray
    rate: float                 # least-squares slope of log distance, tail half
    terminal_distance: float


def _metric_distance(V: FinslerLyapunov, a: CylinderPoint, b: CylinderPoint) -> float:
    if isinstance(V, WeightedAngle) or _metric_name(V) == "SquaredAngle":
        return geodesic_distance(V, a.theta, b.theta)
    P = V.matrix()
    from .model import angle_diff
    delta = np.array([angle_diff(a.theta, b.theta), a.v - b.v])[: P.shape[0]]
    return math.sqrt(float(delta @ P @ delta))


def verify_pair_contraction(sys: PlanarSystem, params: PendulumParams | None,
                            x0: CylinderPoint, z0: CylinderPoint,
                            V: FinslerLyapunov, cfg: IntegratorConfig,
                            horizon: float, n_samples: int = 400,
                            domain_margin: float = 0.0) -> PairConvergence:
    """Distance series between two trajectories under the same input.

    Distances are measured in the geodesic metric of V on a shared uniform
    grid.  Raises LeftRegion if either trajectory exits V's claimed domain.
    """
    for p in (x0, z0):
        if not (V.domain[0] < p.theta < V.domain[1]):
            raise LeftRegion("initial condition outside the claimed region")
    t1 = integrate_state(sys, x0, cfg, (0.0, horizon))
    t2 = integrate_state(sys, z0, cfg, (0.0, horizon))
    times = np.linspace(0.0, horizon, n_samples)
    dist = np.empty(n_samples)
    lo, hi = V.domain[0] + domain_margin, V.domain[1] - domain_margin
    for i, t in enumerate(times):
        y1 = t1.dense.eval(t)
        y2 = t2.dense.eval(t)
        a = CylinderPoint(wrap_angle(y1[0]), y1[1] if sys.dim == 2 else 0.0)
        b = CylinderPoint(wrap_angle(y2[0]), y2[1] if sys.dim == 2 else 0.0)
        if not (lo < a.theta < hi and lo < b.theta < hi):
            raise LeftRegion(f"trajectory left the certified domain at t = {t:.3f}")
        dist[i] = _metric_distance(V, a, b)
    tail = times >= 0.5 * horizon
    d_tail = np.maximum(dist[tail], 1e-300)
    if np.max(dist) == 0.0:
        rate = math.nan
    else:
        A = np.vstack([times[tail], np.ones(tail.sum())]).T
        rate = float(np.linalg.lstsq(A, np.log(d_tail), rcond=None)[0][0])
    return PairConvergence(times=times, distance=dist, rate=rate,
                           terminal_distance=float(dist[-1]))


def _coupled_output_rhs(q1: InputLaw, q2: InputLaw):
    """Coupled interconnection in passivating-output coordinates.

    With y = 2 artanh(sin(theta/2)) the overdamped half-angle-gain pendulum
    reads y' = -2 tanh(y/2) + r, globally smooth, and the feedback wiring is
    r1 = -y2 + q1, r2 = y1 + q2.
    """

    def rhs(t, y):
        return np.array([
            -2.0 * math.tanh(0.5 * y[0]) - y[1] + q1.torque(0.0, 0.0, t),
            -2.0 * math.tanh(0.5 * y[1]) + y[0] + q2.torque(0.0, 0.0, t),
        ])

    return rhs


def _theta_from_output(y: float) -> float:
    return 2.0 * math.asin(math.tanh(0.5 * y))


def interconnect_passive(theta1_0: float, theta2_0: float, q1: InputLaw,
                         q2: InputLaw, cfg: IntegratorConfig,
                         horizon: float) -> tuple[Trajectory, Trajectory]:
    """Negative-feedback interconnection of two half-angle-gain overdamped
    pendulums (r1 = -y2 + q1, r2 = y1 + q2); returns both angle trajectories.

    Integrated in output coordinates, where the wiring is globally smooth;
    angles are recovered exactly afterwards.
    """
    for th in (theta1_0, theta2_0):
        if not (-math.pi < th < math.pi):
            raise DomainError("initial angles must lie strictly inside (-pi, pi)")
    y0 = np.array([passivating_output(theta1_0), passivating_output(theta2_0)])
    ts, ys, dense = _integrate_raw(_coupled_output_rhs(q1, q2), y0,
                                   (0.0, horizon), cfg, 2)
    out = []
    for col in (0, 1):
        theta = np.array([_theta_from_output(y) for y in ys[:, col]])
        out.append(Trajectory(times=ts, theta=theta, v=np.zeros(len(ts)),
                              winding=np.zeros(len(ts), dtype=int),
                              raw=ys, dense=dense, dim=2))
    return out[0], out[1]


def coupled_storage_check(theta1_0: float, theta2_0: float, q1: InputLaw,
                          q2: InputLaw, cfg: IntegratorConfig, horizon: float,
                          d0: tuple = (1.0, 0.5), n_samples: int = 200):
    """Sampled check of the differential storage inequality dV1/dt <= dr1*dy1.

    The prolonged coupled system is integrated jointly; in output
    coordinates V1 = dy1^2/2, dr1 = -dy2, and the inequality margin
    dV1/dt - dr1 dy1 = -sech^2(y1/2) dy1^2 is returned at the samples.
    """
    y0 = np.array([passivating_output(theta1_0), passivating_output(theta2_0),
                   d0[0], d0[1]])
    base = _coupled_output_rhs(q1, q2)

    def rhs(t, y):
        f = base(t, y[:2])
        s1 = 1.0 / math.cosh(0.5 * y[0]) ** 2
        s2 = 1.0 / math.cosh(0.5 * y[1]) ** 2
        return np.array([f[0], f[1],
                         -s1 * y[2] - y[3],
                         -s2 * y[3] + y[2]])

    ts, ys, dense = _integrate_raw(rhs, y0, (0.0, horizon), cfg, 2)
    times = np.linspace(0.0, horizon, n_samples)
    margins = np.empty(n_samples)
    for i, t in enumerate(times):
        y = dense.eval(t)
        dy1, dy2 = y[2], y[3]
        s1 = 1.0 / math.cosh(0.5 * y[0]) ** 2
        v1dot = dy1 * (-s1 * dy1 - dy2)
        supply = (-dy2) * dy1
        margins[i] = v1dot - supply
    return times, margins


def horizontal_contraction_near_cycle(cycle: LimitCycle, sys: PlanarSystem,
                                      params: PendulumParams,
                                      cfg: IntegratorConfig,
                                      n_segments: int = 64) -> float:
    """Per-period contraction factor of transversally projected tangents.

    A unit tangent orthogonal to the flow at the anchor is transported
    around the cycle, re-projected onto the flow-orthogonal complement at
    each segment boundary; the product of norm growths is the factor, which
    matches |rho2| (the Poincare-map contraction).
    """
    from dataclasses import replace
    cfg = replace(cfg, h_max=min(cfg.h_max, 0.02))
    proj = TransversalToFlow()
    x = cycle.anchor
    pi0 = proj.at(sys, x, 0.0)
    # any projected vector spans the 1D transversal space
    w = pi0 @ np.array([0.0, 1.0])
    if np.linalg.norm(w) < 1e-12:
        w = pi0 @ np.array([1.0, 0.0])
    w = w / np.linalg.norm(w)
    factor = 1.0
    dt = cycle.period / n_segments
    t = 0.0
    for _ in range(n_segments):
        def rhs(time, y):
            out = np.empty(4)
            out[:2] = sys.f(y[:2], time)
            out[2:] = sys.jac(y[:2], time) @ y[2:]
            return out

        y0 = np.array([x.theta, x.v, w[0], w[1]])
        ts, ys, _ = _integrate_raw(rhs, y0, (t, t + dt), cfg, 2)
        end = ys[-1]
        x = CylinderPoint(wrap_angle(end[0]), end[1])
        t += dt
        pushed = np.array([end[2], end[3]])
        pi = proj.at(sys, x, t)
        projected = pi @ pushed
        growth = float(np.linalg.norm(projected))
        factor *= growth
        w = projected / growth
    return factor
