"""Deterministic ODE integration for the state, the prolonged system, and the
fundamental matrix, with dense output and Poincare-section event detection.

The integrator is an embedded Dormand-Prince 5(4) pair (plus a fixed-step
RK4) with cubic Hermite dense output.  Everything is seedless and pure, so
repeated runs are bit-identical.  For combined systems (state + tangent or
state + fundamental matrix) the adaptive error control looks at the state
components only; the tangent channel is therefore exactly linear in its
initial condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteState, StepSizeUnderflow, TangentialCrossing
from .model import TWO_PI, CylinderPoint, PlanarSystem, Tangent, wrap_angle

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
# b5 - b4 (error weights; k7 = FSAL evaluation at the new point)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration method and tolerances.  Fully deterministic (seedless)."""

    method: str = "rk45"          # "rk45" | "rk4"
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    h_min: float = 1e-12
    h_max: float = 0.1
    h: float = 1e-3               # fixed step for rk4
    max_time: float = 1e4         # budget consulted by search operations

    def __post_init__(self):
        if self.method not in ("rk45", "rk4"):
            raise ValueError("method must be 'rk45' or 'rk4'")
        if self.h <= 0.0 or self.rel_tol <= 0.0 or self.abs_tol <= 0.0:
            raise ValueError("step and tolerances must be positive")
        if self.h_min > self.h_max:
            raise ValueError("h_min must not exceed h_max")


class DenseOutput:
    """Piecewise cubic Hermite interpolant over the accepted steps."""

    def __init__(self, times: np.ndarray, states: np.ndarray, derivs: np.ndarray):
        self.times = times
        self.states = states
        self.derivs = derivs

    def _segment(self, t: float) -> int:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(i, 0), len(self.times) - 2)

    def _eval_segment(self, i: int, t: float):
        t0, t1 = self.times[i], self.times[i + 1]
        h = t1 - t0
        s = (t - t0) / h
        s2, s3 = s * s, s * s * s
        h00 = 2 * s3 - 3 * s2 + 1
        h10 = s3 - 2 * s2 + s
        h01 = -2 * s3 + 3 * s2
        h11 = s3 - s2
        y = (h00 * self.states[i] + h01 * self.states[i + 1]
             + h * (h10 * self.derivs[i] + h11 * self.derivs[i + 1]))
        d00 = (6 * s2 - 6 * s) / h
        d10 = 3 * s2 - 4 * s + 1
        d11 = 3 * s2 - 2 * s
        dy = (d00 * (self.states[i] - self.states[i + 1])
              + d10 * self.derivs[i] + d11 * self.derivs[i + 1])
        return y, dy

    def eval(self, t: float) -> np.ndarray:
        return self._eval_segment(self._segment(t), t)[0]

    def eval_derivative(self, t: float) -> np.ndarray:
        return self._eval_segment(self._segment(t), t)[1]

    def eval_many(self, ts: np.ndarray) -> np.ndarray:
        """Vectorized interpolation; returns shape (len(ts), dim)."""
        ts = np.asarray(ts, dtype=float)
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1,
                      0, len(self.times) - 2)
        t0 = self.times[idx]
        h = self.times[idx + 1] - t0
        s = ((ts - t0) / h)[:, None]
        s2, s3 = s * s, s * s * s
        y0, y1 = self.states[idx], self.states[idx + 1]
        f0, f1 = self.derivs[idx], self.derivs[idx + 1]
        hcol = h[:, None]
        return ((2 * s3 - 3 * s2 + 1) * y0 + (-2 * s3 + 3 * s2) * y1
                + hcol * ((s3 - 2 * s2 + s) * f0 + (s3 - s2) * f1))


def _rk45_loop(rhs, y0, t0, t1, cfg, err_dim, stop_condition):
    ts = [t0]
    ys = [np.array(y0, dtype=float)]
    fs = [rhs(t0, ys[0])]
    t, y, f = t0, ys[0], fs[0]
    h = min(cfg.h_max, t1 - t0)
    ks = [None] * 7
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        h = min(h, t1 - t)
        ks[0] = f
        for i in range(1, 6):
            acc = ks[0] * _A[i][0]
            for j in range(1, i):
                acc = acc + ks[j] * _A[i][j]
            ks[i] = rhs(t + _C[i] * h, y + h * acc)
        y_new = y + h * (_B[0] * ks[0] + _B[2] * ks[2] + _B[3] * ks[3]
                         + _B[4] * ks[4] + _B[5] * ks[5])
        if not np.all(np.isfinite(y_new)):
            raise NonFiniteState(f"non-finite state at t = {t + h}")
        f_new = rhs(t + h, y_new)
        ks[6] = f_new
        err = h * (_E[0] * ks[0] + _E[2] * ks[2] + _E[3] * ks[3]
                   + _E[4] * ks[4] + _E[5] * ks[5] + _E[6] * ks[6])
        scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y[:err_dim]),
                                                       np.abs(y_new[:err_dim]))
        err_norm = math.sqrt(float(np.mean((err[:err_dim] / scale) ** 2)))
        if err_norm <= 1.0:
            t = t + h
            y, f = y_new, f_new
            ts.append(t)
            ys.append(y)
            fs.append(f)
            factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            h = min(cfg.h_max, h * factor)
            if stop_condition is not None and stop_condition(t, y):
                break
        else:
            h = h * max(0.2, 0.9 * err_norm ** -0.2)
            if h < cfg.h_min:
                raise StepSizeUnderflow(f"step control needs h < h_min at t = {t}")
    return np.array(ts), np.array(ys), np.array(fs)


def _rk4_loop(rhs, y0, t0, t1, cfg, stop_condition):
    ts = [t0]
    ys = [np.array(y0, dtype=float)]
    fs = [rhs(t0, ys[0])]
    t, y = t0, ys[0]
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        h = min(cfg.h, t1 - t)
        k1 = fs[-1]
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise NonFiniteState(f"non-finite state at t = {t + h}")
        t = t + h
        ts.append(t)
        ys.append(y)
        fs.append(rhs(t, y))
        if stop_condition is not None and stop_condition(t, y):
            break
    return np.array(ts), np.array(ys), np.array(fs)


def _integrate_raw(rhs, y0, t_span, cfg: IntegratorConfig, err_dim: int,
                   stop_condition=None):
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 >= t0):
        raise ValueError("t_span must be finite with t1 >= t0")
    if t1 == t0:
        y = np.array(y0, dtype=float)
        f = rhs(t0, y)
        ts = np.array([t0, t0 + 1e-300])
        return ts[:1], y[None, :], DenseOutput(ts, np.array([y, y]), np.array([f, f]))
    if cfg.method == "rk4":
        ts, ys, fs = _rk4_loop(rhs, y0, t0, t1, cfg, stop_condition)
    else:
        ts, ys, fs = _rk45_loop(rhs, y0, t0, t1, cfg, err_dim, stop_condition)
    return ts, ys, DenseOutput(ts, ys, fs)


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution with wrapped angle, winding count, and dense output.

    ``raw`` keeps the full (unwrapped) integration state per sample; tangent
    and fundamental channels, when present, are views into it.
    """

    times: np.ndarray
    theta: np.ndarray
    v: np.ndarray
    winding: np.ndarray
    dtheta: np.ndarray | None = None
    dv: np.ndarray | None = None
    fundamental: np.ndarray | None = None
    raw: np.ndarray | None = None
    dense: DenseOutput | None = field(default=None, repr=False, compare=False)
    dim: int = 2

    def __post_init__(self):
        n = len(self.times)
        if n > 1 and not np.all(np.diff(self.times) > 0.0):
            raise ValueError("trajectory times must be strictly increasing")
        for arr in (self.theta, self.v, self.winding):
            if len(arr) != n:
                raise ValueError("trajectory arrays must share one length")

    @property
    def theta_unwrapped(self) -> np.ndarray:
        return self.theta + TWO_PI * self.winding

    def point(self, i: int) -> CylinderPoint:
        return CylinderPoint(self.theta[i], self.v[i])

    def tangent(self, i: int) -> Tangent:
        if self.dtheta is None:
            raise ValueError("trajectory carries no tangent channel")
        return Tangent(self.dtheta[i], self.dv[i])


def _split_windings(theta_u: np.ndarray):
    winding = np.floor((theta_u + math.pi) / TWO_PI).astype(int)
    return theta_u - TWO_PI * winding, winding


def _build_trajectory(sys: PlanarSystem, ts, ys, dense, tangents=False,
                      fundamental=False) -> Trajectory:
    d = sys.dim
    theta, winding = _split_windings(ys[:, 0])
    v = ys[:, 1] if d == 2 else np.zeros(len(ts))
    dtheta = dv = fund = None
    if tangents:
        dtheta = ys[:, d]
        dv = ys[:, d + 1] if d == 2 else np.zeros(len(ts))
    if fundamental:
        n = len(ts)
        if d == 2:
            # columns stored stacked: [phi11, phi21, phi12, phi22]
            fund = np.empty((n, 2, 2))
            fund[:, 0, 0] = ys[:, 2]
            fund[:, 1, 0] = ys[:, 3]
            fund[:, 0, 1] = ys[:, 4]
            fund[:, 1, 1] = ys[:, 5]
        else:
            fund = ys[:, 1].reshape(n, 1, 1)
    return Trajectory(times=ts, theta=theta, v=v, winding=winding,
                      dtheta=dtheta, dv=dv, fundamental=fund,
                      raw=ys, dense=dense, dim=d)


def integrate_state(sys: PlanarSystem, x0: CylinderPoint, cfg: IntegratorConfig,
                    t_span, stop_condition=None) -> Trajectory:
    """Integrate the state; wrapping applied per sample, winding tracked."""
    y0 = x0.as_array()[: sys.dim]
    ts, ys, dense = _integrate_raw(lambda t, y: sys.f(y, t), y0, t_span, cfg,
                                   sys.dim, stop_condition)
    return _build_trajectory(sys, ts, ys, dense)


def integrate_prolonged(sys: PlanarSystem, x0: CylinderPoint, d0: Tangent,
                        cfg: IntegratorConfig, t_span,
                        stop_condition=None) -> Trajectory:
    """Jointly integrate x' = f(x), dx' = J(x) dx.

    Step control sees the state only, so the tangent output is exactly
    linear in d0.
    """
    d = sys.dim

    def rhs(t, y):
        out = np.empty(2 * d)
        out[:d] = sys.f(y[:d], t)
        out[d:] = sys.jac(y[:d], t) @ y[d:]
        return out

    y0 = np.concatenate([x0.as_array()[:d], d0.as_array()[:d]])
    ts, ys, dense = _integrate_raw(rhs, y0, t_span, cfg, d, stop_condition)
    return _build_trajectory(sys, ts, ys, dense, tangents=True)


def integrate_fundamental(sys: PlanarSystem, x0: CylinderPoint,
                          cfg: IntegratorConfig, t_span,
                          stop_condition=None) -> Trajectory:
    """Integrate the fundamental matrix Phi' = J(x) Phi, Phi(0) = I, with the state."""
    d = sys.dim

    if d == 2:
        def rhs(t, y):
            out = np.empty(6)
            out[:2] = sys.f(y[:2], t)
            J = sys.jac(y[:2], t)
            out[2] = J[0, 0] * y[2] + J[0, 1] * y[3]
            out[3] = J[1, 0] * y[2] + J[1, 1] * y[3]
            out[4] = J[0, 0] * y[4] + J[0, 1] * y[5]
            out[5] = J[1, 0] * y[4] + J[1, 1] * y[5]
            return out

        y0 = np.array([x0.theta, x0.v, 1.0, 0.0, 0.0, 1.0])
    else:
        def rhs(t, y):
            f = sys.f(y[:1], t)
            J = sys.jac(y[:1], t)
            return np.array([f[0], J[0, 0] * y[1]])

        y0 = np.array([x0.theta, 1.0])
    ts, ys, dense = _integrate_raw(rhs, y0, t_span, cfg, d, stop_condition)
    return _build_trajectory(sys, ts, ys, dense, fundamental=True)


@dataclass(frozen=True)
class AngleCrossing:
    """Section {theta = theta_star} on the cylinder; all 2*pi translates count."""

    theta: float
    direction: int = 0     # +1 increasing, -1 decreasing, 0 both


@dataclass(frozen=True)
class VelocityCrossing:
    v: float
    direction: int = 0


@dataclass(frozen=True)
class SectionEvent:
    section: object
    times: np.ndarray
    states: tuple
    windings: tuple


_TRANSVERSALITY_TOL = 1e-8
_BISECT_ITERS = 60


def _refine_crossing(dense: DenseOutput, channel: int, level: float,
                     lo: float, hi: float):
    glo = dense.eval(lo)[channel] - level
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        gmid = dense.eval(mid)[channel] - level
        if gmid == 0.0:
            lo = hi = mid
            break
        if (glo < 0.0) == (gmid < 0.0):
            lo, glo = mid, gmid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    t_star = 0.5 * (lo + hi)
    slope = dense.eval_derivative(t_star)[channel]
    if abs(slope) <= _TRANSVERSALITY_TOL:
        raise TangentialCrossing(f"section crossing at t = {t_star} is tangential")
    return t_star, slope


_SUBDIV = 8


def detect_crossings(traj: Trajectory, section) -> SectionEvent:
    """Locate section crossings on the dense output, refined by bisection.

    Crossing times satisfy the section equation on the interpolant to below
    1e-10; the direction filter keeps only the requested sign of d/dt.
    """
    if traj.dense is None:
        raise ValueError("trajectory carries no dense output")
    dense = traj.dense
    if isinstance(section, AngleCrossing):
        channel = 0
        direction = section.direction
        values = dense.states[:, 0]
        n_lo = math.floor((values.min() - section.theta) / TWO_PI) - 1
        n_hi = math.ceil((values.max() - section.theta) / TWO_PI) + 1
        levels = [section.theta + TWO_PI * n for n in range(n_lo, n_hi + 1)]
    elif isinstance(section, VelocityCrossing):
        if traj.dim != 2:
            raise ValueError("velocity sections need a 2D system")
        channel = 1
        direction = section.direction
        levels = [section.v]
    else:
        raise TypeError("unknown section spec")

    times, states, windings = [], [], []
    node_times = dense.times
    for i in range(len(node_times) - 1):
        t0, t1 = node_times[i], node_times[i + 1]
        if t1 <= t0:
            continue
        sub = np.linspace(t0, t1, _SUBDIV + 1)
        gvals = np.array([dense.eval(t)[channel] for t in sub])
        for level in levels:
            g = gvals - level
            for j in range(_SUBDIV):
                a, b = g[j], g[j + 1]
                if a == 0.0:
                    if i == 0 and j == 0 and abs(dense.eval_derivative(sub[j])[channel]) > _TRANSVERSALITY_TOL:
                        t_star, slope = sub[j], dense.eval_derivative(sub[j])[channel]
                    else:
                        continue
                elif a * b < 0.0:
                    t_star, slope = _refine_crossing(dense, channel, level, sub[j], sub[j + 1])
                else:
                    continue
                if direction != 0 and (slope > 0) != (direction > 0):
                    continue
                y = dense.eval(t_star)
                theta_w, winding = _split_windings(np.array([y[0]]))
                times.append(t_star)
                states.append(CylinderPoint(theta_w[0], y[1] if traj.dim == 2 else 0.0))
                windings.append(int(winding[0]))
    order = np.argsort(times)
    return SectionEvent(section=section,
                        times=np.array([times[i] for i in order]),
                        states=tuple(states[i] for i in order),
                        windings=tuple(windings[i] for i in order))
