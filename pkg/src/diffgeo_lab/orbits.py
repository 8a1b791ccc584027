"""Fixed points, rotating limit cycles by shooting, Floquet multipliers,
Lyapunov exponents, saddle invariant manifolds, and the homoclinic gap."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (BranchEscaped, NoConvergence, NoCycle, NotASaddle)
from .integrate import (AngleCrossing, IntegratorConfig, Trajectory,
                        _integrate_raw, detect_crossings,
                        integrate_fundamental, integrate_prolonged,
                        integrate_state)
from .model import (TWO_PI, Constant, CylinderPoint, PendulumParams,
                    PlanarSystem, Tangent, angle_diff, pendulum_system,
                    wrap_angle)


@dataclass(frozen=True)
class FixedPoint:
    point: CylinderPoint
    eigenvalues: tuple          # pair of complex numbers
    classification: str         # StableNode, StableFocus, Saddle, UnstableNode,
                                # UnstableFocus, Center, Degenerate


@dataclass(frozen=True)
class LimitCycle:
    anchor: CylinderPoint
    period: float
    winding: int                # 0 libration, +-1 rotation
    multipliers: tuple          # (rho1, rho2), rho1 nearest 1
    samples: Trajectory
    closure_error: float


@dataclass(frozen=True)
class ManifoldBranch:
    origin: FixedPoint
    kind: str                   # "stable" | "unstable"
    sign: int                   # +-1 branch side
    theta: np.ndarray           # wrapped samples
    v: np.ndarray
    arclength: np.ndarray       # cumulative, in unwrapped coordinates


def _classify(cos_theta: float, k: float):
    """Eigenvalues and class of A(theta, k); lambda^2 + k*lambda + cos(theta) = 0."""
    disc = k * k - 4.0 * cos_theta
    if disc >= 0.0:
        r = math.sqrt(disc)
        lams = ((-k + r) / 2.0 + 0.0j, (-k - r) / 2.0 + 0.0j)
    else:
        r = math.sqrt(-disc)
        lams = (complex(-k / 2.0, r / 2.0), complex(-k / 2.0, -r / 2.0))
    re = sorted(l.real for l in lams)
    if abs(cos_theta) < 1e-14 or min(abs(l) for l in lams) < 1e-14:
        cls = "Degenerate"
    elif cos_theta < 0.0:
        cls = "Saddle"
    elif k == 0.0:
        cls = "Center"
    elif disc >= 0.0:
        cls = "StableNode" if re[1] < 0.0 else "UnstableNode"
    else:
        cls = "StableFocus" if re[1] < 0.0 else "UnstableFocus"
    return lams, cls


def find_fixed_points(params: PendulumParams) -> list[FixedPoint]:
    """Fixed points of the constant-torque pendulum.

    Two for |u| < 1 (theta = asin u and its supplement), one degenerate point
    at |u| = 1, none for |u| > 1.
    """
    if not isinstance(params.input, Constant):
        raise ValueError("fixed-point analysis needs a constant torque law")
    u = params.input.value
    if abs(u) > 1.0:
        return []
    if abs(u) == 1.0:
        theta = math.copysign(math.pi / 2.0, u)
        lams, _ = _classify(0.0, params.k)
        return [FixedPoint(CylinderPoint(theta, 0.0), lams, "Degenerate")]
    out = []
    for theta in (math.asin(u), math.pi - math.asin(u)):
        lams, cls = _classify(math.cos(theta), params.k)
        out.append(FixedPoint(CylinderPoint(theta, 0.0), lams, cls))
    return out


def _first_crossing_state(sys, x0, cfg, target_theta_u, t_budget):
    """Integrate the fundamental system until unwrapped theta passes the target.

    Returns (t*, state, Phi(t*)) at the refined crossing, or None if the
    target is never reached inside the budget.
    """
    up = target_theta_u > x0.theta

    def stop(t, y):
        if up and y[0] > target_theta_u + 0.1:
            return True
        if not up and y[0] < target_theta_u - 0.1:
            return True
        f = sys.f(y[:2], t)
        return f[0] * f[0] + f[1] * f[1] < 1e-16   # trapped at a fixed point

    traj = integrate_fundamental(sys, x0, cfg, (0.0, t_budget), stop_condition=stop)
    level = wrap_angle(target_theta_u)
    ev = detect_crossings(traj, AngleCrossing(level, direction=+1 if up else -1))
    for t_star, w in zip(ev.times, ev.windings):
        # keep only the requested 2*pi translate
        theta_u = wrap_angle(level) + TWO_PI * w
        if abs(theta_u - target_theta_u) < 1e-6:
            y = traj.dense.eval(t_star)
            Phi = np.array([[y[2], y[4]], [y[3], y[5]]])
            return float(t_star), y[:2], Phi
    return None


def find_limit_cycle(sys: PlanarSystem, params: PendulumParams,
                     cfg: IntegratorConfig, guess: float | None = None,
                     section_angle: float = 0.0) -> LimitCycle:
    """Locate a rotating limit cycle by scalar shooting on the section {theta = section_angle}.

    Newton iterates on the return-map residual P(v0) - v0, with the map
    derivative taken from the fundamental matrix at the return.  Raises
    NoCycle when trajectories fall into a fixed point and NoConvergence after
    the iteration budget.
    """
    if not isinstance(params.input, Constant):
        raise ValueError("autonomous cycle search needs a constant torque law")
    u = params.input.value
    dirn = 1 if u >= 0.0 else -1
    k = params.k
    # crossing times come from bisection on the cubic dense output, whose
    # accuracy scales like h_max^4; cap the step (and the tolerance, which
    # is free once h_max binds) so closure meets 1e-8
    cfg = replace(cfg, h_max=min(cfg.h_max, 0.02),
                  rel_tol=min(cfg.rel_tol, 1e-11),
                  abs_tol=min(cfg.abs_tol, 1e-11))

    v0 = guess
    if v0 is None:
        v_seed = dirn * max(1.5, 1.5 * (abs(u) + 1.0) / max(k, 0.25))
        x = CylinderPoint(section_angle, v_seed)
        # relax onto the attractor: a few successive revolutions
        for _ in range(12):
            hit = _first_crossing_state(sys, x, cfg,
                                        x.theta + dirn * TWO_PI,
                                        min(cfg.max_time, 400.0))
            if hit is None:
                raise NoCycle("no full revolution inside the time budget")
            t_star, y, _ = hit
            prev_v = x.v
            x = CylinderPoint(wrap_angle(y[0]), y[1])
            if abs(x.v - prev_v) < 5e-3:
                break
        v0 = x.v

    # dense-output crossing error grows like h^4 v^3; tighten with speed
    cfg = replace(cfg, h_max=min(cfg.h_max, 0.03 / max(1.0, abs(v0)) ** 0.75))

    anchor_theta = wrap_angle(section_angle)
    T = None
    Phi = None
    for _ in range(50):
        x0 = CylinderPoint(anchor_theta, v0)
        hit = _first_crossing_state(sys, x0, cfg, anchor_theta + dirn * TWO_PI,
                                    min(cfg.max_time, 2000.0))
        if hit is None:
            raise NoCycle("shooting trajectory fell into a fixed point")
        T, y_end, Phi = hit
        g = y_end[1] - v0
        if abs(g) < 1e-11:
            break
        f_end = sys.f(y_end, T)
        if abs(f_end[0]) < 1e-12:
            raise NoCycle("return state is tangential to the section")
        dP = Phi[1, 1] - f_end[1] * Phi[0, 1] / f_end[0]
        denom = dP - 1.0
        if abs(denom) < 1e-14:
            raise NoConvergence("degenerate shooting derivative")
        step = -g / denom
        cap = 0.5 * max(1.0, abs(v0))
        if abs(step) > cap:
            step = math.copysign(cap, step)
        v0 = v0 + step
    else:
        raise NoConvergence("shooting did not converge in 50 Newton steps")

    anchor = CylinderPoint(anchor_theta, v0)
    samples = integrate_state(sys, anchor, cfg, (0.0, T))
    end = samples.point(len(samples.times) - 1)
    closure = math.hypot(angle_diff(end.theta, anchor.theta), end.v - anchor.v)
    if closure > 1e-8:
        raise NoConvergence(f"cycle closure error {closure:.2e} exceeds 1e-8")
    rho1, rho2 = floquet_multipliers_from_anchor(sys, anchor, T, cfg)
    return LimitCycle(anchor=anchor, period=T, winding=dirn,
                      multipliers=(rho1, rho2), samples=samples,
                      closure_error=closure)


def _monodromy_qr(sys, anchor, period, cfg, chunk=1.0):
    """Propagate the fundamental matrix over one period with QR renormalization.

    Returns (M, logdet): M is the monodromy in a mixed representation
    Q * prod(R) whose trace is well conditioned, and logdet accumulates
    log |r11 r22| per chunk, so the tiny determinant is carried in log space
    instead of cancelling in doubles.
    """
    n = max(1, int(math.ceil(period / chunk)))
    dt = period / n
    x = anchor
    t0 = 0.0
    Q = np.eye(2)
    R_prod = np.eye(2)
    logdet = 0.0

    def rhs(t, y):
        out = np.empty(6)
        out[:2] = sys.f(y[:2], t)
        J = sys.jac(y[:2], t)
        out[2:4] = J @ y[2:4]
        out[4:6] = J @ y[4:6]
        return out

    for _ in range(n):
        y0 = np.array([x.theta + 0.0, x.v, Q[0, 0], Q[1, 0], Q[0, 1], Q[1, 1]])
        ts, ys, _ = _integrate_raw(rhs, y0, (t0, t0 + dt), cfg, 2)
        y_end = ys[-1]
        Phi = np.array([[y_end[2], y_end[4]], [y_end[3], y_end[5]]])
        Qn, Rn = np.linalg.qr(Phi)
        # pin positive diagonal so the accumulated signs stay in R
        s = np.sign(np.diag(Rn))
        s[s == 0] = 1.0
        Qn = Qn * s
        Rn = (Rn.T * s).T
        logdet += math.log(Rn[0, 0]) + math.log(Rn[1, 1])
        Q = Qn
        R_prod = Rn @ R_prod
        x = CylinderPoint(wrap_angle(y_end[0]), y_end[1])
        t0 += dt
    return Q @ R_prod, logdet


def fundamental_logdet_series(sys: PlanarSystem, x0: CylinderPoint,
                              cfg: IntegratorConfig, t_end: float,
                              chunk: float = 1.0):
    """log det Phi(t) at chunk boundaries, accumulated through QR diagonals.

    Mathematically identical to the determinant of the integrated
    fundamental matrix, but free of the catastrophic cancellation that makes
    the direct 2x2 determinant meaningless once e^{-kt} falls below the
    square of the column norms.
    """
    n = max(1, int(math.ceil(t_end / chunk)))
    dt = t_end / n

    def rhs(t, y):
        out = np.empty(6)
        out[:2] = sys.f(y[:2], t)
        J = sys.jac(y[:2], t)
        out[2:4] = J @ y[2:4]
        out[4:6] = J @ y[4:6]
        return out

    Q = np.eye(2)
    x = x0
    t0 = 0.0
    logdet = 0.0
    times, values = [0.0], [0.0]
    for _ in range(n):
        y0 = np.array([x.theta, x.v, Q[0, 0], Q[1, 0], Q[0, 1], Q[1, 1]])
        ts, ys, _ = _integrate_raw(rhs, y0, (t0, t0 + dt), cfg, 2)
        e = ys[-1]
        Phi = np.array([[e[2], e[4]], [e[3], e[5]]])
        Qn, Rn = np.linalg.qr(Phi)
        s = np.sign(np.diag(Rn))
        s[s == 0] = 1.0
        Qn = Qn * s
        Rn = (Rn.T * s).T
        logdet += math.log(Rn[0, 0]) + math.log(Rn[1, 1])
        Q = Qn
        x = CylinderPoint(wrap_angle(e[0]), e[1])
        t0 += dt
        times.append(t0)
        values.append(logdet)
    return np.array(times), np.array(values)


def floquet_multipliers_from_anchor(sys, anchor, period, cfg):
    """Multipliers of the monodromy around one period from the anchor.

    rho1 is the root of the characteristic polynomial nearest 1; rho2 is
    recovered from the log-determinant, which stays accurate when e^{-kT}
    underflows the directly computed 2x2 determinant.
    """
    cfg = replace(cfg, h_max=min(cfg.h_max, 0.02))
    M, logdet = _monodromy_qr(sys, anchor, period, cfg)
    tr = float(np.trace(M))
    det = math.exp(logdet)
    disc = tr * tr - 4.0 * det
    if disc < 0.0:
        r = math.sqrt(det)
        phi = math.acos(max(-1.0, min(1.0, tr / (2.0 * r))))
        lam = complex(r * math.cos(phi), r * math.sin(phi))
        pair = (lam, lam.conjugate())
        return max(pair, key=lambda z: -abs(z - 1.0)), min(pair, key=lambda z: -abs(z - 1.0))
    root = math.sqrt(disc)
    big = (tr + root) / 2.0 if tr >= 0.0 else (tr - root) / 2.0
    small = det / big
    if abs(big - 1.0) <= abs(small - 1.0):
        return big, small
    return small, big


def floquet_multipliers(cycle: LimitCycle, sys: PlanarSystem,
                        params: PendulumParams, cfg: IntegratorConfig):
    """(rho1, rho2) of the located cycle, rho1 sorted nearest 1."""
    return floquet_multipliers_from_anchor(sys, cycle.anchor, cycle.period, cfg)


@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    times: np.ndarray           # running-estimate trace
    running: np.ndarray
    confidence: float


def max_lyapunov_exponent(sys: PlanarSystem, params: PendulumParams | None,
                          x0: CylinderPoint, cfg: IntegratorConfig,
                          horizon: float, renorm_interval: float = 1.0,
                          warmup: float = 0.0,
                          d0: Tangent | None = None) -> LyapunovEstimate:
    """Benettin estimate of the maximal Lyapunov exponent.

    A unit tangent is propagated through the prolonged system and
    renormalized every ``renorm_interval``; log-growths accumulated after
    ``warmup`` give sum(log growth)/t.  The running series supports
    convergence inspection; the confidence band combines the SEM of the
    per-interval rates with the drift of the running estimate.
    """
    if horizon <= max(warmup, 0.0) + renorm_interval:
        raise ValueError("horizon must exceed warmup by at least one interval")
    d = sys.dim
    if d0 is None:
        vec = np.ones(d) / math.sqrt(d)
    else:
        vec = d0.as_array()[:d]
        vec = vec / np.linalg.norm(vec)
    x = x0
    t = 0.0
    total = 0.0
    acc_time = 0.0
    rates = []
    times, running = [], []
    n_steps = int(round((horizon) / renorm_interval))
    for i in range(n_steps):
        tr = integrate_prolonged(sys, x, Tangent(*(list(vec) + [0.0] * (2 - d))),
                                 cfg, (t, t + renorm_interval))
        raw_end = tr.raw[-1]
        x = CylinderPoint(wrap_angle(raw_end[0]), raw_end[1] if d == 2 else 0.0)
        dvec = raw_end[d:]
        growth = float(np.linalg.norm(dvec))
        vec = dvec / growth
        t += renorm_interval
        if t > warmup:
            total += math.log(growth)
            acc_time += renorm_interval
            rates.append(math.log(growth) / renorm_interval)
            times.append(t)
            running.append(total / acc_time)
    value = total / acc_time
    rates = np.array(rates)
    sem = float(np.std(rates) / math.sqrt(len(rates))) if len(rates) > 1 else 0.0
    half = running[len(running) // 2] if len(running) > 1 else value
    confidence = max(2.0 * sem, 2.0 * abs(value - half), 1e-12)
    return LyapunovEstimate(value=value, times=np.array(times),
                            running=np.array(running), confidence=confidence)


EPS_MANIFOLD = 1e-6


def _saddle_eigvectors(fp: FixedPoint, params: PendulumParams):
    k = params.k
    c = math.cos(fp.point.theta)
    disc = k * k - 4.0 * c
    if disc <= 0.0:
        raise NotASaddle("complex spectrum")
    r = math.sqrt(disc)
    lam_u = (-k + r) / 2.0
    lam_s = (-k - r) / 2.0
    if not (lam_u > 0.0 > lam_s):
        raise NotASaddle("eigenvalues do not straddle zero")
    e_u = np.array([1.0, lam_u])
    e_s = np.array([1.0, lam_s])
    return lam_u, lam_s, e_u / np.linalg.norm(e_u), e_s / np.linalg.norm(e_s)


def _reverse_system(sys: PlanarSystem) -> PlanarSystem:
    return PlanarSystem(kind=sys.kind, dim=sys.dim, space=sys.space,
                        f=lambda y, t: -sys.f(y, -t),
                        jac=lambda y, t: -sys.jac(y, -t),
                        angular=sys.angular, params=sys.params,
                        input=sys.input, du=sys.du)


def saddle_manifolds(fp: FixedPoint, sys: PlanarSystem, params: PendulumParams,
                     cfg: IntegratorConfig, arclength_budget: float,
                     v_max: float = 6.0) -> list[ManifoldBranch]:
    """Four invariant-manifold branches of a saddle, as polylines.

    Unstable branches integrate forward from fp +- eps * e_u; stable
    branches integrate the reversed field from fp +- eps * e_s.  Polylines
    stop at the arclength budget or on leaving |v| <= v_max.
    """
    if fp.classification != "Saddle":
        raise NotASaddle(f"fixed point is {fp.classification}")
    _, _, e_u, e_s = _saddle_eigvectors(fp, params)
    base = fp.point.as_array()
    branches = []
    for kind, evec, system in (("unstable", e_u, sys),
                               ("stable", e_s, _reverse_system(sys))):
        for sign in (+1, -1):
            y0 = base + sign * EPS_MANIFOLD * evec
            x0 = CylinderPoint(y0[0], y0[1])
            state = {"s": 0.0, "prev": None}

            def stop(t, y, state=state):
                if state["prev"] is not None:
                    p = state["prev"]
                    state["s"] += math.hypot(y[0] - p[0], y[1] - p[1])
                state["prev"] = np.array(y[:2])
                return state["s"] >= arclength_budget or abs(y[1]) > v_max

            traj = integrate_state(system, x0, cfg, (0.0, cfg.max_time),
                                   stop_condition=stop)
            theta_u = traj.theta_unwrapped
            seg = np.hypot(np.diff(theta_u), np.diff(traj.v))
            arclength = np.concatenate([[0.0], np.cumsum(seg)])
            branches.append(ManifoldBranch(origin=fp, kind=kind, sign=sign,
                                           theta=traj.theta, v=traj.v,
                                           arclength=arclength))
    return branches


def _branch_section_v(sys, seed: CylinderPoint, target_theta_u: float,
                      cfg: IntegratorConfig, v_cap: float, t_budget: float,
                      seed_theta_u: float, none_on_turnaround: bool = False):
    """v at the first crossing of the (unwrapped) section angle along a branch.

    With ``none_on_turnaround`` the search reports None once v crosses zero
    (the branch can no longer progress toward the section); the caller maps
    that to the limit value 0 of a marginally-reaching branch.
    """
    up = target_theta_u > seed_theta_u

    def stop(t, y):
        if abs(y[1]) > v_cap:
            return True
        if none_on_turnaround and y[1] <= 0.0:
            return True
        return y[0] > target_theta_u + 0.05 if up else y[0] < target_theta_u - 0.05

    y0 = np.array([seed_theta_u, seed.v])
    ts, ys, dense = _integrate_raw(lambda t, y: sys.f(y, t), y0, (0.0, t_budget),
                                   cfg, 2, stop_condition=stop)
    if abs(ys[-1][1]) > v_cap:
        raise BranchEscaped("branch left the trapping region before the section")
    traj = Trajectory(times=ts, theta=np.array([wrap_angle(a) for a in ys[:, 0]]),
                      v=ys[:, 1],
                      winding=np.floor((ys[:, 0] + math.pi) / TWO_PI).astype(int),
                      raw=ys, dense=dense, dim=2)
    ev = detect_crossings(traj, AngleCrossing(wrap_angle(target_theta_u),
                                              direction=+1 if up else -1))
    for t_star, w in zip(ev.times, ev.windings):
        theta_u = wrap_angle(target_theta_u) + TWO_PI * w
        if abs(theta_u - target_theta_u) < 1e-6:
            return float(traj.dense.eval(t_star)[1])
    if none_on_turnaround and ys[-1][1] <= 0.0:
        return None
    raise BranchEscaped("branch never reached the section inside the budget")


def homoclinic_gap(params: PendulumParams, cfg: IntegratorConfig,
                   v_cap: float | None = None, t_budget: float = 400.0) -> float:
    """Signed v-gap between the saddle's forward unstable branch and backward
    stable branch on the section half a revolution from the saddle.

    Zero signals the homoclinic connection; positive means the rotating cycle
    survives above the loop.  Both branches are taken on the v > 0 side.
    Far above the connection the backward stable branch turns around (v
    reaches 0) before the section; its crossing value is then taken as 0,
    the continuous limit of a marginally-reaching branch.
    """
    if not isinstance(params.input, Constant):
        raise ValueError("homoclinic analysis needs a constant torque law")
    u = params.input.value
    if abs(u) >= 1.0:
        raise ValueError("saddle exists only for |u| < 1")
    cfg = replace(cfg, h_max=min(cfg.h_max, 0.05))
    saddle = next(fp for fp in find_fixed_points(params)
                  if fp.classification == "Saddle")
    lam_u, lam_s, e_u, e_s = _saddle_eigvectors(saddle, params)
    if v_cap is None:
        # the backward stable branch legitimately climbs ~ k*pi over half a turn
        v_cap = max(6.0 * (abs(u) + 1.0) / max(params.k, 0.4),
                    math.pi * params.k + 5.0)
    th_s = saddle.point.theta
    sys = pendulum_system(params)

    # forward unstable branch with v > 0 (e_u has positive v-component)
    seed_u = CylinderPoint(th_s + EPS_MANIFOLD * e_u[0], EPS_MANIFOLD * e_u[1])
    v_unstable = _branch_section_v(sys, seed_u, th_s + math.pi, cfg, v_cap,
                                   t_budget, th_s + EPS_MANIFOLD * e_u[0])

    # backward stable branch with v > 0 lies at theta < theta_s (e_s v-component < 0)
    rev = _reverse_system(sys)
    seed_s = CylinderPoint(th_s - EPS_MANIFOLD * e_s[0], -EPS_MANIFOLD * e_s[1])
    v_stable = _branch_section_v(rev, seed_s, th_s - math.pi, cfg, v_cap,
                                 t_budget, th_s - EPS_MANIFOLD * e_s[0],
                                 none_on_turnaround=True)
    if v_stable is None:
        v_stable = 0.0
    return v_unstable - v_stable
