"""Differential positivity machinery: cone-field invariance with strictness
margins, Perron-Frobenius direction extraction by projective iteration,
vector-field alignment, the omega-limit dichotomy, the limit-cycle
certificate, and the homoclinic obstruction diagnostic."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import Inconclusive, NoConvergence, NoCycle
from .geometry import ConeFieldSpec, cone_membership
from .integrate import (IntegratorConfig, _integrate_raw, integrate_prolonged,
                        integrate_state)
from .model import (TWO_PI, Constant, CylinderPoint, PendulumParams,
                    PlanarSystem, Tangent, angle_diff, pendulum_system,
                    wrap_angle)
from .orbits import (LimitCycle, find_fixed_points, find_limit_cycle,
                     homoclinic_gap)

MARGIN_TOL = 1e-9          # infinitesimal-margin verdict threshold
STRICT_INTERIOR = 1e-6     # uniform finite-time interior margin


def theta_grid(n: int = 720) -> np.ndarray:
    """n equispaced angles in [-pi, pi); contains 0 exactly for even n."""
    return np.linspace(-math.pi, math.pi, n + 1)[:-1]


def product_grid(thetas, vs) -> list[CylinderPoint]:
    return [CylinderPoint(th, v) for th in thetas for v in vs]


def _functional_flow_derivative(cone: ConeFieldSpec, sys: PlanarSystem,
                                p: CylinderPoint, t: float, i: int) -> np.ndarray:
    """d a_i / dt along the flow; zero for constant cones, FD for callables."""
    if not callable(cone.functionals):
        return np.zeros(2)
    h = 1e-6
    y = p.as_array()
    f = sys.f(y, t)
    ahead = cone.matrix(CylinderPoint(y[0] + h * f[0], y[1] + h * f[1]))
    here = cone.matrix(p)
    return (ahead[i] - here[i]) / h


def _ray_margin(cone: ConeFieldSpec, sys: PlanarSystem, p: CylinderPoint,
                t: float, i: int, ray: np.ndarray) -> float:
    """Inward derivative of the active functional on its boundary ray."""
    A = cone.matrix(p)
    J = sys.jac(p.as_array()[: sys.dim], t)
    m = float(A[i] @ (J @ ray))
    if callable(cone.functionals):
        m += float(_functional_flow_derivative(cone, sys, p, t, i) @ ray)
    return m


@dataclass(frozen=True)
class InvarianceReport:
    k: float | None
    u: float | None
    verdict: str                    # strictly-invariant | marginally-invariant | violated
    min_margin: float
    argmin: tuple                   # (theta, v, functional index)
    finite_time_min: float | None   # min interior margin of pushed boundary rays
    uniform_strict: bool
    witness: dict | None
    tau: float
    n_grid: int


def verify_cone_invariance(sys: PlanarSystem, params: PendulumParams | None,
                           cone: ConeFieldSpec, grid, tau: float = 1.0,
                           cfg: IntegratorConfig | None = None,
                           flow_subsample: int = 8) -> InvarianceReport:
    """Two-level cone invariance check over a grid of states.

    (a) infinitesimal: on each boundary ray the active functional's Lie
    derivative along the linearized flow must be >= 0 (strictly > 0 for
    strict positivity); (b) finite-time: boundary rays pushed through the
    tangent flow over tau must land inside the target cone.  A violated
    verdict carries a concrete witness triple (x, dx in K(x), t <= tau).
    """
    cfg = cfg or IntegratorConfig()
    grid = list(grid)
    min_margin = math.inf
    argmin = None
    for p in grid:
        rays = cone.boundary_rays(p)
        for i, ray in enumerate(rays):
            m = _ray_margin(cone, sys, p, 0.0, i, ray)
            if m < min_margin:
                min_margin = m
                argmin = (p.theta, p.v, i)

    if min_margin > MARGIN_TOL:
        verdict = "strictly-invariant"
    elif min_margin >= -MARGIN_TOL:
        verdict = "marginally-invariant"
    else:
        verdict = "violated"

    finite_time_min = None
    witness = None
    if verdict == "violated":
        p = CylinderPoint(argmin[0], argmin[1])
        ray = cone.boundary_rays(p)[argmin[2]]
        # push the worst boundary ray until it leaves the moving cone
        for t_push in (0.05, 0.1, 0.25, 0.5, tau):
            traj = integrate_prolonged(sys, p, Tangent(ray[0], ray[1]), cfg,
                                       (0.0, t_push))
            end = traj.raw[-1]
            q = CylinderPoint(wrap_angle(end[0]), end[1] if sys.dim == 2 else 0.0)
            mem = cone_membership(cone, q, Tangent(end[sys.dim],
                                                   end[sys.dim + 1] if sys.dim == 2 else 0.0))
            if mem.kind == "outside":
                witness = {"theta": p.theta, "v": p.v,
                           "dtheta": float(ray[0]), "dv": float(ray[1]),
                           "t": t_push, "exit_margin": mem.margin}
                break
    else:
        worst = math.inf
        for p in grid[::flow_subsample]:
            for ray in cone.boundary_rays(p):
                traj = integrate_prolonged(sys, p, Tangent(ray[0], ray[1]), cfg,
                                           (0.0, tau))
                end = traj.raw[-1]
                q = CylinderPoint(wrap_angle(end[0]), end[1] if sys.dim == 2 else 0.0)
                mem = cone_membership(cone, q, Tangent(end[sys.dim],
                                                       end[sys.dim + 1] if sys.dim == 2 else 0.0))
                worst = min(worst, mem.margin)
        finite_time_min = worst

    u = params.input.value if (params and isinstance(params.input, Constant)) else None
    return InvarianceReport(
        k=params.k if params else None, u=u, verdict=verdict,
        min_margin=min_margin, argmin=argmin, finite_time_min=finite_time_min,
        uniform_strict=(verdict == "strictly-invariant"
                        and finite_time_min is not None
                        and finite_time_min >= STRICT_INTERIOR),
        witness=witness, tau=tau, n_grid=len(grid))


@dataclass(frozen=True)
class PFField:
    points: tuple                   # CylinderPoints where w is attached
    w: np.ndarray                   # (n, 2) unit vectors
    residual: np.ndarray            # projective step of one more push
    flagged: np.ndarray             # True where backward seeding escaped early


def _segment_transport(sys, x: CylinderPoint, span: float, t0: float,
                       cfg: IntegratorConfig):
    """Tangent transport matrix over one forward segment from x."""
    d = sys.dim
    if d == 2:
        def rhs(t, y):
            out = np.empty(6)
            out[:2] = sys.f(y[:2], t)
            J = sys.jac(y[:2], t)
            out[2:4] = J @ y[2:4]
            out[4:6] = J @ y[4:6]
            return out

        y0 = np.array([x.theta, x.v, 1.0, 0.0, 0.0, 1.0])
        ts, ys, _ = _integrate_raw(rhs, y0, (t0, t0 + span), cfg, 2)
        e = ys[-1]
        return np.array([[e[2], e[4]], [e[3], e[5]]]), CylinderPoint(wrap_angle(e[0]), e[1])
    raise ValueError("PF extraction is a 2D-tangent construction")


def _projective_angle(a: np.ndarray, b: np.ndarray) -> float:
    c = abs(float(a @ b)) / (float(np.linalg.norm(a)) * float(np.linalg.norm(b)))
    return math.acos(max(-1.0, min(1.0, c)))


def pf_vector_field(sys: PlanarSystem, params: PendulumParams | None,
                    cone: ConeFieldSpec, grid, push_time: float = 1.0,
                    max_pushes: int = 20, cfg: IntegratorConfig | None = None,
                    v_escape: float = 50.0,
                    residual_tol: float = 1e-8) -> PFField:
    """Perron-Frobenius direction per grid point by backward-seeded pushes.

    Seeds placed on the backward trajectory are transported forward to the
    grid point; the iteration deepens the seeding until the projective step
    falls below tol.  Where backward integration escapes (|v| growth), the
    deepest reachable seed is used; if none is reachable the direction is
    propagated forward instead, attached to the forward endpoint, and the
    point is flagged.
    """
    cfg = cfg or IntegratorConfig()
    grid = list(grid)
    rays = None
    pts, ws, residuals, flags = [], [], [], []
    rev = PlanarSystem(kind=sys.kind, dim=sys.dim, space=sys.space,
                       f=lambda y, t: -sys.f(y, -t),
                       jac=lambda y, t: -sys.jac(y, -t),
                       angular=sys.angular, params=sys.params, input=sys.input)
    for p in grid:
        if rays is None or callable(cone.functionals):
            r = cone.boundary_rays(p)
            seed = r[0] / np.linalg.norm(r[0]) + r[1] / np.linalg.norm(r[1])
            seed = seed / np.linalg.norm(seed)
            rays = r
        # backward reachability under the escape cap
        def stop(t, y):
            return abs(y[1]) > v_escape

        ts, ys, dense = _integrate_raw(lambda t, y: rev.f(y, t),
                                       p.as_array()[: sys.dim],
                                       (0.0, max_pushes * push_time), cfg, sys.dim,
                                       stop_condition=stop)
        t_back = ts[-1] if abs(ys[-1][1]) <= v_escape else ts[max(len(ts) - 2, 0)]
        n_avail = min(max_pushes, int(t_back / push_time))

        if n_avail == 0:
            # forward fallback: attach w to the forward endpoint
            x = p
            w = seed.copy()
            last_step = math.inf
            for _ in range(max_pushes):
                S, x = _segment_transport(sys, x, push_time, 0.0, cfg)
                w_new = S @ w
                w_new = w_new / np.linalg.norm(w_new)
                last_step = _projective_angle(w_new, w)
                w = w_new
                if last_step < residual_tol:
                    break
            pts.append(x)
            ws.append(w)
            residuals.append(last_step)
            flags.append(True)
            continue

        # segment transports S_j : x_{-j} -> x_{-(j-1)}
        P = np.eye(2)
        w_prev = None
        w = seed.copy()
        step = math.inf
        used = 0
        for j in range(1, n_avail + 1):
            yb = dense.eval(j * push_time)
            xj = CylinderPoint(wrap_angle(yb[0]), yb[1] if sys.dim == 2 else 0.0)
            S, _ = _segment_transport(sys, xj, push_time, 0.0, cfg)
            P = P @ S
            P = P / np.max(np.abs(P))     # direction only; avoid underflow
            w = P @ seed
            w = w / np.linalg.norm(w)
            used = j
            if w_prev is not None:
                step = _projective_angle(w, w_prev)
                if step < residual_tol:
                    break
            w_prev = w
        pts.append(p)
        ws.append(w)
        residuals.append(step if used > 1 else math.inf)
        flags.append(not (step < residual_tol))
    # orient into the cone
    out_w = []
    for p, w in zip(pts, ws):
        vals = cone.matrix(p) @ w
        if np.min(vals) < np.min(cone.matrix(p) @ (-w)):
            w = -w
        out_w.append(w)
    return PFField(points=tuple(pts), w=np.array(out_w),
                   residual=np.array(residuals), flagged=np.array(flags))


def push_direction(sys: PlanarSystem, p: CylinderPoint, w: np.ndarray,
                   span: float, cfg: IntegratorConfig | None = None):
    """Transport a direction through the tangent flow over ``span``; returns
    (endpoint, unit direction)."""
    cfg = cfg or IntegratorConfig()
    S, q = _segment_transport(sys, p, span, 0.0, cfg)
    out = S @ w
    return q, out / np.linalg.norm(out)


@dataclass(frozen=True)
class AlignmentStats:
    points: tuple
    misalignment: np.ndarray        # |sin(angle between f and w)|; nan at equilibria
    undefined: np.ndarray           # True where |f| ~ 0


def vector_field_alignment(sys: PlanarSystem, pf: PFField,
                           t: float = 0.0) -> AlignmentStats:
    """Per-point sine of the angle between the vector field and the PF direction."""
    mis = np.empty(len(pf.points))
    undef = np.zeros(len(pf.points), dtype=bool)
    for i, (p, w) in enumerate(zip(pf.points, pf.w)):
        f = sys.f(p.as_array()[: sys.dim], t)
        nf = float(np.linalg.norm(f))
        if nf < 1e-10:
            mis[i] = math.nan
            undef[i] = True
            continue
        cross = abs(f[0] * w[1] - f[1] * w[0])
        mis[i] = cross / (nf * float(np.linalg.norm(w)))
    return AlignmentStats(points=pf.points, misalignment=mis, undefined=undef)


def alignment_along_trajectory(sys: PlanarSystem, x0: CylinderPoint,
                               cfg: IntegratorConfig, horizon: float,
                               seed: np.ndarray | None = None,
                               sample_dt: float = 0.5):
    """Misalignment series |sin(f, w)| along the trajectory from x0.

    w is obtained by forward tangent propagation (renormalized), which
    converges to the PF direction along the trajectory.
    """
    if seed is None:
        seed = np.array([1.0, 0.0])
    x = x0
    w = seed / np.linalg.norm(seed)
    times, mis = [], []
    t = 0.0
    n = int(round(horizon / sample_dt))
    for _ in range(n):
        q, w = push_direction(sys, x, w, sample_dt, cfg)
        x = q
        t += sample_dt
        f = sys.f(x.as_array()[: sys.dim], t)
        nf = float(np.linalg.norm(f))
        if nf < 1e-10:
            times.append(t)
            mis.append(math.nan)
            continue
        cross = abs(f[0] * w[1] - f[1] * w[0])
        times.append(t)
        mis.append(cross / nf)
    return np.array(times), np.array(mis)


@dataclass(frozen=True)
class Corollary2Result:
    certified: bool
    reason: str
    region: dict | None = None
    cycle: LimitCycle | None = None


def certify_corollary2(sys: PlanarSystem, params: PendulumParams,
                       cone: ConeFieldSpec, cfg: IntegratorConfig,
                       rho: float = 1.1) -> Corollary2Result:
    """Limit-cycle certificate from strict differential positivity.

    Checks, in order: strict cone invariance; absence of fixed points
    (|u| > 1); forward invariance of the trapping band |v| <= rho(|u|+1)/k
    via the sign of v' on its boundary; and that sampled trajectories have
    f(x) inside the cone after a transient.  On success the located cycle is
    returned with the region description.
    """
    if not isinstance(params.input, Constant):
        return Corollary2Result(False, "certificate needs a constant torque")
    u = params.input.value
    k = params.k
    if rho <= 1.0:
        raise ValueError("trapping inflation rho must exceed 1")

    grid = [CylinderPoint(th, 0.0) for th in theta_grid(360)]
    inv = verify_cone_invariance(sys, params, cone, grid, tau=1.0, cfg=cfg)
    if inv.verdict != "strictly-invariant":
        return Corollary2Result(False, f"cone not strictly invariant (verdict {inv.verdict}, "
                                       f"min margin {inv.min_margin:.3e})")
    if abs(u) <= 1.0:
        return Corollary2Result(False, "fixed points exist for |u| <= 1")
    if k <= 0.0:
        return Corollary2Result(False, "trapping band needs positive damping")

    v_band = rho * (abs(u) + 1.0) / k
    worst_top = -math.inf
    worst_bottom = math.inf
    for th in theta_grid(360):
        top = -math.sin(th) - k * v_band + u
        bottom = -math.sin(th) + k * v_band + u
        worst_top = max(worst_top, top)
        worst_bottom = min(worst_bottom, bottom)
    if worst_top >= 0.0 or worst_bottom <= 0.0:
        return Corollary2Result(False, "trapping band is not forward invariant")

    # transient long enough for v to settle into the band and theta' > 0
    transient = max(20.0, 5.0 / k)
    horizon = transient + 20.0
    min_interior = math.inf
    for v0 in (0.0, v_band, -v_band):
        traj = integrate_state(sys, CylinderPoint(0.0, v0), cfg, (0.0, horizon))
        mask = traj.times >= transient
        for i in np.flatnonzero(mask):
            f = sys.f(np.array([traj.theta[i], traj.v[i]]), traj.times[i])
            mem = cone_membership(cone, traj.point(i), Tangent(f[0], f[1]))
            min_interior = min(min_interior, mem.margin)
    if min_interior <= 0.0:
        return Corollary2Result(False, "vector field left the cone interior "
                                       "after the transient")

    try:
        cycle = find_limit_cycle(sys, params, cfg)
    except (NoCycle, NoConvergence) as e:
        return Corollary2Result(False, f"cycle location failed: {e}")
    region = {"v_band": v_band, "rho": rho, "transient": transient,
              "min_field_cone_margin": min_interior}
    return Corollary2Result(True, "certified", region=region, cycle=cycle)


@dataclass(frozen=True)
class DichotomyResult:
    case: str                       # "I" | "II"
    subtype: str | None             # FixedPoint | Cycle | FixedPointsAndArcs
    omega_point: CylinderPoint | None
    diagnostics: dict


def dichotomy_classify(sys: PlanarSystem, params: PendulumParams,
                       x0: CylinderPoint, cfg: IntegratorConfig,
                       horizon: float = 120.0,
                       pf: PFField | None = None) -> DichotomyResult:
    """Classify the omega-limit of the trajectory from x0.

    Case I covers PF-aligned simple attractors (fixed point, limit cycle);
    case II reports the raw transversality diagnostics without asserting a
    threshold.  Raises Inconclusive when the horizon does not establish
    recurrence or convergence.
    """
    traj = integrate_state(sys, x0, cfg, (0.0, horizon))
    tail = traj.times >= 0.75 * horizon
    idx = np.flatnonzero(tail)
    fnorm = np.array([float(np.linalg.norm(sys.f(traj.raw[i][: sys.dim], traj.times[i])))
                      for i in idx])
    if fnorm.max() < 1e-6:
        p = traj.point(idx[-1])
        return DichotomyResult("I", "FixedPoint", p,
                               {"max_f_tail": float(fnorm.max())})

    # recurrence: revolutions still advancing and v recurrently close
    theta_u = traj.theta_unwrapped
    advance = theta_u[idx[-1]] - theta_u[idx[0]]
    if abs(advance) > TWO_PI:
        _, mis = alignment_along_trajectory(sys, traj.point(idx[0]), cfg,
                                            horizon=0.25 * horizon)
        mis_tail = mis[~np.isnan(mis)][-10:]
        diagnostics = {"mean_tail_misalignment": float(np.mean(mis_tail)),
                       "revolutions_in_tail": float(advance / TWO_PI)}
        if np.mean(mis_tail) < 1e-2:
            return DichotomyResult("I", "Cycle", traj.point(idx[-1]), diagnostics)
        return DichotomyResult("II", None, None, diagnostics)

    if fnorm.min() < 1e-4 and fnorm.max() > 1e-2:
        # repeatedly slowing near equilibria with excursions in between
        return DichotomyResult("I", "FixedPointsAndArcs", traj.point(idx[-1]),
                               {"min_f_tail": float(fnorm.min()),
                                "max_f_tail": float(fnorm.max())})
    raise Inconclusive("horizon insufficient to establish recurrence or convergence")


@dataclass(frozen=True)
class ObstructionReport:
    gap: float
    homoclinic_present: bool
    cone_verdict: str
    pf_tangency_angle: float
    consistent_with_corollary3: bool


def homoclinic_obstruction_check(params: PendulumParams, cfg: IntegratorConfig,
                                 cone: ConeFieldSpec | None = None,
                                 gap_tol: float = 1e-3) -> ObstructionReport:
    """Diagnostic pairing of the homoclinic gap with cone invariance.

    A homoclinic connection tangent to the PF direction cannot coexist with
    strict differential positivity; the report records whether the computed
    configuration respects that exclusion.
    """
    from .geometry import PENDULUM_CONE
    cone = cone or PENDULUM_CONE
    sys = pendulum_system(params)
    gap = homoclinic_gap(params, cfg)
    grid = [CylinderPoint(th, 0.0) for th in theta_grid(360)]
    inv = verify_cone_invariance(sys, params, cone, grid, tau=1.0, cfg=cfg)

    saddle = next(fp for fp in find_fixed_points(params)
                  if fp.classification == "Saddle")
    pf = pf_vector_field(sys, params, cone, [saddle.point], cfg=cfg)
    lam_u = max(l.real for l in saddle.eigenvalues)
    e_u = np.array([1.0, lam_u])
    e_u = e_u / np.linalg.norm(e_u)
    w = pf.w[0]
    tangency = math.asin(min(1.0, abs(e_u[0] * w[1] - e_u[1] * w[0])))

    homoclinic = abs(gap) <= gap_tol
    pf_tangent = tangency <= 1e-3
    consistent = not (homoclinic and pf_tangent
                      and inv.verdict == "strictly-invariant")
    return ObstructionReport(gap=gap, homoclinic_present=homoclinic,
                             cone_verdict=inv.verdict,
                             pf_tangency_angle=tangency,
                             consistent_with_corollary3=consistent)
