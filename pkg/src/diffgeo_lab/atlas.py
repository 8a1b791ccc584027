"""Parameter-plane sweep of the pendulum: regime classification per (k, u)
cell, the homoclinic bifurcation curve u_c(k), and the critical damping
estimate bounding the bistable band."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BranchEscaped, NoConvergence, NoCycle, NoSignChange
from .integrate import IntegratorConfig, integrate_state
from .model import (TWO_PI, Constant, CylinderPoint, PendulumParams,
                    angle_diff, pendulum_system)
from .orbits import LimitCycle, find_fixed_points, find_limit_cycle, homoclinic_gap


@dataclass(frozen=True)
class AtlasCell:
    k: float
    u: float
    regime: str                 # fixed-point-only | limit-cycle-only | bistable | boundary
    has_cycle: bool
    has_stable_fp: bool
    period: float | None
    probe_outcomes: tuple       # per-probe "fp" | "cycle" | "unknown"


def _probe_outcome(sys, params, x0: CylinderPoint, stable_fp, cfg,
                   max_time: float) -> str:
    """Integrate a probe and decide which attractor it reached."""
    traj = integrate_state(sys, x0, cfg, (0.0, max_time))
    end = traj.point(len(traj.times) - 1)
    if stable_fp is not None:
        d = math.hypot(angle_diff(end.theta, stable_fp.point.theta), end.v)
        f = sys.f(end.as_array(), traj.times[-1])
        if d < 0.05 and float(np.linalg.norm(f)) < 1e-3:
            return "fp"
    # still revolving over the last quarter of the horizon -> cycle
    tail = traj.times >= 0.75 * traj.times[-1]
    idx = np.flatnonzero(tail)
    advance = traj.theta_unwrapped[idx[-1]] - traj.theta_unwrapped[idx[0]]
    if abs(advance) >= TWO_PI:
        return "cycle"
    return "unknown"


def classify_cell(k: float, u: float, cfg: IntegratorConfig | None = None) -> AtlasCell:
    """Regime of the cell (k, u) from located attractors plus basin probes.

    Bistable requires both a located stable fixed point and a located
    attractive limit cycle, each witnessed by at least one converged probe;
    disagreements mark the cell as boundary.
    """
    if k <= 0.0:
        raise ValueError("classification needs positive damping")
    cfg = cfg or IntegratorConfig()
    params = PendulumParams(k=k, input=Constant(u))
    sys = pendulum_system(params)

    fps = find_fixed_points(params)
    stable = next((fp for fp in fps
                   if fp.classification in ("StableNode", "StableFocus")), None)

    cycle = None
    try:
        cycle = find_limit_cycle(sys, params, cfg)
    except (NoCycle, NoConvergence):
        cycle = None
    if cycle is not None and abs(cycle.multipliers[1]) >= 1.0:
        cycle = None   # located but not attractive

    # the period diverges at |u| = 1 (infinite-period bifurcation)
    max_time = 60.0
    if abs(abs(u) - 1.0) > 1e-12:
        max_time = min(60.0 / math.sqrt(abs(abs(u) - 1.0)), 1e4)
    max_time = max(max_time, 60.0)

    probes = []
    if stable is not None:
        th0 = stable.point.theta
        probes += [CylinderPoint(th0 + 0.1, 0.0), CylinderPoint(th0 - 0.1, 0.0),
                   CylinderPoint(th0, 0.1), CylinderPoint(th0, -0.1)]
    v_hi = 1.5 * (abs(u) + 1.0) / k
    probes += [CylinderPoint(0.0, v_hi), CylinderPoint(math.pi, v_hi),
               CylinderPoint(0.0, -v_hi), CylinderPoint(math.pi, -v_hi)]
    outcomes = tuple(_probe_outcome(sys, params, p, stable, cfg, max_time)
                     for p in probes)

    fp_witnessed = stable is not None and "fp" in outcomes
    cycle_witnessed = cycle is not None and "cycle" in outcomes

    if abs(u) > 1.0:
        regime = "limit-cycle-only" if cycle_witnessed and stable is None else "boundary"
    elif fp_witnessed and cycle_witnessed:
        regime = "bistable"
    elif fp_witnessed and cycle is None and "cycle" not in outcomes:
        regime = "fixed-point-only"
    else:
        regime = "boundary"
    return AtlasCell(k=k, u=u, regime=regime, has_cycle=cycle is not None,
                     has_stable_fp=stable is not None,
                     period=cycle.period if cycle else None,
                     probe_outcomes=outcomes)


def default_grid(n_k: int = 40, n_u: int = 60, k_range=(0.05, 4.0),
                 u_range=(0.0, 1.5)):
    """Log-spaced damping by linearly spaced torque cells."""
    ks = np.geomspace(k_range[0], k_range[1], n_k)
    us = np.linspace(u_range[0], u_range[1], n_u)
    return [(float(k), float(u)) for k in ks for u in us]


def sweep(cells, cfg: IntegratorConfig | None = None, jobs: int = 1):
    """Classify every (k, u) cell; parallel over processes, deterministic order."""
    cells = list(cells)
    if jobs <= 1:
        return [classify_cell(k, u, cfg) for k, u in cells]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(classify_cell, k, u, cfg) for k, u in cells]
        return [f.result() for f in futures]


def _gap_or_none(k: float, u: float, cfg) -> float | None:
    try:
        return homoclinic_gap(PendulumParams(k=k, input=Constant(u)), cfg)
    except BranchEscaped:
        return None


def bisect_homoclinic_u(k: float, cfg: IntegratorConfig | None = None,
                        u_lo: float = 0.01, u_hi: float = 0.99,
                        gap_tol: float = 1e-6, max_iter: int = 80) -> float:
    """u_c(k): root of the homoclinic gap in u, to |gap| <= gap_tol."""
    cfg = cfg or IntegratorConfig()
    g_lo = _gap_or_none(k, u_lo, cfg)
    g_hi = _gap_or_none(k, u_hi, cfg)
    if g_lo is None or g_hi is None or g_lo > 0.0 or g_hi < 0.0:
        raise NoSignChange(f"no homoclinic bracket in u for k = {k}")
    for _ in range(max_iter):
        u_mid = 0.5 * (u_lo + u_hi)
        g = _gap_or_none(k, u_mid, cfg)
        if g is None:
            raise NoSignChange(f"gap not measurable at k = {k}, u = {u_mid}")
        if abs(g) <= gap_tol:
            return u_mid
        if g < 0.0:
            u_lo = u_mid
        else:
            u_hi = u_mid
        if u_hi - u_lo < 1e-14:
            return 0.5 * (u_lo + u_hi)
    return 0.5 * (u_lo + u_hi)


def homoclinic_curve(k_list, cfg: IntegratorConfig | None = None,
                     gap_tol: float = 1e-6):
    """The homoclinic bifurcation curve as (k, u_c(k)) pairs."""
    cfg = cfg or IntegratorConfig()
    return [(float(k), bisect_homoclinic_u(float(k), cfg, gap_tol=gap_tol))
            for k in k_list]


def _band_exists(k: float, cfg, u_hi: float) -> bool:
    """True when the bistable band (u_c(k), 1) is nonempty.

    Probed by the gap sign just below u = 1; a stable branch that cannot be
    continued counts as the deep-cycle regime (positive side).
    """
    g = _gap_or_none(k, u_hi, cfg)
    if g is None:
        # unstable branch escaped too: treat as no evidence of a band
        return False
    return g > 0.0


@dataclass(frozen=True)
class CriticalDamping:
    k_c: float
    bracket: tuple
    tol: float
    u_probe: float


def estimate_kc(cfg: IntegratorConfig | None = None, k_lo: float = 0.2,
                k_hi: float = 3.0, tol: float = 1e-3,
                u_probe: float = 0.995) -> CriticalDamping:
    """Largest damping with a nonempty bistable band, by bisection in k.

    The band probe tests the homoclinic gap at u_probe (the infinite-period
    slowdown forbids probing arbitrarily close to u = 1); the returned
    bracket always straddles the sign change.
    """
    cfg = cfg or IntegratorConfig()
    if not _band_exists(k_lo, cfg, u_probe):
        raise NoSignChange(f"no bistable band at k = {k_lo}")
    if _band_exists(k_hi, cfg, u_probe):
        raise NoSignChange(f"bistable band persists at k = {k_hi}")
    lo, hi = k_lo, k_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _band_exists(mid, cfg, u_probe):
            lo = mid
        else:
            hi = mid
    return CriticalDamping(k_c=0.5 * (lo + hi), bracket=(lo, hi), tol=tol,
                           u_probe=u_probe)
