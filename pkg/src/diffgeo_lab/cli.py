"""Command-line front end: every analysis as a subcommand with JSON scenario
input and CSV/JSON artifacts.

Exit codes: 0 success, 2 analysis-negative (e.g. NotCertified, no cycle),
1 analysis errors, 64 usage errors, 65 scenario validation errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import atlas as atlas_mod
from . import contraction, geometry, orbits, positivity
from .errors import (DiffgeoError, Inconclusive, NoConvergence, NoCycle,
                     NoSignChange, ScenarioError)
from .integrate import integrate_fundamental, integrate_prolonged, integrate_state
from .model import (Constant, CylinderPoint, HalfAngleGain, Sinusoidal,
                    Tangent, overdamped_system)
from .output import ensure_dir, fmt, write_csv, write_json, write_trajectory
from .scenario import SUBCOMMANDS, Scenario, load_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NEGATIVE = 2
EXIT_USAGE = 64
EXIT_SCENARIO = 65


def _x0(scn: Scenario, key: str = "x0") -> CylinderPoint:
    a = scn.analysis[key]
    return CylinderPoint(a[0], a[1])


def _fp_json(fp) -> dict:
    return {"theta": fp.point.theta, "v": fp.point.v,
            "eigenvalues": [{"re": l.real, "im": l.imag} for l in fp.eigenvalues],
            "classification": fp.classification}


def _cycle_json(cyc) -> dict:
    return {"anchor": {"theta": cyc.anchor.theta, "v": cyc.anchor.v},
            "period": cyc.period, "winding": cyc.winding,
            "multipliers": [cyc.multipliers[0], cyc.multipliers[1]],
            "closure_error": cyc.closure_error}


def cmd_simulate(scn, out, jobs):
    traj = integrate_state(scn.build_system(), _x0(scn), scn.integrator,
                           tuple(scn.analysis["t_span"]))
    write_trajectory(os.path.join(out, "trajectory.csv"), traj)
    return EXIT_OK


def cmd_prolonged(scn, out, jobs):
    d = scn.analysis["d0"]
    traj = integrate_prolonged(scn.build_system(), _x0(scn), Tangent(d[0], d[1]),
                               scn.integrator, tuple(scn.analysis["t_span"]))
    write_trajectory(os.path.join(out, "trajectory.csv"), traj)
    return EXIT_OK


def cmd_fundamental(scn, out, jobs):
    traj = integrate_fundamental(scn.build_system(), _x0(scn), scn.integrator,
                                 tuple(scn.analysis["t_span"]))
    write_trajectory(os.path.join(out, "trajectory.csv"), traj)
    return EXIT_OK


def cmd_fixed_points(scn, out, jobs):
    fps = orbits.find_fixed_points(scn.params())
    write_json(os.path.join(out, "fixed_points.json"),
               {"k": scn.k, "u": getattr(scn.input, "value", None),
                "points": [_fp_json(fp) for fp in fps]})
    return EXIT_OK


def _locate_cycle(scn):
    return orbits.find_limit_cycle(scn.build_system(), scn.params(),
                                   scn.integrator,
                                   guess=scn.analysis.get("guess"),
                                   section_angle=scn.analysis.get("section_angle", 0.0))


def cmd_limit_cycle(scn, out, jobs):
    try:
        cyc = _locate_cycle(scn)
    except (NoCycle, NoConvergence) as e:
        write_json(os.path.join(out, "limit_cycle.json"),
                   {"found": False, "reason": str(e)})
        return EXIT_NEGATIVE
    payload = _cycle_json(cyc)
    payload["found"] = True
    write_json(os.path.join(out, "limit_cycle.json"), payload)
    write_trajectory(os.path.join(out, "cycle_samples.csv"), cyc.samples)
    return EXIT_OK


def cmd_floquet(scn, out, jobs):
    try:
        cyc = _locate_cycle(scn)
    except (NoCycle, NoConvergence) as e:
        write_json(os.path.join(out, "floquet.json"),
                   {"found": False, "reason": str(e)})
        return EXIT_NEGATIVE
    rho1, rho2 = cyc.multipliers
    det_rel = abs(rho1 * rho2 / math.exp(-scn.k * cyc.period) - 1.0)
    write_json(os.path.join(out, "floquet.json"),
               {"found": True, "rho1": rho1, "rho2": rho2,
                "period": cyc.period,
                "determinant_identity_rel_err": det_rel})
    return EXIT_OK


def cmd_lyapunov(scn, out, jobs):
    est = orbits.max_lyapunov_exponent(
        scn.build_system(), scn.params(), _x0(scn), scn.integrator,
        horizon=scn.analysis["horizon"],
        renorm_interval=scn.analysis["renorm_interval"],
        warmup=scn.analysis["warmup"])
    write_json(os.path.join(out, "lyapunov.json"),
               {"estimate": est.value, "confidence": est.confidence,
                "horizon": scn.analysis["horizon"],
                "renorm_interval": scn.analysis["renorm_interval"],
                "warmup": scn.analysis["warmup"]})
    write_csv(os.path.join(out, "lyapunov_trace.csv"), ["t", "running_estimate"],
              zip(est.times, est.running))
    return EXIT_OK


def cmd_decay_scan(scn, out, jobs):
    proj = (geometry.TransversalToFlow()
            if scn.analysis["projection"] == "transversal" else None)
    sys_ = scn.build_system()
    rng = scn.analysis["theta_range"]
    rep = contraction.scan_decay(
        scn.metric, sys_, scn.params() if scn.system_name == "pendulum" else None,
        projection=proj,
        n_theta=int(scn.analysis["n_theta"]),
        n_directions=int(scn.analysis["n_directions"]),
        theta_range=tuple(rng) if rng else None,
        v_range=tuple(scn.analysis["v_range"]), n_v=int(scn.analysis["n_v"]))
    write_json(os.path.join(out, "decay.json"), {
        "metric": rep.metric, "vdot_min": rep.vdot_min, "vdot_max": rep.vdot_max,
        "argmin": list(rep.argmin), "argmax": list(rep.argmax),
        "violation_count": rep.violation_count,
        "sample_violations": [list(v) for v in rep.violations],
        "non_strict_only": rep.non_strict_only, "n_points": rep.n_points,
        "projection": rep.projection,
        "profile": [{"theta": a, "vdot_min": b, "weight": c,
                     "geodesic_from_zero": d} for a, b, c, d in rep.profile]})
    return EXIT_OK if rep.violation_count == 0 else EXIT_NEGATIVE


def cmd_pair_contraction(scn, out, jobs):
    sys_ = scn.build_system()
    pc = contraction.verify_pair_contraction(
        sys_, scn.params() if scn.system_name == "pendulum" else None,
        _x0(scn), _x0(scn, "z0"), scn.metric, scn.integrator,
        horizon=scn.analysis["horizon"], n_samples=int(scn.analysis["n_samples"]))
    write_csv(os.path.join(out, "pair.csv"), ["t", "distance"],
              zip(pc.times, pc.distance))
    write_json(os.path.join(out, "pair.json"),
               {"rate": pc.rate, "terminal_distance": pc.terminal_distance})
    return EXIT_OK


def cmd_entrain(scn, out, jobs):
    gamma = scn.analysis["gamma"]
    law = HalfAngleGain(Sinusoidal(bias=1.0, amplitude=gamma, omega=math.pi))
    sys_ = overdamped_system(law)
    pc = contraction.verify_pair_contraction(
        sys_, None, CylinderPoint(scn.analysis["theta0_a"], 0.0),
        CylinderPoint(scn.analysis["theta0_b"], 0.0), scn.metric,
        scn.integrator, horizon=scn.analysis["horizon"],
        n_samples=int(scn.analysis["n_samples"]))
    write_csv(os.path.join(out, "entrain.csv"), ["t", "distance"],
              zip(pc.times, pc.distance))
    write_json(os.path.join(out, "entrain.json"),
               {"gamma": gamma, "rate": pc.rate,
                "terminal_distance": pc.terminal_distance})
    return EXIT_OK


def cmd_interconnect(scn, out, jobs):
    q1, q2 = scn.analysis["q1"], scn.analysis["q2"]
    init2 = scn.analysis["init2"]
    horizon = scn.analysis["horizon"]
    terminals = []
    for i, th1 in enumerate(scn.analysis["init1"]):
        t1, t2 = contraction.interconnect_passive(th1, init2, q1, q2,
                                                  scn.integrator, horizon)
        write_trajectory(os.path.join(out, f"pend1_run{i}.csv"), t1)
        write_trajectory(os.path.join(out, f"pend2_run{i}.csv"), t2)
        terminals.append(t1.theta[-1])
    gap = 0.0
    if len(terminals) > 1:
        gap = max(geometry.geodesic_distance(geometry.WeightedAngle(), a, b)
                  for a in terminals for b in terminals)
    write_json(os.path.join(out, "interconnect.json"),
               {"runs": len(terminals), "horizon": horizon,
                "pend1_terminal_max_gap": gap})
    return EXIT_OK


def cmd_horizontal(scn, out, jobs):
    try:
        cyc = _locate_cycle(scn)
    except (NoCycle, NoConvergence) as e:
        write_json(os.path.join(out, "horizontal.json"),
                   {"found": False, "reason": str(e)})
        return EXIT_NEGATIVE
    factor = contraction.horizontal_contraction_near_cycle(
        cyc, scn.build_system(), scn.params(), scn.integrator,
        n_segments=int(scn.analysis["n_segments"]))
    rho2 = abs(cyc.multipliers[1])
    write_json(os.path.join(out, "horizontal.json"),
               {"found": True, "factor": factor, "rho2_abs": rho2,
                "rel_difference": abs(factor - rho2) / rho2 if rho2 else None,
                "period": cyc.period})
    return EXIT_OK


def cmd_cone_verify(scn, out, jobs):
    grid = [CylinderPoint(th, v)
            for th in positivity.theta_grid(int(scn.analysis["n_theta"]))
            for v in scn.analysis["v_values"]]
    rep = positivity.verify_cone_invariance(
        scn.build_system(), scn.params(), scn.cone, grid,
        tau=scn.analysis["tau"], cfg=scn.integrator)
    write_json(os.path.join(out, "invariance.json"), {
        "k": rep.k, "u": rep.u, "verdict": rep.verdict,
        "min_margin": rep.min_margin,
        "argmin": {"theta": rep.argmin[0], "v": rep.argmin[1],
                   "functional": rep.argmin[2]},
        "finite_time_min": rep.finite_time_min,
        "uniform_strict": rep.uniform_strict, "witness": rep.witness,
        "tau": rep.tau, "n_grid": rep.n_grid})
    return EXIT_OK if rep.verdict == "strictly-invariant" else EXIT_NEGATIVE


def cmd_pf_field(scn, out, jobs):
    grid = [CylinderPoint(th, v) for th in scn.analysis["theta_values"]
            for v in scn.analysis["v_values"]]
    pf = positivity.pf_vector_field(
        scn.build_system(), scn.params(), scn.cone, grid,
        push_time=scn.analysis["push_time"],
        max_pushes=int(scn.analysis["max_pushes"]), cfg=scn.integrator)
    rows = [(p.theta, p.v, w[0], w[1], r)
            for p, w, r in zip(pf.points, pf.w, pf.residual)]
    write_csv(os.path.join(out, "pf_field.csv"),
              ["theta", "v", "w_theta", "w_v", "residual"], rows)
    return EXIT_OK


def cmd_corollary2(scn, out, jobs):
    res = positivity.certify_corollary2(scn.build_system(), scn.params(),
                                        scn.cone, scn.integrator,
                                        rho=scn.analysis["rho"])
    payload = {"certified": res.certified, "reason": res.reason,
               "region": res.region,
               "cycle": _cycle_json(res.cycle) if res.cycle else None}
    write_json(os.path.join(out, "corollary2.json"), payload)
    return EXIT_OK if res.certified else EXIT_NEGATIVE


def cmd_dichotomy(scn, out, jobs):
    try:
        res = positivity.dichotomy_classify(scn.build_system(), scn.params(),
                                            _x0(scn), scn.integrator,
                                            horizon=scn.analysis["horizon"])
    except Inconclusive as e:
        write_json(os.path.join(out, "dichotomy.json"),
                   {"case": "inconclusive", "reason": str(e)})
        return EXIT_NEGATIVE
    write_json(os.path.join(out, "dichotomy.json"), {
        "case": res.case, "subtype": res.subtype,
        "omega_point": ({"theta": res.omega_point.theta, "v": res.omega_point.v}
                        if res.omega_point else None),
        "diagnostics": res.diagnostics})
    return EXIT_OK


def cmd_homoclinic_gap(scn, out, jobs):
    gap = orbits.homoclinic_gap(scn.params(), scn.integrator)
    write_json(os.path.join(out, "gap.json"),
               {"k": scn.k, "u": getattr(scn.input, "value", None), "gap": gap})
    return EXIT_OK


def cmd_atlas(scn, out, jobs):
    cells = atlas_mod.default_grid(
        n_k=int(scn.analysis["n_k"]), n_u=int(scn.analysis["n_u"]),
        k_range=tuple(scn.analysis["k_range"]),
        u_range=tuple(scn.analysis["u_range"]))
    results = atlas_mod.sweep(cells, scn.integrator, jobs=jobs)
    rows = [(c.k, c.u, c.regime, int(c.has_cycle), int(c.has_stable_fp),
             c.period) for c in results]
    write_csv(os.path.join(out, "atlas.csv"),
              ["k", "u", "regime", "has_cycle", "has_stable_fp", "period"], rows)
    return EXIT_OK


def cmd_homoclinic_curve(scn, out, jobs):
    rows = []
    failures = 0
    for k in scn.analysis["k_list"]:
        try:
            uc = atlas_mod.bisect_homoclinic_u(k, scn.integrator,
                                               gap_tol=scn.analysis["gap_tol"])
            rows.append((k, uc))
        except NoSignChange:
            failures += 1
    write_csv(os.path.join(out, "curve.csv"), ["k", "u_c"], rows)
    return EXIT_NEGATIVE if failures else EXIT_OK


def cmd_critical_damping(scn, out, jobs):
    try:
        kc = atlas_mod.estimate_kc(scn.integrator, k_lo=scn.analysis["k_lo"],
                                   k_hi=scn.analysis["k_hi"],
                                   tol=scn.analysis["tol"],
                                   u_probe=scn.analysis["u_probe"])
    except NoSignChange as e:
        write_json(os.path.join(out, "kc.json"), {"found": False, "reason": str(e)})
        return EXIT_NEGATIVE
    write_json(os.path.join(out, "kc.json"),
               {"found": True, "k_c": kc.k_c, "bracket": list(kc.bracket),
                "tol": kc.tol, "u_probe": kc.u_probe})
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "prolonged": cmd_prolonged,
    "fundamental": cmd_fundamental,
    "fixed-points": cmd_fixed_points,
    "limit-cycle": cmd_limit_cycle,
    "floquet": cmd_floquet,
    "lyapunov": cmd_lyapunov,
    "decay-scan": cmd_decay_scan,
    "pair-contraction": cmd_pair_contraction,
    "entrain": cmd_entrain,
    "interconnect": cmd_interconnect,
    "horizontal": cmd_horizontal,
    "cone-verify": cmd_cone_verify,
    "pf-field": cmd_pf_field,
    "corollary2": cmd_corollary2,
    "dichotomy": cmd_dichotomy,
    "homoclinic-gap": cmd_homoclinic_gap,
    "atlas": cmd_atlas,
    "homoclinic-curve": cmd_homoclinic_curve,
    "critical-damping": cmd_critical_damping,
}

assert set(HANDLERS) == set(SUBCOMMANDS)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="diffgeo-lab",
                     description="Differential analysis of the pendulum family "
                                 "on the cylinder")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", default=None,
                       help="JSON scenario file (defaults apply when omitted)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=None,
                       help="parallel workers for grid scans "
                            "(falls back to DIFFGEO_LAB_JOBS)")
        p.add_argument("--print-config", action="store_true",
                       help="print the fully-defaulted scenario and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("DIFFGEO_LAB_JOBS", "1"))
    try:
        scn = load_scenario(args.scenario, args.subcommand)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    except OSError as e:
        print(f"cannot read scenario: {e}", file=sys.stderr)
        return EXIT_SCENARIO
    if args.print_config:
        print(json.dumps(scn.canonical(), indent=2, sort_keys=True))
        return EXIT_OK
    out = ensure_dir(args.out)
    try:
        return HANDLERS[args.subcommand](scn, out, jobs)
    except DiffgeoError as e:
        print(f"analysis error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
