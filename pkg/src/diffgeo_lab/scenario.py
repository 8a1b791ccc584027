"""Strict JSON scenario parsing for the CLI.

A scenario selects the system, its parameters, the torque law, integrator
settings, metric/cone choices, and analysis-specific options.  Unknown keys
anywhere are rejected; ``canonical()`` materializes every default so that
printed configurations re-parse to themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import ScenarioError
from .geometry import (ConeFieldSpec, ConstantQuadratic, FinslerLyapunov,
                       PENDULUM_CONE, SquaredAngle, WeightedAngle)
from .integrate import IntegratorConfig
from .model import (Constant, External, FeedbackLinearizing, HalfAngleGain,
                    InputLaw, PendulumParams, PlanarSystem, Sinusoidal,
                    overdamped_system, pendulum_system)


def _require_keys(obj: dict, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}")


def _number(obj, key, default, where):
    val = obj.get(key, default)
    if not isinstance(val, (int, float)) or isinstance(val, bool):
        raise ScenarioError(f"{where}.{key} must be a number")
    return float(val)


def parse_input_law(obj, where: str = "input") -> InputLaw:
    if obj is None:
        return Constant(0.0)
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ScenarioError(f"{where} must be an object with a 'kind'")
    kind = obj["kind"]
    if kind == "constant":
        _require_keys(obj, {"kind", "value"}, where)
        return Constant(_number(obj, "value", 0.0, where))
    if kind == "sinusoidal":
        _require_keys(obj, {"kind", "bias", "amplitude", "omega"}, where)
        return Sinusoidal(_number(obj, "bias", 0.0, where),
                          _number(obj, "amplitude", 0.0, where),
                          _number(obj, "omega", 1.0, where))
    if kind == "feedback-linearizing":
        _require_keys(obj, {"kind", "w"}, where)
        return FeedbackLinearizing(parse_input_law(obj.get("w"), where + ".w"))
    if kind == "half-angle-gain":
        _require_keys(obj, {"kind", "r"}, where)
        return HalfAngleGain(parse_input_law(obj.get("r"), where + ".r"))
    if kind == "external":
        _require_keys(obj, {"kind", "times", "values"}, where)
        times = obj.get("times", [])
        values = obj.get("values", [])
        if not (isinstance(times, list) and isinstance(values, list)):
            raise ScenarioError(f"{where}: times/values must be arrays")
        try:
            return External(tuple(float(t) for t in times),
                            tuple(float(v) for v in values))
        except ValueError as e:
            raise ScenarioError(f"{where}: {e}") from e
    raise ScenarioError(f"{where}: unknown input law kind '{kind}'")


def input_law_to_json(law: InputLaw) -> dict:
    if isinstance(law, Constant):
        return {"kind": "constant", "value": law.value}
    if isinstance(law, Sinusoidal):
        return {"kind": "sinusoidal", "bias": law.bias,
                "amplitude": law.amplitude, "omega": law.omega}
    if isinstance(law, FeedbackLinearizing):
        return {"kind": "feedback-linearizing", "w": input_law_to_json(law.w)}
    if isinstance(law, HalfAngleGain):
        return {"kind": "half-angle-gain", "r": input_law_to_json(law.r)}
    if isinstance(law, External):
        return {"kind": "external", "times": list(law.times),
                "values": list(law.values)}
    raise TypeError(f"unsupported law {law!r}")


_INTEGRATOR_KEYS = {"method", "rel_tol", "abs_tol", "h_min", "h_max", "h", "max_time"}


def parse_integrator(obj) -> IntegratorConfig:
    if obj is None:
        return IntegratorConfig()
    if not isinstance(obj, dict):
        raise ScenarioError("integrator must be an object")
    _require_keys(obj, _INTEGRATOR_KEYS, "integrator")
    method = obj.get("method", "rk45")
    if method not in ("rk45", "rk4"):
        raise ScenarioError("integrator.method must be 'rk45' or 'rk4'")
    try:
        return IntegratorConfig(
            method=method,
            rel_tol=_number(obj, "rel_tol", 1e-9, "integrator"),
            abs_tol=_number(obj, "abs_tol", 1e-9, "integrator"),
            h_min=_number(obj, "h_min", 1e-12, "integrator"),
            h_max=_number(obj, "h_max", 0.1, "integrator"),
            h=_number(obj, "h", 1e-3, "integrator"),
            max_time=_number(obj, "max_time", 1e4, "integrator"))
    except ValueError as e:
        raise ScenarioError(f"integrator: {e}") from e


def integrator_to_json(cfg: IntegratorConfig) -> dict:
    return {"method": cfg.method, "rel_tol": cfg.rel_tol, "abs_tol": cfg.abs_tol,
            "h_min": cfg.h_min, "h_max": cfg.h_max, "h": cfg.h,
            "max_time": cfg.max_time}


def parse_metric(obj) -> FinslerLyapunov:
    if obj is None or obj == "weighted-angle":
        return WeightedAngle()
    if obj == "squared-angle":
        return SquaredAngle()
    if isinstance(obj, dict):
        _require_keys(obj, {"P"}, "metric")
        try:
            return ConstantQuadratic(tuple(map(tuple, obj["P"])))
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"metric: {e}") from e
    raise ScenarioError("metric must be 'squared-angle', 'weighted-angle', or {'P': ...}")


def metric_to_json(V: FinslerLyapunov):
    if isinstance(V, WeightedAngle):
        return "weighted-angle"
    if isinstance(V, SquaredAngle):
        return "squared-angle"
    return {"P": [list(row) for row in V.P]}


def parse_cone(obj) -> ConeFieldSpec:
    if obj is None or obj == "pendulum-default":
        return PENDULUM_CONE
    if isinstance(obj, dict):
        _require_keys(obj, {"functionals"}, "cone")
        rows = obj["functionals"]
        if (not isinstance(rows, list) or len(rows) != 2
                or any(len(r) != 2 for r in rows)):
            raise ScenarioError("cone.functionals must be a 2x2 array")
        return ConeFieldSpec(tuple(tuple(float(x) for x in r) for r in rows))
    raise ScenarioError("cone must be 'pendulum-default' or {'functionals': ...}")


def cone_to_json(cone: ConeFieldSpec):
    if cone.name == "pendulum-default":
        return "pendulum-default"
    return {"functionals": [list(row) for row in cone.functionals]}


# per-subcommand analysis options: name -> (default, validator)
def _num(default):
    return default, "number"


def _pair(default):
    return default, "pair"


def _numlist(default):
    return default, "numlist"


ANALYSIS_SCHEMAS: dict[str, dict] = {
    "simulate": {"x0": _pair([0.1, 0.0]), "t_span": _pair([0.0, 10.0])},
    "prolonged": {"x0": _pair([0.1, 0.0]), "d0": _pair([1.0, 0.0]),
                  "t_span": _pair([0.0, 10.0])},
    "fundamental": {"x0": _pair([0.1, 0.0]), "t_span": _pair([0.0, 10.0])},
    "fixed-points": {},
    "limit-cycle": {"guess": (None, "optional-number"),
                    "section_angle": _num(0.0)},
    "floquet": {"guess": (None, "optional-number"), "section_angle": _num(0.0)},
    "lyapunov": {"x0": _pair([0.1, 0.0]), "horizon": _num(200.0),
                 "renorm_interval": _num(1.0), "warmup": _num(0.0)},
    "decay-scan": {"theta_range": (None, "optional-pair"), "n_theta": _num(720),
                   "n_directions": _num(64), "v_range": _pair([-2.0, 2.0]),
                   "n_v": _num(9), "projection": ("identity", "projection")},
    "pair-contraction": {"x0": _pair([2.5, 0.0]), "z0": _pair([-2.5, 0.0]),
                         "horizon": _num(30.0), "n_samples": _num(400)},
    "entrain": {"gamma": _num(0.5), "theta0_a": _num(0.3), "theta0_b": _num(-2.0),
                "horizon": _num(40.0), "n_samples": _num(400)},
    "interconnect": {"q1": (None, "input"), "q2": (None, "input"),
                     "init1": _numlist([0.3, -2.0]), "init2": _num(0.5),
                     "horizon": _num(40.0)},
    "horizontal": {"guess": (None, "optional-number"), "section_angle": _num(0.0),
                   "n_segments": _num(64)},
    "cone-verify": {"tau": _num(1.0), "n_theta": _num(720),
                    "v_values": _numlist([0.0])},
    "pf-field": {"theta_values": _numlist([0.0]), "v_values": _numlist([0.0]),
                 "push_time": _num(1.0), "max_pushes": _num(20)},
    "corollary2": {"rho": _num(1.1)},
    "dichotomy": {"x0": _pair([0.5, 0.0]), "horizon": _num(120.0)},
    "homoclinic-gap": {},
    "atlas": {"k_range": _pair([0.05, 4.0]), "n_k": _num(40),
              "u_range": _pair([0.0, 1.5]), "n_u": _num(60)},
    "homoclinic-curve": {"k_list": _numlist([0.05, 0.1, 0.2]),
                         "gap_tol": _num(1e-6)},
    "critical-damping": {"k_lo": _num(0.2), "k_hi": _num(3.0), "tol": _num(1e-3),
                         "u_probe": _num(0.995)},
}

SUBCOMMANDS = tuple(ANALYSIS_SCHEMAS)

_TOP_KEYS = {"system", "k", "input", "integrator", "metric", "cone", "analysis"}


@dataclass(frozen=True)
class Scenario:
    subcommand: str
    system_name: str
    k: float
    input: InputLaw
    integrator: IntegratorConfig
    metric: FinslerLyapunov
    cone: ConeFieldSpec
    analysis: dict = field(default_factory=dict)

    def build_system(self) -> PlanarSystem:
        if self.system_name == "overdamped":
            return overdamped_system(self.input)
        return pendulum_system(self.params())

    def params(self) -> PendulumParams:
        return PendulumParams(k=self.k, input=self.input)

    def canonical(self) -> dict:
        """Fully-defaulted JSON form; re-parses to an identical scenario."""
        return {
            "system": self.system_name,
            "k": self.k,
            "input": input_law_to_json(self.input),
            "integrator": integrator_to_json(self.integrator),
            "metric": metric_to_json(self.metric),
            "cone": cone_to_json(self.cone),
            "analysis": {k: (input_law_to_json(v) if isinstance(v, InputLaw) else v)
                         for k, v in sorted(self.analysis.items())},
        }


def _validate_analysis(sub: str, obj: dict) -> dict:
    schema = ANALYSIS_SCHEMAS[sub]
    _require_keys(obj, set(schema), f"analysis ({sub})")
    out = {}
    for key, (default, kind) in schema.items():
        val = obj.get(key, default)
        where = f"analysis.{key}"
        if kind == "number":
            if not isinstance(val, (int, float)) or isinstance(val, bool):
                raise ScenarioError(f"{where} must be a number")
            out[key] = float(val)
        elif kind == "optional-number":
            if val is not None and (not isinstance(val, (int, float)) or isinstance(val, bool)):
                raise ScenarioError(f"{where} must be a number or null")
            out[key] = None if val is None else float(val)
        elif kind == "pair":
            if not (isinstance(val, list) and len(val) == 2
                    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val)):
                raise ScenarioError(f"{where} must be a pair of numbers")
            out[key] = [float(val[0]), float(val[1])]
        elif kind == "optional-pair":
            if val is None:
                out[key] = None
            elif (isinstance(val, list) and len(val) == 2
                  and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val)):
                out[key] = [float(val[0]), float(val[1])]
            else:
                raise ScenarioError(f"{where} must be a pair of numbers or null")
        elif kind == "numlist":
            if not (isinstance(val, list) and val
                    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in val)):
                raise ScenarioError(f"{where} must be a nonempty array of numbers")
            out[key] = [float(x) for x in val]
        elif kind == "projection":
            if val not in ("identity", "transversal"):
                raise ScenarioError(f"{where} must be 'identity' or 'transversal'")
            out[key] = val
        elif kind == "input":
            if val is None:
                out[key] = ({"q1": {"kind": "sinusoidal", "bias": 1.0,
                                    "amplitude": 0.5, "omega": math.pi},
                             "q2": {"kind": "constant", "value": 0.0}}[key])
                out[key] = parse_input_law(out[key], where)
            elif isinstance(val, InputLaw):
                out[key] = val
            else:
                out[key] = parse_input_law(val, where)
        else:  # pragma: no cover
            raise AssertionError(kind)
    return out


def parse_scenario(obj: dict, subcommand: str) -> Scenario:
    if subcommand not in ANALYSIS_SCHEMAS:
        raise ScenarioError(f"unknown subcommand '{subcommand}'")
    if not isinstance(obj, dict):
        raise ScenarioError("scenario must be a JSON object")
    _require_keys(obj, _TOP_KEYS, "scenario")
    system = obj.get("system", "pendulum")
    if system not in ("pendulum", "overdamped"):
        raise ScenarioError("system must be 'pendulum' or 'overdamped'")
    k = _number(obj, "k", 1.0, "scenario")
    if k < 0.0:
        raise ScenarioError("k must be >= 0")
    law = parse_input_law(obj.get("input"), "input")
    cfg = parse_integrator(obj.get("integrator"))
    metric = parse_metric(obj.get("metric"))
    cone = parse_cone(obj.get("cone"))
    analysis = _validate_analysis(subcommand, obj.get("analysis", {}) or {})
    return Scenario(subcommand=subcommand, system_name=system, k=k, input=law,
                    integrator=cfg, metric=metric, cone=cone, analysis=analysis)


def load_scenario(path: str | None, subcommand: str) -> Scenario:
    if path is None:
        return parse_scenario({}, subcommand)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"scenario is not valid JSON: {e}") from e
    return parse_scenario(obj, subcommand)
