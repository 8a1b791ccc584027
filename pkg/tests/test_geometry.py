import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from diffgeo_lab.errors import DomainError, EquilibriumPoint, ZeroTangent
from diffgeo_lab.geometry import (PENDULUM_CONE, ConeFieldSpec,
                                  ConstantQuadratic, IdentityProjection,
                                  SquaredAngle, TransversalToFlow,
                                  WeightedAngle, analytic_Vdot,
                                  cone_membership, eval_V, geodesic_distance,
                                  passivating_output, transversal_projection)
from diffgeo_lab.integrate import IntegratorConfig, integrate_prolonged
from diffgeo_lab.model import (Constant, CylinderPoint, HalfAngleGain,
                               PendulumParams, Sinusoidal, Tangent,
                               overdamped_system, pendulum_system)

inner_angles = st.floats(min_value=-math.pi + 1e-3, max_value=math.pi - 1e-3)


def test_eval_V_values():
    assert eval_V(WeightedAngle(), CylinderPoint(0.0), Tangent(1.0)) == pytest.approx(0.5)
    assert eval_V(SquaredAngle(), CylinderPoint(2.0), Tangent(0.0)) == 0.0
    assert eval_V(WeightedAngle(), CylinderPoint(math.pi / 2), Tangent(2.0)) == pytest.approx(4.0)


def test_eval_V_singular_raises():
    with pytest.raises(DomainError):
        eval_V(WeightedAngle(), CylinderPoint(math.pi), Tangent(1.0))


@given(inner_angles, st.floats(-10, 10), st.floats(-4, 4))
@settings(max_examples=200)
def test_homogeneity_degree_two(theta, dtheta, lam):
    for V in (SquaredAngle(), WeightedAngle(), ConstantQuadratic(((2.0, 0.3), (0.3, 1.0)))):
        p = CylinderPoint(theta)
        base = eval_V(V, p, Tangent(dtheta, 0.5 * dtheta))
        scaled = eval_V(V, p, Tangent(lam * dtheta, lam * 0.5 * dtheta))
        assert scaled == pytest.approx(lam * lam * base, rel=1e-9, abs=1e-12)
        assert base >= 0.0


def test_weighted_bounds_on_truncated_domain():
    eta = 1e-3
    c1, c2 = WeightedAngle().certified_bounds(eta)
    assert c1 == pytest.approx(0.5)
    assert c2 == pytest.approx(1.0 / (1.0 + math.cos(math.pi - eta)))
    for theta in np.linspace(-math.pi + eta, math.pi - eta, 500):
        w = eval_V(WeightedAngle(), CylinderPoint(theta), Tangent(1.0))
        assert c1 - 1e-12 <= w <= c2 + 1e-9


def test_constant_quadratic_validation():
    with pytest.raises(ValueError):
        ConstantQuadratic(((1.0, 2.0), (0.0, 1.0)))      # asymmetric
    with pytest.raises(ValueError):
        ConstantQuadratic(((1.0, 0.0), (0.0, -1.0)))     # not positive definite


def test_vdot_squared_angle_exact_lie_derivative():
    # V = dtheta^2 on the free overdamped pendulum: V' = -2 cos(theta) dtheta^2
    sys = overdamped_system(Constant(0.0))
    v = analytic_Vdot(SquaredAngle(), sys, CylinderPoint(0.0), Tangent(1.0))
    assert v == pytest.approx(-2.0)
    v = analytic_Vdot(SquaredAngle(), sys, CylinderPoint(2.0), Tangent(1.0))
    assert v == pytest.approx(-2.0 * math.cos(2.0))
    assert v > 0.0


def test_vdot_weighted_identity_values():
    sys = overdamped_system(Constant(0.0))
    assert analytic_Vdot(WeightedAngle(), sys, CylinderPoint(2.5), Tangent(3.0)) == pytest.approx(-9.0, abs=1e-12)
    sysr = overdamped_system(HalfAngleGain(Constant(7.0)))
    assert analytic_Vdot(WeightedAngle(), sysr, CylinderPoint(1.0), Tangent(1.0)) == pytest.approx(-1.0, abs=1e-14)


def test_vdot_weighted_identity_random(rng):
    sys = overdamped_system(Constant(0.0))
    for _ in range(1000):
        th = rng.uniform(-math.pi + 1e-3, math.pi - 1e-3)
        dth = rng.uniform(-5, 5)
        v = analytic_Vdot(WeightedAngle(), sys, CylinderPoint(th), Tangent(dth))
        assert abs(v + dth * dth) <= 1e-12 * max(1.0, dth * dth)


@pytest.mark.parametrize("V", [SquaredAngle(), WeightedAngle(),
                               ConstantQuadratic(((1.5, 0.2), (0.2, 0.8)))])
def test_vdot_matches_finite_differences_pendulum(V, cfg, rng):
    params = PendulumParams(k=1.3, input=Constant(0.4))
    sys = pendulum_system(params)
    h = 1e-4
    for _ in range(100):
        p = CylinderPoint(rng.uniform(-2.8, 2.8), rng.uniform(-2, 2))
        d = Tangent(rng.uniform(-1, 1), rng.uniform(-1, 1))
        analytic = analytic_Vdot(V, sys, p, d)
        # centered difference of V along the prolonged flow around t = h
        tr = integrate_prolonged(sys, p, d, cfg, (0.0, 2 * h))
        y0 = tr.dense.eval(0.0)
        y2 = tr.dense.eval(2 * h)
        dim = sys.dim
        V0 = eval_V(V, CylinderPoint(y0[0], y0[1]), Tangent(y0[dim], y0[dim + 1]))
        V2 = eval_V(V, CylinderPoint(y2[0], y2[1]), Tangent(y2[dim], y2[dim + 1]))
        y1 = tr.dense.eval(h)
        mid = analytic_Vdot(V, sys, CylinderPoint(y1[0], y1[1]),
                            Tangent(y1[dim], y1[dim + 1]))
        assert abs(mid - (V2 - V0) / (2 * h)) <= 1e-5


@pytest.mark.parametrize("V", [SquaredAngle(), WeightedAngle()])
def test_vdot_matches_finite_differences_overdamped(V, cfg, rng):
    sys = overdamped_system(HalfAngleGain(Sinusoidal(1.0, 0.5, math.pi)))
    h = 1e-4
    for _ in range(100):
        p = CylinderPoint(rng.uniform(-2.9, 2.9))
        d = Tangent(rng.uniform(-1, 1))
        tr = integrate_prolonged(sys, p, d, cfg, (0.0, 2 * h))
        y0, y1, y2 = tr.dense.eval(0.0), tr.dense.eval(h), tr.dense.eval(2 * h)
        V0 = eval_V(V, CylinderPoint(y0[0]), Tangent(y0[1]))
        V2 = eval_V(V, CylinderPoint(y2[0]), Tangent(y2[1]))
        mid = analytic_Vdot(V, sys, CylinderPoint(y1[0]), Tangent(y1[1]), t=h)
        assert abs(mid - (V2 - V0) / (2 * h)) <= 1e-5


def test_geodesic_closed_form_vs_quadrature():
    d = geodesic_distance(WeightedAngle(), 0.0, math.pi / 2)
    assert d == pytest.approx(math.sqrt(2) * math.log(1 + math.sqrt(2)), abs=1e-12)
    oracle, err = quad(lambda s: 1.0 / math.sqrt(1.0 + math.cos(s)), 0.0, math.pi / 2)
    assert d == pytest.approx(oracle, abs=max(1e-10, 10 * err))
    assert geodesic_distance(WeightedAngle(), 0.7, 0.7) == 0.0
    assert geodesic_distance(SquaredAngle(), 0.0, 1.0) == pytest.approx(1.0)


def test_geodesic_domain_error():
    with pytest.raises(DomainError):
        geodesic_distance(WeightedAngle(), 0.0, math.pi)


@given(inner_angles, inner_angles, inner_angles)
@settings(max_examples=200)
def test_geodesic_triangle_inequality(a, b, c):
    for V in (SquaredAngle(), WeightedAngle()):
        dab = geodesic_distance(V, a, b)
        dbc = geodesic_distance(V, b, c)
        dac = geodesic_distance(V, a, c)
        assert dac <= dab + dbc + 1e-9
        assert dab == pytest.approx(geodesic_distance(V, b, a), abs=1e-15)


def test_geodesic_deformation_monotonicity(rng):
    # equal arcs further from 0 are geodesically longer under the weight
    for _ in range(200):
        a = rng.uniform(0.0, 2.5)
        step = rng.uniform(1e-3, (math.pi - 1e-3 - a) / 2)
        b, c = a + step, a + 2 * step
        assert (geodesic_distance(WeightedAngle(), a, b)
                < geodesic_distance(WeightedAngle(), b, c))


def test_passivating_output_values():
    assert passivating_output(0.0) == 0.0
    y = passivating_output(math.pi / 2)
    assert y == pytest.approx(2 * math.log(1 + math.sqrt(2)), abs=1e-12)
    oracle, _ = quad(lambda s: 1.0 / math.cos(0.5 * s), 0.0, math.pi / 2)
    assert y == pytest.approx(oracle, abs=1e-9)
    assert passivating_output(-math.pi / 2) == pytest.approx(-y)
    with pytest.raises(DomainError):
        passivating_output(math.pi)


def test_passivating_output_derivative(rng):
    h = 1e-6
    for _ in range(200):
        th = rng.uniform(-3.0, 3.0)
        fd = (passivating_output(th + h) - passivating_output(th - h)) / (2 * h)
        assert abs(fd - 1.0 / math.cos(0.5 * th)) <= 1e-6 * max(1.0, abs(fd))


@given(inner_angles)
@settings(max_examples=100)
def test_passivating_output_monotone(theta):
    h = 1e-4
    if theta + h < math.pi - 1e-6:
        assert passivating_output(theta + h) > passivating_output(theta)


def test_cone_membership_cases():
    p = CylinderPoint(0.3, 0.1)
    m = cone_membership(PENDULUM_CONE, p, Tangent(1.0, 0.0))
    assert m.kind == "interior" and m.margin == pytest.approx(1.0)
    m = cone_membership(PENDULUM_CONE, p, Tangent(0.0, 1.0))
    assert m.kind == "boundary" and m.active == (0,)
    m = cone_membership(PENDULUM_CONE, p, Tangent(-1.0, 0.0))
    assert m.kind == "outside"
    with pytest.raises(ZeroTangent):
        cone_membership(PENDULUM_CONE, p, Tangent(0.0, 0.0))


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(1e-6, 1e6))
@settings(max_examples=200)
def test_cone_margin_scale_invariant(dth, dv, lam):
    if math.hypot(dth, dv) < 1e-9:
        return
    p = CylinderPoint(0.0, 0.0)
    m1 = cone_membership(PENDULUM_CONE, p, Tangent(dth, dv))
    m2 = cone_membership(PENDULUM_CONE, p, Tangent(lam * dth, lam * dv))
    assert m1.margin == pytest.approx(m2.margin, rel=1e-9, abs=1e-12)


def test_cone_solid_pointed():
    assert PENDULUM_CONE.is_solid_pointed_at(CylinderPoint(0.0))
    degenerate = ConeFieldSpec(((1.0, 0.0), (2.0, 0.0)))
    assert not degenerate.is_solid_pointed_at(CylinderPoint(0.0))


def test_boundary_rays_normalization():
    rays = PENDULUM_CONE.boundary_rays(CylinderPoint(0.0))
    assert np.allclose(rays[0], [0.0, 1.0])
    assert np.allclose(rays[1], [1.0, -1.0])


def test_transversal_projection_values():
    params = PendulumParams(k=1.0, input=Constant(0.0))
    sys = pendulum_system(params)
    # f = (1, 0) at theta=pi (sin=0), v=1, k=1, u=1:
    sys2 = pendulum_system(PendulumParams(k=1.0, input=Constant(1.0)))
    P = transversal_projection(sys2, CylinderPoint(math.pi, 1.0))
    assert np.allclose(P, [[0, 0], [0, 1]], atol=1e-12)
    # f = (1, 1): u = sin + k*v - ... choose theta=0,v=1,k=0,u=1 -> f=(1,1)
    sys3 = pendulum_system(PendulumParams(k=0.0, input=Constant(1.0)))
    P = transversal_projection(sys3, CylinderPoint(0.0, 1.0))
    assert np.allclose(P, [[0.5, -0.5], [-0.5, 0.5]])
    with pytest.raises(EquilibriumPoint):
        transversal_projection(sys, CylinderPoint(0.0, 0.0))


def test_projection_idempotent_and_annihilates_flow(rng):
    params = PendulumParams(k=0.8, input=Constant(0.6))
    sys = pendulum_system(params)
    proj = TransversalToFlow()
    for _ in range(50):
        p = CylinderPoint(rng.uniform(-3, 3), rng.uniform(0.2, 3))
        P = proj.at(sys, p)
        assert np.max(np.abs(P @ P - P)) <= 1e-12
        f = sys.f(p.as_array(), 0.0)
        assert np.max(np.abs(P @ f)) <= 1e-12 * max(1.0, float(np.linalg.norm(f)))
    assert np.allclose(IdentityProjection().at(sys, CylinderPoint(0.0)), np.eye(2))
