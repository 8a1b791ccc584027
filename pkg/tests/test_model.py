import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diffgeo_lab.errors import MismatchedGrids
from diffgeo_lab.integrate import IntegratorConfig, integrate_prolonged, integrate_state
from diffgeo_lab.model import (Constant, CylinderPoint, External,
                               FeedbackLinearizing, HalfAngleGain,
                               PendulumParams, Sinusoidal, Tangent, angle_diff,
                               energy, incremental_mismatch, overdamped_field,
                               overdamped_system, pendulum_field,
                               pendulum_jacobian, pendulum_system, wrap_angle)

finite_angles = st.floats(min_value=-50.0, max_value=50.0,
                          allow_nan=False, allow_infinity=False)


@given(finite_angles)
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi <= w < math.pi
    assert abs(math.sin(w) - math.sin(theta)) < 1e-9
    assert abs(math.cos(w) - math.cos(theta)) < 1e-9


@given(finite_angles, finite_angles)
def test_angle_diff_range(a, b):
    d = angle_diff(a, b)
    assert -math.pi < d <= math.pi
    assert abs(math.sin(d) - math.sin(a - b)) < 1e-9


def test_angle_diff_wraps_through_pi():
    assert angle_diff(3.0, -3.0) == pytest.approx(6.0 - 2 * math.pi, abs=1e-14)


def test_cylinder_point_wraps_on_construction():
    p = CylinderPoint(math.pi, 0.0)
    assert p.theta == -math.pi
    assert CylinderPoint(3 * math.pi + 0.1, 0.0).theta == pytest.approx(-math.pi + 0.1)


def test_nonfinite_rejected():
    with pytest.raises(ValueError):
        CylinderPoint(math.nan, 0.0)
    with pytest.raises(ValueError):
        Tangent(1.0, math.inf)
    with pytest.raises(ValueError):
        PendulumParams(k=-0.5)


def test_pendulum_field_values():
    params = PendulumParams(k=1.0)
    eq = pendulum_field(CylinderPoint(0.0, 0.0), params)
    assert eq.dtheta == 0.0 and eq.dv == 0.0
    up = pendulum_field(CylinderPoint(math.pi, 0.0), params)
    assert up.dtheta == 0.0 and abs(up.dv) < 1e-15
    t = pendulum_field(CylinderPoint(math.pi / 2, 1.0),
                       PendulumParams(k=2.0, input=Constant(0.5)))
    assert t.dtheta == pytest.approx(1.0)
    assert t.dv == pytest.approx(-2.5)


def test_pendulum_jacobian_values():
    J = pendulum_jacobian(CylinderPoint(0.0, 0.0), PendulumParams(k=3.0))
    assert np.allclose(J, [[0, 1], [-1, -3]])
    J = pendulum_jacobian(CylinderPoint(math.pi, 0.0), PendulumParams(k=3.0))
    assert np.allclose(J, [[0, 1], [1, -3]])
    J = pendulum_jacobian(CylinderPoint(math.pi / 2, 0.0), PendulumParams(k=0.0))
    assert np.allclose(J, [[0, 1], [0, 0]], atol=1e-15)


def test_overdamped_field_values():
    assert overdamped_field(0.0, Constant(0.0)) == 0.0
    assert overdamped_field(math.pi / 2, Constant(1.0)) == pytest.approx(0.0)
    assert overdamped_field(0.0, HalfAngleGain(Constant(1.0))) == pytest.approx(1.0)


def test_energy_dissipation_sign_convention():
    # potential minimal at the hanging point; growth bounded by supplied power
    assert energy(CylinderPoint(0.0, 0.0)) == pytest.approx(-1.0)
    assert energy(CylinderPoint(math.pi, 0.0)) == pytest.approx(1.0)
    assert energy(CylinderPoint(math.pi / 2, 2.0)) == pytest.approx(2.0)
    # dE/dt - u*theta' = -k v^2 analytically
    params = PendulumParams(k=0.7, input=Constant(0.3))
    p = CylinderPoint(1.1, -0.8)
    f = pendulum_field(p, params)
    dE = p.v * f.dv + math.sin(p.theta) * f.dtheta
    assert dE - 0.3 * f.dtheta == pytest.approx(-0.7 * p.v ** 2, abs=1e-14)


@given(finite_angles, st.floats(-5, 5), st.floats(0, 4))
@settings(max_examples=100)
def test_field_equivariance(theta, v, k):
    params = PendulumParams(k=k, input=Constant(0.25))
    a = pendulum_field(CylinderPoint(theta, v), params)
    b = pendulum_field(CylinderPoint(theta + 2 * math.pi, v), params)
    # theta + 2*pi itself rounds, so equality holds to round-off only
    assert a.dtheta == b.dtheta
    assert a.dv == pytest.approx(b.dv, abs=1e-12)


@pytest.mark.parametrize("law", [
    Constant(0.4),
    Sinusoidal(bias=0.2, amplitude=0.7, omega=1.3),
    FeedbackLinearizing(Constant(0.1)),
    External(times=(0.0, 1.0, 2.0), values=(0.0, 0.5, -0.5)),
])
def test_jacobian_matches_finite_differences(law, rng):
    params = PendulumParams(k=1.7, input=law)
    sys = pendulum_system(params)
    eps = 1e-6
    for _ in range(100):
        y = np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-3, 3)])
        t = rng.uniform(0.0, 2.0)
        J = sys.jac(y, t)
        f0 = sys.f(y, t)
        for i in range(2):
            e = np.zeros(2)
            e[i] = eps
            fd = (sys.f(y + e, t) - f0) / eps
            assert np.max(np.abs(fd - J[:, i])) <= 10 * eps


def test_overdamped_jacobian_matches_fd(rng):
    sys = overdamped_system(HalfAngleGain(Sinusoidal(1.0, 0.5, math.pi)))
    eps = 1e-6
    for _ in range(100):
        y = np.array([rng.uniform(-math.pi + 0.01, math.pi - 0.01)])
        t = rng.uniform(0.0, 2.0)
        fd = (sys.f(y + eps, t) - sys.f(y, t)) / eps
        assert abs(fd[0] - sys.jac(y, t)[0, 0]) <= 10 * eps


def test_feedback_linearization_matches_linear_closed_form(cfg):
    # u = sin(theta) + w cancels gravity: theta'' = -k theta' + w
    k, w = 2.0, 0.3
    params = PendulumParams(k=k, input=FeedbackLinearizing(Constant(w)))
    traj = integrate_state(pendulum_system(params), CylinderPoint(0.2, -0.1),
                           cfg, (0.0, 3.0))
    t = traj.times
    v0, th0 = -0.1, 0.2
    # v(t) = w/k + (v0 - w/k) e^{-kt};  theta(t) integrates it
    v_exact = w / k + (v0 - w / k) * np.exp(-k * t)
    th_exact = th0 + (w / k) * t + (v0 - w / k) * (1 - np.exp(-k * t)) / k
    assert np.max(np.abs(traj.v - v_exact)) < 1e-8
    assert np.max(np.abs(traj.theta_unwrapped - th_exact)) < 1e-8


def test_incremental_mismatch_identity_and_wrapping(cfg):
    params = PendulumParams(k=0.5, input=Constant(1.5))
    sys = pendulum_system(params)
    traj = integrate_state(sys, CylinderPoint(0.0, 2.0), cfg, (0.0, 5.0))
    dth, dv = incremental_mismatch(traj, traj)
    assert np.all(dth == 0.0) and np.all(dv == 0.0)

    other = integrate_state(sys, CylinderPoint(0.0, 2.0), cfg, (0.0, 4.0))
    with pytest.raises(MismatchedGrids):
        incremental_mismatch(traj, other)


def test_incremental_mismatch_second_order(cfg):
    """The tangent flow approximates finite increments to O(eps^2)."""
    params = PendulumParams(k=0.5, input=Constant(1.5))
    sys = pendulum_system(params)
    d0 = Tangent(0.6, 0.8)

    def sup_error(eps):
        base = integrate_prolonged(sys, CylinderPoint(0.3, 1.2), d0, cfg, (0.0, 5.0))
        ts = base.times
        pert = integrate_state(sys, CylinderPoint(0.3 + eps * d0.dtheta,
                                                  1.2 + eps * d0.dv), cfg, (0.0, 5.0))
        y2 = pert.dense.eval_many(ts)
        dth = (y2[:, 0] - base.theta_unwrapped)
        dv = y2[:, 1] - base.v
        return float(np.max(np.hypot(dth - eps * base.dtheta, dv - eps * base.dv)))

    e1 = sup_error(1e-4)
    e2 = sup_error(5e-5)
    assert e1 / e2 > 3.0     # halving eps quarters the remainder
    assert e1 < 1e-6
