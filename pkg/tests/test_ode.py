import math

import numpy as np
import pytest
from scipy.linalg import expm

from helpers import CATALOG, solved
from slowfast.ode import (EventSpec, NoEvent, NonFiniteDerivative, VectorField, integrate, integrate_until,
                          propagate_variational)
from slowfast.system import slow_field


def test_exponential_decay():
    traj = integrate(lambda t, y: -y, [1.0], (0.0, 1.0), rtol=1e-9)
    assert abs(traj.final[0] - math.exp(-1)) < 1e-8


def test_circle_returns():
    traj = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], (0.0, 2 * math.pi))
    assert np.allclose(traj.final, [1.0, 0.0], atol=1e-6)


def test_vector_field_wrapper():
    field = VectorField(1, lambda t, y: -2 * y)
    assert integrate(field, [1.0], (0.0, 0.5)).final[0] == pytest.approx(math.exp(-1), rel=1e-8)


def test_dense_output_matches_knots():
    rtol = 1e-9
    traj = integrate(lambda t, y: np.array([y[1], -y[0]]), [1.0, 0.0], (0.0, 10.0), rtol=rtol)
    dense = traj(traj.t)
    assert dense.shape == traj.y.shape
    assert np.max(np.abs(dense - traj.y)) <= 10 * rtol
    assert np.all(np.diff(traj.t) > 0)


def test_tradeoff_slow_leg_reaches_exit():
    s = solved("tradeoff")
    traj = integrate(slow_field(s.sys, s.chain[0]), [5.57, 11.03], (0.0, s.orbit.tau[0]), 1e-10, 1e-12)
    assert np.allclose(traj.final, [9.96, 0.36], atol=0.02)


def test_linear_crossing():
    t, y, traj = integrate_until(lambda t, y: np.ones(1), [-1.0], EventSpec(lambda t, y: y[0], "rising"), 10.0)
    assert t == pytest.approx(1.0, abs=1e-10)
    assert abs(y[0]) <= 1e-12
    assert traj.t[-1] == pytest.approx(t)


def test_event_direction_filters_crossings():
    rhs = lambda t, y: np.array([math.cos(t)])
    fall = integrate_until(rhs, [0.5], EventSpec(lambda t, y: y[0] - 0.5, "falling"), 10.0)[0]
    rise = integrate_until(rhs, [0.5], EventSpec(lambda t, y: y[0] - 0.5, "rising"), 10.0)[0]
    assert fall == pytest.approx(math.pi, abs=1e-8)
    assert rise == pytest.approx(2 * math.pi, abs=1e-8)


def test_dead_band_skips_start_at_zero():
    # sin t starts at 0 rising; the first reported rising zero is at 2 pi
    t = integrate_until(lambda t, y: np.array([math.cos(t)]), [0.0],
                        EventSpec(lambda t, y: y[0], "rising"), 10.0)[0]
    assert t == pytest.approx(2 * math.pi, abs=1e-8)


def test_no_event_carries_trajectory():
    with pytest.raises(NoEvent) as err:
        integrate_until(lambda t, y: np.ones(1), [0.0], EventSpec(lambda t, y: y[0] - 10.0), t_max=5.0)
    assert err.value.trajectory.t[-1] == pytest.approx(5.0)
    assert err.value.trajectory.final[0] == pytest.approx(5.0)


def test_non_finite_derivative():
    with pytest.raises(NonFiniteDerivative):
        integrate(lambda t, y: np.array([np.nan]), [1.0], (0.0, 1.0))


def test_degenerate_span():
    with pytest.raises(ValueError):
        integrate(lambda t, y: y, [1.0], (1.0, 1.0))


A = np.array([[-0.3, 1.2, 0.0], [-1.0, -0.1, 0.4], [0.2, 0.0, -0.5]])


def test_variational_matches_matrix_exponential():
    y, V = propagate_variational(lambda t, y: A @ y, lambda t, y: A, [1.0, 0.0, 0.0], np.eye(3), (0.0, 2.0),
                                 rtol=1e-11, atol=1e-13)
    assert np.max(np.abs(V - expm(2.0 * A))) < 1e-7
    assert np.allclose(y, expm(2.0 * A)[:, 0], atol=1e-9)


def test_variational_zero_seed():
    _, V = propagate_variational(lambda t, y: A @ y, lambda t, y: A, np.ones(3), np.zeros((3, 2)), (0.0, 1.0))
    assert np.all(V == 0)


def test_variational_linearity():
    f = lambda t, y: np.array([y[1], -math.sin(y[0])])
    J = lambda t, y: np.array([[0.0, 1.0], [-math.cos(y[0]), 0.0]])
    U, W = np.array([[1.0], [0.5]]), np.array([[-0.2], [2.0]])
    prop = lambda V0: propagate_variational(f, J, [1.0, 0.0], V0, (0.0, 3.0), 1e-11, 1e-13)[1]
    assert np.allclose(prop(2.0 * U - 3.0 * W), 2.0 * prop(U) - 3.0 * prop(W), atol=1e-8)


def test_variational_carries_flow_direction():
    # the tangent seeded with f(A) is transported to f(p(t)) along the slow leg
    s = solved("tradeoff")
    leg = s.chain[0]
    A0 = s.orbit.A[0]
    field = slow_field(s.sys, leg)
    jac = lambda t, y: s.sys.jac_f(y, leg.z)[1]
    V0 = s.sys.f_val(A0, leg.z)[:, None]
    for t in np.linspace(0.2, s.orbit.tau[0], 6):
        y, V = propagate_variational(field, jac, A0, V0, (0.0, t), 1e-11, 1e-13)
        fy = s.sys.f_val(y, leg.z)
        assert np.allclose(V[:, 0], fy, rtol=1e-7, atol=1e-9 * np.max(np.abs(fy)))


@pytest.mark.parametrize("name", CATALOG)
def test_tolerance_monotonicity(name):
    # fixed horizon so each run takes enough steps to be in the asymptotic regime
    s = solved(name)
    span = (0.0, 5.0)
    for i, leg in enumerate(s.chain.legs):
        field = slow_field(s.sys, leg)
        A0 = s.orbit.A[i]
        ref = integrate(field, A0, span, 1e-12, 1e-14).final
        errs = [np.max(np.abs(integrate(field, A0, span, r, r * 1e-2).final - ref) / np.maximum(1.0, np.abs(ref)))
                for r in (1e-5, 5e-6, 2.5e-6, 1.25e-6)]
        assert all(b <= a for a, b in zip(errs, errs[1:])), (i, errs)
