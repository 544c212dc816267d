"""Adaptive Runge-Kutta integration with events and variational propagation.

Thin layer over :func:`scipy.integrate.solve_ivp` (Dormand-Prince 5(4) with a
4th-order dense interpolant) that adds a start-up dead-band for events, typed
errors and joint propagation of tangent vectors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import OdeSolution, solve_ivp

DEFAULT_RTOL = 1e-9
DEFAULT_ATOL = 1e-11
DEFAULT_TMAX = 1e4
DEAD_BAND = 1e-8
METHOD = "RK45"


class IntegrationError(RuntimeError):
    """Integration failed; ``t`` and ``y`` hold the last good state."""

    def __init__(self, message, t=None, y=None):
        super().__init__(message)
        self.t = t
        self.y = None if y is None else np.asarray(y)


class StepUnderflow(IntegrationError):
    pass


class NonFiniteDerivative(IntegrationError):
    pass


class NoEvent(IntegrationError):
    def __init__(self, message, trajectory):
        super().__init__(message, trajectory.t[-1], trajectory.y[-1])
        self.trajectory = trajectory


@dataclass(frozen=True)
class VectorField:
    """Autonomous or time-dependent right-hand side ``dy/dt = fn(t, y)``."""

    dimension: int
    fn: Callable[[float, np.ndarray], np.ndarray]

    def __call__(self, t, y):
        return self.fn(t, y)


@dataclass(frozen=True)
class EventSpec:
    """Scalar crossing condition.

    ``direction`` is ``"rising"``, ``"falling"`` or ``"either"``.
    """

    fn: Callable[[float, np.ndarray], float]
    direction: str = "rising"
    dead_band: float = DEAD_BAND


_DIRECTIONS = {"rising": 1, "falling": -1, "either": 0}


@dataclass
class Trajectory:
    """Knots plus dense output; ``y`` has shape (len(t), dim)."""

    t: np.ndarray
    y: np.ndarray
    interpolant: object = None

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.interpolant is None:
            raise ValueError("trajectory has no dense output")
        return self.interpolant(t).T if t.ndim else self.interpolant(t)

    @property
    def final(self):
        return self.y[-1]


def _guarded(field):
    def rhs(t, y):
        dy = np.asarray(field(t, y), dtype=float)
        if not np.all(np.isfinite(dy)):
            raise NonFiniteDerivative(f"non-finite derivative at t={t:.6g}", t, y)
        return dy
    return rhs


def _solve(field, y0, t_span, rtol, atol, events=None, dense=True, max_step=np.inf):
    y0 = np.asarray(y0, dtype=float)
    if t_span[1] == t_span[0]:
        raise ValueError("degenerate time span")
    sol = solve_ivp(_guarded(field), t_span, y0, method=METHOD, rtol=rtol, atol=atol,
                    events=events, dense_output=dense, max_step=max_step)
    if sol.status == -1:
        raise StepUnderflow(f"integration failed: {sol.message}", sol.t[-1], sol.y[:, -1])
    return sol


def integrate(field, y0, t_span, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, max_step=np.inf) -> Trajectory:
    """Integrate ``field`` over ``t_span`` with dense output.

    Raises
    ------
    StepUnderflow
        When the step size collapses (stiffness or a singularity).
    NonFiniteDerivative
        When the field returns inf or nan.
    """
    sol = _solve(field, y0, tuple(t_span), rtol, atol, max_step=max_step)
    return Trajectory(sol.t, sol.y.T, sol.sol)


def integrate_until(field, y0, event: EventSpec, t_max=DEFAULT_TMAX,
                    rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, max_step=np.inf):
    """Integrate until ``event`` crosses zero in its stated direction.

    Crossings inside the first ``event.dead_band`` time units are ignored so
    that accumulators starting at exactly zero do not fire immediately.

    Returns
    -------
    t_event, y_event, Trajectory
        The trajectory ends at the event.

    Raises
    ------
    NoEvent
        If no crossing occurs before ``t_max``; carries the trajectory.
    """
    y0 = np.asarray(y0, dtype=float)
    sign = _DIRECTIONS[event.direction]
    band = min(max(event.dead_band, 0.0), t_max)
    head = None
    if band > 0:
        # step through the dead-band without the event, then watch from there on
        head = _solve(field, y0, (0.0, band), rtol, atol, max_step=max_step)
        y0 = head.y[:, -1]

    def ev(t, y):
        return event.fn(t, y)

    ev.terminal = True
    ev.direction = sign
    if band < t_max:
        sol = _solve(field, y0, (band, t_max), rtol, atol, events=[ev], max_step=max_step)
    else:
        sol = None
    traj = _stitch(head, sol)
    if sol is None or sol.status != 1 or len(sol.t_events[0]) == 0:
        raise NoEvent(f"no event before t_max={t_max:g}", traj)
    return float(sol.t_events[0][0]), sol.y_events[0][0].copy(), traj


def _stitch(head, tail) -> Trajectory:
    parts = [p for p in (head, tail) if p is not None]
    if len(parts) == 1:
        return Trajectory(parts[0].t, parts[0].y.T, parts[0].sol)
    t = np.concatenate([head.t, tail.t[1:]])
    y = np.concatenate([head.y.T, tail.y.T[1:]])
    dense = OdeSolution(np.concatenate([head.sol.ts, tail.sol.ts[1:]]),
                        list(head.sol.interpolants) + list(tail.sol.interpolants))
    return Trajectory(t, y, dense)


def propagate_variational(field, jacobian, y0, V0, t_span, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Integrate ``y' = f(t, y)`` jointly with ``V' = Df(t, y) V``.

    Returns
    -------
    y_final, V_final
    """
    y0 = np.asarray(y0, dtype=float)
    V0 = np.asarray(V0, dtype=float)
    n = y0.size
    if V0.ndim != 2 or V0.shape[0] != n:
        raise ValueError(f"V0 must have {n} rows")
    k = V0.shape[1]

    def aug(t, s):
        y = s[:n]
        V = s[n:].reshape(n, k)
        J = np.asarray(jacobian(t, y), dtype=float)
        if J.shape != (n, n):
            raise ValueError(f"jacobian has shape {J.shape}, expected {(n, n)}")
        return np.concatenate([np.asarray(field(t, y), dtype=float), (J @ V).ravel()])

    sol = _solve(aug, np.concatenate([y0, V0.ravel()]), tuple(t_span), rtol, atol, dense=False)
    s = sol.y[:, -1]
    return s[:n].copy(), s[n:].reshape(n, k).copy()
