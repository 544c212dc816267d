"""Slow-leg transit maps, fast jump maps and their Jacobians.

Delay bookkeeping: ``d[j]`` is the integral of ``dg_j/dz_j`` accumulated along
the slow legs since component j last jumped.  It is zero right after the jump,
negative while the face is (net) attracting, and component j leaves when
``d[j]`` climbs back to zero.

Section coordinates on entry to leg i are ``p`` followed by ``d[j]`` for every
``j != J_in(i)`` (ascending); on exit they are ``p`` followed by ``d[j]`` for
``j != J_out(i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .expr import jacobian, value
from .ode import (DEFAULT_ATOL, DEFAULT_RTOL, DEFAULT_TMAX, EventSpec, IntegrationError,
                  NoEvent, Trajectory, integrate, integrate_until, propagate_variational)
from .system import ManifoldChain, SlowFastSystem, omega

GZ_GUARD = 1e-10
SERIES_BAND = 1e-6


class NoExit(RuntimeError):
    """The exiting delay never returned to zero on a leg."""

    def __init__(self, message, leg=None, trajectory=None):
        super().__init__(message)
        self.leg = leg
        self.trajectory = trajectory


class AssumptionViolation(ValueError):
    """A sign or non-degeneracy condition fails at a leg end point."""


class NoHeteroclinic(RuntimeError):
    """The fast trajectory did not reach the target face."""


@dataclass
class LegTransit:
    leg: int
    j_in: int
    j_out: int
    tau: float
    entry_p: np.ndarray
    entry_d: np.ndarray
    exit_p: np.ndarray
    exit_d: np.ndarray
    trajectory: Trajectory
    premature: list = field(default_factory=list)

    @property
    def entry_zeta(self):
        return 0.0 - self.entry_d


@dataclass
class LegJacobian:
    L: np.ndarray
    M: np.ndarray
    mu: np.ndarray
    DQ: np.ndarray
    DQhat: np.ndarray
    f_entry: np.ndarray
    f_exit: np.ndarray
    gz_entry: np.ndarray
    gz_exit: np.ndarray
    j_in: int
    j_out: int


@dataclass
class JumpResult:
    landing_p: np.ndarray
    exit_p: np.ndarray
    component: int
    time: float = 0.0
    trajectory: Optional[Trajectory] = None
    trivial: bool = False


@dataclass
class JumpJacobian:
    R: np.ndarray
    nu: np.ndarray
    Dpi: np.ndarray
    abel: Optional[float] = None


def section_in(sys: SlowFastSystem, chain: ManifoldChain, i: int):
    """Delay components kept in the entry section of leg i."""
    return [j for j in range(sys.m) if j != chain[i].j_in]


def section_out(sys: SlowFastSystem, chain: ManifoldChain, i: int):
    return [j for j in range(sys.m) if j != chain.j_out(i)]


def _augmented(sys, z):
    z = list(z)
    n = sys.n

    def rhs(t, y):
        p = y[:n].tolist()
        return np.concatenate([sys.f_val(p, z), sys.gz_all(p, z)])
    return rhs


def transit_leg(sys, chain, i, entry_p, entry_d, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
                t_max=DEFAULT_TMAX) -> LegTransit:
    """Follow leg i from ``entry_p`` until the outgoing component's delay returns to 0.

    Raises
    ------
    NoExit
        The delay of ``J_out`` never climbs back to zero before ``t_max``.
    AssumptionViolation
        The entry delay of ``J_in`` is not zero, or ``J_out`` has no delay
        credit (``d >= 0`` and ``gz >= 0`` at entry).
    """
    leg = chain[i]
    n, jin, jout = sys.n, leg.j_in, chain.j_out(i)
    p0 = np.asarray(entry_p, dtype=float)
    d0 = np.array(entry_d, dtype=float)
    if abs(d0[jin]) > 1e-12:
        raise AssumptionViolation(f"leg {i + 1}: entry delay of jumping component is {d0[jin]:g}, not 0")
    d0[jin] = 0.0
    if d0[jout] >= 0 and sys.gz_val(jout, p0, leg.z) >= 0:
        raise AssumptionViolation(f"leg {i + 1}: component {jout + 1} has no delay credit at entry")
    ev = EventSpec(lambda t, y: y[n + jout], "rising")
    try:
        tau, y_ev, traj = integrate_until(_augmented(sys, leg.z), np.concatenate([p0, d0]), ev,
                                          t_max=t_max, rtol=rtol, atol=atol)
    except NoEvent as e:
        raise NoExit(f"leg {i + 1}: delay of component {jout + 1} never returns to 0 "
                     f"before t={t_max:g}", i, e.trajectory) from None
    exit_d = y_ev[n:].copy()
    exit_d[jout] = 0.0
    inner = traj.y[1:-1, n:]
    premature = sorted({int(j) for j in np.nonzero((inner >= 0).any(axis=0))[0] if j != jout})
    return LegTransit(i, jin, jout, tau, p0, d0, y_ev[:n].copy(), exit_d, traj, premature)


def leg_jacobian(sys, chain, i, transit: LegTransit, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> LegJacobian:
    """Jacobians of the leg map by integrating the augmented variational system.

    ``L' = D_p f L`` gives the fundamental matrix and ``M_k' = grad_p gz_k L``
    the delay sensitivities; ``mu = M_{J_out}``.  Then, with ``gB = gz_J(B)``,
    ``DQ = L - f(B) mu / gB`` and ``DQhat`` follows from the chain rule through
    the exit time ``dT = -(mu, e_J) / gB``.
    """
    leg = chain[i]
    n, m, J = sys.n, sys.m, transit.j_out
    z = list(leg.z)

    def jac(t, y):
        p = y[:n].tolist()
        _, Df = sys.jac_f(p, z)
        _, Dg = sys.jac_gz(p, z)
        out = np.zeros((n + m, n + m))
        out[:n, :n] = Df
        out[n:, :n] = Dg
        return out

    V0 = np.vstack([np.eye(n), np.zeros((m, n))])
    y0 = np.concatenate([transit.entry_p, transit.entry_d])
    _, V = propagate_variational(_augmented(sys, z), jac, y0, V0, (0.0, transit.tau), rtol, atol)
    L, M = V[:n], V[n:]
    fA, fB = sys.f_val(transit.entry_p, z), sys.f_val(transit.exit_p, z)
    gA, gBv = sys.gz_all(transit.entry_p, z), sys.gz_all(transit.exit_p, z)
    gB = gBv[J]
    if abs(gB) < GZ_GUARD:
        raise AssumptionViolation(f"leg {i + 1}: |gz| at exit is {abs(gB):.3g} (degenerate exit)")
    mu = M[J].copy()
    DQ = L - np.outer(fB, mu) / gB

    dT = -np.concatenate([mu, np.eye(m)[J]]) / gB
    full = np.block([[L, np.zeros((n, m))], [M, np.eye(m)]]) + np.outer(np.concatenate([fB, gBv]), dT)
    rows = list(range(n)) + [n + k for k in section_out(sys, chain, i)]
    cols = list(range(n)) + [n + j for j in section_in(sys, chain, i)]
    DQhat = full[np.ix_(rows, cols)]
    return LegJacobian(L, M, mu, DQ, DQhat, fA, fB, gA, gBv, transit.j_in, J)


# ---------------------------------------------------------------------------
# jumps

def _fiber(sys, chain, i):
    J = chain.j_out(i)
    z_from, z_to = list(chain[i].z), list(chain[i + 1].z)
    return J, z_from, z_to


def h_vanishes_on_fiber(sys, p, z_from, J, samples=9):
    """True when ``h`` is identically zero (or sampled zero) along the jump fiber."""
    if sys.h_is_zero:
        return True
    lo, hi = sys.z_bounds[J]
    if np.isfinite(lo) and np.isfinite(hi):
        qs = np.linspace(lo, hi, samples + 2)[1:-1]
    else:
        base = lo if np.isfinite(lo) else hi
        sgn = 1.0 if np.isfinite(lo) else -1.0
        qs = base + sgn * np.geomspace(1e-3, 10.0, samples)
    for q in qs:
        z = list(z_from)
        z[J] = float(q)
        if np.any(sys.h_val(p, z) != 0):
            return False
    return True


def regularized_field(sys, J, z_from, z_to):
    """``(h_i, g_i) = phi(q) (h, g_J)`` on the fiber, as a function of ``[p..., q]``.

    ``phi`` divides out the vanishing of ``(h, g_J)`` on the departure and
    landing faces so the heteroclinic takes finite time.  Near a face the
    quotient is replaced by the q-derivative at the midpoint.
    """
    n = sys.n
    a, b = z_from[J], z_to[J]
    wa = omega(sys, J, a)
    wb = omega(sys, J, b)

    def raw(p, q):
        z = list(z_from)
        z[J] = q
        return list(sys.h_any(p, z)) + [sys.g(p, z, 0.0)[J]]

    def quotient(p, q, face):
        # raw(p, q) / (q - face), continuous through q == face
        dq = q - face
        if abs(value(dq)) < SERIES_BAND:
            mid = 0.5 * (q + face)
            _, J_ = jacobian(lambda v: raw(p, v[0]), [mid])
            return [row[0] for row in J_]
        return [r / dq for r in raw(p, q)]

    def field(y):
        p, q = list(y[:n]), y[n]
        if a == b:
            return [wa * r for r in quotient(p, q, a)]
        if abs(value(q - a)) <= abs(value(q - b)):
            s = wa * wb / (q - b)
            return [s * r for r in quotient(p, q, a)]
        s = wa * wb / (q - a)
        return [s * r for r in quotient(p, q, b)]

    return field


def _landing_event(sys, J, a, b):
    lo, _ = sys.z_bounds[J]
    if a == b:
        direction = "falling" if a == lo else "rising"
    else:
        direction = "rising" if b > a else "falling"
    return direction


def jump_map(sys, chain, i, exit_p, method="regularized", rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL,
             t_max=1e3, delta_jump=1e-3, delta_land=1e-3, v_land=1e-6, box=1e6) -> JumpResult:
    """Landing point of the fast jump leaving leg i at ``exit_p``.

    ``method="regularized"`` integrates the regularized fast field from the
    exit point on the face to the landing face.  ``method="seeded"`` seeds the
    plain fast field ``delta_jump`` off the face, stops once within
    ``delta_land`` of the target face with speed below ``v_land``, and
    Richardson-extrapolates the runs at ``delta_jump`` and ``delta_jump/2``.
    """
    J, z_from, z_to = _fiber(sys, chain, i)
    p = np.asarray(exit_p, dtype=float)
    gB = sys.gz_val(J, p, z_from)
    if not gB > 0:
        raise AssumptionViolation(f"jump after leg {i + 1}: gz={gB:.3g} at exit is not repelling")
    if h_vanishes_on_fiber(sys, p, z_from, J):
        return JumpResult(p.copy(), p.copy(), J, trivial=True)
    if method == "regularized":
        return _jump_regularized(sys, J, z_from, z_to, p, rtol, atol, t_max, box)
    if method == "seeded":
        d1, d2 = delta_jump, 0.5 * delta_jump
        r1 = _jump_seeded(sys, J, z_from, z_to, p, d1, delta_land, v_land, rtol, atol, t_max, box)
        r2 = _jump_seeded(sys, J, z_from, z_to, p, d2, delta_land, v_land, rtol, atol, t_max, box)
        land = (d1 * r2.landing_p - d2 * r1.landing_p) / (d1 - d2)
        return JumpResult(land, p.copy(), J, r2.time, r2.trajectory)
    raise ValueError(f"unknown jump method {method!r}")


def _check_box(traj, p0, box):
    if np.any(np.abs(traj.y[:, :len(p0)] - p0) > box):
        raise NoHeteroclinic("fast trajectory left the bounding box")


def _jump_regularized(sys, J, z_from, z_to, p, rtol, atol, t_max, box):
    n = sys.n
    a, b = z_from[J], z_to[J]
    fld = regularized_field(sys, J, z_from, z_to)
    ev = EventSpec(lambda t, y: y[n] - b, _landing_event(sys, J, a, b))
    try:
        T, y, traj = integrate_until(lambda t, y: np.array(fld(y.tolist()), dtype=float),
                                     np.concatenate([p, [a]]), ev, t_max=t_max, rtol=rtol, atol=atol)
    except (NoEvent, IntegrationError) as e:
        raise NoHeteroclinic(f"no heteroclinic from the exit point: {e}") from None
    _check_box(traj, p, box)
    return JumpResult(y[:n].copy(), p.copy(), J, T, traj)


def _jump_seeded(sys, J, z_from, z_to, p, delta, delta_land, v_land, rtol, atol, t_max, box):
    n = sys.n
    a, b = z_from[J], z_to[J]
    wa = omega(sys, J, a)
    zf = list(z_from)

    def rhs(t, y):
        z = list(zf)
        z[J] = y[n]
        pp = y[:n].tolist()
        return np.concatenate([sys.h_val(pp, z), [sys.g_val(pp, z)[J]]])

    def land(t, y):
        speed = np.linalg.norm(rhs(t, y))
        return max(abs(y[n] - b) - delta_land, speed - v_land)

    ev = EventSpec(land, "falling")
    try:
        T, y, traj = integrate_until(rhs, np.concatenate([p, [a + wa * delta]]), ev,
                                     t_max=t_max, rtol=rtol, atol=atol)
    except (NoEvent, IntegrationError) as e:
        raise NoHeteroclinic(f"no heteroclinic from the exit point: {e}") from None
    _check_box(traj, p, box)
    return JumpResult(y[:n].copy(), p.copy(), J, T, traj)


def jump_jacobian(sys, chain, i, exit_p, jump: Optional[JumpResult] = None,
                  rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> JumpJacobian:
    """Jacobian of the jump map at ``exit_p``.

    Integrates ``[R; nu]`` along the regularized heteroclinic and corrects for
    the landing time: ``Dpi = R - h_i(A) nu / g_i(A)``.  For ``n == 1`` the
    Abel form ``g_i(B)/g_i(A) exp(int div)`` is evaluated as well.
    """
    n = sys.n
    J, z_from, z_to = _fiber(sys, chain, i)
    p = np.asarray(exit_p, dtype=float)
    if jump is None:
        jump = jump_map(sys, chain, i, p, rtol=rtol, atol=atol)
    if jump.trivial:
        return JumpJacobian(np.eye(n), np.zeros(n), np.eye(n), 1.0 if n == 1 else None)
    fld = regularized_field(sys, J, z_from, z_to)
    a, b = z_from[J], z_to[J]

    def rhs(t, y):
        return np.array(fld(y.tolist()), dtype=float)

    def jac(t, y):
        return np.array(jacobian(fld, y.tolist())[1], dtype=float)

    V0 = np.vstack([np.eye(n), np.zeros((1, n))])
    y0 = np.concatenate([p, [a]])
    yT, V = propagate_variational(rhs, jac, y0, V0, (0.0, jump.time), rtol, atol)
    R, nu = V[:n], V[n]
    A = jump.landing_p
    vA = fld(list(A) + [b])
    gA = float(vA[n])
    if abs(gA) < GZ_GUARD:
        raise AssumptionViolation(f"jump after leg {i + 1}: |g_i| at landing is {abs(gA):.3g}")
    hA = np.array(vA[:n], dtype=float)
    Dpi = R - np.outer(hA, nu) / gA
    abel = None
    if n == 1:
        gB = float(fld(list(p) + [a])[n])
        abel = gB / gA * np.exp(divergence_integral(sys, J, z_from, z_to, p, jump.time, rtol, atol))
    return JumpJacobian(R, nu, Dpi, abel)


def divergence_integral(sys, J, z_from, z_to, exit_p, T, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    """Integral of the divergence of the regularized fast field over ``[0, T]``."""
    n = sys.n
    fld = regularized_field(sys, J, z_from, z_to)
    a = z_from[J]

    def rhs(t, y):
        v, Jm = jacobian(fld, y[:n + 1].tolist())
        return np.array(v + [sum(Jm[k][k] for k in range(n + 1))], dtype=float)

    traj = integrate(rhs, np.concatenate([np.asarray(exit_p, float), [a, 0.0]]), (0.0, T), rtol, atol)
    return float(traj.final[-1])
