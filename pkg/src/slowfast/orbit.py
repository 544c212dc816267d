"""Singular return map, its fixed point and stability classification."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .entry_exit import (AssumptionViolation, NoExit, NoHeteroclinic, divergence_integral,
                         jump_jacobian, jump_map, leg_jacobian, section_in, transit_leg)
from .ode import DEFAULT_ATOL, DEFAULT_RTOL, DEFAULT_TMAX, EventSpec, IntegrationError, NoEvent, integrate_until
from .system import LegSpec, ManifoldChain, SlowFastSystem

log = logging.getLogger(__name__)

NEWTON_TOL = 1e-9
MAX_ITER = 50
MAX_HALVINGS = 8
MARGIN = 1e-3


class NewtonFailure(RuntimeError):
    def __init__(self, message, x=None, residual=None):
        super().__init__(message)
        self.x = x
        self.residual = residual


class PlanarConditionError(ValueError):
    pass


@dataclass
class MapEvaluation:
    x: np.ndarray
    image: np.ndarray
    transits: list
    jumps: list
    leg_jacobians: list = field(default_factory=list)
    jump_jacobians: list = field(default_factory=list)
    DP: np.ndarray | None = None


@dataclass
class SingularOrbit:
    """Converged singular closed orbit in section coordinates at leg-1 entry."""

    x: np.ndarray
    transits: list
    jumps: list
    residual: float
    iterations: int

    @property
    def A(self):
        return [t.entry_p for t in self.transits]

    @property
    def B(self):
        return [t.exit_p for t in self.transits]

    @property
    def tau(self):
        return [t.tau for t in self.transits]

    @property
    def zeta(self):
        return [t.entry_zeta for t in self.transits]


@dataclass
class StabilityReport:
    DP: np.ndarray
    eigenvalues: np.ndarray
    spectral_radius: float
    det_DP_minus_I: float
    classification: str
    leg_jacobians: list = field(default_factory=list)
    jump_jacobians: list = field(default_factory=list)


def _split(sys, chain, x):
    x = np.asarray(x, dtype=float)
    d = np.zeros(sys.m)
    d[section_in(sys, chain, 0)] = x[sys.n:]
    return x[:sys.n].copy(), d


def return_map(sys: SlowFastSystem, chain: ManifoldChain, x, with_jacobian=False,
               rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, t_max=DEFAULT_TMAX, jump_method="regularized"):
    """Apply every leg and jump once, starting from section point ``x`` at leg 1 entry.

    Returns a :class:`MapEvaluation`; with ``with_jacobian`` it also carries
    ``DP = prod_i (Dpi_i (+) I) DQhat_i``.
    """
    n = sys.n
    p, d = _split(sys, chain, x)
    out = MapEvaluation(np.asarray(x, dtype=float), None, [], [])
    DP = np.eye(len(out.x)) if with_jacobian else None
    for i in range(len(chain)):
        try:
            tr = transit_leg(sys, chain, i, p, d, rtol=rtol, atol=atol, t_max=t_max)
        except NoExit as e:
            e.leg = i
            raise
        out.transits.append(tr)
        jr = jump_map(sys, chain, i, tr.exit_p, method=jump_method, rtol=rtol, atol=atol)
        out.jumps.append(jr)
        if with_jacobian:
            lj = leg_jacobian(sys, chain, i, tr, rtol=rtol, atol=atol)
            jj = jump_jacobian(sys, chain, i, tr.exit_p, jr, rtol=rtol, atol=atol)
            out.leg_jacobians.append(lj)
            out.jump_jacobians.append(jj)
            block = np.eye(lj.DQhat.shape[0])
            block[:n, :n] = jj.Dpi
            DP = block @ lj.DQhat @ DP
        p, d = jr.landing_p, tr.exit_d
    keep = section_in(sys, chain, 0)
    out.image = np.concatenate([p, d[keep]])
    out.DP = DP
    return out


def classify(DP, margin=MARGIN):
    """Eigenvalues (descending modulus), spectral radius, det(DP - I), verdict."""
    DP = np.atleast_2d(np.asarray(DP, dtype=float))
    ev = np.linalg.eigvals(DP)
    ev = ev[np.lexsort((-ev.imag, -np.abs(ev)))]
    rho = float(np.max(np.abs(ev)))
    det = float(np.linalg.det(DP - np.eye(DP.shape[0])))
    if abs(det) < margin or abs(rho - 1.0) <= margin:
        verdict = "inconclusive"
    elif rho < 1.0:
        verdict = "stable"
    else:
        verdict = "unstable"
    return ev, rho, det, verdict


def _closest_approach(sys, leg, target, rtol, atol, t_max):
    """Integrate the slow flow on ``leg`` from its guess to the first local
    minimum of the distance to ``target``; returns (p, integral of gz)."""
    n = sys.n
    z = list(leg.z)
    target = np.asarray(target, dtype=float)

    def rhs(t, y):
        p = y[:n].tolist()
        return np.concatenate([sys.f_val(p, z), sys.gz_all(p, z)])

    def dist_rate(t, y):
        return float(np.dot(y[:n] - target, sys.f_val(y[:n], z)))

    y0 = np.concatenate([leg.a_guess, np.zeros(sys.m)])
    if np.allclose(y0[:n], target):
        # one-leg chain: the next guess is this one
        return y0[:n], y0[n:]
    try:
        _, y, _ = integrate_until(rhs, y0, EventSpec(dist_rate, "rising"), t_max=t_max, rtol=rtol, atol=atol)
    except NoEvent as e:
        traj = e.trajectory
        k = int(np.argmin(np.linalg.norm(traj.y[:, :n] - target, axis=1)))
        y = traj.y[k]
    return y[:n], y[n:]


def warm_start_delays(sys, chain, rtol=1e-8, atol=1e-10, t_max=DEFAULT_TMAX):
    """Entry delays for every leg estimated from the chain's guesses.

    Each leg is followed from its guess to the closest approach of the next
    guess; a component's delay at a leg entry is the sum of those integrals
    since the leg it last jumped into.
    """
    N = len(chain)
    integrals = []
    for i in range(N):
        _, I = _closest_approach(sys, chain[i], chain[i + 1].a_guess, rtol, atol, min(t_max, 1e3))
        integrals.append(I)
    delays = []
    for k in range(N):
        d = np.zeros(sys.m)
        for j in range(sys.m):
            if j == chain[k].j_in:
                continue
            total = 0.0
            for back in range(1, N + 1):
                leg_i = (k - back) % N
                total += integrals[leg_i][j]
                if chain[leg_i].j_in == j:
                    break
            d[j] = min(total, -1e-6)
        delays.append(d)
    return delays


def initial_section_point(sys, chain, **kw):
    d0 = warm_start_delays(sys, chain, **kw)[0]
    return np.concatenate([np.asarray(chain[0].a_guess), d0[section_in(sys, chain, 0)]])


def find_singular_orbit(sys, chain, x0=None, tol=NEWTON_TOL, max_iter=MAX_ITER,
                        rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL, t_max=DEFAULT_TMAX, margin=MARGIN,
                        jump_method="regularized"):
    """Newton iteration on ``P(x) - x`` with the composed analytic Jacobian.

    Steps are least-squares (minimum-norm) solutions of ``(DP - I) s = -G`` and
    are halved up to 8 times until the residual decreases.

    Returns
    -------
    SingularOrbit, StabilityReport

    Raises
    ------
    NewtonFailure
        Iteration cap reached or no decreasing step found.
    """
    if x0 is None:
        x0 = initial_section_point(sys, chain, t_max=t_max)
    kw = dict(rtol=rtol, atol=atol, t_max=t_max, jump_method=jump_method)

    def evaluate(x):
        return return_map(sys, chain, x, with_jacobian=True, **kw)

    x = np.asarray(x0, dtype=float)
    try:
        ev = evaluate(x)
    except (NoExit, AssumptionViolation, NoHeteroclinic, IntegrationError) as e:
        raise NewtonFailure(f"return map undefined at the initial guess: {e}", x) from e
    G = ev.image - x
    res = float(np.max(np.abs(G)))
    it = 0
    while res >= tol:
        if it >= max_iter:
            raise NewtonFailure(f"no convergence after {max_iter} iterations (residual {res:.3g})", x, res)
        it += 1
        A = ev.DP - np.eye(len(x))
        step = np.linalg.lstsq(A, -G, rcond=1e-12)[0]
        lam, accepted = 1.0, False
        for _ in range(MAX_HALVINGS + 1):
            xt = x + lam * step
            try:
                evt = evaluate(xt)
            except (NoExit, AssumptionViolation, NoHeteroclinic, IntegrationError) as e:
                log.debug("rejected Newton trial at lambda=%g: %s", lam, e)
                lam *= 0.5
                continue
            Gt = evt.image - xt
            rt = float(np.max(np.abs(Gt)))
            if rt < res:
                x, ev, G, res, accepted = xt, evt, Gt, rt, True
                break
            lam *= 0.5
        log.debug("newton iter %d residual %.3e lambda %g", it, res, lam)
        if not accepted:
            raise NewtonFailure(f"no decreasing step at iteration {it} (residual {res:.3g})", x, res)
    eigs, rho, det, verdict = classify(ev.DP, margin)
    orbit = SingularOrbit(x, ev.transits, ev.jumps, res, it)
    report = StabilityReport(ev.DP, eigs, rho, det, verdict, ev.leg_jacobians, ev.jump_jacobians)
    return orbit, report


# ---------------------------------------------------------------------------
# planar systems  a' = F(a,b) + b H/eps,  eps b' = b G

def _planar_parts(sys):
    if sys.n != 1 or sys.m != 1:
        raise PlanarConditionError("planar form needs n = m = 1")
    lo, _ = sys.z_bounds[0]
    F = lambda a: float(sys.f_val([a], [lo])[0])
    G = lambda a: sys.gz_val(0, [a], [lo])
    return F, G, lo


def planar_conditions(sys, a0, a1, samples=201, tol=1e-6):
    """Check the sign and integral conditions; returns a list of problems."""
    F, G, _ = _planar_parts(sys)
    problems = []
    grid = np.linspace(min(a0, a1), max(a0, a1), samples)
    if not all(F(a) > 0 for a in grid):
        problems.append("F(a, 0) is not positive on [a0, a1]")
    if not (G(a0) < 0 and G(a1) > 0):
        problems.append(f"need G(a0) < 0 < G(a1); got {G(a0):.3g}, {G(a1):.3g}")
    ratio = lambda a: G(a) / F(a)
    total = quad(ratio, a0, a1, epsabs=1e-13, epsrel=1e-12)[0]
    if abs(total) > tol:
        problems.append(f"integral of G/F over [a0, a1] is {total:.3g}, not 0")
    partials = [quad(ratio, a0, s, epsabs=1e-13)[0] for s in grid[1:-1]]
    if a0 < a1 and any(v >= 0 for v in partials):
        problems.append("partial integrals of G/F are not negative inside (a0, a1)")
    return problems


def planar_chain(sys, a0):
    lo, _ = sys.z_bounds[0]
    return ManifoldChain((LegSpec((lo,), 0, (a0,)),))


def planar_lambda(sys, a0, a1, check=True, rtol=1e-11, atol=1e-13):
    """``ln|F(a1)/F(a0)|`` plus the divergence integral along the heteroclinic.

    The heteroclinic leaves the axis at ``a1`` and lands at ``a0``; it is
    followed in the regularized fast field ``(H, G)`` and the line integrals
    are evaluated as ``int (d_a H + d_b G) dt``.
    """
    if check:
        problems = planar_conditions(sys, a0, a1)
        if problems:
            raise PlanarConditionError("; ".join(problems))
    F, _, lo = _planar_parts(sys)
    chain = planar_chain(sys, a0)
    jr = jump_map(sys, chain, 0, [a1], rtol=rtol, atol=atol)
    if check and abs(jr.landing_p[0] - a0) > 1e-6 * max(1.0, abs(a0)):
        raise PlanarConditionError(f"heteroclinic from a1 lands at {jr.landing_p[0]:.8g}, not a0={a0:.8g}")
    div = divergence_integral(sys, 0, [lo], [lo], [a1], jr.time, rtol, atol)
    return float(np.log(abs(F(a1) / F(a0))) + div)


def planar_map_derivative(sys, a0, a1, rtol=1e-11, atol=1e-13):
    """``d(pi o Q)/da`` at ``a0`` from the closed forms for dQ and dpi."""
    F, G, lo = _planar_parts(sys)
    chain = planar_chain(sys, a0)
    jr = jump_map(sys, chain, 0, [a1], rtol=rtol, atol=atol)
    dQ = F(a1) / G(a1) * G(a0) / F(a0)
    jj = jump_jacobian(sys, chain, 0, [a1], jr, rtol=rtol, atol=atol)
    return float(dQ * jj.abel)


def planar_fixed_point(sys, a0_guess, rtol=1e-11, atol=1e-13):
    """Locate ``a0 = pi(Q(a0))`` and return ``(a0, a1)``."""
    chain = planar_chain(sys, a0_guess)
    orbit, _ = find_singular_orbit(sys, chain, x0=[a0_guess], rtol=rtol, atol=atol)
    return float(orbit.A[0][0]), float(orbit.B[0][0])
