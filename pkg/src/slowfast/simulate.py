"""Finite-eps simulation and convergence toward the singular orbit."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ode import DEFAULT_ATOL, DEFAULT_RTOL, Trajectory, integrate
from .system import SlowFastSystem


SERIES_BAND = 1e-6


class CycleNotFound(RuntimeError):
    pass


class _FastCoords:
    """Map each fast component to an unbounded coordinate.

    Two finite bounds use the logit ``w = ln((z-lo)/(hi-z))``, one finite
    bound uses ``ln`` of the distance to it, no bound leaves ``z`` as is.
    Distances to the faces are kept separately so they never lose precision.
    """

    def __init__(self, bounds):
        self.bounds = bounds

    def to_w(self, z):
        w = np.empty(len(z))
        for j, (zj, (lo, hi)) in enumerate(zip(z, self.bounds)):
            if np.isfinite(lo) and np.isfinite(hi):
                if not lo < zj < hi:
                    raise ValueError(f"fast component {j + 1} = {zj} is not strictly inside ({lo}, {hi})")
                w[j] = np.log((zj - lo) / (hi - zj))
            elif np.isfinite(lo):
                if not zj > lo:
                    raise ValueError(f"fast component {j + 1} = {zj} is not above {lo}")
                w[j] = np.log(zj - lo)
            elif np.isfinite(hi):
                if not zj < hi:
                    raise ValueError(f"fast component {j + 1} = {zj} is not below {hi}")
                w[j] = np.log(hi - zj)
            else:
                w[j] = zj
        return w

    def from_w(self, w):
        """Return ``z``, distance to the lower face, distance to the upper face."""
        m = len(self.bounds)
        z, below, above = np.empty(m), np.full(m, np.inf), np.full(m, np.inf)
        for j, (wj, (lo, hi)) in enumerate(zip(w, self.bounds)):
            if np.isfinite(lo) and np.isfinite(hi):
                span = hi - lo
                below[j] = span * np.exp(-np.logaddexp(0.0, -wj))
                above[j] = span * np.exp(-np.logaddexp(0.0, wj))
                z[j] = lo + below[j] if wj < 0 else hi - above[j]
            elif np.isfinite(lo):
                below[j] = np.exp(wj)
                z[j] = lo + below[j]
            elif np.isfinite(hi):
                above[j] = np.exp(wj)
                z[j] = hi - above[j]
            else:
                z[j] = wj
        return z, below, above

    def w_rate(self, j, gj, below, above, slope):
        """``g_j * dw_j/dz_j``.

        Within ``SERIES_BAND`` of a face, ``g_j`` itself has lost its digits to
        cancellation, so ``g_j/(z_j - face)`` is replaced by the secant slope
        ``slope(x)`` (the partial of ``g_j`` at the midpoint ``x``).
        """
        lo, hi = self.bounds[j]
        if np.isfinite(lo) and np.isfinite(hi):
            span = hi - lo
            if below <= SERIES_BAND * span:
                return slope(lo + 0.5 * below) * span / above
            if above <= SERIES_BAND * span:
                return -slope(hi - 0.5 * above) * span / below
            return gj * span / (below * above)
        if np.isfinite(lo):
            return slope(lo + 0.5 * below) if below <= SERIES_BAND else gj / below
        if np.isfinite(hi):
            return slope(hi - 0.5 * above) if above <= SERIES_BAND else -gj / above
        return gj


def run(sys: SlowFastSystem, eps, init, t_max, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL) -> Trajectory:
    """Integrate the full system in slow time from ``init = (p, z)``.

    Solves ``p' = f + h/eps`` and ``z' = g/eps`` with the fast components in
    unbounded coordinates; the returned trajectory is in ``(p, z)``.

    Raises
    ------
    ValueError
        ``eps <= 0`` or ``init`` outside the open state box.
    StepUnderflow
        For very small eps; reduce eps gradually.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    n, m = sys.n, sys.m
    init = np.asarray(init, dtype=float)
    if init.size != n + m:
        raise ValueError(f"init needs {n + m} values")
    coords = _FastCoords(sys.z_bounds)
    y0 = np.concatenate([init[:n], coords.to_w(init[n:])])

    def rhs(t, y):
        p = y[:n].tolist()
        z, below, above = coords.from_w(y[n:])
        zl = z.tolist()
        g = sys.g_val(p, zl, eps)
        dp = sys.f_val(p, zl, eps) + sys.h_val(p, zl, eps) / eps
        dw = np.empty(m)
        for j in range(m):
            def slope(x, j=j):
                zf = list(zl)
                zf[j] = x
                return sys.gz_val(j, p, zf, eps)
            dw[j] = coords.w_rate(j, g[j], below[j], above[j], slope)
        return np.concatenate([dp, dw / eps])

    traj = integrate(rhs, y0, (0.0, float(t_max)), rtol, atol)
    back = lambda Y: np.concatenate([Y[:n], coords.from_w(Y[n:])[0]])
    states = np.array([back(y) for y in traj.y])

    def dense(t):
        t = np.asarray(t, dtype=float)
        Y = traj.interpolant(t)
        if t.ndim == 0:
            return back(Y)
        return np.array([back(col) for col in Y.T]).T

    return Trajectory(traj.t, states, dense)


# ---------------------------------------------------------------------------
# distances

def resample(points, k=1000, closed=False):
    """``k`` points equally spaced in arclength along a polyline."""
    P = np.asarray(points, dtype=float)
    if closed:
        P = np.vstack([P, P[:1]])
    seg = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(P[:1], k, axis=0)
    keep = np.concatenate([[True], seg > 0])
    P, s = P[keep], s[keep]
    u = np.linspace(0.0, s[-1], k, endpoint=not closed)
    return np.column_stack([np.interp(u, s, P[:, i]) for i in range(P.shape[1])])


def _point_to_polyline(X, P):
    A, B = P[:-1], P[1:]
    AB = B - A
    L2 = np.maximum(np.einsum("ij,ij->i", AB, AB), 1e-300)
    best = np.full(len(X), np.inf)
    for start in range(0, len(X), 256):
        x = X[start:start + 256, None, :]
        t = np.clip(np.einsum("kij,ij->ki", x - A, AB) / L2, 0.0, 1.0)
        d = np.linalg.norm(x - (A + t[..., None] * AB), axis=2)
        best[start:start + 256] = d.min(axis=1)
    return best


def hausdorff(P, Q, closed=True, k=1000, symmetric=False):
    """Hausdorff distance between polylines resampled to ``k`` points.

    Directed by default: ``max`` over ``P`` of the distance to ``Q``. With
    ``symmetric=True`` the larger of both directions is returned.
    """
    Pr, Qr = resample(P, k, closed), resample(Q, k, closed)
    Qc = np.vstack([Qr, Qr[:1]]) if closed else Qr
    d = _point_to_polyline(Pr, Qc).max()
    if symmetric:
        Pc = np.vstack([Pr, Pr[:1]]) if closed else Pr
        d = max(d, _point_to_polyline(Qr, Pc).max())
    return float(d)


def singular_polyline(sys, chain, orbit, samples_per_leg=400):
    """Closed polyline of the singular orbit in ``(p, z)``."""
    pts = []
    for i, tr in enumerate(orbit.transits):
        z = np.array(chain[i].z)
        ts = np.linspace(0.0, tr.tau, samples_per_leg)
        P = tr.trajectory(ts)[:, :sys.n]
        pts.extend(np.concatenate([p, z]) for p in P)
        jr = orbit.jumps[i]
        J = jr.component
        z_next = np.array(chain[i + 1].z)
        if jr.trajectory is not None:
            Y = jr.trajectory.y
            for y in Y:
                zz = z.copy()
                zz[J] = y[sys.n]
                pts.append(np.concatenate([y[:sys.n], zz]))
        else:
            for s in np.linspace(0.0, 1.0, 50)[1:-1]:
                pts.append(np.concatenate([jr.exit_p, (1 - s) * z + s * z_next]))
    return np.array(pts)


# ---------------------------------------------------------------------------
# cycles

@dataclass
class CycleResult:
    eps: float
    distance: float
    period: float
    cycle: np.ndarray
    crossings: np.ndarray
    trajectory: Trajectory


def default_init(sys, chain, orbit, nudge=1e-3):
    """A state on the jump segment that lands at ``A_1``.

    The landing component sits halfway between its faces; the others (and a
    component that jumps back to its own face) are moved ``nudge`` off their
    faces into the open box.
    """
    z_prev, z = np.array(chain[-1].z, dtype=float), np.array(chain[0].z, dtype=float)
    J = chain[0].j_in
    for j, (lo, hi) in enumerate(sys.z_bounds):
        if j == J and z_prev[j] != z[j]:
            z[j] = 0.5 * (z_prev[j] + z[j])
        else:
            z[j] += nudge if z[j] == lo else -nudge
    return np.concatenate([orbit.A[0], z])


def section_through_leg(sys, chain, orbit, leg=0, frac=0.5):
    """Point and normal of a hyperplane crossing leg ``leg`` at fraction ``frac`` of its transit."""
    tr = orbit.transits[leg]
    y = tr.trajectory(frac * tr.tau)
    point = y[:sys.n]
    normal = sys.f_val(point, chain[leg].z)
    return point, normal / np.linalg.norm(normal), np.array(chain[leg].z)


def section_crossings(traj, n, point, normal, z_face, t_min=0.0, z_tol=0.5):
    """Times of upward crossings of the section that happen near ``z_face``."""
    s = (traj.y[:, :n] - point) @ normal
    times = []
    for k in np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]:
        if traj.t[k + 1] < t_min:
            continue
        if np.max(np.abs(traj.y[k, n:] - z_face)) > z_tol:
            continue
        t0, t1 = traj.t[k], traj.t[k + 1]
        for _ in range(60):
            tm = 0.5 * (t0 + t1)
            sm = (traj(tm)[:n] - point) @ normal
            if sm < 0:
                t0 = tm
            else:
                t1 = tm
            if t1 - t0 < 1e-12 * max(1.0, t1):
                break
        times.append(0.5 * (t0 + t1))
    return np.array(times)


def final_cycle(sys, chain, orbit, eps, init, t_max, t_burn=None, rtol=1e-9, atol=1e-11, samples=4000):
    """Run to the attractor and return its last complete cycle."""
    t_burn = 0.5 * t_max if t_burn is None else t_burn
    traj = run(sys, eps, init, t_max, rtol, atol)
    point, normal, z_face = section_through_leg(sys, chain, orbit)
    cross = section_crossings(traj, sys.n, point, normal, z_face, t_min=t_burn)
    if len(cross) < 2:
        raise CycleNotFound(f"eps={eps}: fewer than two section returns after t={t_burn:g}")
    t0, t1 = cross[-2], cross[-1]
    cycle = traj(np.linspace(t0, t1, samples))
    return CycleResult(eps, np.nan, t1 - t0, cycle, cross, traj)


def convergence_study(sys, chain, orbit, eps_list, init, t_max=200.0, t_burn=None, rtol=1e-9, atol=1e-11,
                      components=None, symmetric=False):
    """Distance from the finite-eps cycle to the singular orbit for each eps.

    Parameters
    ----------
    eps_list : sequence of float
        Run in the given order; each run is independent.
    components : sequence of int, optional
        State indices the distance is measured in (default: all of ``(p, z)``).
    symmetric : bool
        Use the symmetric rather than the directed (cycle to orbit) distance.

    Returns
    -------
    list of CycleResult
    """
    ref = singular_polyline(sys, chain, orbit)
    idx = slice(None) if components is None else list(components)
    out = []
    for eps in eps_list:
        res = final_cycle(sys, chain, orbit, eps, init, t_max, t_burn, rtol, atol)
        res.distance = hausdorff(res.cycle[:, idx], ref[:, idx], symmetric=symmetric)
        out.append(res)
    return out


def return_contraction(traj, n, point, normal, z_face, t_min=0.0):
    """Ratios of successive distances between section hits (last returns)."""
    cross = section_crossings(traj, n, point, normal, z_face, t_min=t_min)
    hits = np.array([traj(t) for t in cross])
    if len(hits) < 3:
        raise CycleNotFound("not enough section returns")
    steps = np.linalg.norm(np.diff(hits, axis=0), axis=1)
    return steps[1:] / np.maximum(steps[:-1], 1e-300)
