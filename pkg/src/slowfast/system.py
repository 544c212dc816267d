"""Slow-fast systems, manifold chains and assumption checks.

The system is ``p' = f(p, z, eps) + h(p, z, eps)/eps``, ``eps z' = g(p, z, eps)``
in slow time, with each fast component confined to ``[z_min, z_max]`` and the
faces of that box invariant.  A chain lists the faces (legs) visited by a
singular orbit together with the component that jumps into each leg.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import expr
from .expr import Expr, jacobian, partial
from .ode import VectorField

BOUNDARY_TOL = 1e-10


def _lst(x):
    return x.tolist() if isinstance(x, np.ndarray) else list(x)


@dataclass(frozen=True)
class SlowFastSystem:
    """Evaluators for ``f``, ``g``, ``h`` and the diagonal partials ``dg_j/dz_j``.

    The callables take sequences ``p`` (length n) and ``z`` (length m) plus
    ``eps`` and return sequences.  They must accept :class:`~slowfast.expr.Dual`
    entries so that Jacobians come out exact.  ``h=None`` means h is zero.
    ``gz`` is an optional closed form ``(j, p, z, eps) -> scalar``; without it
    the partial is taken by forward-mode differentiation of ``g``.
    """

    n: int
    m: int
    f: Callable
    g: Callable
    h: Optional[Callable] = None
    z_bounds: tuple = ()
    params: dict = field(default_factory=dict)
    gz: Optional[Callable] = None
    slow_vars: tuple = ()
    fast_vars: tuple = ()
    name: str = ""
    builder: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.z_bounds) != self.m:
            raise ValueError(f"z_bounds needs {self.m} entries, got {len(self.z_bounds)}")
        if not self.slow_vars:
            object.__setattr__(self, "slow_vars", tuple(f"p{i + 1}" for i in range(self.n)))
        if not self.fast_vars:
            object.__setattr__(self, "fast_vars", tuple(f"z{j + 1}" for j in range(self.m)))

    @property
    def h_is_zero(self):
        return self.h is None

    # scalar-generic evaluators (accept duals)
    def gz_any(self, j, p, z, eps=0.0):
        if self.gz is not None:
            return self.gz(j, p, z, eps)
        z = list(z)

        def gj(zj):
            zz = list(z)
            zz[j] = zj
            return self.g(p, zz, eps)[j]
        return partial(gj, [z[j]], 0)[1]

    def h_any(self, p, z, eps=0.0):
        if self.h is None:
            return [0.0] * self.n
        return self.h(p, z, eps)

    # numeric evaluators
    def f_val(self, p, z, eps=0.0) -> np.ndarray:
        return np.array(self.f(_lst(p), _lst(z), eps), dtype=float)

    def g_val(self, p, z, eps=0.0) -> np.ndarray:
        return np.array(self.g(_lst(p), _lst(z), eps), dtype=float)

    def h_val(self, p, z, eps=0.0) -> np.ndarray:
        return np.array(self.h_any(_lst(p), _lst(z), eps), dtype=float)

    def gz_val(self, j, p, z, eps=0.0) -> float:
        return float(self.gz_any(j, _lst(p), _lst(z), eps))

    def gz_all(self, p, z, eps=0.0) -> np.ndarray:
        p, z = _lst(p), _lst(z)
        return np.array([self.gz_any(j, p, z, eps) for j in range(self.m)], dtype=float)

    def jac_f(self, p, z, eps=0.0):
        """``f(p)`` and ``D_p f`` at fixed ``z``."""
        z = _lst(z)
        v, J = jacobian(lambda pp: self.f(pp, z, eps), _lst(p))
        return np.array(v, dtype=float), np.array(J, dtype=float).reshape(self.n, self.n)

    def jac_gz(self, p, z, eps=0.0):
        """``gz_j(p)`` for all j and the m-by-n matrix of their p-gradients."""
        z = _lst(z)
        v, J = jacobian(lambda pp: [self.gz_any(j, pp, z, eps) for j in range(self.m)], _lst(p))
        return np.array(v, dtype=float), np.array(J, dtype=float).reshape(self.m, self.n)

    def with_params(self, **updates):
        """Rebuild from the same factory with updated parameters (catalog/config systems)."""
        if self.builder is None:
            raise ValueError("system was not built by a factory that supports parameter updates")
        unknown = set(updates) - set(self.params)
        if unknown:
            raise KeyError(f"unknown parameters: {sorted(unknown)}")
        return self.builder({**self.params, **updates})


def from_expressions(n, m, slow_vars, fast_vars, params, f, g, h=None, z_bounds=None, name=""):
    """Build a :class:`SlowFastSystem` from expression strings.

    Expressions may use the slow and fast variable names, parameter names and
    ``eps``.  Parameters are folded in as constants.
    """
    slow_vars, fast_vars = tuple(slow_vars), tuple(fast_vars)
    if len(slow_vars) != n or len(fast_vars) != m:
        raise ValueError("variable name lists do not match n and m")
    if len(f) != n or len(g) != m or (h is not None and len(h) != n):
        raise ValueError("expression list lengths do not match n and m")
    clash = set(slow_vars) & set(fast_vars) | (set(slow_vars) | set(fast_vars)) & set(params)
    if clash or "eps" in set(slow_vars) | set(fast_vars) | set(params):
        raise ValueError(f"names must be distinct and not 'eps': {sorted(clash) or ['eps']}")
    params = {k: float(v) for k, v in params.items()}
    known = set(slow_vars) | set(fast_vars) | set(params) | {"eps"}

    def comp(srcs):
        out = []
        for s in srcs:
            e = s if isinstance(s, Expr) else Expr(s)
            bad = e.names - known
            if bad:
                raise expr.ExprError(f"unknown names {sorted(bad)} in '{e.source}'")
            out.append(e.compile(params))
        return out

    fc, gc = comp(f), comp(g)
    hc = None if h is None or all(str(s).strip() == "0" for s in h) else comp(h)

    def env(p, z, eps):
        d = dict(zip(slow_vars, p))
        d.update(zip(fast_vars, z))
        d["eps"] = eps
        return d

    def fv(p, z, eps):
        e = env(p, z, eps)
        return [c(e) for c in fc]

    def gv(p, z, eps):
        e = env(p, z, eps)
        return [c(e) for c in gc]

    def hv(p, z, eps):
        e = env(p, z, eps)
        return [c(e) for c in hc]

    bounds = tuple(_bound_pair(b) for b in (z_bounds or [(0.0, 1.0)] * m))

    def builder(new_params):
        return from_expressions(n, m, slow_vars, fast_vars, new_params, f, g, h, bounds, name)

    return SlowFastSystem(n, m, fv, gv, hv if hc else None, bounds, params, None, slow_vars, fast_vars, name, builder)


def _bound_pair(b):
    lo, hi = b
    lo = -np.inf if lo is None else float(lo)
    hi = np.inf if hi is None else float(hi)
    if not lo < hi:
        raise ValueError(f"invalid bounds {b}")
    return (lo, hi)


# ---------------------------------------------------------------------------
# chains

@dataclass(frozen=True)
class LegSpec:
    """One slow leg: the face ``z``, the 0-based component ``j_in`` whose jump
    lands on this face, and a guess for the landing point."""

    z: tuple
    j_in: int
    a_guess: tuple

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(float(v) for v in self.z))
        object.__setattr__(self, "a_guess", tuple(float(v) for v in self.a_guess))


@dataclass(frozen=True)
class ManifoldChain:
    legs: tuple

    def __post_init__(self):
        object.__setattr__(self, "legs", tuple(self.legs))
        if not self.legs:
            raise ValueError("chain needs at least one leg")

    def __len__(self):
        return len(self.legs)

    def __getitem__(self, i):
        return self.legs[i % len(self.legs)]

    def j_out(self, i):
        """Component leaving leg i (the one jumping into the next leg)."""
        return self[i + 1].j_in

    def rotated(self, k):
        """Same cycle started at leg k."""
        N = len(self.legs)
        return ManifoldChain(tuple(self.legs[(k + i) % N] for i in range(N)))

    def first_jump_leg(self, j):
        """Index of the first leg whose incoming jump changes component j."""
        for i, leg in enumerate(self.legs):
            if leg.j_in == j:
                return i
        raise ValueError(f"component {j} never jumps")


def omega(sys: SlowFastSystem, j: int, zj: float) -> float:
    """+1 on the lower face of component j, -1 on the upper face."""
    lo, hi = sys.z_bounds[j]
    if zj == lo:
        return 1.0
    if zj == hi:
        return -1.0
    raise ValueError(f"z={zj} is not a face of component {j}")


def slow_field(sys: SlowFastSystem, leg: LegSpec) -> VectorField:
    z = list(leg.z)
    return VectorField(sys.n, lambda t, p: sys.f_val(p, z, 0.0))


def fast_field(sys: SlowFastSystem) -> VectorField:
    n = sys.n

    def fn(t, y):
        p, z = y[:n], y[n:]
        return np.concatenate([sys.h_val(p, z, 0.0), sys.g_val(p, z, 0.0)])
    return VectorField(n + sys.m, fn)


# ---------------------------------------------------------------------------
# assumption checks

@dataclass
class AssumptionResult:
    name: str
    passed: bool
    details: list = field(default_factory=list)

    def to_dict(self):
        return {"assumption": self.name, "passed": bool(self.passed), "details": self.details}


@dataclass
class AssumptionReport:
    results: list

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self):
        return {"passed": self.passed, "checks": [r.to_dict() for r in self.results]}


def _sample_points(points, grid, pad=0.1):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.maximum(hi - lo, 1e-3)
    lo, hi = lo - pad * span, hi + pad * span
    axes = [np.linspace(a, b, grid) for a, b in zip(lo, hi)]
    return [np.array(c) for c in itertools.product(*axes)]


def check_boundary(sys, points, grid=10):
    """Largest |g_j| and |h| on faces z_j in {z_min, z_max} over sampled p."""
    worst, witness = 0.0, None
    others = []
    for lo, hi in sys.z_bounds:
        vals = [v for v in (lo, hi) if np.isfinite(v)]
        if np.isfinite(lo) and np.isfinite(hi):
            vals.append(0.5 * (lo + hi))
        elif vals:
            vals.append(vals[0] + (1.0 if np.isfinite(lo) else -1.0))
        others.append(vals)
    for p in _sample_points(points, grid):
        for zc in itertools.product(*others):
            for j, (lo, hi) in enumerate(sys.z_bounds):
                if zc[j] not in (lo, hi):
                    continue
                try:
                    r = max(abs(sys.g_val(p, zc)[j]), float(np.max(np.abs(sys.h_val(p, zc)), initial=0.0)))
                except (ArithmeticError, ValueError):
                    continue
                if r > worst:
                    worst, witness = r, {"p": p.tolist(), "z": list(zc), "component": j + 1}
    return worst, witness


def check_chain(sys, chain):
    """Structural checks on the chain; returns a list of problems."""
    problems = []
    N = len(chain)
    for i, leg in enumerate(chain.legs):
        if len(leg.z) != sys.m or len(leg.a_guess) != sys.n:
            problems.append({"leg": i + 1, "problem": "dimension mismatch"})
            continue
        if not 0 <= leg.j_in < sys.m:
            problems.append({"leg": i + 1, "problem": f"j_in {leg.j_in + 1} out of range"})
            continue
        for j, zj in enumerate(leg.z):
            lo, hi = sys.z_bounds[j]
            if zj not in (lo, hi) or not np.isfinite(zj):
                problems.append({"leg": i + 1, "problem": f"z component {j + 1}={zj} is not a finite face"})
        prev = chain[i - 1]
        diff = [j for j in range(sys.m) if leg.z[j] != prev.z[j]]
        if any(j != leg.j_in for j in diff):
            problems.append({"leg": i + 1, "problem": "faces differ outside j_in",
                             "pair": [(i - 1) % N + 1, i + 1], "components": [j + 1 for j in diff]})
    jumped = {leg.j_in for leg in chain.legs}
    for j in range(sys.m):
        if j not in jumped:
            problems.append({"component": j + 1, "problem": "never jumps"})
    return problems


def check_assumptions(sys, chain, orbit=None, grid=10, probe=False, t_max=1e4, rtol=1e-9, atol=1e-11):
    """Numerically check the structural and transversality assumptions.

    Parameters
    ----------
    orbit : SingularOrbit, optional
        Converged orbit; enables the per-leg checks (A3-A5).
    probe : bool
        Without an orbit, transit every leg once from its guess (delays from
        the warm start) so A3-A5 can still be judged.
    """
    from . import entry_exit, orbit as orbit_mod

    results = []
    pts = [leg.a_guess for leg in chain.legs]
    if orbit is not None:
        pts = [t.entry_p for t in orbit.transits] + [t.exit_p for t in orbit.transits]
    worst, wit = check_boundary(sys, pts, grid)
    results.append(AssumptionResult("A1", worst <= BOUNDARY_TOL,
                                    [{"max_residual": worst, "witness": wit}]))
    problems = check_chain(sys, chain)
    results.append(AssumptionResult("A2", not problems, problems))
    if problems:
        return AssumptionReport(results)

    transits, failures = [], []
    if orbit is not None:
        transits = list(orbit.transits)
    elif probe:
        d0 = orbit_mod.warm_start_delays(sys, chain, rtol=rtol, atol=atol, t_max=t_max)
        for i, leg in enumerate(chain.legs):
            try:
                transits.append(entry_exit.transit_leg(
                    sys, chain, i, leg.a_guess, d0[i], rtol=rtol, atol=atol, t_max=t_max))
            except entry_exit.NoExit as e:
                failures.append({"leg": i + 1, "problem": str(e)})
                transits.append(None)
    else:
        return AssumptionReport(results)

    a3, a4, a5 = [], [], []
    for i, tr in enumerate(transits):
        leg = chain[i]
        if tr is None:
            continue
        fA = sys.f_val(tr.entry_p, leg.z)
        if np.linalg.norm(fA) == 0:
            a3.append({"leg": i + 1, "problem": "f vanishes at entry"})
        if not tr.tau > 0:
            a3.append({"leg": i + 1, "problem": "non-positive transit time"})
        g_land = sys.gz_val(leg.j_in, tr.entry_p, leg.z)
        g_exit = sys.gz_val(chain.j_out(i), tr.exit_p, leg.z)
        if not (g_land < 0 and g_exit > 0):
            a4.append({"leg": i + 1, "gz_landing": g_land, "gz_exit": g_exit})
        interior = tr.trajectory.y[1:-1, sys.n:]
        if interior.size and np.any(interior >= 0):
            k, j = np.argwhere(interior >= 0)[0]
            a5.append({"leg": i + 1, "component": int(j) + 1, "t": float(tr.trajectory.t[k + 1]),
                       "d": float(interior[k, j])})
    results.append(AssumptionResult("A3", not a3 and not failures, a3 + failures))
    results.append(AssumptionResult("A4", not a4 and not failures, a4))
    results.append(AssumptionResult("A5", not a5 and not failures, a5 + failures))
    return AssumptionReport(results)

