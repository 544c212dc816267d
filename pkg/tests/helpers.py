"""Shared fixtures-as-functions: solved catalog orbits and finite differences."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from slowfast import models
from slowfast.entry_exit import section_in, section_out, transit_leg
from slowfast.orbit import NEWTON_TOL, find_singular_orbit

CATALOG = ("tradeoff", "switching", "coevolution", "planar")


@dataclass
class Solved:
    entry: models.ModelCatalogEntry
    sys: object
    chain: object
    orbit: object
    report: object
    rtol: float
    atol: float


@lru_cache(maxsize=None)
def solved(name) -> Solved:
    entry = models.get(name)
    sys, chain = entry.system(), entry.chain()
    tol = entry.tolerances
    rtol, atol = tol.get("rtol", 1e-11), tol.get("atol", 1e-13)
    orbit, report = find_singular_orbit(sys, chain, tol=tol.get("newton", NEWTON_TOL), rtol=rtol, atol=atol)
    return Solved(entry, sys, chain, orbit, report, rtol, atol)


def central_jacobian(fn, x, rel=1e-6):
    """Central differences with step ``rel * max(1, |x_k|)``."""
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        h = rel * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.column_stack(cols)


def rel_close(a, b, rel, floor=0.0):
    """Entrywise ``|a - b| <= rel * max(|b|, scale)``; ``scale`` guards entries that are
    tiny against the matrix as a whole (``floor`` times its largest entry)."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = floor * max(np.max(np.abs(b)), 1e-300)
    return bool(np.all(np.abs(a - b) <= rel * np.maximum(np.abs(b), scale)))


def max_rel_err(a, b, floor=0.0):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = floor * max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(b), scale), 1e-300)))


def section_map(s, i, out="hat"):
    """Transit map of leg ``i`` in section coordinates and its base point."""
    sys, chain = s.sys, s.chain
    tr0 = s.orbit.transits[i]
    keep_in, keep_out = section_in(sys, chain, i), section_out(sys, chain, i)
    n = sys.n

    def Q(x):
        d = np.array(tr0.entry_d, dtype=float)
        d[keep_in] = x[n:]
        tr = transit_leg(sys, chain, i, x[:n], d, rtol=s.rtol, atol=s.atol)
        if out == "p":
            return tr.exit_p
        return np.concatenate([tr.exit_p, tr.exit_d[keep_out]])

    x0 = np.concatenate([tr0.entry_p, tr0.entry_d[keep_in]])
    return Q, x0
