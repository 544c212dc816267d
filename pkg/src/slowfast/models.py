"""Catalog of example systems: tradeoff, switching, coevolution, planar.

Each entry has closed-form evaluators (the fast path used by the library),
the equivalent expression-string configuration (what ``catalog --export``
writes) and the anchor values reported in the literature.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

from .expr import sqrt
from .system import LegSpec, ManifoldChain, SlowFastSystem


# ---------------------------------------------------------------------------
# predator-prey with a prey defence tradeoff

TRADEOFF_PARAMS = {"a": -0.1, "b": 3.0, "c": 1.0, "d": 2.8, "k": 1.0, "r": 10.0}


def tradeoff_system(params=None) -> SlowFastSystem:
    P = {**TRADEOFF_PARAMS, **(params or {})}
    a, b, c, d, k, r = (P[s] for s in "abcdkr")

    def f(p, z, eps):
        x, y = p
        al = z[0]
        G = x * y * (a * al * al + b * al + c) / (1 + x)
        return [x * (al + r - k * x) - G, G - d * y]

    def E(x, y, al):
        return 1 - y * (2 * a * al + b) / (1 + x)

    def g(p, z, eps):
        x, y = p
        al = z[0]
        return [al * (1 - al) * E(x, y, al)]

    def gz(j, p, z, eps):
        x, y = p
        al = z[0]
        return (1 - 2 * al) * E(x, y, al) + al * (1 - al) * (-2 * a * y / (1 + x))

    return SlowFastSystem(2, 1, f, g, None, ((0.0, 1.0),), dict(P), gz, ("x", "y"), ("al",),
                          "tradeoff", tradeoff_system)


TRADEOFF_CONFIG = {
    "name": "tradeoff",
    "n": 2, "m": 1,
    "slow_vars": ["x", "y"], "fast_vars": ["al"],
    "params": TRADEOFF_PARAMS,
    "f": ["x*(al + r - k*x) - x*y*(a*al^2 + b*al + c)/(1 + x)",
          "x*y*(a*al^2 + b*al + c)/(1 + x) - d*y"],
    "g": ["al*(1 - al)*(1 - y*(2*a*al + b)/(1 + x))"],
    "h": ["0", "0"],
    "z_bounds": [[0, 1]],
    "chain": {"legs": [
        {"z": [0], "j_in": 1, "a_guess": [5.6, 11.0]},
        {"z": [1], "j_in": 1, "a_guess": [10.0, 0.36]},
    ]},
    "tolerances": {"rtol": 1e-11, "atol": 1e-13, "newton": 1e-9},
}


# ---------------------------------------------------------------------------
# prey switching (rescaled, predator equation scaled by m)

SWITCHING_PARAMS = {"r": 0.5, "m": 0.4}


def switching_system(params=None) -> SlowFastSystem:
    P = {**SWITCHING_PARAMS, **(params or {})}
    r, m = P["r"], P["m"]

    def f(p, zf, eps):
        p1, p2, z = p
        q = zf[0]
        return [(1 - q * z) * p1, (r - (1 - q) * z) * p2, m * (q * p1 + (1 - q) * p2 - 1) * z]

    def g(p, zf, eps):
        p1, p2, _ = p
        q = zf[0]
        return [q * (1 - q) * (p1 - p2)]

    def gz(j, p, zf, eps):
        p1, p2, _ = p
        return (1 - 2 * zf[0]) * (p1 - p2)

    return SlowFastSystem(3, 1, f, g, None, ((0.0, 1.0),), dict(P), gz, ("p1", "p2", "z"), ("q",),
                          "switching", switching_system)


SWITCHING_CONFIG = {
    "name": "switching",
    "n": 3, "m": 1,
    "slow_vars": ["p1", "p2", "z"], "fast_vars": ["q"],
    "params": SWITCHING_PARAMS,
    "f": ["(1 - q*z)*p1", "(r - (1 - q)*z)*p2", "m*(q*p1 + (1 - q)*p2 - 1)*z"],
    "g": ["q*(1 - q)*(p1 - p2)"],
    "h": ["0", "0", "0"],
    "z_bounds": [[0, 1]],
    "chain": {"legs": [
        {"z": [0], "j_in": 1, "a_guess": [0.92, 1.08, 1.50]},
        {"z": [1], "j_in": 1, "a_guess": [1.08, 0.92, 1.50]},
    ]},
    "tolerances": {"rtol": 1e-11, "atol": 1e-13, "newton": 1e-9},
}


# ---------------------------------------------------------------------------
# predator-prey coevolution with two traits

COEVOLUTION_PARAMS = {
    "s0": 2.5, "s1": 3.5, "k0": 1.0, "k1": 0.1, "r0": 0.65, "r1": 3.0, "r2": 2.3,
    "r3": -0.2, "r4": 0.01, "c0": 1.7, "delta0": 0.76, "delta1": 1.77, "h": 1.0,
}


def coevolution_system(params=None) -> SlowFastSystem:
    P = {**COEVOLUTION_PARAMS, **(params or {})}
    s0, s1, k0, k1 = P["s0"], P["s1"], P["k0"], P["k1"]
    r0, r1, r2, r3, r4 = P["r0"], P["r1"], P["r2"], P["r3"], P["r4"]
    c0, dl0, dl1, hh = P["c0"], P["delta0"], P["delta1"], P["h"]

    def rate(al, be):
        return r0 + r1 * al + r2 * be + r3 * al * be + r4 * be * be

    def f(p, z, eps):
        x, y = p
        al, be = z
        K = k0 + k1 * al
        G = rate(al, be) * x * y / (1 + hh * x)
        return [x * (s0 + s1 * al) * (1 - x / K) - G, c0 * G - y ** 1.5 * (dl0 + dl1 * be)]

    def E1(x, y, al, be):
        K = k0 + k1 * al
        return s1 * (1 - x / K) + (s0 + s1 * al) * x * k1 / K ** 2 - (r1 + r3 * be) * y / (1 + hh * x)

    def E2(x, y, al, be):
        return c0 * (r2 + r3 * al + 2 * r4 * be) * x / (1 + hh * x) - dl1 * sqrt(y)

    def g(p, z, eps):
        x, y = p
        al, be = z
        return [al * (1 - al) * E1(x, y, al, be), be * (1 - be) * E2(x, y, al, be)]

    def gz(j, p, z, eps):
        x, y = p
        al, be = z
        if j == 0:
            K = k0 + k1 * al
            dE = 2 * s1 * x * k1 / K ** 2 - 2 * (s0 + s1 * al) * x * k1 ** 2 / K ** 3
            return (1 - 2 * al) * E1(x, y, al, be) + al * (1 - al) * dE
        dE = 2 * c0 * r4 * x / (1 + hh * x)
        return (1 - 2 * be) * E2(x, y, al, be) + be * (1 - be) * dE

    return SlowFastSystem(2, 2, f, g, None, ((0.0, 1.0), (0.0, 1.0)), dict(P), gz, ("x", "y"),
                          ("al", "be"), "coevolution", coevolution_system)


_RATE = "(r0 + r1*al + r2*be + r3*al*be + r4*be^2)"
COEVOLUTION_CONFIG = {
    "name": "coevolution",
    "n": 2, "m": 2,
    "slow_vars": ["x", "y"], "fast_vars": ["al", "be"],
    "params": COEVOLUTION_PARAMS,
    "f": [f"x*(s0 + s1*al)*(1 - x/(k0 + k1*al)) - {_RATE}*x*y/(1 + h*x)",
          f"c0*{_RATE}*x*y/(1 + h*x) - y^1.5*(delta0 + delta1*be)"],
    "g": ["al*(1 - al)*(s1*(1 - x/(k0 + k1*al)) + (s0 + s1*al)*x*k1/(k0 + k1*al)^2"
          " - (r1 + r3*be)*y/(1 + h*x))",
          "be*(1 - be)*(c0*(r2 + r3*al + 2*r4*be)*x/(1 + h*x) - delta1*sqrt(y))"],
    "h": ["0", "0"],
    "z_bounds": [[0, 1], [0, 1]],
    "chain": {"legs": [
        {"z": [0, 0], "j_in": 1, "a_guess": [0.33, 1.99]},
        {"z": [0, 1], "j_in": 2, "a_guess": [0.92, 0.56]},
        {"z": [1, 1], "j_in": 1, "a_guess": [0.60, 0.55]},
        {"z": [1, 0], "j_in": 2, "a_guess": [0.30, 0.93]},
    ]},
    "tolerances": {"rtol": 1e-12, "atol": 1e-14, "newton": 1e-9},
}


# ---------------------------------------------------------------------------
# planar template  a' = F + b H / eps,  eps b' = b G

PLANAR_PARAMS = {"kappa": 0.45, "c": -0.4, "eta": 1.0}
PLANAR_F = "1 + kappa*a"
PLANAR_G = "a + c*b"
PLANAR_H = "-(1 + eta*a^2)"
PLANAR_A0_GUESS = -0.995


def planar_config(F=PLANAR_F, G=PLANAR_G, H=PLANAR_H, params=None, a0_guess=PLANAR_A0_GUESS,
                  name="planar"):
    """Config for ``a' = F + b H/eps, eps b' = b G`` with ``b`` in ``[0, inf)``."""
    return {
        "name": name,
        "n": 1, "m": 1,
        "slow_vars": ["a"], "fast_vars": ["b"],
        "params": dict(PLANAR_PARAMS if params is None else params),
        "f": [F],
        "g": [f"b*({G})"],
        "h": [f"b*({H})"],
        "z_bounds": [[0, None]],
        "chain": {"legs": [{"z": [0], "j_in": 1, "a_guess": [a0_guess]}]},
        "tolerances": {"rtol": 1e-11, "atol": 1e-13, "newton": 1e-9},
    }


PLANAR_CONFIG = planar_config()


def planar_system(params=None, F=PLANAR_F, G=PLANAR_G, H=PLANAR_H) -> SlowFastSystem:
    from .config import system_from_config
    cfg = planar_config(F, G, H, {**PLANAR_PARAMS, **(params or {})})
    return system_from_config(cfg)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelCatalogEntry:
    name: str
    description: str
    config: dict
    builder: Callable
    anchors: dict = field(default_factory=dict)

    def system(self, **params) -> SlowFastSystem:
        return self.builder(params or None)

    def chain(self) -> ManifoldChain:
        return chain_from_config(self.config)

    def export(self) -> dict:
        return copy.deepcopy(self.config)

    @property
    def tolerances(self):
        return dict(self.config.get("tolerances", {}))


def chain_from_config(cfg) -> ManifoldChain:
    return ManifoldChain(tuple(LegSpec(tuple(leg["z"]), int(leg["j_in"]) - 1, tuple(leg["a_guess"]))
                               for leg in cfg["chain"]["legs"]))


_CATALOG = (
    ModelCatalogEntry(
        "tradeoff", "predator-prey with prey defence/growth tradeoff (n=2, m=1)",
        TRADEOFF_CONFIG, tradeoff_system,
        {"A1": (5.57, 11.03), "B1": (9.96, 0.36), "lambda2": -0.42,
         "DQ1": ((-0.0001, -0.0029), (0.0009, 0.0258)), "DQ2": ((0.02, 18.91), (-0.02, -16.95))}),
    ModelCatalogEntry(
        "switching", "predator switching between two prey (n=3, m=1)",
        SWITCHING_CONFIG, switching_system,
        {"A1": (0.92, 1.08, 1.50), "A2": (1.08, 0.92, 1.50), "lambda1": 60.55, "lambda23": (0.97, 0.26),
         "DQ1": ((-6.78, 5.74, -1.00), (6.77, -4.03, 0.70), (0.34, -0.16, 1.04)),
         "DQ2": ((-1.56, 3.38, 0.55), (2.80, -2.80, -0.99), (-0.07, 0.34, 1.06))}),
    ModelCatalogEntry(
        "coevolution", "predator-prey coevolution with two traits (n=2, m=2)",
        COEVOLUTION_CONFIG, coevolution_system,
        {"A": ((0.33, 1.99), (0.92, 0.56), (0.60, 0.55), (0.30, 0.93)),
         "zeta": ((0, 0.98), (3.84, 0), (0, 1.12), (0.55, 0)), "lambda1": 0.39,
         "DQhat": (((0.013, 0.004, -0.007), (0.080, -0.254, 0.038), (-3.29, -2.42, 0.67)),
                   ((-0.00040, -0.0058, 0.00024), (-0.00003, 0.00024, 0.00030), (0.37, -1.44, -0.26)),
                   ((0.29, -0.04, -0.22), (0.26, -0.67, 0.49), (2.49, 0.13, -0.86)),
                   ((-0.10, -0.09, 0.03), (0.42, 0.38, -0.13), (-0.36, -0.33, 0.11)))}),
    ModelCatalogEntry(
        "planar", "planar template a' = F + bH/eps, eps b' = bG; synthetic instance (n=1, m=1)",
        PLANAR_CONFIG, planar_system,
        {"a0": -0.9953567257551472, "a1": 1.4269487893236195, "lambda": -0.02910266474692702}),
)


def catalog() -> list:
    return list(_CATALOG)


def get(name: str) -> ModelCatalogEntry:
    for e in _CATALOG:
        if e.name == name:
            return e
    raise KeyError(f"unknown model '{name}'; available: {', '.join(names())}")


def names() -> list:
    return [e.name for e in _CATALOG]


def chain_for(name: str) -> ManifoldChain:
    return get(name).chain()
