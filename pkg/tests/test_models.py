import numpy as np
import pytest

from helpers import CATALOG
from slowfast import models
from slowfast.config import system_from_config

RNG_SEED = 20261016

# sampling boxes per model: slow ranges, fast ranges
BOXES = {
    "tradeoff": ([(0.1, 12.0), (0.01, 12.0)], [(0.0, 1.0)]),
    "switching": ([(0.1, 2.0), (0.1, 2.0), (0.1, 3.0)], [(0.0, 1.0)]),
    "coevolution": ([(0.05, 1.2), (0.05, 2.5)], [(0.0, 1.0), (0.0, 1.0)]),
}


def _points(name, k=100):
    rng = np.random.default_rng(RNG_SEED)
    slow, fast = BOXES[name]
    for _ in range(k):
        yield [rng.uniform(*b) for b in slow], [rng.uniform(*b) for b in fast]


@pytest.mark.parametrize("name", list(BOXES))
def test_closed_form_matches_expressions(name):
    entry = models.get(name)
    fast, slow = entry.system(), system_from_config(entry.config)
    for p, z in _points(name):
        assert np.allclose(fast.f_val(p, z), slow.f_val(p, z), rtol=1e-12, atol=1e-12)
        assert np.allclose(fast.g_val(p, z), slow.g_val(p, z), rtol=1e-12, atol=1e-12)
        for j in range(fast.m):
            assert fast.gz_val(j, p, z) == pytest.approx(slow.gz_val(j, p, z), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("name", list(BOXES))
def test_closed_form_gz_matches_finite_difference(name):
    sys = models.get(name).system()
    for p, z in list(_points(name, 20)):
        for j in range(sys.m):
            h = 1e-6
            zp, zm = list(z), list(z)
            zp[j] += h
            zm[j] -= h
            fd = (sys.g_val(p, zp)[j] - sys.g_val(p, zm)[j]) / (2 * h)
            assert sys.gz_val(j, p, z) == pytest.approx(fd, rel=1e-6, abs=1e-8)


def _coevolution_rates(P, x, y, al, be):
    K = P["k0"] + P["k1"] * al
    rate = P["r0"] + P["r1"] * al + P["r2"] * be + P["r3"] * al * be + P["r4"] * be ** 2
    prey = (P["s0"] + P["s1"] * al) * (1 - x / K) - rate * y / (1 + P["h"] * x)
    pred = P["c0"] * rate * x / (1 + P["h"] * x) - np.sqrt(y) * (P["delta0"] + P["delta1"] * be)
    return prey, pred


def test_coevolution_selection_gradients_are_fitness_derivatives():
    sys = models.coevolution_system()
    P = sys.params
    h = 1e-6
    for (x, y), (al, be) in _points("coevolution", 50):
        al, be = 0.05 + 0.9 * al, 0.05 + 0.9 * be
        g = sys.g_val([x, y], [al, be])
        E1 = (_coevolution_rates(P, x, y, al + h, be)[0] - _coevolution_rates(P, x, y, al - h, be)[0]) / (2 * h)
        E2 = (_coevolution_rates(P, x, y, al, be + h)[1] - _coevolution_rates(P, x, y, al, be - h)[1]) / (2 * h)
        assert g[0] / (al * (1 - al)) == pytest.approx(E1, rel=1e-6, abs=1e-6)
        assert g[1] / (be * (1 - be)) == pytest.approx(E2, rel=1e-6, abs=1e-6)


def test_tradeoff_fast_face_values():
    sys = models.tradeoff_system()
    # on alpha = 0 the fitness gradient is 1 - b y/(1+x)
    assert sys.gz_val(0, [1.0, 0.5], [0.0]) == pytest.approx(1 - 3.0 * 0.5 / 2)
    assert sys.gz_val(0, [1.0, 0.5], [1.0]) == pytest.approx(-(1 - 0.5 * (2 * -0.1 + 3.0) / 2))


def test_planar_system_from_template():
    sys = models.planar_system()
    assert sys.n == 1 and sys.m == 1
    assert sys.z_bounds[0][1] == np.inf or sys.z_bounds[0][1] is None
    a, b = 0.3, 0.2
    assert sys.f_val([a], [b])[0] == pytest.approx(1 + 0.45 * a)
    assert sys.g_val([a], [b])[0] == pytest.approx(b * (a - 0.4 * b))
    assert sys.h_val([a], [b])[0] == pytest.approx(b * -(1 + a * a))


def test_with_params_rebuilds():
    sys = models.tradeoff_system().with_params(d=3.0)
    assert sys.params["d"] == 3.0
    y = 2.0
    f = sys.f_val([1.0, y], [0.0])
    assert f[1] == pytest.approx(1.0 * y * 1.0 / 2.0 - 3.0 * y)
    with pytest.raises(KeyError):
        sys.with_params(zz=1.0)


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_entry_shapes(name):
    entry = models.get(name)
    sys, chain = entry.system(), entry.chain()
    cfg = entry.export()
    assert cfg["name"] == name
    assert len(chain) == len(cfg["chain"]["legs"])
    for leg, raw in zip(chain.legs, cfg["chain"]["legs"]):
        assert leg.j_in == raw["j_in"] - 1
        assert len(leg.a_guess) == sys.n and len(leg.z) == sys.m
    assert entry.description


def test_catalog_guesses():
    assert models.chain_for("tradeoff")[0].a_guess == (5.6, 11.0)
    assert models.chain_for("switching")[1].a_guess == (1.08, 0.92, 1.50)
    assert [leg.j_in for leg in models.chain_for("coevolution").legs] == [0, 1, 0, 1]


def test_export_is_a_copy():
    entry = models.get("tradeoff")
    cfg = entry.export()
    cfg["params"]["d"] = 99.0
    assert entry.config["params"]["d"] == 2.8


def test_unknown_model():
    with pytest.raises(KeyError, match="available"):
        models.get("lorenz")


def test_names_in_order():
    assert models.names() == list(CATALOG)
