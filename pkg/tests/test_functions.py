import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog, minimize_scalar

from vrcast.channel import PhysicalConfig
from vrcast.solver.functions import block_vertices, linearized_penalty, optimal_power, penalty, rate, stream_values

PHYS = PhysicalConfig.from_temperature(150e6, 0.05, 300.0)


def test_rate_values():
    h, t, e = 1e-6, 0.01, 1e-9
    expected = PHYS.bandwidth / PHYS.frame_duration * t * np.log2(1 + e * h / (t * PHYS.noise_power))
    assert rate(t, e, h, PHYS) == pytest.approx(expected, rel=1e-14)
    assert rate(0.0, 1.0, h, PHYS) == 0.0
    assert rate(0.0, 0.0, h, PHYS) == 0.0
    with pytest.raises(ValueError):
        rate(-1.0, 0.0, h, PHYS)


def test_rate_jointly_concave_midpoint():
    rng = np.random.default_rng(0)
    n = 10**4
    t1, t2 = rng.uniform(0, 0.05, n), rng.uniform(0, 0.05, n)
    e1, e2 = 10 ** rng.uniform(-14, -6, n), 10 ** rng.uniform(-14, -6, n)
    h = 1e-6
    mid = rate((t1 + t2) / 2, (e1 + e2) / 2, h, PHYS)
    avg = (rate(t1, e1, h, PHYS) + rate(t2, e2, h, PHYS)) / 2
    scale = np.maximum(1.0, np.abs(mid))
    assert np.max((avg - mid) / scale) <= 1e-12


def test_rate_increasing_in_energy():
    e = np.linspace(0, 1e-6, 50)
    r = rate(0.01, e, 1e-6, PHYS)
    assert np.all(np.diff(r) > 0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.floats(0.0, 20.0), st.floats(1e-3, 10.0)), min_size=1, max_size=4))
def test_optimal_power_matches_scalar_search(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    p = float(optimal_power(a, b))

    def phi(x):
        return x - np.sum(a * np.log1p(x / b))

    hi = max(1.0, float(np.sum(a)) * 2)
    ref = minimize_scalar(phi, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
    assert phi(p) <= ref.fun + 1e-9 * max(1.0, abs(ref.fun))
    if p > 0:
        assert np.sum(a / (b + p)) == pytest.approx(1.0, rel=1e-9)
    else:
        assert np.sum(a / b) <= 1.0 + 1e-12


def test_optimal_power_inactive_and_infinite():
    assert optimal_power(np.array([0.0, 0.0]), np.array([1.0, 1.0])) == 0.0
    p = optimal_power(np.array([2.0, 5.0]), np.array([1.0, np.inf]))
    assert p == pytest.approx(1.0)


def test_stream_values_nonpositive_and_consistent():
    rng = np.random.default_rng(1)
    w = rng.uniform(0, 3, size=(2, 3, 2))
    g = rng.uniform(0.2, 1.0, size=(4, 2))
    power, value = stream_values(w, g)
    assert power.shape == value.shape == (4, 2, 3)
    assert np.all(value <= 0)
    direct = power - np.sum(w[None] * np.log2(1 + power[..., None] * g[:, None, None, :]), axis=-1)
    np.testing.assert_allclose(np.minimum(direct, 0), value, atol=1e-12)


def test_penalty_upper_bound_by_tangent():
    rng = np.random.default_rng(2)
    for _ in range(10**4 // 100):
        y = rng.uniform(size=(100, 4))
        yp = rng.uniform(size=(100, 4))
        for a, b in zip(y, yp):
            assert penalty(a) <= linearized_penalty(a, b) + 1e-12
    assert penalty([0, 1, 1, 0]) == 0.0
    assert penalty([0.5]) == 0.25
    assert linearized_penalty([0.3], [0.3]) == pytest.approx(penalty([0.3]))
    with pytest.raises(ValueError):
        penalty([1.5])


@pytest.mark.parametrize("L,lo,hi,cuts", [(3, 1, 3, ()), (5, 2, 4, ()), (5, 2, 5, (3,)), (4, 1.5, 2.5, ()), (3, 2, 2, ())])
def test_block_vertices_minimise_linear_costs(L, lo, hi, cuts):
    rng = np.random.default_rng(3)
    verts = block_vertices(L, lo, hi, cuts)
    lv = np.arange(1, L + 1)
    assert np.allclose(verts.sum(axis=1), 1) and np.all(verts >= -1e-15)
    assert np.all(verts @ lv >= lo - 1e-12) and np.all(verts @ lv <= hi + 1e-12)
    for _ in range(30):
        c = rng.normal(size=L)
        slope = rng.uniform(0, 2)
        at = cuts[0] if cuts else np.inf
        # min c.y + slope * max(l.y - at, 0) over the block by LP with an auxiliary z
        A_ub = [np.r_[lv, 0], np.r_[-lv, 0]]
        b_ub = [hi, -lo]
        if np.isfinite(at):
            A_ub.append(np.r_[lv, -1])
            b_ub.append(at)
        res = linprog(np.r_[c, slope if np.isfinite(at) else 0], A_ub=A_ub, b_ub=b_ub,
                      A_eq=[np.r_[np.ones(L), 0]], b_eq=[1], bounds=[(0, 1)] * L + [(0, None)])
        vals = verts @ c + (slope * np.maximum(verts @ lv - at, 0) if np.isfinite(at) else 0)
        assert vals.min() == pytest.approx(res.fun, abs=1e-9)


def test_block_vertices_empty():
    with pytest.raises(ValueError):
        block_vertices(3, 3.5, 4.0)
