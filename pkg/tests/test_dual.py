import itertools

import numpy as np
import pytest

from conftest import cvx_energy
from vrcast.channel import PhysicalConfig
from vrcast.oracle import verify_solution
from vrcast.problems import CaseSpec
from vrcast.solver.dual import DualSettings, Instance, inner_dual_subproblem, normalized_rates, solve_dual

PHYS = PhysicalConfig.from_temperature(150e6, 0.05, 300.0)


def random_instance(rng, K=None, G=None, L=None, states=(1e-6, 2e-6)):
    K = K or int(rng.integers(1, 4))
    G = G or int(rng.integers(1, 5))
    L = L or int(rng.integers(1, 6))
    gains = np.array(list(itertools.product(states, repeat=K)))
    probs = np.full(len(gains), 1.0 / len(gains))
    members = np.zeros((G, K), bool)
    y = np.zeros((G, K, L))
    for g in range(G):
        for k in rng.choice(K, size=int(rng.integers(1, K + 1)), replace=False):
            members[g, k] = True
            y[g, k, rng.integers(L)] = 1.0
    sizes = rng.integers(1, 40, size=G)
    rates = np.sort(rng.uniform(5e5, 4e6, size=L))
    return Instance(gains, probs, sizes, members, rates, PHYS), y


@pytest.mark.parametrize("seed", range(10))
def test_single_user_single_state_closed_form(seed):
    rng = np.random.default_rng(seed)
    h = float(10 ** rng.uniform(-7, -5))
    size = int(rng.integers(1, 200))
    rates = np.sort(rng.uniform(5e5, 4e6, size=3))
    r = int(rng.integers(1, 4))
    phys = PhysicalConfig(float(rng.uniform(50e6, 200e6)), float(rng.uniform(0.01, 0.05)), float(10 ** rng.uniform(-14, -12)))
    inst = Instance(np.array([[h]]), np.array([1.0]), np.array([size]), np.array([[True]]), rates, phys)
    y = np.zeros((1, 1, 3))
    y[0, 0, r - 1] = 1.0
    res = solve_dual(inst, y, DualSettings(tol=1e-9))
    expected = phys.frame_duration * phys.noise_power / h * (2 ** (size * rates[r - 1] / phys.bandwidth) - 1)
    assert res.objective == pytest.approx(expected, rel=1e-6)
    assert res.allocation.t.sum() == pytest.approx(phys.frame_duration, rel=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_matches_conic_reference(seed):
    rng = np.random.default_rng(100 + seed)
    inst, y = random_instance(rng)
    res = solve_dual(inst, y, DualSettings(tol=1e-6))
    ref = cvx_energy(inst, inst.demand(y) * inst.members[:, None, :]) * inst.energy_unit
    assert res.dual_value <= ref * (1 + 1e-6)
    assert res.objective == pytest.approx(ref, rel=5e-5)


def test_weak_duality_every_iteration_and_gap():
    rng = np.random.default_rng(7)
    for _ in range(5):
        inst, y = random_instance(rng, K=3)
        res = solve_dual(inst, y, DualSettings(tol=1e-4))
        assert res.converged and res.gap <= 1e-4
        best_primal = np.inf
        for rec in res.history:
            best_primal = min(best_primal, rec["primal"])
            assert max(rec["dual"], rec["dual_at_prices"]) <= best_primal * (1 + 1e-9)
        assert res.dual_value <= res.objective


def test_allocation_is_feasible():
    rng = np.random.default_rng(11)
    inst, y = random_instance(rng, K=3, G=4, L=4)
    res = solve_dual(inst, y, DualSettings(tol=1e-6))
    t, e = res.allocation.t, res.allocation.e
    assert np.all(t >= 0) and np.all(e >= 0)
    assert np.all(t.sum(axis=(1, 2)) <= PHYS.frame_duration * (1 + 1e-12))
    got = normalized_rates(inst, t / PHYS.frame_duration, e / inst.energy_unit)
    need = inst.demand(y) * inst.members[:, None, :]
    assert np.all(got >= need * (1 - 1e-9))
    assert float(inst.probs @ e.sum(axis=(1, 2))) == pytest.approx(res.objective, rel=1e-12)


def test_empty_demand_is_free():
    inst, y = random_instance(np.random.default_rng(0), K=2, G=2, L=2)
    res = solve_dual(inst, np.zeros_like(y))
    assert res.objective == 0.0 and res.gap == 0.0


def test_iteration_cap_flags_partial_result():
    rng = np.random.default_rng(5)
    inst, y = random_instance(rng, K=3, G=4, L=5)
    res = solve_dual(inst, y, DualSettings(tol=1e-15, max_iter=2))
    assert not res.converged and res.iterations == 2
    assert res.objective >= res.dual_value


def test_warm_start_pool_does_not_hurt():
    rng = np.random.default_rng(9)
    inst, y = random_instance(rng, K=3, G=3, L=3)
    first = solve_dual(inst, y, DualSettings(tol=1e-5))
    second = solve_dual(inst, y, DualSettings(tol=1e-5), pool=first.info["pool"], lam0=first.info["multipliers"])
    assert second.objective <= first.objective * (1 + 1e-12)
    assert second.iterations <= first.iterations


def test_inner_subproblem_against_conic_reference():
    import cvxpy as cp

    rng = np.random.default_rng(3)
    inst, _ = random_instance(rng, K=2, G=2, L=2)
    mu = rng.uniform(0, 3, size=(2, 2, 2))
    lam = inst.to_multipliers(mu)
    for h in inst.gains:
        t, e, value = inner_dual_subproblem(h, lam, inst)
        assert t.sum() <= PHYS.frame_duration * (1 + 1e-12)
        assert np.count_nonzero(t) <= 1
        # same problem in normalised units: min sum eps - sum mu tau log2(1 + eps g / tau), sum tau <= 1
        g = h / inst.ref_gain
        tau = cp.Variable(4, nonneg=True)
        eps = cp.Variable(4, nonneg=True)
        obj = cp.sum(eps)
        for j, (gi, li) in enumerate(itertools.product(range(2), range(2))):
            for k in range(2):
                obj -= mu[gi, li, k] * -cp.rel_entr(tau[j], tau[j] + g[k] * eps[j]) / np.log(2)
        prob = cp.Problem(cp.Minimize(obj), [cp.sum(tau) <= 1])
        prob.solve(solver="CLARABEL")
        assert value / inst.energy_unit == pytest.approx(prob.value, rel=1e-5, abs=1e-7)


def test_inner_subproblem_rejects_negative_weights():
    inst, _ = random_instance(np.random.default_rng(0), K=1, G=1, L=1)
    with pytest.raises(ValueError):
        inner_dual_subproblem(inst.gains[0], -np.ones((1, 1, 1)), inst)


def test_solution_passes_residual_check():
    from conftest import example_scenario
    from vrcast.problems import solve_case

    sc = example_scenario()
    res = solve_case(CaseSpec.from_name("wo-a"), sc)
    report = verify_solution(CaseSpec.from_name("wo-a"), sc, res)
    assert report.ok(1e-9)
    assert res.gap <= 1e-7
