import copy

import numpy as np
import pytest

from conftest import example_scenario
from vrcast.channel import CapacityError
from vrcast.oracle import OracleBudget, SelectionCache, brute_force_optimal, candidate_count, tiny_scenario, verify_solution
from vrcast.problems import CaseSpec, evaluate_case_selection, level_ranges, solve_case


def test_candidate_count_matches_ranges():
    sc = example_scenario()
    assert candidate_count(CaseSpec.from_name("wo-a"), sc) == 1
    lo, hi = level_ranges(CaseSpec.from_name("wo-r"), sc)
    assert candidate_count(CaseSpec.from_name("wo-r"), sc) == int(np.prod(hi - lo + 1))
    pairs = sc.pairs()
    free = sc.levels - sc.requirements[pairs[:, 1]] + 1
    assert candidate_count(CaseSpec.from_name("w-a"), sc) == int(np.prod(free))


def test_budget_exceeded():
    sc = example_scenario()
    with pytest.raises(CapacityError):
        brute_force_optimal(CaseSpec.from_name("w-a"), sc, OracleBudget(max_enumerations=10))
    with pytest.raises(ValueError):
        OracleBudget(max_enumerations=0)


def test_oracle_is_minimum_over_explicit_enumeration():
    sc = tiny_scenario(np.random.default_rng(2), 1e-9)
    case = CaseSpec.from_name("w-r")
    best = brute_force_optimal(case, sc)
    prob_lo, prob_hi = level_ranges(case, sc)
    rng = np.random.default_rng(0)
    pairs = sc.pairs()
    for _ in range(10):
        y = np.zeros((len(sc.partition), len(sc.users), sc.levels))
        for (g, k), lo, hi in zip(pairs, prob_lo, prob_hi):
            y[g, k, rng.integers(int(lo), int(hi) + 1) - 1] = 1.0
        assert evaluate_case_selection(case, sc, y).objective >= best.objective * (1 - 1e-6)


def test_cache_shares_energy_across_cases():
    sc = tiny_scenario(np.random.default_rng(1))
    cache = SelectionCache(sc, OracleBudget().dual)
    brute_force_optimal(CaseSpec.from_name("wo-a"), sc, cache=cache)
    n = len(cache)
    brute_force_optimal(CaseSpec.from_name("wo-a"), sc, cache=cache)
    assert len(cache) == n == 1


def test_verify_detects_violations():
    sc = example_scenario()
    case = CaseSpec.from_name("wo-a")
    res = solve_case(case, sc)
    assert verify_solution(case, sc, res).ok()

    short = copy.deepcopy(res)
    short.allocation.e[...] *= 0.5
    rep = verify_solution(case, sc, short)
    assert rep.residuals["rate"] > 1e-3 and not rep.ok()

    over = copy.deepcopy(res)
    over.allocation.t[...] *= 3.0
    assert verify_solution(case, sc, over).residuals["airtime"] > 0

    lied = copy.deepcopy(res)
    lied.objective *= 0.9
    assert verify_solution(case, sc, lied).objective_delta > 0.05

    frac = copy.deepcopy(res)
    g, k = np.argwhere(sc.members)[0]
    frac.selection.y[g, k] = 0.5 * frac.selection.y[g, k]
    frac.selection.y[g, k, 0] += 0.5
    assert verify_solution(case, sc, frac).residuals["selector_binary"] > 0
