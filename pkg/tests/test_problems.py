import numpy as np
import pytest

from conftest import example_scenario
from vrcast.oracle import SelectionCache, brute_force_optimal, tiny_scenario, OracleBudget
from vrcast.problems import (
    ALL_CASES, CASE_NAMES, CaseSpec, capped_playback, baseline_max_quality, baseline_unicast, check_ordering,
    evaluate_case_selection, fix_y_absolute, level_ranges, playback_levels, selection_problem, solve_all_cases,
    solve_case, transcoding_energy, unicast_scenario,
)
from vrcast.results import InvalidSelectionError, QualitySelection
from vrcast.solver.ccp import CcpSettings


def _group(sc, users):
    return sc.partition.user_sets.index(frozenset(users))


def _sent(sc, y, users, user):
    return int(np.argmax(y[_group(sc, users), sc.users.index(user)])) + 1


def test_case_names_round_trip():
    assert [c.name for c in ALL_CASES] == list(CASE_NAMES)
    assert CaseSpec.from_name("w/o,r") == CaseSpec(False, "relative")
    with pytest.raises(ValueError):
        CaseSpec.from_name("x-y")
    with pytest.raises(ValueError):
        CaseSpec(True, "loose")


def test_absolute_selection_on_example():
    sc = example_scenario()
    sel = fix_y_absolute(sc.partition, {1: 3, 2: 1, 3: 2, 4: 2}, 3)
    assert _sent(sc, sel.y, (1, 2), 1) == 3 and _sent(sc, sel.y, (1, 2), 2) == 1
    assert _sent(sc, sel.y, (2, 3), 2) == 1 and _sent(sc, sel.y, (2, 3), 3) == 2
    assert _sent(sc, sel.y, (3, 4), 3) == 2 and _sent(sc, sel.y, (3, 4), 4) == 2
    assert sel.y.sum() == 10  # one block per (group, member)
    np.testing.assert_array_equal(sel.transmitted(), sel.x)
    with pytest.raises(ValueError):
        fix_y_absolute(sc.partition, {1: 4, 2: 1, 3: 2, 4: 2}, 3)


def test_playback_rule_with_transcoding_and_tolerance():
    y = np.zeros((1, 1, 3))
    y[0, 0, 2] = 1.0
    assert capped_playback(y, [1], 1)[0, 0] == 2
    assert capped_playback(y, [3], 1)[0, 0] == 3
    assert capped_playback(np.zeros((1, 1, 3)), [1], 1)[0, 0] == 0


def test_level_ranges_per_case():
    sc = example_scenario()
    r = sc.requirements[sc.pairs()[:, 1]]
    lo, hi = level_ranges(CaseSpec.from_name("wo-a"), sc)
    np.testing.assert_array_equal(hi, r)
    lo, hi = level_ranges(CaseSpec.from_name("wo-r"), sc)
    np.testing.assert_array_equal(hi, np.minimum(r + 1, 3))
    for name in ("w-a", "w-r"):
        lo, hi = level_ranges(CaseSpec.from_name(name), sc)
        np.testing.assert_array_equal(lo, r)
        assert np.all(hi == 3)


def test_transcoding_energy_and_validation():
    sc = example_scenario(transcode_power=1e-3)
    y = fix_y_absolute(sc.partition, {1: 3, 2: 1, 3: 2, 4: 2}, 3).y
    g, k = _group(sc, (1, 2)), sc.users.index(2)
    y[g, k] = [0, 0, 1]
    x = playback_levels(CaseSpec.from_name("w-a"), sc, y)
    sel = QualitySelection(x, y)
    # two tiles, two levels down, 1 mW, 50 ms
    assert transcoding_energy(sel, sc) == pytest.approx(2 * 2 * 1e-3 * 0.05)
    prob = selection_problem(CaseSpec.from_name("w-a"), sc)
    assert prob.selection_cost(y) == pytest.approx(2 * 2 * 1e-3 * 0.05)
    x_rel = playback_levels(CaseSpec.from_name("w-r"), sc, y)
    assert x_rel[g, k] == 2
    assert transcoding_energy(QualitySelection(x_rel, y), sc) == pytest.approx(2 * 1 * 1e-3 * 0.05)
    bad = x.copy()
    bad[g, k] = 3
    bad_y = fix_y_absolute(sc.partition, {1: 3, 2: 1, 3: 2, 4: 2}, 3).y
    with pytest.raises(InvalidSelectionError):
        transcoding_energy(QualitySelection(bad, bad_y), sc)


@pytest.mark.slow
def test_relative_tolerance_shares_the_middle_group():
    sc = example_scenario()
    exact = brute_force_optimal(CaseSpec.from_name("wo-r"), sc)
    y = exact.selection.y
    assert _sent(sc, y, (2, 3), 2) == 2 and _sent(sc, y, (2, 3), 3) == 2
    assert _sent(sc, y, (3, 4), 3) == 2 and _sent(sc, y, (3, 4), 4) == 2
    got = solve_case(CaseSpec.from_name("wo-r"), sc, CcpSettings(restarts=5), np.random.default_rng(0))
    assert got.objective == pytest.approx(exact.objective, rel=1e-5)


@pytest.mark.slow
def test_cheap_transcoding_shares_the_first_pair_group():
    sc = example_scenario(transcode_power=1e-15)
    exact = brute_force_optimal(CaseSpec.from_name("w-a"), sc)
    y, x = exact.selection.y, exact.selection.x
    g, k2 = _group(sc, (1, 2)), sc.users.index(2)
    assert _sent(sc, y, (1, 2), 1) == 3 and _sent(sc, y, (1, 2), 2) == 3
    assert x[g, k2] == 1  # user 2 transcodes down to its requirement
    assert exact.transcoding > 0


def test_max_quality_baseline_structure():
    sc = example_scenario()
    res = baseline_max_quality(sc, "absolute")
    y = res.selection.y
    assert _sent(sc, y, (1, 2), 2) == 3 and _sent(sc, y, (2, 3), 2) == 2
    assert res.selection.x[_group(sc, (1, 2)), sc.users.index(2)] == 1
    rel = baseline_max_quality(sc, "relative")
    assert rel.selection.x[_group(sc, (1, 2)), sc.users.index(2)] == 2
    assert rel.objective <= res.objective


def test_unicast_duplicates_shared_tiles():
    sc = example_scenario()
    uni = unicast_scenario(sc)
    assert [sorted(s) for s in uni.partition.user_sets] == [[1], [2], [3], [4]]
    assert uni.partition.sizes == [6, 6, 6, 6]
    assert baseline_unicast(sc).objective >= solve_case(CaseSpec.from_name("wo-a"), sc).objective


def test_orderings_hold_for_joint_solve():
    sc = tiny_scenario(np.random.default_rng(8))
    solved = solve_all_cases(sc, CcpSettings(restarts=3), np.random.default_rng(0))
    checks = check_ordering({c: r.objective for c, r in solved.items()})
    assert all(c.ok for c in checks), [str(c) for c in checks]


def test_check_ordering_reports_failures():
    values = {"wo-a": 1.0, "wo-r": 2.0, "w-a": 1.0, "w-r": 1.0}
    checks = check_ordering(values)
    assert [c.ok for c in checks] == [False, True, True, True]
    assert "FAIL" in str(checks[0])


def test_transcoding_skipped_when_it_cannot_pay_off():
    sc = tiny_scenario(np.random.default_rng(4), 1e-3)
    solved = solve_all_cases(sc, CcpSettings(restarts=2), np.random.default_rng(0))
    assert solved["w-a"].info.get("reused") == "wo-a"
    cache = SelectionCache(sc, OracleBudget().dual)
    exact = brute_force_optimal(CaseSpec.from_name("w-a"), sc, cache=cache)
    assert solved["w-a"].objective == pytest.approx(exact.objective, rel=1e-5)
    assert solved["w-a"].transcoding == 0.0


def test_equal_requirements_make_cases_coincide():
    sc = example_scenario(requirements={1: 2, 2: 2, 3: 2, 4: 2})
    base = solve_case(CaseSpec.from_name("wo-a"), sc)
    wr = solve_case(CaseSpec.from_name("w-r"), sc, CcpSettings(restarts=3), np.random.default_rng(0))
    assert wr.objective == pytest.approx(base.objective, rel=1e-5)


def test_evaluate_case_selection_checks_ranges():
    sc = example_scenario()
    y = fix_y_absolute(sc.partition, {1: 3, 2: 1, 3: 2, 4: 2}, 3).y
    y[_group(sc, (1,)), 0] = [1, 0, 0]
    with pytest.raises(InvalidSelectionError):
        evaluate_case_selection(CaseSpec.from_name("w-a"), sc, y)
