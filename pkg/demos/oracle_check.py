"""How close does the convex-concave heuristic get to exhaustive search?

Draws a handful of tiny instances, solves each mixed case both ways and
prints the relative excess of the heuristic. Takes under half a minute.
"""

import numpy as np

from vrcast import CaseSpec, check_ordering, solve_case
from vrcast.oracle import OracleBudget, SelectionCache, brute_force_optimal, tiny_scenario
from vrcast.solver.ccp import CcpSettings

rng = np.random.default_rng(11)
print(f"{'inst':>4s} {'K':>2s} {'L':>2s} {'case':5s} {'exact J':>11s} {'heuristic J':>11s} {'excess':>8s}")
for j in range(6):
    sc = tiny_scenario(rng)
    cache = SelectionCache(sc, OracleBudget().dual)
    exact = {}
    for name in ("wo-a", "wo-r", "w-a", "w-r"):
        case = CaseSpec.from_name(name)
        exact[name] = brute_force_optimal(case, sc, cache=cache).objective
        if name == "wo-a":
            continue
        got = solve_case(case, sc, CcpSettings(restarts=10), np.random.default_rng(j)).objective
        print(f"{j:4d} {len(sc.requests):2d} {sc.levels:2d} {name:5s} {exact[name]:11.4e} {got:11.4e} "
              f"{(got - exact[name]) / exact[name]:+8.2%}")
    # more freedom never costs energy
    assert all(c.ok for c in check_ordering(exact))
