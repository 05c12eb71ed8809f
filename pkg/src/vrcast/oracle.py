"""Exhaustive ground truth for tiny instances.

Every admissible level choice of every (group, user) block is enumerated,
its energy problem solved with the dual scheme, and the cheapest kept.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CapacityError
from .problems import CaseSpec, level_ranges, playback_levels, selection_problem
from .results import InvalidSelectionError, QualitySelection, SolveResult
from .scenario import Scenario
from .solver.ccp import warm_pool, evaluate_selection
from .solver.dual import DualSettings, normalized_rates


@dataclass(frozen=True)
class OracleBudget:
    """Enumeration cap and settings of each inner energy solve."""

    max_enumerations: int = 10**5
    dual: DualSettings = field(default_factory=lambda: DualSettings(tol=1e-7, max_iter=5000))

    def __post_init__(self):
        if self.max_enumerations < 1:
            raise ValueError("max_enumerations must be positive")


class SelectionCache:
    """Energy of fixed selections, shared across cases of one scenario.

    The transmission energy depends only on ``y``, so caching it makes
    the case optima comparable without solver noise.
    """

    def __init__(self, scenario: Scenario, settings: DualSettings):
        self.scenario = scenario
        self.settings = settings
        self._store: dict[bytes, SolveResult] = {}
        self._problem = selection_problem(CaseSpec(False, "absolute"), scenario)
        self._warm: SolveResult | None = None

    def __call__(self, y: np.ndarray) -> SolveResult:
        key = y.astype(np.int8).tobytes()
        if key not in self._store:
            # pool columns do not depend on the selection, so the last solve is a valid warm start
            pool = lam0 = None
            if self._warm is not None:
                pool, lam0 = warm_pool(self._warm), self._warm.info["multipliers"]
            res = evaluate_selection(self._problem, y, self.settings, pool, lam0)
            self._store[key] = self._warm = res
        return self._store[key]

    def __len__(self):
        return len(self._store)


def candidate_count(case: CaseSpec, scenario: Scenario) -> int:
    lo, hi = level_ranges(case, scenario)
    return math.prod(int(h - l) + 1 for l, h in zip(lo, hi))


def brute_force_optimal(case: CaseSpec, scenario: Scenario, budget: OracleBudget | None = None,
                        cache: SelectionCache | None = None) -> SolveResult:
    """Global optimum over binary selections of ``case``.

    Blocks and levels are enumerated lexicographically; ties go to the
    smaller total transmitted level.

    Raises
    ------
    CapacityError
        If the number of selections exceeds ``budget.max_enumerations``.
    """
    budget = budget or OracleBudget()
    count = candidate_count(case, scenario)
    if count > budget.max_enumerations:
        raise CapacityError(f"{count} selections exceed the oracle budget of {budget.max_enumerations}")
    if cache is None:
        cache = SelectionCache(scenario, budget.dual)
    problem = selection_problem(case, scenario)
    lo, hi = level_ranges(case, scenario)
    pairs = scenario.pairs()
    choices = [range(int(l), int(h) + 1) for l, h in zip(lo, hi)]
    best = None
    for combo in itertools.product(*choices):
        y = problem.empty_selection()
        for (g, k), lev in zip(pairs, combo):
            y[g, k, lev - 1] = 1.0
        res = cache(y)
        value = res.energy + problem.selection_cost(y)
        key = (value, sum(combo))
        if best is None or key < best[0]:
            best = (key, y, res)
    (value, _), y, res = best
    x = playback_levels(case, scenario, y)
    out = SolveResult(
        objective=value,
        energy=res.energy,
        allocation=res.allocation,
        selection=QualitySelection(x, y),
        transcoding=value - res.energy,
        dual_value=res.dual_value,
        gap=res.gap,
        iterations=res.iterations,
        converged=res.converged,
        label=f"oracle-{case.name}",
        info={"enumerated": count},
    )
    return out


@dataclass
class ResidualReport:
    """Largest constraint violations of a solution and the objective recomputation error."""

    residuals: dict[str, float]
    objective: float
    reported: float

    @property
    def objective_delta(self) -> float:
        return abs(self.objective - self.reported) / max(abs(self.reported), 1e-300)

    def ok(self, tol: float = 1e-6) -> bool:
        return all(v <= tol for v in self.residuals.values()) and self.objective_delta <= max(tol, 1e-9)


def verify_solution(case: CaseSpec, scenario: Scenario, result: SolveResult) -> ResidualReport:
    """Recompute every constraint residual and the objective from the raw solution.

    Residuals are dimensionless: airtime as a fraction of the frame, rate
    shortfall relative to the demanded rate, selector and level violations
    in levels.
    """
    inst = scenario.instance
    H, G, L, K = inst.shape
    alloc = result.allocation
    sel = result.selection
    T = scenario.physical.frame_duration
    res: dict[str, float] = {}
    if G == 0:
        return ResidualReport(res, 0.0, result.objective)
    t = np.asarray(alloc.t)
    e = np.asarray(alloc.e)
    res["negative_airtime"] = float(max(0.0, -t.min()) / T)
    res["negative_energy"] = float(max(0.0, -e.min()) / max(e.max(), 1e-300))
    res["airtime"] = float(max(0.0, (t.sum(axis=(1, 2)) / T - 1.0).max()))
    res["energy_without_airtime"] = float(np.abs(e[t <= 0]).max(initial=0.0) / max(e.max(), 1e-300))

    y = sel.y
    mask = scenario.members
    ysum = y.sum(axis=-1)
    res["selector_box"] = float(max(0.0, -y.min(), y.max() - 1.0))
    res["selector_simplex"] = float(np.abs(np.where(mask, ysum - 1.0, ysum)).max())
    res["selector_binary"] = float(np.minimum(y, 1.0 - y).max(initial=0.0))

    lo, hi = level_ranges(case, scenario)
    pairs = scenario.pairs()
    sent = y[pairs[:, 0], pairs[:, 1]] @ np.arange(1, L + 1)
    res["level_range"] = float(max(0.0, (lo - sent).max(initial=0.0), (sent - hi).max(initial=0.0)))
    x = sel.x[pairs[:, 0], pairs[:, 1]]
    r = scenario.requirements[pairs[:, 1]]
    upper = r + (scenario.delta if case.relative else 0)
    res["playback_range"] = float(max(0.0, (r - x).max(initial=0.0), (x - upper).max(initial=0.0)))
    res["playback_above_sent"] = float(max(0.0, (x - sent).max(initial=0.0)))

    # rate constraints in normalised units
    demand = inst.demand(y) * mask[:, None, :]
    supply = normalized_rates(inst, t / T, e / inst.energy_unit)
    with np.errstate(divide="ignore", invalid="ignore"):
        short = np.where(demand > 0, (demand - supply) / demand, 0.0)
    res["rate"] = float(max(0.0, short.max()))

    from .problems import objective  # local to keep the import graph flat

    if not case.transcoding:
        res["playback_not_sent"] = float(np.abs(sel.transmitted() - sel.x).max(initial=0.0))
    try:
        value = objective(case, alloc, sel, scenario)
    except InvalidSelectionError:
        value = math.nan
    return ResidualReport(res, value, result.objective)


TINY_RATES = (6.66e5, 16.18e5, 24.29e5)


def tiny_scenario(rng: np.random.Generator, transcode_power: float | None = None) -> Scenario:
    """Random instance small enough for :func:`brute_force_optimal`.

    Two or three users, one to three tile groups (distinct user sets that
    together cover every user) of 1 to 59 tiles on a 20x100 grid, two or
    three levels, and at most four joint channel states (two binary users,
    the third fixed). The transcoding power is log-uniform on
    [1e-11, 1e-5] W unless given, so that transcoding is sometimes worth it.
    """
    from .channel import ChannelModel, PhysicalConfig
    from .scenario import UserCompute
    from .tiling import FoVRequest, VideoGeometry

    while True:
        K = int(rng.integers(2, 4))
        L = int(rng.integers(2, 4))
        subsets = [s for n in range(1, K + 1) for s in itertools.combinations(range(K), n)]
        picked = rng.choice(len(subsets), size=int(rng.integers(1, 4)), replace=False)
        groups = [subsets[i] for i in picked]
        if set().union(*map(set, groups)) == set(range(K)):
            break
    geo = VideoGeometry(20, 100, TINY_RATES[:L])
    tiles: dict[int, set] = {k: set() for k in range(K)}
    col = 1
    for s in groups:
        n = int(rng.integers(1, 60))
        block = {(1 + (col + i) // 100, 1 + (col + i) % 100) for i in range(n)}
        col += n
        for k in s:
            tiles[k] |= block
    r = rng.integers(1, L + 1, size=K)
    requests = tuple(FoVRequest(k + 1, frozenset(tiles[k]), int(r[k])) for k in range(K))
    d = 1e-6
    states = []
    for k in range(K):
        if k < 2:
            states.append(((d, 0.5), (2 * d, 0.5)))
        else:
            states.append(((float(rng.choice([d, 2 * d])), 1.0),))
    power = transcode_power if transcode_power is not None else float(10 ** rng.uniform(-11, -5))
    return Scenario(geo, requests, PhysicalConfig.from_temperature(150e6, 0.05), ChannelModel(tuple(states)),
                    UserCompute.uniform(power, K), delta=1, beta=1.0)
