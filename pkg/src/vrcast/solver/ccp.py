"""Penalised DC programming for the mixed discrete/continuous cases.

Binary selectors are relaxed to ``[0, 1]`` and pushed back to binary values
by the concave penalty ``rho * sum y (1 - y)``. Each convex-concave step
replaces the penalty by its tangent at the previous point and solves the
resulting convex problem with the partial-dual scheme of :mod:`.dual`,
where the selector blocks are minimised exactly by vertex enumeration.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..results import Allocation, SolveResult, SolverError
from .dual import (
    BlockSelector,
    ColumnPool,
    DualSettings,
    Instance,
    Master,
    SelectorBlocks,
    _initial_columns,
    run_dual,
    solve_dual,
)
from .functions import penalty

log = logging.getLogger(__name__)


@dataclass
class SelectionProblem:
    """Energy minimisation with one free selector block per (group, user).

    Parameters
    ----------
    inst : Instance
        Continuous part (states, groups, rates, physical constants).
    pairs : (B, 2) int array
        ``(g, k)`` of every block; each member of each group needs one.
    lo, hi : (B,) arrays
        Bounds on the transmitted level ``sum_l l y``.
    level_cost : (B, L) array
        Cost in Joules of selecting each level (transcoding energy).
    hinge_at, hinge_slope : (B,) arrays
        Optional convex term ``slope * max(sum_l l y - at, 0)`` in Joules;
        ``at = inf`` disables it.
    """

    inst: Instance
    pairs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level_cost: np.ndarray
    hinge_at: np.ndarray
    hinge_slope: np.ndarray

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=int).reshape(-1, 2)
        B = len(self.pairs)
        L = self.inst.shape[2]
        self.lo = np.asarray(self.lo, dtype=float).reshape(B)
        self.hi = np.asarray(self.hi, dtype=float).reshape(B)
        self.level_cost = np.asarray(self.level_cost, dtype=float).reshape(B, L)
        self.hinge_at = np.asarray(self.hinge_at, dtype=float).reshape(B)
        self.hinge_slope = np.asarray(self.hinge_slope, dtype=float).reshape(B)
        if np.any(self.lo > self.hi) or np.any(self.lo < 1) or np.any(self.hi > L):
            raise ValueError("level ranges must satisfy 1 <= lo <= hi <= L")

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.inst.shape[2] + 1, dtype=float)

    def allowed(self, b: int) -> np.ndarray:
        """0-based levels a binary selector of block ``b`` may pick."""
        lv = self.levels
        return np.nonzero((lv >= self.lo[b] - 1e-9) & (lv <= self.hi[b] + 1e-9))[0]

    def selection_cost(self, y: np.ndarray) -> float:
        """Joules charged for the selectors themselves (level cost plus hinge)."""
        total = 0.0
        for b, (g, k) in enumerate(self.pairs):
            total += float(self.level_cost[b] @ y[g, k])
            if np.isfinite(self.hinge_at[b]):
                total += self.hinge_slope[b] * max(float(self.levels @ y[g, k]) - self.hinge_at[b], 0.0)
        return total

    def empty_selection(self) -> np.ndarray:
        H, G, L, K = self.inst.shape
        return np.zeros((G, K, L))

    def random_vertex(self, rng: np.random.Generator) -> np.ndarray:
        y = self.empty_selection()
        for b, (g, k) in enumerate(self.pairs):
            y[g, k, rng.choice(self.allowed(b))] = 1.0
        return y


@dataclass
class CcpSettings:
    """Knobs of the convex-concave procedure.

    ``rho`` is the penalty weight relative to the cheapest starting vertex.
    With ``relaxed_start`` one extra run starts from the solution of the
    penalty-free relaxation. ``rho_growth`` multiplies it whenever a run settles on
    a fractional point, up to ``rho_cap`` times its initial value.
    With ``local_passes > 0`` the best end point is improved by moving one
    block at a time to another admissible level, for at most that many sweeps.
    The returned selection is re-solved to a relative gap of ``polish_tol``.
    """

    rho: float = 0.1
    restarts: int = 10
    tol: float = 1e-5
    max_iter: int = 200
    binary_tol: float = 1e-6
    rho_growth: float = 10.0
    rho_cap: float = 1e4
    relaxed_start: bool = True
    dual: DualSettings = field(default_factory=lambda: DualSettings(tol=1e-5, max_iter=400))
    polish_tol: float = 1e-7
    local_passes: int = 3

    def polish_settings(self) -> DualSettings:
        """Dual settings of a final, tighter solve of a fixed selection."""
        return replace(self.dual, tol=min(self.dual.tol, self.polish_tol), max_iter=max(self.dual.max_iter, 2000))


@dataclass
class CcpStep:
    """One convex-concave step, in Joules except ``y``."""

    y: np.ndarray
    allocation: Allocation
    objective: float  # energy + selection cost + rho * P(y)
    surrogate: float  # same with the tangent penalty
    energy: float
    selection: float
    lower: float
    iterations: int
    multipliers: np.ndarray | None = None  # normalised rate-row prices, for warm starts


def _normalized_blocks(problem: SelectionProblem, y_prev: np.ndarray, rho: float) -> SelectorBlocks:
    E0 = problem.inst.energy_unit
    g, k = problem.pairs[:, 0], problem.pairs[:, 1]
    tangent = rho * (1.0 - 2.0 * y_prev[g, k])
    return SelectorBlocks(
        pairs=problem.pairs,
        lo=problem.lo,
        hi=problem.hi,
        cost=(problem.level_cost + tangent) / E0,
        hinge_at=problem.hinge_at,
        hinge_slope=problem.hinge_slope / E0,
    )


def _rate_rows(problem: SelectionProblem) -> np.ndarray:
    L = problem.inst.shape[2]
    return np.array([(g, l, k) for g, k in problem.pairs for l in range(L)], dtype=int).reshape(-1, 3)


def ccp_subproblem(problem: SelectionProblem, y_prev: np.ndarray, rho: float,
                   pool: ColumnPool | None = None, settings: DualSettings | None = None,
                   lam0: np.ndarray | None = None) -> CcpStep:
    """Solve the convex problem with the penalty linearised at ``y_prev``.

    ``rho`` is in Joules. Passing the same ``pool`` across calls keeps every
    earlier column available, so the previous iterate stays feasible for
    the restricted master and the penalised objective cannot increase.
    """
    settings = settings or DualSettings(tol=1e-5, max_iter=400)
    inst = problem.inst
    H, G, L, K = inst.shape
    E0 = inst.energy_unit
    pool = pool if pool is not None else ColumnPool()
    if len(problem.pairs) == 0:
        return CcpStep(problem.empty_selection(), Allocation.zeros(H, G, L), 0.0, 0.0, 0.0, 0.0, 0.0, 0)
    if len(pool) == 0:
        _initial_columns(inst, inst.demand(y_prev), pool)
    blocks = _normalized_blocks(problem, y_prev, rho)
    constant = rho * float(np.sum(y_prev[problem.pairs[:, 0], problem.pairs[:, 1]] ** 2))
    master = Master(inst, _rate_rows(problem), blocks=blocks, offset=constant / E0)
    out = run_dual(inst, master, BlockSelector(inst, blocks, constant / E0), settings, pool, lam0)
    # only the columns behind the returned point are needed to keep the next step monotone
    if out.active is not None:
        pool.keep(out.active)

    y = out.y
    # snap LP round-off so the penalty is evaluated on the feasible box
    y = np.where(np.abs(y) < 1e-12, 0.0, np.where(np.abs(1.0 - y) < 1e-12, 1.0, y))
    surrogate = E0 * out.upper
    selection = problem.selection_cost(y)
    energy = float(inst.probs @ (E0 * out.e).sum(axis=(1, 2)))
    alloc = Allocation(inst.phys.frame_duration * out.t, E0 * out.e)
    pen = penalty(y[problem.pairs[:, 0], problem.pairs[:, 1]])
    return CcpStep(y, alloc, energy + selection + rho * pen, surrogate, energy, selection,
                   E0 * out.lower, out.iterations, out.multipliers)


def _is_binary(problem: SelectionProblem, y: np.ndarray, tol: float) -> bool:
    blocks = y[problem.pairs[:, 0], problem.pairs[:, 1]]
    return bool(np.all(np.minimum(blocks, 1.0 - blocks) <= tol))


def _round(problem: SelectionProblem, y: np.ndarray) -> np.ndarray:
    out = problem.empty_selection()
    for b, (g, k) in enumerate(problem.pairs):
        out[g, k, int(np.argmax(y[g, k]))] = 1.0
    return out


def evaluate_selection(problem: SelectionProblem, y: np.ndarray, settings: DualSettings | None = None,
                       pool: ColumnPool | None = None, lam0: np.ndarray | None = None) -> SolveResult:
    """Exact objective of a binary selection: solve the energy problem and add the selection cost."""
    res = solve_dual(problem.inst, y, settings=settings, pool=pool, lam0=lam0)
    cost = problem.selection_cost(y)
    res.objective = res.energy + cost
    res.transcoding = cost
    return res


def warm_pool(res: SolveResult) -> ColumnPool:
    pool = res.info["pool"].copy()
    if res.info.get("active") is not None:
        pool.keep(res.info["active"])
    return pool


def _nudge(problem: SelectionProblem, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Move fractional blocks halfway to their heaviest admissible level.

    A fractional stationary point can have a flat tangent (entries at 1/2),
    where raising ``rho`` alone changes nothing; this breaks the symmetry.
    """
    out = y.copy()
    for b, (g, k) in enumerate(problem.pairs):
        block = y[g, k]
        if np.all(np.minimum(block, 1.0 - block) <= 1e-9):
            continue
        allowed = problem.allowed(b)
        weights = block[allowed]
        top = allowed[np.flatnonzero(weights >= weights.max() - 1e-9)]
        v = np.zeros_like(block)
        v[rng.choice(top)] = 1.0
        out[g, k] = 0.5 * block + 0.5 * v
    return out


def _run(problem: SelectionProblem, y0: np.ndarray, pool: ColumnPool, objective0: float, scale: float,
         settings: CcpSettings, rng: np.random.Generator):
    """One CCP run from ``y0`` (penalty-free objective ``objective0``); returns (binary y or None, trace).

    Trace records carry a ``stage`` index that increases whenever ``rho`` is
    raised; the objective is non-increasing within a stage.
    """
    rho = settings.rho * scale
    rho_max = settings.rho * settings.rho_cap * scale
    y = y0
    stage = 0
    pen0 = penalty(y0[problem.pairs[:, 0], problem.pairs[:, 1]])
    # objective0 excludes the penalty, which is zero at vertices but not at a relaxed start
    trace = [{"iteration": 0, "stage": stage, "rho": rho, "objective": objective0 + rho * pen0, "penalty": pen0}]
    it = 0
    lam = None
    while True:
        prev = None
        for _ in range(settings.max_iter):
            it += 1
            step = ccp_subproblem(problem, y, rho, pool, settings.dual, lam)
            lam = step.multipliers
            pen = penalty(step.y[problem.pairs[:, 0], problem.pairs[:, 1]])
            trace.append({"iteration": it, "stage": stage, "rho": rho, "objective": step.objective,
                          "surrogate": step.surrogate,
                          "energy": step.energy, "penalty": pen, "lower": step.lower})
            y = step.y
            if prev is not None and prev - step.objective <= settings.tol * abs(prev):
                break
            prev = step.objective
        if _is_binary(problem, y, settings.binary_tol):
            return _round(problem, y), trace
        if rho * settings.rho_growth > rho_max * (1 + 1e-12):
            return None, trace
        rho *= settings.rho_growth
        stage += 1
        y = _nudge(problem, y, rng)


def _local_search(problem: SelectionProblem, y: np.ndarray, res: SolveResult, settings: CcpSettings,
                  seen: dict[bytes, tuple[np.ndarray, SolveResult]]) -> tuple[np.ndarray, SolveResult]:
    """First-improvement descent over single-block level changes."""
    margin = 10 * settings.dual.tol
    for _ in range(settings.local_passes):
        improved = False
        for b, (g, k) in enumerate(problem.pairs):
            current = int(np.argmax(y[g, k]))
            for lev in problem.allowed(b):
                if lev == current:
                    continue
                cand = y.copy()
                cand[g, k] = 0.0
                cand[g, k, lev] = 1.0
                key = cand.tobytes()
                if key not in seen:
                    seen[key] = (cand, evaluate_selection(problem, cand, settings.dual, res.info["pool"].copy(),
                                                          res.info["multipliers"]))
                other = seen[key][1]
                if other.objective < res.objective * (1 - margin):
                    y, res, improved = cand, other, True
                    break
        if not improved:
            break
    return y, res


def ccp_solve(problem: SelectionProblem, settings: CcpSettings | None = None,
              rng: np.random.Generator | None = None, starts: list[np.ndarray] | None = None) -> SolveResult:
    """Best binary selection found by penalised convex-concave runs from random vertices.

    Each run starts at a distinct random vertex (one admissible level per block),
    iterates :func:`ccp_subproblem` until the objective stalls, and raises
    ``rho`` while the point is still fractional. Binary end points are
    re-solved exactly; the cheapest one is returned. ``starts`` adds
    deterministic starting vertices ahead of the random ones.

    Raises
    ------
    SolverError
        If no run ends at a binary point.
    """
    settings = settings or CcpSettings()
    if settings.restarts < 1 or settings.rho <= 0:
        raise ValueError("need restarts >= 1 and rho > 0")
    rng = rng if rng is not None else np.random.default_rng(0)
    inst = problem.inst
    H, G, L, K = inst.shape
    if len(problem.pairs) == 0:
        return SolveResult(0.0, 0.0, Allocation.zeros(H, G, L), dual_value=0.0)

    # identical starts give identical runs, so draw distinct vertices while there are any
    total = int(np.prod([len(problem.allowed(b)) for b in range(len(problem.pairs))], dtype=float))
    candidates, keys = [], set()
    for y0 in starts or []:
        if y0.tobytes() not in keys:
            keys.add(y0.tobytes())
            candidates.append(y0)
    draws = 0
    while len(candidates) < min(settings.restarts, total) and draws < 50 * settings.restarts:
        y0 = problem.random_vertex(rng)
        draws += 1
        if y0.tobytes() not in keys:
            keys.add(y0.tobytes())
            candidates.append(y0)

    # starting vertices are binary feasible points too, so they compete with the run end points
    seen: dict[bytes, tuple[np.ndarray, SolveResult]] = {}
    for y0 in candidates:
        seen[y0.tobytes()] = (y0, evaluate_selection(problem, y0, settings.dual))
    scale = max(min(res.objective for _, res in seen.values()), 1e-300)

    jobs = []
    if settings.relaxed_start:
        # the penalty-free relaxation shows which levels the energy prefers
        first = seen[candidates[0].tobytes()][1]
        pool = warm_pool(first)
        relaxed = ccp_subproblem(problem, candidates[0], 0.0, pool, settings.dual)
        jobs.append((relaxed.y, pool, relaxed.energy + relaxed.selection))
    for y0 in candidates:
        res = seen[y0.tobytes()][1]
        jobs.append((y0, warm_pool(res), res.objective))

    runs = []
    accepted = 0
    for y0, pool, objective0 in jobs:
        y_bin, trace = _run(problem, y0, pool, objective0, scale, settings, rng)
        runs.append(trace)
        if y_bin is None:
            continue
        accepted += 1
        key = y_bin.tobytes()
        if key not in seen:
            seen[key] = (y_bin, evaluate_selection(problem, y_bin, settings.dual))
    if accepted == 0:
        raise SolverError("no convex-concave run reached a binary selection", {"runs": runs})
    best_y, best = min(seen.values(), key=lambda item: (item[1].objective, float(item[0].sum(axis=(0, 1)) @ problem.levels)))
    best_y, best = _local_search(problem, best_y, best, settings, seen)
    if best.gap is None or best.gap > settings.polish_tol:
        # warm-started from the same pool, so the polished value can only be lower
        best = evaluate_selection(problem, best_y, settings.polish_settings(), best.info["pool"],
                                  best.info["multipliers"])
    best.selection = None
    best.info["y"] = best_y
    best.info["runs"] = runs
    best.history = runs[-1]
    best.penalty = 0.0
    return best
