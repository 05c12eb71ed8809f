"""Partial dual decomposition for the fixed-selection energy minimisation.

Internally everything runs in normalised units: airtime as a fraction of the
frame, energy in multiples of ``T n0 / h_ref`` and demand in bits per frame
per Hz, so that multipliers are O(1)-ish regardless of the physical scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq, linprog

from ..channel import PhysicalConfig, SystemStateTable
from ..results import Allocation, DivergenceError, SolveResult
from .functions import LN2, optimal_power, stream_values

log = logging.getLogger(__name__)

_EXP2_LIMIT = 1000.0


@dataclass(frozen=True)
class Instance:
    """Continuous part of a streaming problem.

    Attributes
    ----------
    gains : (H, K) array
        Channel power gain of every user in every joint state.
    probs : (H,) array
        Probability of each joint state.
    sizes : (G,) array
        Number of tiles ``|P_S|`` in each group.
    members : (G, K) bool array
        ``members[g, k]`` is True when user ``k`` belongs to group ``g``.
    rates : (L,) array
        Per-tile encoding rate of each level in bits/s.
    phys : PhysicalConfig
    """

    gains: np.ndarray
    probs: np.ndarray
    sizes: np.ndarray
    members: np.ndarray
    rates: np.ndarray
    phys: PhysicalConfig

    def __post_init__(self):
        for name, dtype in (("gains", float), ("probs", float), ("sizes", float), ("members", bool), ("rates", float)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=dtype))
        if self.gains.ndim != 2 or self.members.ndim != 2:
            raise ValueError("gains and members must be 2-D")
        if self.members.shape != (self.sizes.shape[0], self.gains.shape[1]):
            raise ValueError("members must have shape (groups, users)")

    @classmethod
    def from_table(cls, table: SystemStateTable, sizes, members, rates, phys: PhysicalConfig) -> "Instance":
        return cls(table.gains, table.probs, sizes, members, rates, phys)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        """(states, groups, levels, users)."""
        return self.gains.shape[0], self.sizes.shape[0], self.rates.shape[0], self.gains.shape[1]

    @property
    def ref_gain(self) -> float:
        return float(self.gains.max()) if self.gains.size else 1.0

    @property
    def energy_unit(self) -> float:
        """Joules represented by one normalised energy unit."""
        return self.phys.frame_duration * self.phys.noise_power / self.ref_gain

    @property
    def norm_gains(self) -> np.ndarray:
        return self.gains / self.ref_gain

    @property
    def unit_demand(self) -> np.ndarray:
        """(G, L) bits per frame per Hz needed to deliver a group's tiles at a level."""
        return self.sizes[:, None] * self.rates[None, :] / self.phys.bandwidth

    def demand(self, y: np.ndarray) -> np.ndarray:
        """(G, L, K) normalised demand ``|P_S| D_l y / B`` for selectors ``y[g, k, l]``."""
        return self.unit_demand[:, :, None] * np.transpose(y, (0, 2, 1))

    def to_multipliers(self, mu: np.ndarray) -> np.ndarray:
        """Normalised multipliers -> physical ones (J per bit/s)."""
        return mu * self.energy_unit / self.phys.bandwidth

    def from_multipliers(self, lam: np.ndarray) -> np.ndarray:
        return lam * self.phys.bandwidth / self.energy_unit


@dataclass
class DualSettings:
    """Knobs of the dual loop.

    ``step_a / (step_b + n)`` is the diminishing step; it multiplies a
    subgradient normalised to the current multiplier magnitude.
    ``columns_per_state`` caps how many priced columns (the most negative
    reduced costs) each state contributes to the pool per evaluation.
    """

    tol: float = 1e-4
    max_iter: int = 5000
    step_a: float = 1.0
    step_b: float = 10.0
    check_weak_duality: bool = True
    columns_per_state: int = 3


class ColumnPool:
    """Inner-subproblem solutions ``(state, group, level, power)`` seen so far.

    Any non-negative time split over the stored columns with at most one
    frame of airtime per state is a feasible primal point once the rate
    rows are met, and merging columns of the same stream only raises rates
    (concavity of the perspective), so the master LP over the pool yields
    valid upper bounds.
    """

    def __init__(self):
        self.h: list[int] = []
        self.g: list[int] = []
        self.l: list[int] = []
        self.p: list[float] = []
        self._seen: set[tuple[int, int, int, float]] = set()

    def __len__(self):
        return len(self.p)

    def add(self, h: int, g: int, l: int, p: float) -> bool:
        if not (p > 0 and np.isfinite(p)):
            return False
        key = (int(h), int(g), int(l), float(np.format_float_positional(p, precision=12, unique=False, fractional=False)))
        if key in self._seen:
            return False
        self._seen.add(key)
        self.h.append(int(h))
        self.g.append(int(g))
        self.l.append(int(l))
        self.p.append(float(p))
        return True

    def arrays(self):
        return (np.array(self.h, dtype=int), np.array(self.g, dtype=int),
                np.array(self.l, dtype=int), np.array(self.p, dtype=float))

    def keep(self, index) -> None:
        """Drop every column not listed in ``index``."""
        index = sorted(set(int(i) for i in index))
        self.h = [self.h[i] for i in index]
        self.g = [self.g[i] for i in index]
        self.l = [self.l[i] for i in index]
        self.p = [self.p[i] for i in index]
        self._seen = {(h, g, l, float(np.format_float_positional(p, precision=12, unique=False, fractional=False)))
                      for h, g, l, p in zip(self.h, self.g, self.l, self.p)}

    def copy(self) -> "ColumnPool":
        other = ColumnPool()
        other.h, other.g, other.l, other.p = list(self.h), list(self.g), list(self.l), list(self.p)
        other._seen = set(self._seen)
        return other


@dataclass
class SelectorBlocks:
    """Continuous selector variables attached to the master problem.

    One block per (group, user) listed in ``pairs``. ``lo``/``hi`` bound the
    transmitted level ``sum_l l y``; ``cost`` (B, L) is the linear cost per
    unit of selector; ``hinge_at``/``hinge_slope`` add
    ``slope * max(sum_l l y - at, 0)``. All costs are normalised.
    """

    pairs: np.ndarray  # (B, 2) of (g, k)
    lo: np.ndarray
    hi: np.ndarray
    cost: np.ndarray
    hinge_at: np.ndarray
    hinge_slope: np.ndarray


@dataclass
class MasterSolution:
    value: float
    tau: np.ndarray  # per pool column
    prices: np.ndarray  # (G, L, K) normalised multipliers of the rate rows
    time_duals: np.ndarray  # (H,), <= 0
    y: np.ndarray | None = None  # (G, K, L)


class Master:
    """Restricted master LP over a column pool.

    Rate rows are indexed by ``rows[i] = (g, l, k)``. With fixed demand the
    row reads ``rate_i >= demand_i``; with selector blocks it reads
    ``rate_i >= unit_demand[g, l] * y[g, k, l]``. ``offset`` is a constant
    added to the objective so relative gaps are measured on the full value.
    """

    def __init__(self, inst: Instance, rows: np.ndarray, demand: np.ndarray | None = None,
                 blocks: SelectorBlocks | None = None, offset: float = 0.0):
        self.inst = inst
        self.offset = offset
        self.rows = np.asarray(rows, dtype=int).reshape(-1, 3)
        self.demand = demand
        self.blocks = blocks
        H, G, L, K = inst.shape
        stream = self.rows[:, 0] * L + self.rows[:, 1]
        self._row_order = np.argsort(stream, kind="stable")
        self._row_stream = stream[self._row_order]
        self._row_count = np.bincount(stream, minlength=G * L)
        self._static = None if blocks is None else self._block_part()

    def _block_part(self):
        """Selector columns (y then z) of every constraint; they do not depend on the pool."""
        inst, blocks = self.inst, self.blocks
        H, G, L, K = inst.shape
        nr, nb = len(self.rows), len(blocks.pairs)
        ny = nb * L
        levels = np.arange(1, L + 1, dtype=float)
        row_of = {tuple(r): i for i, r in enumerate(self.rows)}
        unit = inst.unit_demand
        yr, yc, yv = [], [], []
        for b_idx, (g, k) in enumerate(blocks.pairs):
            for l in range(L):
                i = row_of.get((g, l, k))
                if i is not None:
                    yr.append(i)
                    yc.append(b_idx * L + l)
                    yv.append(unit[g, l])
        rr, rc, rv, rb = [], [], [], []
        n_range = 0
        for b_idx in range(nb):
            cols = b_idx * L + np.arange(L)
            # sum l y <= hi ; -sum l y <= -lo
            rr += [n_range] * L + [n_range + 1] * L
            rc += list(cols) * 2
            rv += list(levels) + list(-levels)
            rb += [blocks.hi[b_idx], -blocks.lo[b_idx]]
            n_range += 2
            if np.isfinite(blocks.hinge_at[b_idx]) and blocks.hinge_slope[b_idx] > 0:
                # sum l y - z <= at
                rr += [n_range] * (L + 1)
                rc += list(cols) + [ny + b_idx]
                rv += list(levels) + [-1.0]
                rb.append(blocks.hinge_at[b_idx])
                n_range += 1
        eq_r = np.repeat(np.arange(nb), L)
        eq_c = np.arange(ny)
        cost = np.concatenate([blocks.cost.reshape(-1), np.where(np.isfinite(blocks.hinge_at), blocks.hinge_slope, 0.0)])
        return {
            "rate": (np.array(yv, dtype=float), np.array(yr, dtype=int), np.array(yc, dtype=int)),
            "range": (np.array(rv, dtype=float), np.array(rr, dtype=int) + nr + H, np.array(rc, dtype=int)),
            "n_range": n_range,
            "b_range": np.array(rb, dtype=float),
            "eq": (np.ones(ny), eq_r, eq_c),
            "cost": cost,
            "nvar": ny + nb,
            "ny": ny,
        }

    def _rate_matrix(self, pool: ColumnPool):
        inst = self.inst
        L = inst.shape[2]
        hh, gg, ll, pp = pool.arrays()
        coef = inst.probs[hh][:, None] * np.log1p(pp[:, None] * inst.norm_gains[hh]) / LN2  # (nc, K)
        stream = gg * L + ll
        cnt = self._row_count[stream]
        ci = np.repeat(np.arange(len(pp)), cnt)
        first = np.searchsorted(self._row_stream, stream, side="left")
        offset = np.arange(ci.size) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        ri = self._row_order[np.repeat(first, cnt) + offset]
        vals = coef[ci, self.rows[ri, 2]]
        return ri, ci, vals, hh, pp

    def solve(self, pool: ColumnPool) -> MasterSolution | None:
        inst = self.inst
        H, G, L, K = inst.shape
        nr = len(self.rows)
        nc = len(pool)
        ri, ci, vals, hh, pp = self._rate_matrix(pool)
        cost = inst.probs[hh] * pp
        st = self._static
        nvar = nc + (0 if st is None else st["nvar"])

        # rate rows: -sum coef tau (+ unit_demand y) <= -demand (or 0); then one time row per state
        data = [-vals, np.ones(nc)]
        rows = [ri, nr + hh]
        cols = [ci, np.arange(nc)]
        b_ub = [-self.demand if st is None else np.zeros(nr), np.ones(H)]
        n_ub = nr + H
        A_eq = b_eq = None
        bounds = np.zeros((nvar, 2))
        bounds[:, 1] = np.inf
        if st is not None:
            for v, r, c in (st["rate"], st["range"]):
                data.append(v)
                rows.append(r)
                cols.append(c + nc)
            b_ub.append(st["b_range"])
            n_ub += st["n_range"]
            v, r, c = st["eq"]
            A_eq = sp.csr_matrix((v, (r, c + nc)), shape=(len(self.blocks.pairs), nvar))
            b_eq = np.ones(len(self.blocks.pairs))
            bounds[nc:nc + st["ny"], 1] = 1.0
            cost = np.concatenate([cost, st["cost"]])
        A_ub = sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n_ub, nvar))
        res = linprog(cost, A_ub=A_ub, b_ub=np.concatenate(b_ub), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
        if res.status != 0:
            return None
        marg = res.ineqlin.marginals
        prices = np.zeros((G, L, K))
        if nr:
            prices[self.rows[:, 0], self.rows[:, 1], self.rows[:, 2]] = np.maximum(-marg[:nr], 0.0)
        sol = MasterSolution(float(res.fun) + self.offset, np.maximum(res.x[:nc], 0.0), prices, marg[nr:nr + H])
        if st is not None:
            nb = len(self.blocks.pairs)
            y = np.zeros((G, K, L))
            yv = np.clip(res.x[nc:nc + st["ny"]].reshape(nb, L), 0.0, 1.0)
            y[self.blocks.pairs[:, 0], self.blocks.pairs[:, 1]] = yv
            sol.y = y
        return sol

    def allocation(self, pool: ColumnPool, tau: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Merge pool columns into per-(state, group, level) airtime and energy (normalised)."""
        H, G, L, K = self.inst.shape
        hh, gg, ll, pp = pool.arrays()
        t = np.zeros((H, G, L))
        e = np.zeros((H, G, L))
        np.add.at(t, (hh, gg, ll), tau)
        np.add.at(e, (hh, gg, ll), tau * pp)
        # airtime rows must stay within one frame
        total = t.sum(axis=(1, 2))
        over = total > 1.0
        if np.any(over):
            t[over] /= total[over][:, None, None]
        e[t <= 0] = 0.0
        return t, e


def normalized_rates(inst: Instance, t: np.ndarray, e: np.ndarray) -> np.ndarray:
    """(G, L, K) expected rate per Hz ``E[tau log2(1 + eps g / tau)]`` in normalised units."""
    ng = inst.norm_gains
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = np.where(t[..., None] > 0, e[..., None] * ng[:, None, None, :] / np.where(t > 0, t, 1.0)[..., None], 0.0)
    per_state = t[..., None] * np.log1p(snr) / LN2
    return np.einsum("h,hglk->glk", inst.probs, per_state)


def inner_solution(power: np.ndarray, value: np.ndarray):
    """Bang-bang airtime split: the whole frame goes to the most negative unit value.

    Ties go to the lowest (group, level) index. States where every value is
    zero stay silent.
    """
    H, G, L = value.shape
    flat = value.reshape(H, -1)
    best = np.argmin(flat, axis=1)
    t = np.zeros((H, G * L))
    on = flat[np.arange(H), best] < 0
    t[np.arange(H)[on], best[on]] = 1.0
    t = t.reshape(H, G, L)
    e = t * power
    return t, e, np.where(on, flat[np.arange(H), best], 0.0)


def inner_dual_subproblem(h, weights, inst: Instance, constant: float = 0.0):
    """Minimise ``sum e - sum w (B/T) t log2(1 + e h_k / (t n0))`` for one joint state.

    Parameters
    ----------
    h : (K,) array
        Channel gains of the joint state.
    weights : (G, L, K) array
        Physical multipliers (J per bit/s); zero for inactive triples.
    inst : Instance
        Supplies group structure and physical constants.
    constant : float
        Added to the returned value (typically ``sum lambda |P_S| D_l``).

    Returns
    -------
    t, e : (G, L) arrays
        Airtime (s) and energy (J) of the minimiser.
    value : float
        Minimum value in Joules plus ``constant``.
    """
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    h = np.asarray(h, dtype=float).reshape(1, -1)
    mu = inst.from_multipliers(weights)
    power, value = stream_values(mu, h / inst.ref_gain)
    t, e, v = inner_solution(power, value)
    T = inst.phys.frame_duration
    return T * t[0], inst.energy_unit * e[0], inst.energy_unit * float(v[0]) + constant


def _initial_columns(inst: Instance, demand: np.ndarray, pool: ColumnPool):
    """Equal airtime for every demanded stream in every state, with enough power for its weakest user."""
    H = inst.shape[0]
    need = demand > 0
    streams = np.argwhere(need.any(axis=2))
    if streams.size == 0:
        return
    share = 1.0 / len(streams)
    ng = inst.norm_gains
    for g, l in streams:
        ks = np.nonzero(need[g, l])[0]
        d = demand[g, l, ks].max()
        expo = d / share
        if expo > _EXP2_LIMIT:
            raise DivergenceError(
                "demand too large for an equal-share starting point",
                {"stream": (int(g), int(l)), "exponent": float(expo)},
            )
        for h in range(H):
            p = (np.exp2(expo) - 1.0) / ng[h, ks].min()
            pool.add(h, g, l, p)


def _repair(inst: Instance, demand: np.ndarray, t: np.ndarray, e: np.ndarray):
    """Scale energies per stream until every demanded rate is met; None if airtime is missing."""
    e = e.copy()
    need = demand > 0
    for g, l in np.argwhere(need.any(axis=2)):
        ks = np.nonzero(need[g, l])[0]
        ts = t[:, g, l]
        if not np.any(ts > 0):
            return None

        def shortfall(alpha):
            r = normalized_rates(inst, t[:, g:g + 1, l:l + 1], alpha * e[:, g:g + 1, l:l + 1])[0, 0]
            return np.min(r[ks] - demand[g, l, ks])

        if shortfall(1.0) >= 0:
            continue
        if not np.any(e[:, g, l] > 0):
            e[:, g, l] = ts * 1e-6
        hi = 2.0
        while shortfall(hi) < 0:
            hi *= 2.0
            if hi > 1e300:
                return None
        alpha = brentq(shortfall, 1.0 if shortfall(1.0) < 0 else 0.0, hi, xtol=1e-14, rtol=1e-14)
        alpha *= 1.0 + 1e-12
        e[:, g, l] *= alpha
    e[t <= 0] = 0.0
    return e


class FixedDemand:
    """Selector part of the Lagrangian when the selectors are constants."""

    def __init__(self, demand: np.ndarray):
        self.demand = demand

    def lagrangian(self, mu: np.ndarray):
        return float(np.sum(mu * self.demand)), self.demand, None

    def cost(self, y) -> float:
        return 0.0


class BlockSelector:
    """Selector part of the Lagrangian for continuous selector blocks.

    Each block is minimised exactly over its polytope by enumerating the
    candidate vertices from :func:`block_vertices`.
    """

    def __init__(self, inst: Instance, blocks: SelectorBlocks, constant: float = 0.0):
        from .functions import block_vertices

        self.inst = inst
        self.blocks = blocks
        self.constant = constant
        L = inst.shape[2]
        self.levels = np.arange(1, L + 1, dtype=float)
        self.vertices = [
            block_vertices(L, blocks.lo[b], blocks.hi[b],
                           cuts=(blocks.hinge_at[b],) if np.isfinite(blocks.hinge_at[b]) else ())
            for b in range(len(blocks.pairs))
        ]

    def _hinge(self, b: int, level_sum):
        at = self.blocks.hinge_at[b]
        if not np.isfinite(at):
            return 0.0
        return self.blocks.hinge_slope[b] * np.maximum(level_sum - at, 0.0)

    def lagrangian(self, mu: np.ndarray):
        H, G, L, K = self.inst.shape
        unit = self.inst.unit_demand
        y = np.zeros((G, K, L))
        total = self.constant
        for b, (g, k) in enumerate(self.blocks.pairs):
            V = self.vertices[b]
            c = self.blocks.cost[b] + mu[g, :, k] * unit[g]
            vals = V @ c + self._hinge(b, V @ self.levels)
            j = int(np.argmin(vals))
            total += float(vals[j])
            y[g, k] = V[j]
        return total, self.inst.demand(y), y

    def cost(self, y: np.ndarray) -> float:
        total = self.constant
        for b, (g, k) in enumerate(self.blocks.pairs):
            total += float(self.blocks.cost[b] @ y[g, k]) + float(self._hinge(b, y[g, k] @ self.levels))
        return total


@dataclass
class DualOutcome:
    """Normalised result of :func:`run_dual`."""

    upper: float
    lower: float
    t: np.ndarray
    e: np.ndarray
    y: np.ndarray | None
    multipliers: np.ndarray
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    active: np.ndarray | None = None  # pool columns used by the best master solution

    @property
    def gap(self) -> float:
        return (self.upper - self.lower) / max(abs(self.upper), 1e-300)


def dual_value(inst: Instance, mu: np.ndarray, selector):
    """Normalised dual function value, a subgradient and the inner minimiser."""
    power, value = stream_values(mu, inst.norm_gains)
    t, e, v = inner_solution(power, value)
    sel_value, demand, y = selector.lagrangian(mu)
    D = float(inst.probs @ v) + sel_value
    s = demand - normalized_rates(inst, t, e)
    return D, s, t, e, y, demand, power, value


def _add_priced_columns(pool: ColumnPool, power, value, time_duals, probs, per_state: int):
    # reduced cost of column (h, g, l, p*) is q_h * phi - pi_h, pi_h <= 0
    H = value.shape[0]
    rc = (probs[:, None, None] * value - time_duals[:, None, None]).reshape(H, -1)
    thresh = -1e-12 * max(1.0, np.abs(value).max())
    k = min(per_state, rc.shape[1])
    best = np.argsort(rc, axis=1, kind="stable")[:, :k]
    GL = value.shape[1:]
    added = 0
    for h in range(H):
        for j in best[h]:
            if rc[h, j] < thresh:
                g, l = np.unravel_index(j, GL)
                added += pool.add(h, g, l, power[h, g, l])
    return added


def run_dual(inst: Instance, master: Master, selector, settings: DualSettings, pool: ColumnPool,
             lam0: np.ndarray | None = None) -> DualOutcome:
    """Projected subgradient ascent on the partial dual with LP-based primal recovery.

    Each iteration:

    1. the restricted master LP over the column pool yields a feasible primal
       point (upper bound) and its rate-row prices;
    2. the per-state inner problems are solved at the subgradient iterate
       and at the LP prices; both give valid lower bounds and their
       minimisers join the pool;
    3. the diminishing subgradient step is taken from whichever of the two
       multiplier vectors has the larger dual value.

    The ergodic (step-weighted) average of the inner minimisers at the
    subgradient iterates, repaired by scaling energies, is a further primal
    candidate checked at the end.
    """
    H, G, L, K = inst.shape
    on_rows = np.zeros((G, L, K), dtype=bool)
    on_rows[master.rows[:, 0], master.rows[:, 1], master.rows[:, 2]] = True
    lam = np.zeros((G, L, K)) if lam0 is None else np.where(on_rows, np.maximum(lam0, 0.0), 0.0)
    best_lam = lam.copy()
    lower, upper = -np.inf, np.inf
    best = None
    avg = None
    weight = 0.0
    history = []
    converged = False
    n = 0
    for n in range(1, settings.max_iter + 1):
        sol = master.solve(pool)
        if sol is None:
            raise DivergenceError("restricted master LP failed", {"iteration": n, "columns": len(pool)})
        if sol.value < upper:
            upper = sol.value
            t, e = master.allocation(pool, sol.tau)
            best = (t, e, sol.y)
            active = np.flatnonzero(sol.tau > 0)

        evaluated = []
        for cand in (lam, sol.prices):
            D, s, t_in, e_in, y_in, dem, power, value = dual_value(inst, cand, selector)
            _add_priced_columns(pool, power, value, sol.time_duals, inst.probs, settings.columns_per_state)
            evaluated.append((D, cand, s, t_in, e_in, dem))
            if D > lower:
                lower = D
                best_lam = cand.copy()
        if settings.check_weak_duality:
            top = max(ev[0] for ev in evaluated)
            if top > upper + 1e-9 * abs(upper) + 1e-12:
                raise AssertionError(f"weak duality violated: dual {top} > primal {upper}")

        eta = settings.step_a / (settings.step_b + n)
        _, _, _, t_sub, e_sub, dem_sub = evaluated[0]
        if avg is None:
            avg = [np.zeros_like(t_sub), np.zeros_like(e_sub), np.zeros_like(dem_sub)]
        avg[0] += eta * t_sub
        avg[1] += eta * e_sub
        avg[2] += eta * dem_sub
        weight += eta

        gap = (upper - lower) / max(abs(upper), 1e-300)
        history.append({
            "iteration": n,
            "dual": evaluated[0][0],
            "dual_at_prices": evaluated[1][0],
            "best_dual": lower,
            "primal": upper,
            "gap": gap,
            "columns": len(pool),
        })
        if gap <= settings.tol:
            converged = True
            break

        _, center, s = max(evaluated, key=lambda ev: ev[0])[:3]
        s = np.where(on_rows, s, 0.0)
        norm = np.linalg.norm(s)
        if norm == 0:
            lam = center
            continue
        scale = max(np.linalg.norm(center), 1.0) / norm
        lam = np.maximum(center + eta * scale * s, 0.0)
        if not np.all(np.isfinite(lam)):
            raise DivergenceError("multipliers diverged", {"iteration": n})

    t_best, e_best, y_best = best
    if isinstance(selector, FixedDemand) and weight > 0:
        t_avg = avg[0] / weight
        t_avg /= np.maximum(t_avg.sum(axis=(1, 2), keepdims=True), 1.0)
        e_avg = _repair(inst, selector.demand, t_avg, avg[1] / weight)
        if e_avg is not None:
            value = float(inst.probs @ e_avg.sum(axis=(1, 2)))
            if value < upper:
                upper = value
                t_best, e_best = t_avg, e_avg
                active = None
    return DualOutcome(upper, lower, t_best, e_best, y_best, best_lam, n, converged, history, active)


def solve_dual(inst: Instance, y: np.ndarray, settings: DualSettings | None = None,
               pool: ColumnPool | None = None, lam0: np.ndarray | None = None) -> SolveResult:
    """Minimum average transmission energy for fixed selectors ``y[g, k, l]``.

    See :func:`run_dual` for the iteration. The result carries the column
    pool in ``info['pool']`` and the final normalised multipliers in
    ``info['multipliers']`` so later solves can warm start.
    """
    settings = settings or DualSettings()
    H, G, L, K = inst.shape
    y = np.asarray(y, dtype=float)
    demand = inst.demand(y) * inst.members[:, None, :]
    E0 = inst.energy_unit
    pool = pool if pool is not None else ColumnPool()

    rows = np.argwhere(demand > 0)
    if rows.size == 0:
        return SolveResult(0.0, 0.0, Allocation.zeros(H, G, L), dual_value=0.0, gap=0.0, iterations=0,
                           info={"pool": pool, "multipliers": np.zeros((G, L, K))})

    _initial_columns(inst, demand, pool)
    master = Master(inst, rows, demand=demand[rows[:, 0], rows[:, 1], rows[:, 2]])
    out = run_dual(inst, master, FixedDemand(demand), settings, pool, lam0)
    if not out.converged:
        log.warning("dual loop stopped at the iteration cap with relative gap %.3g", out.gap)

    T = inst.phys.frame_duration
    alloc = Allocation(T * out.t, E0 * out.e)
    energy = float(inst.probs @ alloc.e.sum(axis=(1, 2)))
    history = [{**rec, "dual": E0 * rec["dual"], "dual_at_prices": E0 * rec["dual_at_prices"],
                "best_dual": E0 * rec["best_dual"], "primal": E0 * rec["primal"]} for rec in out.history]
    return SolveResult(
        objective=energy,
        energy=energy,
        allocation=alloc,
        dual_value=E0 * out.lower,
        gap=out.gap,
        iterations=out.iterations,
        converged=out.converged,
        history=history,
        info={"pool": pool, "multipliers": out.multipliers, "lambda": inst.to_multipliers(out.multipliers),
              "active": out.active},
    )
