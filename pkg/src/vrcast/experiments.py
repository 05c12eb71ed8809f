"""Random scenario generation and Monte-Carlo sweeps over one parameter.

Realisations use common random numbers: realisation ``j`` draws one
uniform per user for the viewing direction and one for the requirement
from a stream seeded by ``(seed, j)`` only, and every swept value maps
those same uniforms to its own scenario. Differences between swept values
then reflect the parameter rather than fresh sampling noise.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .channel import ChannelModel, PhysicalConfig
from .problems import CASE_NAMES, CaseSpec, baseline_max_quality, baseline_unicast, solve_all_cases, solve_case
from .results import SolverError
from .scenario import Scenario, UserCompute
from .solver.ccp import CcpSettings
from .tiling import FoVRequest, VideoGeometry, fov_tiles

log = logging.getLogger(__name__)

PARAMS = ("K", "rbar", "gamma", "delta")
SCHEMES = ("wo-a", "wo-r", "w-a", "w-r", "unicast", "baseline-w-a", "baseline-w-r")
CSV_HEADER = ("param", "scheme", "mean_energy_J", "std_energy_J", "n_ok", "n_failed")
WORKERS_ENV = "VRCAST_WORKERS"

DEFAULT_RATES = (6.66e5, 16.18e5, 24.29e5, 32.01e5, 40.23e5)
DEFAULT_DIRECTIONS = tuple((lon, 0.0) for lon in (0.0, 72.0, 144.0, 216.0, 288.0))


def zipf_probs(gamma: float, count: int) -> np.ndarray:
    """Popularity ``v^-gamma / sum_u u^-gamma`` of ranks ``v = 1..count``."""
    if count < 1:
        raise ValueError("need at least one rank")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    logw = -gamma * np.log(np.arange(1, count + 1, dtype=float))
    w = np.exp(logw - logw.max())
    return w / w.sum()


@dataclass(frozen=True)
class ScenarioParams:
    """Everything :func:`generate_scenario` needs besides the random draws."""

    users: int = 3
    gamma: float = 0.0
    delta: int = 1
    r_lb: int = 1
    r_ub: int = 5
    geometry: VideoGeometry = field(default_factory=lambda: VideoGeometry(18, 36, DEFAULT_RATES))
    directions: tuple[tuple[float, float], ...] = DEFAULT_DIRECTIONS
    fov_span: tuple[float, float] = (100.0, 100.0)
    margin: float = 10.0
    physical: PhysicalConfig = field(default_factory=lambda: PhysicalConfig.from_temperature(150e6, 0.05, 300.0))
    channel_states: tuple[tuple[float, float], ...] = ((1e-6, 0.5), (2e-6, 0.5))
    transcode_power: float = 2e-5
    beta: float = 1.0

    def __post_init__(self):
        if self.users < 1:
            raise ValueError("need at least one user")
        if not 1 <= self.r_lb <= self.r_ub <= self.geometry.levels:
            raise ValueError(f"need 1 <= r_lb <= r_ub <= L, got [{self.r_lb}, {self.r_ub}]")
        if not self.directions:
            raise ValueError("need at least one viewing direction")


@dataclass(frozen=True)
class ScenarioDraw:
    """Viewing-direction rank (1-based) and requirement of every user."""

    directions: tuple[int, ...]
    requirements: tuple[int, ...]


def draw_uniforms(seed: int, realization: int, users: int) -> np.ndarray:
    """(users, 2) uniforms of one realisation; a prefix of a longer draw is the same."""
    rng = np.random.default_rng([seed, realization])
    return rng.random((users, 2))


def map_draw(params: ScenarioParams, uniforms: np.ndarray) -> ScenarioDraw:
    """Inverse-CDF mapping of per-user uniforms to a direction and a requirement."""
    u = uniforms[: params.users]
    cdf = np.cumsum(zipf_probs(params.gamma, len(params.directions)))
    v = np.minimum(np.searchsorted(cdf, u[:, 0], side="right"), len(cdf) - 1) + 1
    span = params.r_ub - params.r_lb + 1
    r = params.r_lb + np.minimum((u[:, 1] * span).astype(int), span - 1)
    return ScenarioDraw(tuple(int(x) for x in v), tuple(int(x) for x in r))


def build_scenario(params: ScenarioParams, draw: ScenarioDraw) -> Scenario:
    geo = params.geometry
    requests = tuple(
        FoVRequest(k + 1, fov_tiles(params.directions[v - 1], params.fov_span, params.margin, geo), r)
        for k, (v, r) in enumerate(zip(draw.directions, draw.requirements))
    )
    K = len(requests)
    return Scenario(
        geometry=geo,
        requests=requests,
        physical=params.physical,
        channel=ChannelModel.iid(params.channel_states, K),
        compute=UserCompute.uniform(params.transcode_power, K),
        delta=params.delta,
        beta=params.beta,
    )


def generate_scenario(params: ScenarioParams, rng: np.random.Generator) -> Scenario:
    """Draw directions (Zipf) and requirements (uniform on ``r_lb..r_ub``) and assemble the scenario."""
    return build_scenario(params, map_draw(params, rng.random((params.users, 2))))


def apply_param(params: ScenarioParams, name: str, value) -> ScenarioParams:
    """Set the swept parameter; ``rbar`` keeps the width ``r_ub - r_lb``."""
    if name == "K":
        return replace(params, users=int(value))
    if name == "gamma":
        return replace(params, gamma=float(value))
    if name == "delta":
        return replace(params, delta=int(value))
    if name == "rbar":
        half = (params.r_ub - params.r_lb) / 2.0
        lo = float(value) - half
        if abs(lo - round(lo)) > 1e-9:
            raise ValueError(f"mean requirement {value} is not reachable with width {2 * half:g}")
        return replace(params, r_lb=int(round(lo)), r_ub=int(round(lo + 2 * half)))
    raise ValueError(f"unknown sweep parameter {name!r}; expected one of {PARAMS}")


@dataclass
class SweepSpec:
    """One Monte-Carlo sweep.

    ``base`` holds the fixed parameters; ``param`` names the one that takes
    each entry of ``values``. ``ccp`` configures the three mixed cases.
    """

    param: str
    values: Sequence
    base: ScenarioParams = field(default_factory=ScenarioParams)
    realizations: int = 50
    seed: int = 0
    schemes: Sequence[str] = SCHEMES
    ccp: CcpSettings = field(default_factory=lambda: CcpSettings(restarts=3))

    def __post_init__(self):
        if self.param not in PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}; expected one of {PARAMS}")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}; expected a subset of {SCHEMES}")
        for v in self.values:
            apply_param(self.base, self.param, v)

    def max_users(self) -> int:
        if self.param == "K":
            return max(int(v) for v in self.values)
        return self.base.users


@dataclass(frozen=True)
class SweepRow:
    param: float
    scheme: str
    mean_energy: float
    std_energy: float
    n_ok: int
    n_failed: int

    def as_csv(self) -> list[str]:
        return [repr(self.param), self.scheme, repr(self.mean_energy), repr(self.std_energy),
                str(self.n_ok), str(self.n_failed)]


def run_scheme(scheme: str, scenario: Scenario, ccp: CcpSettings, rng: np.random.Generator) -> float:
    """Objective (J/frame) of one scheme on one scenario."""
    if scheme == "unicast":
        return baseline_unicast(scenario, ccp.polish_settings()).objective
    if scheme == "baseline-w-a":
        return baseline_max_quality(scenario, "absolute", ccp.polish_settings()).objective
    if scheme == "baseline-w-r":
        return baseline_max_quality(scenario, "relative", ccp.polish_settings()).objective
    return solve_case(CaseSpec.from_name(scheme), scenario, ccp, rng=rng).objective


def _job(spec: SweepSpec, value, realization: int) -> dict[str, float | None]:
    params = apply_param(spec.base, spec.param, value)
    uniforms = draw_uniforms(spec.seed, realization, spec.max_users())
    scenario = build_scenario(params, map_draw(params, uniforms))
    out: dict[str, float | None] = {}
    cases = [s for s in spec.schemes if s in CASE_NAMES]
    if cases:
        try:
            solved = solve_all_cases(scenario, spec.ccp, np.random.default_rng([spec.seed, realization]), cases)
            out.update({name: res.objective for name, res in solved.items()})
        except SolverError as exc:
            log.warning("%s=%s realization %d: joint case solve failed (%s); solving cases separately",
                        spec.param, value, realization, exc)
    for scheme in spec.schemes:
        if scheme in out:
            continue
        rng = np.random.default_rng([spec.seed, realization, SCHEMES.index(scheme)])
        try:
            out[scheme] = run_scheme(scheme, scenario, spec.ccp, rng)
        except SolverError as exc:
            log.warning("%s=%s realization %d scheme %s failed: %s", spec.param, value, realization, scheme, exc)
            out[scheme] = None
    return {scheme: out[scheme] for scheme in spec.schemes}


def _job_star(args):
    return _job(*args)


def worker_count(requested: int | None = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list[SweepRow]:
    """Mean and standard deviation of every scheme at every swept value.

    Failed solves are counted in ``n_failed`` and left out of the mean.
    Results do not depend on ``workers``.
    """
    jobs = [(spec, v, j) for v in spec.values for j in range(spec.realizations)]
    n = worker_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_job_star, jobs, chunksize=max(1, len(jobs) // (4 * n))))
    else:
        results = [_job_star(j) for j in jobs]

    rows = []
    for i, value in enumerate(spec.values):
        chunk = results[i * spec.realizations:(i + 1) * spec.realizations]
        for scheme in spec.schemes:
            vals = np.array([r[scheme] for r in chunk if r[scheme] is not None], dtype=float)
            n_ok = len(vals)
            mean = float(vals.mean()) if n_ok else math.nan
            std = float(vals.std(ddof=1)) if n_ok > 1 else 0.0 if n_ok else math.nan
            rows.append(SweepRow(float(value), scheme, mean, std, n_ok, len(chunk) - n_ok))
    return rows


def write_csv(rows: Sequence[SweepRow], path: str | os.PathLike) -> None:
    """Write the sweep table atomically (temporary file, then rename)."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".sweep-", suffix=".csv", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow(row.as_csv())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
