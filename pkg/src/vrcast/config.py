"""JSON scenario files and result documents.

A scenario file describes one multicast instance (geometry, radio, users,
smoothness tolerance, transcoding cost, channel statistics) plus solver
knobs and, optionally, the fixed parameters of a Monte-Carlo sweep. Result
documents store a solved case with every number at full double precision,
so a reloaded document reproduces the stored objective exactly.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from typing import Any

import jsonschema
import numpy as np

from .channel import ChannelModel, PhysicalConfig
from .experiments import DEFAULT_DIRECTIONS, SCHEMES, ScenarioParams
from .problems import CASE_NAMES
from .results import Allocation, QualitySelection, SolveResult
from .scenario import Scenario, UserCompute
from .solver.ccp import CcpSettings
from .solver.dual import DualSettings
from .tiling import FoVRequest, VideoGeometry, fov_tiles

_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_pair = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}
_states = {"type": "array", "minItems": 1, "items": _pair}

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["geometry", "physical"],
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "required": ["M", "N", "encoding_rates"],
            "additionalProperties": False,
            "properties": {
                "M": {"type": "integer", "minimum": 1},
                "N": {"type": "integer", "minimum": 1},
                "L": {"type": "integer", "minimum": 1},
                "encoding_rates": {"type": "array", "minItems": 1, "items": _pos},
                "frame_rate": _pos,
            },
        },
        "physical": {
            "type": "object",
            "required": ["bandwidth_hz", "frame_s"],
            "additionalProperties": False,
            "properties": {"bandwidth_hz": _pos, "frame_s": _pos, "noise_w": _pos, "temperature_k": _pos},
            "oneOf": [{"required": ["noise_w"]}, {"required": ["temperature_k"]}],
        },
        "fov": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"span_deg": _pair, "margin_deg": _nonneg},
        },
        "users": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "r"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "r": {"type": "integer", "minimum": 1},
                    "direction_deg": _pair,
                    "tiles": {"type": "array", "minItems": 1,
                              "items": {"type": "array", "items": {"type": "integer", "minimum": 1},
                                        "minItems": 2, "maxItems": 2}},
                },
                "oneOf": [{"required": ["direction_deg"]}, {"required": ["tiles"]}],
            },
        },
        "smoothness": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"delta": {"type": "integer", "minimum": 0}},
        },
        "transcoding": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "beta": _nonneg,
                "p_k_w": {"oneOf": [_nonneg, {"type": "array", "items": _nonneg, "minItems": 1}]},
                "cpu": {
                    "type": "object",
                    "required": ["kappa", "cycles", "f_hz"],
                    "additionalProperties": False,
                    "properties": {
                        "kappa": {"oneOf": [_nonneg, {"type": "array", "items": _nonneg}]},
                        "cycles": _nonneg,
                        "f_hz": {"oneOf": [_nonneg, {"type": "array", "items": _nonneg}]},
                    },
                },
            },
            "not": {"required": ["p_k_w", "cpu"]},
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "per_user_states": {"type": "array", "minItems": 1, "items": _states},
                "states": _states,
            },
            "not": {"required": ["per_user_states", "states"]},
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dual_tol": _pos,
                "dual_max_iter": {"type": "integer", "minimum": 1},
                "step_size": {"type": "object", "additionalProperties": False,
                              "properties": {"a": _pos, "b": _nonneg}},
                "rho": _pos,
                "restarts": {"type": "integer", "minimum": 1},
                "ccp_tol": _pos,
                "ccp_max_iter": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "state_cap": {"type": "integer", "minimum": 1},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "users": {"type": "integer", "minimum": 1},
                "gamma": _nonneg,
                "r_lb": {"type": "integer", "minimum": 1},
                "r_ub": {"type": "integer", "minimum": 1},
                "directions_deg": {"type": "array", "minItems": 1, "items": _pair},
                "realizations": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "schemes": {"type": "array", "minItems": 1, "items": {"enum": list(SCHEMES)}},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid scenario file; ``path`` names the offending field (dotted)."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path
        self.message = message


def _dotted(parts) -> str:
    return ".".join(str(p) for p in parts)


def validate(doc: Any) -> None:
    """Check ``doc`` against the scenario schema; raise :class:`ConfigError` naming the field."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    error = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if error is None:
        return
    path = list(error.absolute_path)
    if error.validator == "required" and isinstance(error.instance, dict):
        missing = [name for name in error.validator_value if name not in error.instance]
        if missing:
            path.append(missing[0])
            raise ConfigError(_dotted(path), "required field is missing")
    raise ConfigError(_dotted(path), error.message)


def load_document(path: str | os.PathLike) -> dict:
    """Read and validate a scenario file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"not valid JSON ({exc})") from None
    validate(doc)
    return doc


def _geometry(doc: dict) -> VideoGeometry:
    g = doc["geometry"]
    rates = tuple(float(r) for r in g["encoding_rates"])
    if "L" in g and g["L"] != len(rates):
        raise ConfigError("geometry.L", f"L={g['L']} but {len(rates)} encoding rates are given")
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ConfigError("geometry.encoding_rates", "encoding rates must be strictly increasing")
    try:
        return VideoGeometry(g["M"], g["N"], rates, float(g.get("frame_rate", 30.0)))
    except ValueError as exc:
        raise ConfigError("geometry", str(exc)) from None


def _physical(doc: dict) -> PhysicalConfig:
    p = doc["physical"]
    if "noise_w" in p:
        return PhysicalConfig(float(p["bandwidth_hz"]), float(p["frame_s"]), float(p["noise_w"]))
    return PhysicalConfig.from_temperature(float(p["bandwidth_hz"]), float(p["frame_s"]), float(p["temperature_k"]))


def _fov(doc: dict) -> tuple[tuple[float, float], float]:
    f = doc.get("fov", {})
    span = tuple(float(v) for v in f.get("span_deg", (100.0, 100.0)))
    return span, float(f.get("margin_deg", 10.0))


def _per_user(value, users: int, path: str) -> list[float]:
    if isinstance(value, list):
        if len(value) != users:
            raise ConfigError(path, f"expected {users} entries (one per user), got {len(value)}")
        return [float(v) for v in value]
    return [float(value)] * users


def _compute(doc: dict, users: int) -> UserCompute:
    t = doc.get("transcoding", {})
    if "cpu" in t:
        cpu = t["cpu"]
        return UserCompute.from_cpu(_per_user(cpu["kappa"], users, "transcoding.cpu.kappa"), float(cpu["cycles"]),
                                    _geometry(doc).frame_rate, _per_user(cpu["f_hz"], users, "transcoding.cpu.f_hz"))
    return UserCompute(tuple(_per_user(t.get("p_k_w", 2e-5), users, "transcoding.p_k_w")))


def _channel(doc: dict, users: int) -> ChannelModel:
    c = doc.get("channel", {"states": [[1e-6, 0.5], [2e-6, 0.5]]})
    try:
        if "per_user_states" in c:
            if len(c["per_user_states"]) != users:
                raise ConfigError("channel.per_user_states",
                                  f"expected {users} state lists (one per user), got {len(c['per_user_states'])}")
            return ChannelModel(tuple(tuple((float(h), float(q)) for h, q in s) for s in c["per_user_states"]))
        return ChannelModel.iid([(float(h), float(q)) for h, q in c["states"]], users)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("channel.per_user_states" if "per_user_states" in c else "channel.states", str(exc)) from None


def scenario_from_dict(doc: dict) -> Scenario:
    """Build a :class:`Scenario` from a validated document with a ``users`` list."""
    if "users" not in doc:
        raise ConfigError("users", "required field is missing")
    geo = _geometry(doc)
    span, margin = _fov(doc)
    requests = []
    for i, u in enumerate(doc["users"]):
        if u["r"] > geo.levels:
            raise ConfigError(f"users.{i}.r", f"requirement {u['r']} exceeds the {geo.levels} quality levels")
        if "tiles" in u:
            tiles = frozenset((int(m), int(n)) for m, n in u["tiles"])
            bad = [t for t in tiles if not geo.contains(t)]
            if bad:
                raise ConfigError(f"users.{i}.tiles", f"tile {bad[0]} lies outside the {geo.rows}x{geo.cols} grid")
        else:
            tiles = fov_tiles(tuple(u["direction_deg"]), span, margin, geo)
        requests.append(FoVRequest(int(u["id"]), tiles, int(u["r"])))
    K = len(requests)
    t = doc.get("transcoding", {})
    solver = doc.get("solver", {})
    try:
        return Scenario(
            geometry=geo,
            requests=tuple(requests),
            physical=_physical(doc),
            channel=_channel(doc, K),
            compute=_compute(doc, K),
            delta=int(doc.get("smoothness", {}).get("delta", 1)),
            beta=float(t.get("beta", 1.0)),
            **({"state_cap": solver["state_cap"]} if "state_cap" in solver else {}),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("users", str(exc)) from None


def load_scenario(path: str | os.PathLike) -> Scenario:
    return scenario_from_dict(load_document(path))


def solver_settings(doc: dict) -> CcpSettings:
    """Solver knobs of the document on top of the library defaults."""
    s = doc.get("solver", {})
    base = CcpSettings()
    dual = DualSettings(
        tol=float(s.get("dual_tol", base.dual.tol)),
        max_iter=int(s.get("dual_max_iter", base.dual.max_iter)),
        step_a=float(s.get("step_size", {}).get("a", base.dual.step_a)),
        step_b=float(s.get("step_size", {}).get("b", base.dual.step_b)),
    )
    return CcpSettings(
        rho=float(s.get("rho", base.rho)),
        restarts=int(s.get("restarts", base.restarts)),
        tol=float(s.get("ccp_tol", base.tol)),
        max_iter=int(s.get("ccp_max_iter", base.max_iter)),
        dual=dual,
    )


def seed(doc: dict) -> int:
    """Seed of all randomised solver behaviour (0 when absent)."""
    return int(doc.get("solver", {}).get("seed", 0))


def sweep_params(doc: dict) -> ScenarioParams:
    """Fixed sweep parameters: ``experiment`` section plus the shared scenario sections."""
    e = doc.get("experiment", {})
    users = int(e.get("users", len(doc.get("users", [])) or 3))
    c = doc.get("channel", {})
    if "per_user_states" in c:
        raise ConfigError("channel.per_user_states", "sweeps draw users afresh; give i.i.d. 'states' instead")
    p = doc.get("transcoding", {}).get("p_k_w", 2e-5)
    if isinstance(p, list) or "cpu" in doc.get("transcoding", {}):
        raise ConfigError("transcoding", "sweeps need one scalar p_k_w shared by all users")
    span, margin = _fov(doc)
    try:
        return ScenarioParams(
            users=users,
            gamma=float(e.get("gamma", 0.0)),
            delta=int(doc.get("smoothness", {}).get("delta", 1)),
            r_lb=int(e.get("r_lb", 1)),
            r_ub=int(e.get("r_ub", len(doc["geometry"]["encoding_rates"]))),
            geometry=_geometry(doc),
            directions=tuple(tuple(float(v) for v in d) for d in e.get("directions_deg", DEFAULT_DIRECTIONS)),
            fov_span=span,
            margin=margin,
            physical=_physical(doc),
            channel_states=tuple((float(h), float(q)) for h, q in c.get("states", [[1e-6, 0.5], [2e-6, 0.5]])),
            transcode_power=float(p),
            beta=float(doc.get("transcoding", {}).get("beta", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError("experiment", str(exc)) from None


# ----------------------------------------------------------------------------------------------
# result documents


def result_to_dict(case: str, scenario: Scenario, result: SolveResult) -> dict:
    """Everything needed to re-check a solution, at full precision."""
    sel = result.selection
    partition = scenario.partition
    users = scenario.users
    groups = []
    for g, (members, tiles) in enumerate(partition):
        ks = [users.index(u) for u in sorted(members)]
        groups.append({
            "users": sorted(members),
            "tiles": len(tiles),
            "sent": {str(users[k]): int(np.argmax(sel.y[g, k])) + 1 for k in ks},
            "playback": {str(users[k]): int(sel.x[g, k]) for k in ks},
        })
    states = scenario.states
    return {
        "case": case,
        "objective": float(result.objective),
        "energy": float(result.energy),
        "transcoding": float(result.transcoding),
        "dual_value": None if result.dual_value is None else float(result.dual_value),
        "gap": None if result.gap is None else float(result.gap),
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "groups": groups,
        "states": [{"gains": [float(v) for v in h], "prob": float(q)} for h, q in zip(states.gains, states.probs)],
        "allocation": {"t": np.asarray(result.allocation.t).tolist(), "e": np.asarray(result.allocation.e).tolist()},
        "selection": {"x": np.asarray(sel.x).tolist(), "y": np.asarray(sel.y).tolist()},
    }


def result_from_dict(doc: dict) -> tuple[str, SolveResult]:
    """Inverse of :func:`result_to_dict` (diagnostic history is not stored)."""
    try:
        case = doc["case"]
        if case not in CASE_NAMES:
            raise ConfigError("case", f"unknown case {case!r}")
        alloc = Allocation(np.array(doc["allocation"]["t"], dtype=float), np.array(doc["allocation"]["e"], dtype=float))
        sel = QualitySelection(np.array(doc["selection"]["x"], dtype=float), np.array(doc["selection"]["y"], dtype=float))
        res = SolveResult(
            objective=float(doc["objective"]),
            energy=float(doc["energy"]),
            allocation=alloc,
            selection=sel,
            transcoding=float(doc.get("transcoding", 0.0)),
            dual_value=doc.get("dual_value"),
            gap=doc.get("gap"),
            iterations=int(doc.get("iterations", 0)),
            converged=bool(doc.get("converged", True)),
            label=case,
        )
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]), "required field is missing") from None
    return case, res


def write_atomic(text: str, path: str | os.PathLike) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=os.path.dirname(os.path.abspath(path)))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class LoadedConfig:
    """A validated document with its scenario (when users are given) and solver settings."""

    document: dict
    settings: CcpSettings
    seed: int

    @classmethod
    def read(cls, path: str | os.PathLike) -> "LoadedConfig":
        doc = load_document(path)
        return cls(doc, solver_settings(doc), seed(doc))

    def scenario(self) -> Scenario:
        return scenario_from_dict(self.document)
