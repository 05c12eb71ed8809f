"""A complete streaming scenario: video, users, channels and device constants."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .channel import DEFAULT_STATE_CAP, ChannelModel, PhysicalConfig, SystemStateTable, enumerate_system_states
from .solver.dual import Instance
from .tiling import FoVRequest, Partition, VideoGeometry, build_partition


@dataclass(frozen=True)
class UserCompute:
    """Per-user transcoding power ``P_k`` (W) for lowering one tile by one level."""

    power: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "power", tuple(float(p) for p in self.power))
        if any(p < 0 for p in self.power):
            raise ValueError("transcoding power must be non-negative")

    @classmethod
    def uniform(cls, power: float, users: int) -> "UserCompute":
        return cls((power,) * users)

    @classmethod
    def from_cpu(cls, kappa: Sequence[float], cycles: float, frame_rate: float, cpu_hz: Sequence[float]):
        """``P_k = kappa_k * c * R * f_k^2`` from chip coefficient, cycles per level step, frame rate and CPU speed."""
        if len(kappa) != len(cpu_hz):
            raise ValueError("kappa and cpu_hz need one entry per user")
        return cls(tuple(k * cycles * frame_rate * f**2 for k, f in zip(kappa, cpu_hz)))


@dataclass(frozen=True)
class Scenario:
    """Everything a case solve needs.

    Users are indexed by their position in ``requests``; ``channel`` and
    ``compute`` follow the same order.
    """

    geometry: VideoGeometry
    requests: tuple[FoVRequest, ...]
    physical: PhysicalConfig
    channel: ChannelModel
    compute: UserCompute
    delta: int = 1
    beta: float = 1.0
    state_cap: int = field(default=DEFAULT_STATE_CAP, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        K = len(self.requests)
        if self.channel.users != K or len(self.compute.power) != K:
            raise ValueError(f"channel and compute must describe {K} users")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        for req in self.requests:
            if req.requirement > self.geometry.levels:
                raise ValueError(f"user {req.user}: requirement {req.requirement} exceeds L={self.geometry.levels}")
            bad = [t for t in req.tiles if not self.geometry.contains(t)]
            if bad:
                raise ValueError(f"user {req.user}: tiles outside the grid: {sorted(bad)[:3]}")

    @property
    def users(self) -> list[int]:
        return [r.user for r in self.requests]

    @property
    def requirements(self) -> np.ndarray:
        return np.array([r.requirement for r in self.requests], dtype=int)

    @property
    def levels(self) -> int:
        return self.geometry.levels

    @cached_property
    def partition(self) -> Partition:
        return build_partition(self.requests)

    @cached_property
    def states(self) -> SystemStateTable:
        return enumerate_system_states(self.channel, self.state_cap)

    @cached_property
    def members(self) -> np.ndarray:
        """(G, K) membership mask in partition order."""
        index = {u: k for k, u in enumerate(self.users)}
        out = np.zeros((len(self.partition), len(self.requests)), dtype=bool)
        for g, (who, _) in enumerate(self.partition):
            out[g, [index[u] for u in who]] = True
        return out

    @cached_property
    def instance(self) -> Instance:
        return Instance.from_table(self.states, self.partition.sizes, self.members,
                                   self.geometry.encoding_rates, self.physical)

    def pairs(self) -> np.ndarray:
        """(B, 2) array of (group, user) index pairs, group-major."""
        return np.argwhere(self.members).reshape(-1, 2)
