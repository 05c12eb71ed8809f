"""Finite channel state space, system-state table and physical-layer constants."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

BOLTZMANN = 1.38e-23  # J/K

DEFAULT_STATE_CAP = 10**6


class CapacityError(RuntimeError):
    """Raised when an enumeration would exceed its configured size cap."""


@dataclass(frozen=True)
class PhysicalConfig:
    """Bandwidth ``B`` (Hz), frame duration ``T`` (s) and receiver noise power ``n0`` (W)."""

    bandwidth: float
    frame_duration: float
    noise_power: float

    def __post_init__(self):
        for name in ("bandwidth", "frame_duration", "noise_power"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @classmethod
    def from_temperature(cls, bandwidth: float, frame_duration: float, temperature: float = 300.0):
        """Thermal noise ``n0 = B k_B T0``."""
        return cls(bandwidth, frame_duration, bandwidth * BOLTZMANN * temperature)


@dataclass(frozen=True)
class ChannelModel:
    """Independent per-user channel distributions.

    ``per_user_states[k]`` lists ``(gain, probability)`` pairs for user ``k``
    (users in the same order as the scenario's requests).
    """

    per_user_states: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self):
        states = tuple(tuple((float(h), float(p)) for h, p in user) for user in self.per_user_states)
        object.__setattr__(self, "per_user_states", states)
        for k, user in enumerate(states):
            if not user:
                raise ValueError(f"user index {k} has no channel states")
            if any(h <= 0 for h, _ in user):
                raise ValueError(f"user index {k}: channel gains must be positive")
            if any(p < 0 for _, p in user):
                raise ValueError(f"user index {k}: probabilities must be non-negative")
            total = math.fsum(p for _, p in user)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"user index {k}: probabilities sum to {total}, not 1")

    @classmethod
    def iid(cls, states: Sequence[tuple[float, float]], users: int) -> "ChannelModel":
        return cls(tuple(tuple(states) for _ in range(users)))

    @property
    def users(self) -> int:
        return len(self.per_user_states)

    @property
    def size(self) -> int:
        return math.prod(len(s) for s in self.per_user_states)

    def subset(self, indices: Sequence[int]) -> "ChannelModel":
        return ChannelModel(tuple(self.per_user_states[i] for i in indices))


@dataclass(frozen=True)
class SystemStateTable:
    """Joint channel states ``h = (h_1..h_K)`` (rows of ``gains``) with probabilities."""

    gains: np.ndarray  # (H, K)
    probs: np.ndarray  # (H,)

    def __post_init__(self):
        gains = np.atleast_2d(np.asarray(self.gains, dtype=float))
        probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if gains.shape[0] != probs.shape[0]:
            raise ValueError("gains and probs disagree on the number of states")
        if np.any(gains <= 0):
            raise ValueError("channel gains must be positive")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise ValueError(f"state probabilities sum to {probs.sum()}, not 1")
        gains.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.probs.shape[0]

    @property
    def users(self) -> int:
        return self.gains.shape[1]

    def rows(self):
        return [(tuple(g), float(p)) for g, p in zip(self.gains, self.probs)]

    def marginal(self, k: int) -> dict[float, float]:
        out: dict[float, float] = {}
        for h, p in zip(self.gains[:, k], self.probs):
            out[float(h)] = out.get(float(h), 0.0) + float(p)
        return out


def enumerate_system_states(model: ChannelModel, cap: int = DEFAULT_STATE_CAP) -> SystemStateTable:
    """Cartesian product of the per-user state spaces with product probabilities.

    Rows follow ``itertools.product`` order over the users' state lists.
    """
    size = model.size
    if size > cap:
        raise CapacityError(f"system state space has {size} rows, above the cap of {cap}")
    if model.users == 0:
        return SystemStateTable(np.ones((1, 0)), np.ones(1))
    combos = list(itertools.product(*model.per_user_states))
    gains = np.array([[h for h, _ in combo] for combo in combos], dtype=float)
    probs = np.array([math.prod(p for _, p in combo) for combo in combos], dtype=float)
    return SystemStateTable(gains, probs)
