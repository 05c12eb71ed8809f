"""Containers shared by the solvers and the problem layer."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


class SolverError(RuntimeError):
    """A solver could not produce an acceptable solution.

    ``diagnostics`` carries whatever the solver knew when it gave up.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DivergenceError(SolverError):
    """Multipliers or energies blew up; the instance is numerically infeasible."""


class InvalidSelectionError(ValueError):
    """A quality selection violates the playback/transmission coupling."""


@dataclass
class Allocation:
    """Per-state airtime ``t[h, g, l]`` (s) and energy ``e[h, g, l]`` (J per frame).

    Axes: system state, group (in partition order), quality level (0-based).
    """

    t: np.ndarray
    e: np.ndarray

    @property
    def power(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.t > 0, self.e / np.where(self.t > 0, self.t, 1.0), 0.0)

    @classmethod
    def zeros(cls, states: int, groups: int, levels: int) -> "Allocation":
        return cls(np.zeros((states, groups, levels)), np.zeros((states, groups, levels)))


@dataclass
class QualitySelection:
    """Playback levels ``x[g, k]`` and transmission selectors ``y[g, k, l]``.

    Levels are 1-based values; ``y`` is indexed by 0-based level position.
    Entries for users outside a group are zero.
    """

    x: np.ndarray
    y: np.ndarray

    def transmitted(self) -> np.ndarray:
        """``sum_l l * y[g, k, l]`` for every (group, user)."""
        levels = np.arange(1, self.y.shape[-1] + 1)
        return self.y @ levels


@dataclass
class SolveResult:
    """Outcome of one solve.

    ``objective`` is the full weighted objective in Joules per frame,
    ``energy`` its average transmission part and ``transcoding`` the
    beta-weighted transcoding part. ``dual_value`` is the best Lagrangian
    lower bound of the continuous (fixed-selection) problem that produced
    ``allocation``.
    """

    objective: float
    energy: float
    allocation: Allocation
    selection: QualitySelection | None = None
    transcoding: float = 0.0
    dual_value: float = float("nan")
    gap: float = 0.0
    iterations: int = 0
    converged: bool = True
    penalty: float = 0.0
    label: str = ""
    history: list[dict[str, Any]] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)
