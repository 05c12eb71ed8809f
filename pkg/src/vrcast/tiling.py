"""Equirectangular tiling, per-user FoV tile sets and the tile partition.

Tiles are addressed as ``(m, n)`` pairs, 1-based, with ``m`` the row counted
from the top (latitude +90) and ``n`` the column counted eastwards from
longitude 0.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TileIndex = tuple[int, int]

_EPS = 1e-9

KINDS = ("natural", "relative", "transcoding")


@dataclass(frozen=True)
class VideoGeometry:
    """Tile grid and encoding ladder of a multi-quality tiled 360 video.

    Parameters
    ----------
    rows, cols : int
        Number of tile rows ``M`` and columns ``N``.
    encoding_rates : sequence of float
        Per-tile encoding rate of each quality level in bits/s, strictly
        increasing. Its length is the number of levels ``L``.
    frame_rate : float
        Video frame rate in frames/s.
    """

    rows: int
    cols: int
    encoding_rates: tuple[float, ...]
    frame_rate: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "encoding_rates", tuple(float(d) for d in self.encoding_rates))
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if not self.encoding_rates:
            raise ValueError("at least one quality level is required")
        rates = np.asarray(self.encoding_rates)
        if np.any(rates <= 0) or np.any(np.diff(rates) <= 0):
            raise ValueError("encoding rates must be positive and strictly increasing")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")

    @property
    def levels(self) -> int:
        return len(self.encoding_rates)

    @property
    def tile_width(self) -> float:
        return 360.0 / self.cols

    @property
    def tile_height(self) -> float:
        return 180.0 / self.rows

    def contains(self, tile: TileIndex) -> bool:
        m, n = tile
        return 1 <= m <= self.rows and 1 <= n <= self.cols


@dataclass(frozen=True)
class FoVRequest:
    """Tiles ``G_k`` needed by one user together with its quality requirement."""

    user: int
    tiles: frozenset[TileIndex]
    requirement: int

    def __post_init__(self):
        object.__setattr__(self, "tiles", frozenset(tuple(t) for t in self.tiles))
        if not self.tiles:
            raise ValueError(f"user {self.user}: tile set is empty")
        if self.requirement < 1:
            raise ValueError(f"user {self.user}: quality requirement must be >= 1")


@dataclass(frozen=True)
class Partition:
    """Requested tiles grouped by the exact set of users that need them.

    ``groups`` is a tuple of ``(user_set, tile_set)`` pairs ordered by group
    size and then lexicographically by the sorted user ids.
    """

    groups: tuple[tuple[frozenset[int], frozenset[TileIndex]], ...] = field(default=())

    def __len__(self):
        return len(self.groups)

    def __iter__(self):
        return iter(self.groups)

    @property
    def user_sets(self) -> list[frozenset[int]]:
        return [s for s, _ in self.groups]

    @property
    def sizes(self) -> list[int]:
        return [len(p) for _, p in self.groups]

    def tiles_of(self, users: Iterable[int]) -> frozenset[TileIndex]:
        key = frozenset(users)
        for s, p in self.groups:
            if s == key:
                return p
        raise KeyError(sorted(key))

    def describe(self) -> list[tuple[tuple[int, ...], tuple[TileIndex, ...]]]:
        """Canonical, sorted plain-tuple form (handy for comparisons and printing)."""
        return [(tuple(sorted(s)), tuple(sorted(p))) for s, p in self.groups]


def _group_key(users: frozenset[int]):
    return (len(users), tuple(sorted(users)))


def _overlapping(lo: float, hi: float, edges: np.ndarray) -> np.ndarray:
    """Indices of cells ``[edges[i], edges[i+1]]`` overlapping ``[lo, hi]`` with positive length."""
    return np.nonzero((edges[:-1] < hi - _EPS) & (edges[1:] > lo + _EPS))[0]


def fov_tiles(
    direction: tuple[float, float],
    fov_span: tuple[float, float],
    margin: float,
    geometry: VideoGeometry,
) -> frozenset[TileIndex]:
    """Tiles of the equirectangular grid covering a viewport plus a safety margin.

    The viewport is the axis-aligned rectangle centred at ``direction``
    (longitude, latitude in degrees) with half-extents ``span / 2 + margin``.
    Longitude wraps around the 0/360 seam; latitude is clamped to [-90, 90].
    Only tiles sharing a region of positive area with the rectangle count.
    """
    lon, lat = direction
    span_h, span_v = fov_span
    if not (0 < span_h <= 360 and 0 < span_v <= 180):
        raise ValueError(f"FoV span out of range: {fov_span}")
    if margin < 0:
        raise ValueError("margin must be non-negative")

    half_h = span_h / 2.0 + margin
    half_v = span_v / 2.0 + margin

    if 2 * half_h >= 360.0:
        cols = np.arange(geometry.cols)
    else:
        col_edges = np.linspace(0.0, 360.0, geometry.cols + 1)
        lo = (lon - half_h) % 360.0
        hi = lo + 2 * half_h
        cols = np.union1d(_overlapping(lo, hi, col_edges), _overlapping(lo - 360.0, hi - 360.0, col_edges))

    # rows counted from the north pole
    row_edges = np.linspace(-90.0, 90.0, geometry.rows + 1)
    south = max(lat - half_v, -90.0)
    north = min(lat + half_v, 90.0)
    rows_from_south = _overlapping(south, north, row_edges)
    rows = geometry.rows - rows_from_south

    return frozenset((int(m), int(n) + 1) for m in rows for n in cols)


def build_partition(requests: Sequence[FoVRequest]) -> Partition:
    """Group every requested tile by the exact set of users requesting it."""
    users = [r.user for r in requests]
    if len(set(users)) != len(users):
        raise ValueError("user ids must be distinct")
    owners: dict[TileIndex, set[int]] = defaultdict(set)
    for req in requests:
        for tile in req.tiles:
            owners[tile].add(req.user)
    grouped: dict[frozenset[int], set[TileIndex]] = defaultdict(set)
    for tile, who in owners.items():
        grouped[frozenset(who)].add(tile)
    ordered = sorted(grouped.items(), key=lambda item: _group_key(item[0]))
    return Partition(tuple((s, frozenset(p)) for s, p in ordered))


def shared_levels(requirements: Sequence[int], delta: int, levels: int, kind: str) -> set[int]:
    """Quality levels at which one transmission can serve every listed user.

    ``natural`` intersects the singletons ``{r_k}``, ``relative`` the windows
    ``[r_k, r_k + delta]`` and ``transcoding`` the intervals ``[r_k, L]``.
    An empty result means there is no multicast opportunity of that kind.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown opportunity kind {kind!r}; expected one of {KINDS}")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if not requirements:
        return set(range(1, levels + 1))
    if any(not 1 <= r <= levels for r in requirements):
        raise ValueError(f"requirements must lie in 1..{levels}")
    if kind == "natural":
        upper = [r for r in requirements]
    elif kind == "relative":
        upper = [min(r + delta, levels) for r in requirements]
    else:
        upper = [levels for _ in requirements]
    lo = max(requirements)
    hi = min(upper)
    return set(range(lo, hi + 1))
