"""Energy-minimal wireless multicast of tiled, multi-quality 360-degree video.

Users watching the same tiles can share one multicast stream; the library
partitions the tiles by the set of users that view them, picks a quality
level for every (tile group, user) pair and finds the airtime and energy
split over channel states that minimises the expected energy per frame.
"""

from .channel import CapacityError, ChannelModel, PhysicalConfig, SystemStateTable, enumerate_system_states
from .problems import (
    ALL_CASES, CASE_NAMES, CaseSpec, baseline_max_quality, baseline_unicast, check_ordering,
    fix_y_absolute, solve_all_cases, solve_case,
)
from .results import Allocation, DivergenceError, InvalidSelectionError, QualitySelection, SolveResult, SolverError
from .scenario import Scenario, UserCompute
from .tiling import FoVRequest, Partition, VideoGeometry, build_partition, fov_tiles, shared_levels

__version__ = "0.1.0"

__all__ = [
    "CapacityError", "ChannelModel", "PhysicalConfig", "SystemStateTable", "enumerate_system_states",
    "ALL_CASES", "CASE_NAMES", "CaseSpec", "baseline_max_quality", "baseline_unicast", "check_ordering",
    "fix_y_absolute", "solve_all_cases", "solve_case",
    "Allocation", "DivergenceError", "InvalidSelectionError", "QualitySelection", "SolveResult", "SolverError",
    "Scenario", "UserCompute",
    "FoVRequest", "Partition", "VideoGeometry", "build_partition", "fov_tiles", "shared_levels",
]
