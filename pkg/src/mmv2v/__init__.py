"""Capacity-aware many-to-many association of vehicles over 60 GHz V2V links."""
from .matching import Matching, SfInstance, SfOutcome, solve, verify_stability
from .scenario import Geometry, GeometryConfig, Kind, TraceSet, build_manhattan_grid, generate_traces
from .channel import LinkBudgetParams, McsTable
from .utility import PreferenceList, UtilityWeights
from .engine import EngineConfig, SimulationResult, TimeslotReport, World, run_scenario, run_timeslot

__all__ = [
    "Matching", "SfInstance", "SfOutcome", "solve", "verify_stability",
    "Geometry", "GeometryConfig", "Kind", "TraceSet", "build_manhattan_grid", "generate_traces",
    "LinkBudgetParams", "McsTable", "PreferenceList", "UtilityWeights",
    "EngineConfig", "SimulationResult", "TimeslotReport", "World", "run_scenario", "run_timeslot",
]
__version__ = "0.1.0"
