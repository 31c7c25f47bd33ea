"""Section geometry, Manning capacity and the kinematic/dynamic routing solvers."""

from .dynamic import route_dynamic
from .geometry import (
    EffectiveConduit, SectionGeometry, area_of_depth, full_flow_capacity, hyd_radius_of_depth,
    manning_full_flow, normal_depth, top_width_of_depth,
)
from .kinematic import route_kinematic
from .routing import (
    AdverseSlopeError, Hydrograph, NetworkArrays, RoutingError, RoutingResult, SolverConfig,
    SolverInstabilityError,
)
from .storage import TankState, simulate_storage_pump

__all__ = [
    "AdverseSlopeError", "EffectiveConduit", "Hydrograph", "NetworkArrays", "RoutingError",
    "RoutingResult", "SectionGeometry", "SolverConfig", "SolverInstabilityError", "TankState",
    "area_of_depth", "full_flow_capacity", "hyd_radius_of_depth", "manning_full_flow",
    "normal_depth", "route_dynamic", "route_kinematic", "simulate_storage_pump",
    "top_width_of_depth",
]
