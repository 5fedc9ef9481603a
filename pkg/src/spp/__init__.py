"""Sequential multi-vehicle path planning on Hamilton-Jacobi reachable sets."""

from spp.grid import (
    Grid,
    Field,
    TimeField,
    make_grid,
    sdf_disk_cylinder,
    sdf_axis_box,
    set_union,
    set_intersect,
    set_complement,
    dilate_positions,
    project_min_nonposition,
    extend_to_state_space,
    absent_field,
    LARGE,
)
from spp.dynamics import (
    DubinsParams,
    State3,
    HamiltonianMode,
    TrackingErrorParams,
)
from spp.solver import SolveRequest, ValueFunction, solve, solve_invariant_kernel
from spp.planner import VehicleSpec, MethodConfig, PlanResult, plan_all
from spp.sim import Trajectory, DisturbanceModel, simulate, check_separation, check_arrival

__all__ = [
    "Grid", "Field", "TimeField", "make_grid", "sdf_disk_cylinder", "sdf_axis_box",
    "set_union", "set_intersect", "set_complement", "dilate_positions",
    "project_min_nonposition", "extend_to_state_space", "absent_field", "LARGE",
    "DubinsParams", "State3", "HamiltonianMode", "TrackingErrorParams",
    "SolveRequest", "ValueFunction", "solve", "solve_invariant_kernel",
    "VehicleSpec", "MethodConfig", "PlanResult", "plan_all",
    "Trajectory", "DisturbanceModel", "simulate", "check_separation", "check_arrival",
]
