from mavreplan.planners.astar import PlanningError, VoxelGrid, build_grid, grid_search, plan_astar_grid
from mavreplan.planners.cost import (path_cost, path_cost_flagged, path_energy, path_energy_gradient,
                                     quadratic_form, resample_by_arclength,
                                     second_difference_eigenvalues, second_difference_matrix,
                                     smoothness_potential)
from mavreplan.planners.graph import PlanGraph
from mavreplan.planners.rrtstar import (PlanResult, nearest_with_clearance, path_is_clear,
                                        plan_baseline_rrtstar, plan_improved_rrtstar, scene_bounds,
                                        steer)

__all__ = [
    "PlanGraph", "PlanResult", "PlanningError", "VoxelGrid", "build_grid", "grid_search",
    "nearest_with_clearance", "path_cost", "path_cost_flagged", "path_energy",
    "path_energy_gradient", "path_is_clear", "plan_astar_grid", "plan_baseline_rrtstar",
    "plan_improved_rrtstar", "quadratic_form", "resample_by_arclength", "scene_bounds",
    "second_difference_eigenvalues", "second_difference_matrix", "smoothness_potential", "steer",
]
