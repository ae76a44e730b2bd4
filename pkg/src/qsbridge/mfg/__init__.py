"""Mean-field crowd navigation with a diagonal Gaussian population."""

from .environment import BUILTIN_ENVIRONMENTS, Ellipse, Environment, builtin_environment, collision
from .optimize import AdamW, DivergenceError, MfgConfig, MfgResult, optimize, sample_paths, total_loss
from .rrt import PlanningError, RRTConfig, RRTResult, path_length, rrt_star, shortcut_path
from .trajectory import (
    TrajectoryParams,
    collision_fraction,
    init_trajectory,
    kinetic_energy,
    kinetic_energy_grad,
    obstacle_penalty,
    obstacle_penalty_grad,
    potential_energy,
    potential_energy_grad,
    paths_from_standardized,
    propagate_population,
    standardized_paths,
    trajectory_derivatives,
)
