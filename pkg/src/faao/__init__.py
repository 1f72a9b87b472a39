"""Joint UAV trajectory and precoder design for a two-hop relay link with finite-alphabet inputs."""

__version__ = "0.1.0"

from .ao import ConvergenceTrace, FaaoResult, Rates, evaluate_rates, run_faao
from .baselines import BaselineKind, baseline_precoder, run_baseline
from .channel import ChannelRealization, SmallScaleFactor, draw_small_scale
from .fa_info import constellation, enumerate_differences, mi_closed_form, mi_monte_carlo
from .kinematics import Trajectory, check_feasibility, propagate, straight_line_init
from .scenario import ConfigError, Scenario, SolverParams, default_scenario, load_scenario
from .sca_precoder import PrecoderSchedule, solve_precoder_step
from .sca_trajectory import solve_trajectory_step

__all__ = [
    "BaselineKind", "ChannelRealization", "ConfigError", "ConvergenceTrace", "FaaoResult",
    "PrecoderSchedule", "Rates", "Scenario", "SmallScaleFactor", "SolverParams", "Trajectory",
    "baseline_precoder", "check_feasibility", "constellation", "default_scenario", "draw_small_scale",
    "enumerate_differences", "evaluate_rates", "load_scenario", "mi_closed_form", "mi_monte_carlo",
    "propagate", "run_baseline", "run_faao", "solve_precoder_step", "solve_trajectory_step",
    "straight_line_init",
]
