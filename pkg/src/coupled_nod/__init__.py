"""Nonlinear opinion dynamics coupled to waypoint navigation: analysis and simulation."""
from .model import (PATCH1, PATCH2, TRANSIT, AgentParams, AgentState, Patch, coupled_field,
                    jacobian, mirrored_patches, saturation, switch_fn, uncoupled_opinion_field,
                    waypoint_x, y_field)
from .bifurcation import (BifurcationProblem, EquilibriumBranch, Fold, b_branch,
                          classify_criticality, continue_branch, cubic_coefficient,
                          neutral_stability, normal_form_saddles, reduce_to_scalar,
                          threshold_sensitivity, u_diagram)
from .environment import (EfficiencyAccount, TrashField, bias_from_efficiency, efficiency,
                          on_patch_entry, sense_and_collect)
from .integrator import Event, IntegratorConfig, detect_patch_entry, resample_waypoint, step
from .safety import SafetyConfig, effective_Kx, filter_velocity
from .engine import Scenario, TrajectoryLog, crowding_metric, run, switch_times

__version__ = "0.1.0"
