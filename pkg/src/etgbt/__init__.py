"""Motion and event-triggered-communication planning for linear-Gaussian robots.

The package propagates provable covariance bounds under event-triggered
estimation, plans with a sampling-based tree search subject to chance
constraints, and validates plans by closed-loop Monte Carlo simulation.
"""

from .bounds import (BoundReport, BoundState, BoundedBelief, brute_force_envelope,
                     bound_step, check_bound_dominates, init_bounds, propagate_bounds)
from .environment import (Circle, Environment, RandomEnvParams, Rect,
                          point_in_goal, point_in_obstacle, random_environment,
                          sphere_in_goal, sphere_obstacle_free)
from .errors import (BoundDiverged, CholeskyFailure, DegenerateObservation,
                     DimensionMismatch, EtgbtError, HorizonTooLarge, NoSolution,
                     NotControllable, NotObservable, NotPSD, NotPositiveDefinite,
                     NumericalSingularity, PlacementFailure, ReplayMismatch,
                     ScenarioError)
from .filtering import (GaussianEstimate, OfflineCovPair, TriggerDecision,
                        et_correct, et_offline_cov_step, et_predict,
                        evaluate_trigger, kf_expected_belief_step, kf_gain)
from .model import (LinearSystem, ScalarBounds, ValidatedSystem,
                    derive_scalar_bounds, validate_system)
from .planner import (METCPlan, PlannerParams, TreeNode, containment_radius,
                      goal_check, plan, plan_cost, sample_belief, sample_control,
                      sample_delta, select_node, valid_path_check, wasserstein2)
from .scenario import (Scenario, load_plan, load_scenario, save_plan,
                       save_scenario, scenario_from_dict, scenario_hash)
from .simulate import (RolloutResult, SimStats, empirical_bound_check,
                       monte_carlo, rollout)
from .trigger_math import (Threshold, beta, chi2_quantile, gamma_rate,
                           gaussian_tail, std_normal_quantile)

__version__ = "0.1.0"
