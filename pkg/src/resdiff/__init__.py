"""Multi-task diffusion LMS with adaptive weights, deception attacks on it,
and F-local resilient aggregation."""

from .attack import (AttackGoal, AttackPlan, CircularTrajectory, attack_reference,
                     craft_message, greedy_dominating_set, guard_step_size,
                     plan_network_attack, reconstruct_victim_state)
from .diffusion import (DiffusionNetwork, combination_weights, combine, diffusion_round,
                        lms_adapt, prune_links, update_gamma)
from .metrics import attack_success, msd_empirical, msd_theory
from .model import (CircularTarget, NetworkTopology, NoiseModel, Observation,
                    StationaryTarget, dominating_check, eval_target, generate_observation)
from .resilient import (ResilienceConfig, cost_contribution, estimate_cost,
                        resilient_filter)
from .scenario import ScenarioConfig, preset, run_scenario, sweep_F

__version__ = "0.1.0"
