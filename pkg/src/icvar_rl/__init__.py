"""Iterated-CVaR reinforcement learning with linear and general function approximation."""
from .env_model import (EpisodeLog, LinearMixtureMDP, Step, TabularMDP, ValidationReport,
                        embed_tabular, load_mdp, mdp_from_dict, mdp_to_dict, occupancy,
                        psi_feature, psi_table, sample_episode, save_mdp, transition_distribution,
                        validate_mixture)
from .errors import BudgetExceededError, ConfigError, IcvarError, InvalidModelError
from .harness import ExperimentConfig, Summary, aggregate, build_instance, emit, run_experiment
from .icvar_g import (FiniteKernelClass, GeneralConfig, confidence_set, dist_metric,
                      eluder_dimension, fit_least_squares, gamma_from_theory, load_kernel_class,
                      run_icvar_g, x_maximizing_diameter, z_value)
from .icvar_l import (LinearConfig, RidgeStep, beta_from_theory, compute_bonus, default_epsilon,
                      optimistic_backup, ridge_update, run_icvar_l, select_x)
from .instance_gen import (HardInstanceParams, hard_instance, hard_instance_gap, hard_instance_value,
                           make_hard_params, random_kernel_class, random_linear_mixture,
                           random_tabular, theory_delta)
from .results import RunResult, results_from_json, results_to_csv, results_to_json
from .risk_ops import (DiscreteDistribution, EpsNet, cvar_discrete, cvar_eps_net, cvar_eps_net_table,
                       cvar_rows, distorted_distribution, icvar_optimal_dp, icvar_policy_eval,
                       risk_neutral_dp, var_discrete)
from .seeding import make_rng

__version__ = "0.1.0"
