"""Cluster basket-trial baskets by response trajectories and borrow within clusters."""

__version__ = "0.1.0"

from .trajectory import (BasketData, ResponseState, Trajectory, ingest_trial_data, orr_estimate,
                         read_trial_csv, write_trial_csv)
from .markov import (BasketModel, count_transitions, estimate_initial_distribution,
                     estimate_schedule_weights, estimate_transition_matrix, fit_basket,
                     weighted_final_state)
from .clustering import (Partition, candidate_partition, dissimilarity_matrix, feature_vector,
                         manhattan_distance, select_clustering, silhouette)
from .bayes import (HierarchicalPrior, McmcSettings, PosteriorSummary, analyze_trial,
                    decide_active, fit_beta_binomial, fit_hierarchical)
from .scenarios import ScenarioSpec, builtin_scenario, load_scenario, simulate_basket, true_orr
from .kernels import BACKEND
