"""Regret-robust tabular reinforcement learning.

Learners that minimise accumulated neighbourhood regret instead of maximising
value, observation-perturbing adversaries to attack them, and a brute-force
oracle for checking the regret bounds on small MDPs.
"""
from ._accel import NUMBA_ENABLED
from .adversary import AdversarySpec, actor_train, attack_table, fgsm_attack, myopic_attack
from .approx import FeatureMap, MlpStore, TabularStore, grad_check
from .errors import ArgumentError, CapacityError, ConfigurationError, DivergenceError, UsageError
from .fixtures import build_cliff_grid, build_environment, build_random_mdp, build_twolane
from .harness import ExperimentConfig, evaluate, neighborhood_sweep, run_matrix, verify
from .learning import LearnerConfig, PolicyHandle, extract_policy, train, train_selector
from .mdp import TabularMdp, TransitionRecord, step

__version__ = "0.1.0"
