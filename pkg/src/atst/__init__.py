"""Learning and planning when observations arrive only in action-triggered bursts."""

from .belief import action_matrices, belief, bellman_operator, optimal_values
from .errors import AtstError, ModelValidationError
from .features import build_estimated, check_admissible, exact_engine
from .learner import LearnerConfig, OptimizerSettings, run_learning
from .model import (ActionSequence, AugmentedState, LinearAtstMdp, check_invariants,
                    encode_tabular, load_model, make_faulty_channel, make_paid_observations,
                    make_reset_to_observe, save_model)

__version__ = "0.1.0"

__all__ = [
    "ActionSequence", "AtstError", "AugmentedState", "LearnerConfig", "LinearAtstMdp",
    "ModelValidationError", "OptimizerSettings", "action_matrices", "belief",
    "bellman_operator", "build_estimated", "check_admissible", "check_invariants",
    "encode_tabular", "exact_engine", "load_model", "make_faulty_channel",
    "make_paid_observations", "make_reset_to_observe", "optimal_values", "run_learning",
    "save_model",
]
