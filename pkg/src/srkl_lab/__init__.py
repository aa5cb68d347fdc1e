"""Skew reverse KL regularized reinforcement finetuning on tabular toy policies.

Modules:
    divergence   penalty values, gradient coefficients, landscapes
    policy       tabular softmax policy snapshots, sampling, checkpoints
    rft          group advantages, clipped surrogates, masking, gradient assembly
    calibration  majority-vote ECE and reliability bins
    fixed_point  single-state optimal policy under the skew penalty
    tasks        ModularSum / FactProbe tasks, rewards, calibration evaluation
    experiment   training loop, gradient check, alpha sweep
    cli          ``srkl-lab`` command line
"""

from .divergence import (DivergenceKind, DivergenceSpec, Estimator, gradient_coefficient,
                         gradient_coefficient_derivative, penalty_landscape, rkl_value, srkl_value)
from .policy import PolicyConfig, PolicySnapshot, sample_rollout
from .rft import MaskMode, SurrogateKind, SurrogateSpec, train_step
from .calibration import CalSample, compute_ece
from .fixed_point import RegularizedProblem, solve_optimal_policy
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "DivergenceKind", "DivergenceSpec", "Estimator", "gradient_coefficient", "gradient_coefficient_derivative",
    "penalty_landscape", "rkl_value", "srkl_value", "PolicyConfig", "PolicySnapshot", "sample_rollout",
    "MaskMode", "SurrogateKind", "SurrogateSpec", "train_step", "CalSample", "compute_ece",
    "RegularizedProblem", "solve_optimal_policy", "RunConfig", "load_config",
]
