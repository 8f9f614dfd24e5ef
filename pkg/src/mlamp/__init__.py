"""Multi-layer approximate message passing.

Estimation in multi-layer generalized linear models: a message-passing
solver on sampled instances, the matching state-evolution recursion, the
replica-symmetric free energy with phase classification, and an experiment
CLI that sweeps phase diagrams into CSV files.
"""

from .model import (Awgn, ConfigurationError, GaussBernoulli, GaussianPrior,
                    Layer, ModelInstance, NetworkSpec, Rademacher,
                    SignWithNoise, sample_instance, second_moment_profile)
from .se import Init, QuadratureConfig, SePoint, se_fixed_point, se_mse, se_step
from .solver import (SolverConfig, SolverResult, instance_mse,
                     run_layerwise_baseline, run_mlamp)
from .freeenergy import (FreeEnergyReport, Phase, classify_phase, locate_m_it,
                         phi_rs)

__all__ = [
    "Awgn", "ConfigurationError", "GaussBernoulli", "GaussianPrior", "Layer",
    "ModelInstance", "NetworkSpec", "Rademacher", "SignWithNoise",
    "sample_instance", "second_moment_profile",
    "Init", "QuadratureConfig", "SePoint", "se_fixed_point", "se_mse",
    "se_step",
    "SolverConfig", "SolverResult", "instance_mse", "run_layerwise_baseline",
    "run_mlamp",
    "FreeEnergyReport", "Phase", "classify_phase", "locate_m_it", "phi_rs",
]
