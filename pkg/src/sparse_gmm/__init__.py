"""Sparse k-cluster Gaussian mixtures: AMP, state evolution, thresholds and baselines."""

__version__ = "0.1.0"

from .model import ModelParams, ProblemInstance, generate_instance, symmetrized_mse, trace_form_mse

__all__ = ["ModelParams", "ProblemInstance", "generate_instance", "symmetrized_mse", "trace_form_mse",
           "__version__"]
