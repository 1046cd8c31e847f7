"""Split-latent causal representation pipeline (C++ core bindings)."""

from lighthcg._core import (
    acyclicity,
    acyclicity_gradient,
    classification_metrics,
    discover,
    disentanglement_loss,
    generate,
    hsic_normalized,
    matrix_exponential,
    median_heuristic_bandwidth,
    mutual_information,
    shd,
    train,
)

__all__ = [
    "acyclicity",
    "acyclicity_gradient",
    "classification_metrics",
    "discover",
    "disentanglement_loss",
    "generate",
    "hsic_normalized",
    "matrix_exponential",
    "median_heuristic_bandwidth",
    "mutual_information",
    "shd",
    "train",
]
