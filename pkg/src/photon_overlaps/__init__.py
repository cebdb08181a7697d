"""Partial distinguishability of photons: interference, Fisher information, design and estimation."""

from .core_model import (
    CountTable,
    ExperimentConfig,
    ExperimentDesign,
    FisherMatrix,
    MeshParameters,
    OverlapParameters,
    PhysicsError,
    Pmf,
    SchemaError,
    enumerate_outcomes,
)
from .estimator import FitResult, FullParameters, convergence_study, log_likelihood, mle_fit, observed_fim
from .fisher import (
    DesignResult,
    compare_protocols,
    fim,
    hom_baseline_fim,
    optimal_second_ratio,
    optimize_design,
    summed_fim,
)
from .interference import pmf, sample, total_variation_distance
from .interferometer import build_mesh, protocol_fig1
from .oracle import fock_oracle_pmf
from .permanent import permanent

__version__ = "0.1.0"

__all__ = [
    "CountTable", "DesignResult", "ExperimentConfig", "ExperimentDesign", "FisherMatrix", "FitResult",
    "FullParameters", "MeshParameters", "OverlapParameters", "PhysicsError", "Pmf", "SchemaError",
    "build_mesh", "compare_protocols", "convergence_study", "enumerate_outcomes", "fim",
    "fock_oracle_pmf", "hom_baseline_fim", "log_likelihood", "mle_fit", "observed_fim",
    "optimal_second_ratio", "optimize_design", "permanent", "pmf", "protocol_fig1", "sample",
    "summed_fim", "total_variation_distance",
]
