"""Linear ensemble transform filters.

Optimal-transport particle resampling (exact and Sinkhorn-regularized),
second-order corrections (square-root, optimal rotation, Riccati flow),
square-root Kalman and hybrid filters, and twin-experiment tooling for the
Lorenz-63 and Lorenz-96 models.
"""

from .ensembles import (Ensemble, ObservationModel, TransformMatrix, WeightVector,
                        apply_transform, effective_sample_size, ensemble_moments,
                        importance_weights, log_likelihoods, uniform_weights,
                        weighted_covariance, weighted_mean,
                        weights_from_log_likelihoods)
from .errors import (CycleError, DegenerateWeightsError, IntegrationError,
                     RiccatiError, SinkhornError, TransportError)
from .harness import (ExperimentConfig, ScoreReport, SeedSet, assimilation_cycle,
                      canonical_pipeline, crps, free_run_config,
                      generate_truth_and_obs, rejuvenate, rmse, run_experiment)
from .kalman import (BridgingConfig, LocalizationConfig, esrf_transform,
                     gaspari_cohn, hybrid_step, kalman_step, particle_step,
                     project_to_D1)
from .models import (ModelSpec, lorenz63_rhs, lorenz96_rhs, observation_network,
                     periodic_distance, propagate)
from .second_order import (CorrectionMatrix, RiccatiProblem, mean_square_displacement,
                           netf_delta, optimal_rotation, random_mean_preserving_rotation,
                           riccati_correction, second_order_transform,
                           solve_riccati_flow)
from .transport import (CostMatrix, SinkhornState, cost_matrix, exact_ot, sinkhorn,
                        sinkhorn_marginal_trace, sinkhorn_state, transport_cost)

__version__ = "0.1.0"

__all__ = [
    "Ensemble", "WeightVector", "TransformMatrix", "ObservationModel",
    "importance_weights", "log_likelihoods", "weights_from_log_likelihoods",
    "weighted_mean", "weighted_covariance", "ensemble_moments",
    "apply_transform", "effective_sample_size", "uniform_weights",
    "CostMatrix", "SinkhornState", "cost_matrix", "exact_ot", "sinkhorn",
    "sinkhorn_state", "sinkhorn_marginal_trace", "transport_cost",
    "CorrectionMatrix", "RiccatiProblem", "netf_delta", "optimal_rotation",
    "random_mean_preserving_rotation", "riccati_correction",
    "solve_riccati_flow", "second_order_transform", "mean_square_displacement",
    "BridgingConfig", "LocalizationConfig", "esrf_transform", "project_to_D1",
    "gaspari_cohn", "hybrid_step", "kalman_step", "particle_step",
    "ModelSpec", "lorenz63_rhs", "lorenz96_rhs", "propagate",
    "observation_network", "periodic_distance",
    "ExperimentConfig", "ScoreReport", "SeedSet", "generate_truth_and_obs",
    "rejuvenate", "assimilation_cycle", "rmse", "crps", "run_experiment",
    "free_run_config", "canonical_pipeline",
    "DegenerateWeightsError", "TransportError", "SinkhornError", "RiccatiError",
    "IntegrationError", "CycleError",
]
