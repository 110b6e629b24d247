"""Pairwise metric learning on masked multimodal data, with empirical checks of
its generalization bounds."""
from .bounds import (BoundReport, ComplexityEstimate, SignOptConfig, estimate_eta, gamma_S,
                     massart_bound, rademacher_mc, theorem3_report, theorem4_report,
                     theorem5_bound, theorem6_gap)
from .core import (Dataset, GroundTruth, ModalityLayout, ModalitySet, MultimodalSample,
                   compose_projection_check, generate_dataset, load_dataset,
                   make_ground_truth, project_modality, save_dataset)
from .erm import TrainConfig, TrainResult, monotonicity_check, train, train_nested
from .errors import MMPairError
from .metric import (DiagonalMetricModel, MetricConfig, jacobi_diagonalize,
                     mahalanobis_distance)
from .risk import LossSpec, block_risk, decoupling_gap, pair_loss, ustat_risk

__version__ = "0.1.0"
