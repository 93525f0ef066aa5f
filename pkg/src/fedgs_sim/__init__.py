"""Desk-scale federated learning simulator with difficulty-scaled aggregation."""

from .config import ExperimentConfig, default_config, parse_config
from .data import ClientDataSpec, Federation, Sample, build_federation, generate_client_dataset
from .fl import (
    ClientRoundReport,
    StrategyConfig,
    aggregate_fedavg,
    aggregate_fedgs,
    apply_global_update,
    run_client_round,
    run_round,
)
from .harness import ResultRow, emit_difficulty_curve, run_experiment
from .masks import (
    ComponentLabeling,
    DifficultyConfig,
    DifficultyResult,
    batch_scaling_factor,
    difficulty_factor,
    erode,
    inverse_relative_area,
    label_components,
    smallest_lesion_inverse_area,
)
from .metrics import EvalReport, dice_score, evaluate
from .model import (
    ArchDescriptor,
    OptimizerConfig,
    backward,
    dice_loss,
    forward,
    init_params,
    optimizer_step,
)

__version__ = "0.1.0"

__all__ = [
    "ArchDescriptor",
    "ClientDataSpec",
    "ClientRoundReport",
    "ComponentLabeling",
    "DifficultyConfig",
    "DifficultyResult",
    "EvalReport",
    "ExperimentConfig",
    "Federation",
    "OptimizerConfig",
    "ResultRow",
    "Sample",
    "StrategyConfig",
    "aggregate_fedavg",
    "aggregate_fedgs",
    "apply_global_update",
    "backward",
    "batch_scaling_factor",
    "build_federation",
    "default_config",
    "dice_loss",
    "dice_score",
    "difficulty_factor",
    "emit_difficulty_curve",
    "erode",
    "evaluate",
    "forward",
    "generate_client_dataset",
    "init_params",
    "inverse_relative_area",
    "label_components",
    "optimizer_step",
    "parse_config",
    "run_client_round",
    "run_experiment",
    "run_round",
    "smallest_lesion_inverse_area",
]
