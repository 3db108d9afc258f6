"""Training harness, checkpoints, ablations, inference pipeline and CLI."""

from ._ablation import AblationReport, run_ablation
from ._checkpoint import (
    CHECKPOINT_FORMAT_VERSION,
    CheckpointError,
    build_model,
    load_checkpoint,
    load_model,
    save_checkpoint,
)
from ._config import TASK_METRICS, RunConfig, RunManifest, load_run_config
from ._pipeline import PipelineResult, PipelineStageError, pipeline_infer, save_panel
from ._train import NonFiniteLossError, model_config_for, train, validate

__all__ = [
    "AblationReport",
    "CHECKPOINT_FORMAT_VERSION",
    "CheckpointError",
    "NonFiniteLossError",
    "PipelineResult",
    "PipelineStageError",
    "RunConfig",
    "RunManifest",
    "TASK_METRICS",
    "build_model",
    "load_checkpoint",
    "load_model",
    "load_run_config",
    "model_config_for",
    "pipeline_infer",
    "run_ablation",
    "save_checkpoint",
    "save_panel",
    "train",
    "validate",
]
