"""Run configuration and run manifest of the training harness."""

import json
from dataclasses import asdict, dataclass, field
from numbers import Integral, Real
from pathlib import Path
from typing import Any, Dict, List, Optional

from sklearn.utils._param_validation import Interval, StrOptions

from .._utils import ConfigMixin, atomic_write_json
from ..nn import REMOVAL_VARIANTS

TASKS = ("seg", "mae", "removal")
SEG_VARIANTS = ("plain", "wavelet")
TASK_VARIANTS = {
    "seg": SEG_VARIANTS,
    "mae": (),
    "removal": tuple(REMOVAL_VARIANTS),
}
DEFAULT_VARIANTS = {"seg": "wavelet", "mae": None, "removal": "prior_ffc"}

# validation metric name, "max" or "min", and convergence threshold
TASK_METRICS = {
    "seg": ("iou", "max", 0.85),
    "mae": ("hidden_mse", "min", 0.02),
    "removal": ("psnr", "max", 25.0),
}


@dataclass
class RunConfig(ConfigMixin):
    """Settings of one training run.

    Parameters
    ----------
    task : {"seg", "mae", "removal"}
        Which network to train.
    dataset_root : str
        ISTD-layout dataset directory.
    output_dir : str, default="runs"
        Where checkpoints, the manifest and curves are written. Relative paths
        are resolved against ``$SKSHADOW_OUTPUT_ROOT`` when it is set.
    epochs : int, default=10
        Number of passes over the training split.
    batch_size : int, default=8
        Mini-batch size.
    learning_rate : float, default=2e-4
        Initial Adam learning rate.
    min_learning_rate : float, default=1e-6
        Final learning rate of the cosine decay.
    seed : int, default=0
        Seed of model initialization, batch order and augmentation.
    split_seed : int, default=0
        Seed of the train/test split, shared across ablation runs.
    train_fraction : float, default=0.8
        Fraction of samples used for training.
    variant : str, default=None
        ``{"plain", "wavelet"}`` for ``seg``, ``{"baseline", "prior", "prior_ffc"}``
        for ``removal``; defaults to ``"wavelet"`` and ``"prior_ffc"``. Unused
        for ``mae``.
    mask_source : {"gt", "predicted"}, default="gt"
        Masks fed to the removal network during training.
    prior_checkpoint : str, default=None
        MAE checkpoint providing priors; required by prior-using variants.
    segmenter_checkpoint : str, default=None
        Segmenter checkpoint; required for ``mask_source="predicted"`` and
        enables the predicted-mask evaluation row.
    num_workers : int, default=0
        Data loading workers; 0 is the reproducible mode.
    hflip : bool, default=False
        Random horizontal flips of training samples.
    device : str, default="cpu"
        Torch device.
    model : dict, default={}
        Overrides of the model configuration fields.
    eval_space : {"lab", "rgb"}, default="lab"
        RMSE convention of the primary final report.
    convergence_threshold : float, default=None
        Overrides the task's default target of the validation metric.
    """

    task: str
    dataset_root: str
    output_dir: str = "runs"
    epochs: int = 10
    batch_size: int = 8
    learning_rate: float = 2e-4
    min_learning_rate: float = 1e-6
    seed: int = 0
    split_seed: int = 0
    train_fraction: float = 0.8
    variant: Optional[str] = None
    mask_source: str = "gt"
    prior_checkpoint: Optional[str] = None
    segmenter_checkpoint: Optional[str] = None
    num_workers: int = 0
    hflip: bool = False
    device: str = "cpu"
    model: Dict[str, Any] = field(default_factory=dict)
    eval_space: str = "lab"
    convergence_threshold: Optional[float] = None

    _parameter_constraints = {
        "task": [StrOptions(set(TASKS))],
        "dataset_root": [str],
        "output_dir": [str],
        "epochs": [Interval(Integral, 1, None, closed="left")],
        "batch_size": [Interval(Integral, 1, None, closed="left")],
        "learning_rate": [Interval(Real, 0.0, None, closed="neither")],
        "min_learning_rate": [Interval(Real, 0.0, None, closed="left")],
        "seed": [Interval(Integral, 0, None, closed="left")],
        "split_seed": [Interval(Integral, 0, None, closed="left")],
        "train_fraction": [Interval(Real, 0.0, 1.0, closed="neither")],
        "variant": [str, None],
        "mask_source": [StrOptions({"gt", "predicted"})],
        "prior_checkpoint": [str, None],
        "segmenter_checkpoint": [str, None],
        "num_workers": [Interval(Integral, 0, None, closed="left")],
        "hflip": ["boolean"],
        "device": [str],
        "model": [dict],
        "eval_space": [StrOptions({"lab", "rgb"})],
        "convergence_threshold": [Real, None],
    }

    def _check_invariants(self):
        if self.variant is None:
            self.variant = DEFAULT_VARIANTS[self.task]
        allowed = TASK_VARIANTS[self.task]
        if allowed and self.variant not in allowed:
            raise ValueError(
                f"variant {self.variant!r} is not valid for task {self.task!r}; "
                f"choose from {list(allowed)}"
            )
        if not allowed and self.variant is not None:
            raise ValueError(f"task {self.task!r} takes no variant, got {self.variant!r}")
        if self.task == "removal":
            if self.uses_prior and self.prior_checkpoint is None:
                raise ValueError(f"removal variant {self.variant!r} needs a prior_checkpoint")
            if self.mask_source == "predicted" and self.segmenter_checkpoint is None:
                raise ValueError("mask_source='predicted' needs a segmenter_checkpoint")
        elif self.mask_source != "gt":
            raise ValueError(f"mask_source only applies to the removal task, got {self.task!r}")

    @property
    def uses_prior(self) -> bool:
        return self.task == "removal" and REMOVAL_VARIANTS[self.variant]["use_prior"]

    @property
    def metric(self):
        """``(name, mode, threshold)`` of the validation metric."""
        name, mode, threshold = TASK_METRICS[self.task]
        if self.convergence_threshold is not None:
            threshold = float(self.convergence_threshold)
        return name, mode, threshold


def load_run_config(path=None, **overrides) -> RunConfig:
    """Build a :class:`RunConfig` from an optional JSON file and overrides.

    Overrides whose value is ``None`` are ignored, so unset command line flags
    never shadow values from the file.
    """
    params: Dict[str, Any] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            params.update(json.load(fh))
    params.update({key: value for key, value in overrides.items() if value is not None})
    return RunConfig.from_dict(params)


@dataclass
class RunManifest:
    """Record of a training run, rewritten after every epoch.

    Attributes
    ----------
    config : dict
        Snapshot of the :class:`RunConfig`.
    metric_name, metric_mode : str
        Validation metric and whether it is maximized or minimized.
    threshold : float
        Target of the validation metric.
    history : list of dict
        One entry per completed epoch: ``epoch``, ``train_loss``, ``val_metric``,
        ``lr`` and ``seconds``.
    status : {"running", "completed", "aborted"}
        Run state.
    epochs_to_threshold : int or None
        First epoch whose validation metric met the threshold.
    """

    config: Dict[str, Any]
    metric_name: str
    metric_mode: str
    threshold: float
    history: List[Dict[str, Any]] = field(default_factory=list)
    status: str = "running"
    wall_clock_seconds: float = 0.0
    best_checkpoint: Optional[str] = None
    last_checkpoint: Optional[str] = None
    best_metric: Optional[float] = None
    best_epoch: Optional[int] = None
    epochs_to_threshold: Optional[int] = None
    failure: Optional[Dict[str, Any]] = None
    final_metrics: Optional[Dict[str, Any]] = None
    final_metrics_predicted: Optional[Dict[str, Any]] = None
    baseline_metrics: Optional[Dict[str, Any]] = None

    def is_better(self, value: float) -> bool:
        if self.best_metric is None:
            return True
        if self.metric_mode == "max":
            return value > self.best_metric
        return value < self.best_metric

    def reached(self, value: float) -> bool:
        if self.metric_mode == "max":
            return value >= self.threshold
        return value <= self.threshold

    def record_epoch(self, entry: Dict[str, Any]) -> None:
        """Append an epoch and update the convergence bookkeeping."""
        self.history.append(entry)
        value = entry["val_metric"]
        if self.epochs_to_threshold is None and self.reached(value):
            self.epochs_to_threshold = entry["epoch"]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        return cls(**data)

    def save(self, path) -> Path:
        return atomic_write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
