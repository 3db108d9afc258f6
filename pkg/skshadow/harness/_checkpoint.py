"""Model checkpoints: a torch state dict plus a JSON sidecar.

The sidecar next to ``model.pt`` is ``model.json`` and holds the format
version, the task, the model configuration and run information such as the
variant, seed and epoch.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import torch

from .._utils import atomic_write_json
from ..nn import (
    MaeConfig,
    MaskedAutoencoder,
    RemovalConfig,
    SegmenterConfig,
    ShadowRemover,
    ShadowSegmenter,
)

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

MODEL_REGISTRY = {
    "seg": (SegmenterConfig, ShadowSegmenter),
    "mae": (MaeConfig, MaskedAutoencoder),
    "removal": (RemovalConfig, ShadowRemover),
}


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be loaded for the requested use."""


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def task_of(model: torch.nn.Module) -> str:
    for task, (_, model_cls) in MODEL_REGISTRY.items():
        if isinstance(model, model_cls):
            return task
    raise ValueError(f"Unsupported model type {type(model).__name__}")


def build_model(task: str, model_config: Dict[str, Any]) -> torch.nn.Module:
    """Instantiate the network of ``task`` from a configuration dictionary."""
    if task not in MODEL_REGISTRY:
        raise ValueError(f"Unknown task {task!r}; choose from {sorted(MODEL_REGISTRY)}")
    config_cls, model_cls = MODEL_REGISTRY[task]
    return model_cls(config_cls.from_dict(model_config))


def save_checkpoint(model: torch.nn.Module, path, run: Optional[Dict[str, Any]] = None) -> Path:
    """Write ``model``'s parameters and configuration.

    Parameters
    ----------
    model : ShadowSegmenter, MaskedAutoencoder or ShadowRemover
        Network to save.
    path : str or Path
        Destination of the state dict; the sidecar uses the ``.json`` suffix.
    run : dict, optional
        Run information stored in the sidecar, e.g. ``variant`` and ``seed``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {key: value.detach().cpu().clone() for key, value in model.state_dict().items()}
    torch.save(state, path)
    atomic_write_json(
        sidecar_path(path),
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "task": task_of(model),
            "model_config": model.cfg.to_dict(),
            "run": run or {},
        },
    )
    logger.debug(f"Saved checkpoint {path}")
    return path


def load_checkpoint(
    path, task: Optional[str] = None, expected_config: Optional[Dict[str, Any]] = None
) -> Tuple[Dict[str, torch.Tensor], Dict[str, Any]]:
    """Read a checkpoint's state dict and sidecar.

    Parameters
    ----------
    path : str or Path
        State dict written by :func:`save_checkpoint`.
    task : str, optional
        Required task; a checkpoint of another task raises.
    expected_config : dict, optional
        Model configuration the checkpoint must match exactly.

    Returns
    -------
    state_dict : dict of Tensor
    sidecar : dict

    Raises
    ------
    FileNotFoundError
        If the state dict or its sidecar is missing.
    CheckpointError
        On a format version, task or configuration mismatch.
    """
    path = Path(path)
    side = sidecar_path(path)
    if not path.is_file() or not side.is_file():
        raise FileNotFoundError(f"Checkpoint {path} or its sidecar {side} does not exist")
    with open(side, encoding="utf-8") as fh:
        sidecar = json.load(fh)

    version = sidecar.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} is not supported, expected "
            f"{CHECKPOINT_FORMAT_VERSION}"
        )
    if task is not None and sidecar.get("task") != task:
        raise CheckpointError(
            f"{path}: config mismatch, checkpoint holds a {sidecar.get('task')!r} model but a "
            f"{task!r} model was requested"
        )
    if expected_config is not None and sidecar.get("model_config") != expected_config:
        differing = sorted(
            key
            for key in set(expected_config) | set(sidecar.get("model_config", {}))
            if expected_config.get(key) != sidecar["model_config"].get(key)
        )
        raise CheckpointError(f"{path}: config mismatch in fields {differing}")

    state_dict = torch.load(path, map_location="cpu", weights_only=True)
    return state_dict, sidecar


def load_model(path, task: Optional[str] = None, device: str = "cpu") -> torch.nn.Module:
    """Rebuild a network from a checkpoint, in evaluation mode."""
    state_dict, sidecar = load_checkpoint(path, task=task)
    model = build_model(sidecar["task"], sidecar["model_config"])
    model.load_state_dict(state_dict)
    return model.to(device).eval()
