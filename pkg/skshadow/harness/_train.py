"""Seeded training loops of the segmenter, the MAE prior and the remover."""

import logging
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
import torch
from sklearn.metrics import jaccard_score
from torch.utils.data import DataLoader
from tqdm import tqdm

from .._utils import resolve_output_dir
from ..datasets import TripletDataset, load_istd_layout, split
from ..image import ImageTensor
from ..metrics import evaluate_dataset, psnr
from ..nn import (
    MaeConfig,
    RemovalConfig,
    SegmenterConfig,
    generate_prior,
    mae_train_step,
    predict_mask,
    removal_loss,
    remove_shadow,
    segmentation_loss,
)
from ..nn._layers import check_divisible
from ._checkpoint import build_model, load_model, save_checkpoint
from ._config import RunConfig, RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CURVES_NAME = "curves.csv"
BEST_NAME = "best.pt"
LAST_NAME = "last.pt"
# seed of the patch permutation used to score the MAE on held-out images
MAE_EVAL_SEED = 12345


class NonFiniteLossError(RuntimeError):
    """Raised when a training loss is NaN or infinite.

    Attributes
    ----------
    epoch : int
        1-based epoch of the offending step.
    step : int
        0-based step within that epoch.
    """

    def __init__(self, epoch: int, step: int, value: float):
        super().__init__(f"Non-finite loss {value} at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step
        self.value = value


def model_config_for(cfg: RunConfig) -> Dict:
    """Model configuration implied by the run's task, variant and overrides."""
    if cfg.task == "seg":
        return SegmenterConfig(**{**cfg.model, "use_wavelet": cfg.variant == "wavelet"}).to_dict()
    if cfg.task == "mae":
        return MaeConfig(**cfg.model).to_dict()
    return RemovalConfig.from_variant(cfg.variant, **cfg.model).to_dict()


def _size_multiple(model) -> int:
    cfg = model.cfg
    return cfg.patch_size if isinstance(cfg, MaeConfig) else cfg.divisor


def seed_everything(seed: int) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


class _RemovalInputs:
    """Masks and priors of the removal task, precomputed once per run."""

    def __init__(self, cfg: RunConfig, train_set, test_set, device):
        self.segmenter = None
        if cfg.segmenter_checkpoint is not None:
            self.segmenter = load_model(cfg.segmenter_checkpoint, task="seg", device=device)
        self.prior_model = None
        if cfg.prior_checkpoint is not None:
            self.prior_model = load_model(cfg.prior_checkpoint, task="mae", device=device)
        self.uses_prior = cfg.uses_prior
        self.mask_source = cfg.mask_source

        self.train_masks = self._masks(train_set, cfg.mask_source)
        self.test_masks = self._masks(test_set, cfg.mask_source)
        self.train_priors = self._priors(train_set, self.train_masks)
        self.test_priors = self._priors(test_set, self.test_masks)

        self.test_masks_predicted = None
        self.test_priors_predicted = None
        if self.segmenter is not None:
            self.test_masks_predicted = self._masks(test_set, "predicted")
            self.test_priors_predicted = self._priors(test_set, self.test_masks_predicted)

    def _masks(self, triplets, source):
        if source == "gt":
            return [t.mask for t in triplets]
        return [predict_mask(t.shadow_img, self.segmenter) for t in triplets]

    def _priors(self, triplets, masks) -> Optional[List[ImageTensor]]:
        if not self.uses_prior:
            return None
        return [generate_prior(t.shadow_img, m, self.prior_model) for t, m in zip(triplets, masks)]


def _batch_loss(task: str, model, batch, device, generator) -> torch.Tensor:
    if task == "seg":
        return segmentation_loss(model(batch["shadow"].to(device)), batch["mask"].to(device))
    if task == "mae":
        return mae_train_step(model, batch["free"].to(device), generator=generator)
    prior = batch["prior"].to(device) if "prior" in batch else None
    pred = model(batch["shadow"].to(device), batch["mask"].to(device), prior)
    return removal_loss(pred, batch["free"].to(device))


def _predict_removal(model, triplets, masks, priors) -> List[ImageTensor]:
    return [
        remove_shadow(t.shadow_img, m, model, None if priors is None else priors[i])
        for i, (t, m) in enumerate(zip(triplets, masks))
    ]


def validate(cfg: RunConfig, model, test_set, removal_inputs=None, device="cpu") -> float:
    """Validation metric of ``model`` on the held-out split.

    Mean per-image IoU for ``seg``, hidden-patch MSE under a fixed patch
    permutation for ``mae`` and mean all-region PSNR for ``removal``.
    """
    was_training = model.training
    model.eval()
    if cfg.task == "seg":
        scores = [
            jaccard_score(
                t.mask.binarize().ravel(),
                predict_mask(t.shadow_img, model).binarize().ravel(),
                zero_division=1.0,
            )
            for t in test_set
        ]
    elif cfg.task == "mae":
        generator = torch.Generator().manual_seed(MAE_EVAL_SEED)
        loader = DataLoader(TripletDataset(test_set), batch_size=cfg.batch_size)
        scores, weights = [], []
        with torch.no_grad():
            for batch in loader:
                loss = mae_train_step(model, batch["free"].to(device), generator=generator)
                scores.append(float(loss))
                weights.append(len(batch["name"]))
        model.train(was_training)
        return float(np.average(scores, weights=weights))
    else:
        preds = _predict_removal(
            model, test_set, removal_inputs.test_masks, removal_inputs.test_priors
        )
        scores = [psnr(pred, t.free_img) for pred, t in zip(preds, test_set)]
    model.train(was_training)
    return float(np.mean(scores))


def _final_removal_reports(cfg, model, test_set, removal_inputs, out_dir: Path) -> Dict:
    """Region reports of the best model and of the untouched input."""
    dataset = str(cfg.dataset_root)
    checkpoint = str(out_dir / BEST_NAME)
    gt_masks = [t.mask for t in test_set]

    def report(preds, masks, space, ckpt):
        pairs = [(p, t.free_img, m) for p, t, m in zip(preds, test_set, masks)]
        return evaluate_dataset(pairs, space=space, dataset=dataset, checkpoint=ckpt).to_dict()

    preds = _predict_removal(model, test_set, removal_inputs.test_masks, removal_inputs.test_priors)
    final = {space: report(preds, gt_masks, space, checkpoint) for space in ("lab", "rgb")}
    final["psnr"] = final[cfg.eval_space]["all"]["psnr"]

    inputs = [t.shadow_img for t in test_set]
    baseline = {space: report(inputs, gt_masks, space, None) for space in ("lab", "rgb")}
    baseline["psnr"] = baseline[cfg.eval_space]["all"]["psnr"]

    predicted = None
    if removal_inputs.test_masks_predicted is not None:
        preds = _predict_removal(
            model,
            test_set,
            removal_inputs.test_masks_predicted,
            removal_inputs.test_priors_predicted,
        )
        predicted = {space: report(preds, gt_masks, space, checkpoint) for space in ("lab", "rgb")}
        predicted["psnr"] = predicted[cfg.eval_space]["all"]["psnr"]
    return {"final": final, "baseline": baseline, "predicted": predicted}


def train(cfg: RunConfig) -> RunManifest:
    """Train the network of ``cfg.task`` and record the run on disk.

    The output directory receives ``last.pt`` and ``manifest.json`` after every
    epoch, ``best.pt`` whenever the validation metric improves, and
    ``curves.csv`` with the per-epoch history.

    Parameters
    ----------
    cfg : RunConfig
        Run settings.

    Returns
    -------
    manifest : RunManifest
        Completed run record.

    Raises
    ------
    DatasetLayoutError, FileNotFoundError, ImageDecodeError
        When the dataset cannot be read; raised before any training step.
    NonFiniteLossError
        When a loss is not finite; the manifest is first saved as aborted.
    """
    start = time.perf_counter()
    out_dir = resolve_output_dir(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metric_name, metric_mode, threshold = cfg.metric
    manifest = RunManifest(
        config=cfg.to_dict(), metric_name=metric_name, metric_mode=metric_mode, threshold=threshold
    )
    manifest_path = out_dir / MANIFEST_NAME

    samples = list(load_istd_layout(cfg.dataset_root))
    train_set, test_set = split(samples, cfg.train_fraction, cfg.split_seed)
    logger.info(
        f"Task {cfg.task} ({cfg.variant}): {len(train_set)} train / {len(test_set)} test "
        f"samples from {cfg.dataset_root}"
    )

    seed_everything(cfg.seed)
    device = torch.device(cfg.device)
    model = build_model(cfg.task, model_config_for(cfg)).to(device)
    multiple = _size_multiple(model)
    for triplet in samples:
        check_divisible(triplet.shadow_img.shape, multiple, f"sample {triplet.name}")

    removal_inputs = None
    masks = priors = None
    if cfg.task == "removal":
        removal_inputs = _RemovalInputs(cfg, train_set, test_set, device)
        masks, priors = removal_inputs.train_masks, removal_inputs.train_priors

    loader = DataLoader(
        TripletDataset(train_set, hflip=cfg.hflip, masks=masks, priors=priors),
        batch_size=cfg.batch_size,
        shuffle=True,
        num_workers=cfg.num_workers,
        generator=torch.Generator().manual_seed(cfg.seed),
    )
    mask_generator = torch.Generator().manual_seed(cfg.seed + 1)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=cfg.epochs, eta_min=cfg.min_learning_rate
    )
    run_info = {"variant": cfg.variant, "seed": cfg.seed}
    verbose = logger.isEnabledFor(logging.DEBUG)

    for epoch in range(1, cfg.epochs + 1):
        epoch_start = time.perf_counter()
        lr = optimizer.param_groups[0]["lr"]
        model.train()
        losses = []
        batches = tqdm(loader, desc=f"epoch {epoch}", leave=False, disable=not verbose)
        for step, batch in enumerate(batches):
            loss = _batch_loss(cfg.task, model, batch, device, mask_generator)
            if not torch.isfinite(loss):
                manifest.status = "aborted"
                manifest.failure = {"epoch": epoch, "step": step, "loss": float(loss)}
                manifest.wall_clock_seconds = time.perf_counter() - start
                manifest.save(manifest_path)
                raise NonFiniteLossError(epoch, step, float(loss))
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            losses.append(float(loss))
        scheduler.step()

        val_metric = validate(cfg, model, test_set, removal_inputs, device)
        manifest.record_epoch(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "val_metric": val_metric,
                "lr": lr,
                "seconds": time.perf_counter() - epoch_start,
            }
        )
        save_checkpoint(model, out_dir / LAST_NAME, {**run_info, "epoch": epoch})
        manifest.last_checkpoint = str(out_dir / LAST_NAME)
        if manifest.is_better(val_metric):
            save_checkpoint(model, out_dir / BEST_NAME, {**run_info, "epoch": epoch})
            manifest.best_checkpoint = str(out_dir / BEST_NAME)
            manifest.best_metric = val_metric
            manifest.best_epoch = epoch
        manifest.wall_clock_seconds = time.perf_counter() - start
        manifest.save(manifest_path)
        pd.DataFrame(manifest.history).to_csv(out_dir / CURVES_NAME, index=False)
        logger.info(
            f"epoch {epoch}/{cfg.epochs} loss={manifest.history[-1]['train_loss']:.6f} "
            f"{metric_name}={val_metric:.4f} lr={lr:.2e}"
        )

    best = load_model(manifest.best_checkpoint, task=cfg.task, device=device)
    if cfg.task == "removal":
        reports = _final_removal_reports(cfg, best, test_set, removal_inputs, out_dir)
        manifest.final_metrics = reports["final"]
        manifest.baseline_metrics = reports["baseline"]
        manifest.final_metrics_predicted = reports["predicted"]
    else:
        manifest.final_metrics = {metric_name: manifest.best_metric}

    manifest.status = "completed"
    manifest.wall_clock_seconds = time.perf_counter() - start
    manifest.save(manifest_path)
    logger.info(f"Run finished in {manifest.wall_clock_seconds:.1f}s, manifest {manifest_path}")
    return manifest
