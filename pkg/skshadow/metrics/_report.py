"""Dataset-level region-wise quality report."""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional

import numpy as np
from joblib import Parallel, delayed

from ._regions import METRIC_NAMES, REGIONS, RMSE_SPACES, image_region_metrics

logger = logging.getLogger(__name__)


@dataclass
class RegionMetricsReport:
    """PSNR, SSIM and RMSE per region, averaged over images.

    Attributes
    ----------
    shadow, non_shadow, all : dict
        ``{"psnr", "ssim", "rmse"}``; values are ``None`` when no image had a
        nonempty region.
    pixel_counts : dict
        Total pixels per region across all images.
    meta : dict
        ``dataset``, ``checkpoint``, ``rmse_space``, ``n_images``,
        ``averaging``, the number of images ``skipped`` per region because it
        was empty, and ``ssim_skipped``, the images left out of a region's SSIM
        average because no full window is centred in it.
    """

    shadow: Dict[str, Optional[float]]
    non_shadow: Dict[str, Optional[float]]
    all: Dict[str, Optional[float]]
    pixel_counts: Dict[str, int]
    meta: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "meta": dict(self.meta),
            "shadow": dict(self.shadow),
            "non_shadow": dict(self.non_shadow),
            "all": dict(self.all),
            "pixel_counts": dict(self.pixel_counts),
        }

    def to_json(self, path=None) -> str:
        """Serialize the report, optionally writing it to ``path``."""
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "RegionMetricsReport":
        return cls(
            shadow=data["shadow"],
            non_shadow=data["non_shadow"],
            all=data["all"],
            pixel_counts=data["pixel_counts"],
            meta=data.get("meta", {}),
        )


def _image_metrics(pred, gt, mask, space):
    return image_region_metrics(pred, gt, mask, space=space)


def evaluate_dataset(
    pairs: Iterable,
    space: str = "lab",
    n_jobs: Optional[int] = None,
    dataset: Optional[str] = None,
    checkpoint: Optional[str] = None,
) -> RegionMetricsReport:
    """Average per-image region metrics over a stream of image pairs.

    Each image counts equally. Images whose shadow (or non-shadow) region is
    empty are left out of that region's average and counted in
    ``meta["skipped"]``. Nonempty regions without an SSIM window centre keep
    their PSNR and RMSE and are counted in ``meta["ssim_skipped"]``.

    Parameters
    ----------
    pairs : iterable of (pred, gt, mask)
        Prediction, ground truth and shadow mask of each image.
    space : {"lab", "rgb"}, default="lab"
        RMSE convention, see :func:`rmse`.
    n_jobs : int, default=None
        Workers for the per-image metrics; results are folded in stream order.
    dataset, checkpoint : str, optional
        Recorded in the report metadata.

    Returns
    -------
    report : RegionMetricsReport
    """
    if space not in RMSE_SPACES:
        raise ValueError(f"space must be one of {RMSE_SPACES}, got {space!r}")
    per_image = Parallel(n_jobs=n_jobs)(
        delayed(_image_metrics)(pred, gt, mask, space) for pred, gt, mask in pairs
    )
    if not per_image:
        raise ValueError("evaluate_dataset received no image pairs")

    regions = {}
    skipped = {}
    ssim_skipped = {}
    for region in REGIONS:
        rows = [m[region] for m in per_image if m[region] is not None]
        skipped[region] = len(per_image) - len(rows)
        ssim_skipped[region] = sum(row["ssim"] is None for row in rows)
        regions[region] = {}
        for name in METRIC_NAMES:
            values = [row[name] for row in rows if row[name] is not None]
            regions[region][name] = float(np.mean(values)) if values else None
    pixel_counts = {
        region: int(sum(m["pixel_counts"][region] for m in per_image)) for region in REGIONS
    }
    meta = {
        "dataset": dataset,
        "checkpoint": checkpoint,
        "rmse_space": space,
        "n_images": len(per_image),
        "averaging": "per_image",
        "skipped": skipped,
        "ssim_skipped": ssim_skipped,
    }
    if skipped["shadow"]:
        logger.info(f"{skipped['shadow']} image(s) without shadow pixels skipped")
    for region, count in ssim_skipped.items():
        if count:
            logger.info(f"{count} image(s) without an SSIM window centre in {region}")
    return RegionMetricsReport(
        shadow=regions["shadow"],
        non_shadow=regions["non_shadow"],
        all=regions["all"],
        pixel_counts=pixel_counts,
        meta=meta,
    )
