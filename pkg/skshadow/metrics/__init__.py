"""Region-wise image quality metrics."""

from ._regions import (
    METRIC_NAMES,
    PSNR_CAP,
    REGIONS,
    RMSE_SPACES,
    image_region_metrics,
    psnr,
    region_masks,
    rmse,
    ssim,
    ssim_map,
)
from ._report import RegionMetricsReport, evaluate_dataset

__all__ = [
    "METRIC_NAMES",
    "PSNR_CAP",
    "REGIONS",
    "RMSE_SPACES",
    "RegionMetricsReport",
    "evaluate_dataset",
    "image_region_metrics",
    "psnr",
    "region_masks",
    "rmse",
    "ssim",
    "ssim_map",
]
