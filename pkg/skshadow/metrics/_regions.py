"""PSNR, SSIM and RMSE restricted to shadow, non-shadow or all pixels."""

from typing import Optional

import numpy as np
from skimage.metrics import structural_similarity

from ..image import ShadowMask, as_image_array, rgb_to_lab

PSNR_CAP = 100.0
MSE_FLOOR = 1e-10
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
REGIONS = ("shadow", "non_shadow", "all")
RMSE_SPACES = ("rgb", "lab")
METRIC_NAMES = ("psnr", "ssim", "rmse")


def region_masks(mask, shape=None) -> dict:
    """Boolean ``shadow``, ``non_shadow`` and ``all`` regions of a mask.

    ``shadow`` is ``mask >= threshold`` and ``non_shadow`` its complement, so the
    two always partition the image.
    """
    if mask is None:
        full = np.ones(shape[:2], dtype=bool)
        return {"shadow": ~full, "non_shadow": full, "all": full}
    if not isinstance(mask, ShadowMask):
        mask = ShadowMask(mask)
    shadow = mask.binarize()
    return {"shadow": shadow, "non_shadow": ~shadow, "all": np.ones_like(shadow)}


def _region(region_mask, shape) -> np.ndarray:
    if region_mask is None:
        return np.ones(shape[:2], dtype=bool)
    if isinstance(region_mask, ShadowMask):
        region = region_mask.binarize()
    else:
        region = np.asarray(region_mask)
        if region.dtype != bool:
            region = region >= 0.5
    if region.shape != tuple(shape[:2]):
        raise ValueError(f"Region mask {region.shape} does not match image {shape[:2]}")
    return region


def _pair(pred, gt):
    pred, gt = as_image_array(pred), as_image_array(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"Shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    return pred, gt


def psnr(pred, gt, region_mask: Optional[object] = None) -> float:
    """Peak signal-to-noise ratio in dB over a region, with peak value 1.

    Parameters
    ----------
    pred, gt : ImageTensor or ndarray of shape (H, W, C)
        Images to compare.
    region_mask : ShadowMask or bool ndarray of shape (H, W), optional
        Pixels to include. Defaults to the whole image.

    Returns
    -------
    psnr : float
        ``10 * log10(1 / mse)``, capped at 100 dB when ``mse < 1e-10``.
    """
    pred, gt = _pair(pred, gt)
    region = _region(region_mask, pred.shape)
    if not region.any():
        raise ValueError("psnr: the region is empty")
    mse = float(np.mean(np.square(pred[region] - gt[region])))
    if mse < MSE_FLOOR:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def ssim_map(pred, gt) -> np.ndarray:
    """Per-channel SSIM over every full window position.

    Returns
    -------
    ssim_map : ndarray of shape (H - 10, W - 10, C)
        Entry ``[i, j]`` belongs to the window centred on pixel ``(i + 5, j + 5)``.
    """
    pred, gt = _pair(pred, gt)
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise ValueError(
            f"ssim needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got "
            f"{pred.shape[0]}x{pred.shape[1]}"
        )
    _, full = structural_similarity(
        gt,
        pred,
        win_size=SSIM_WINDOW,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        data_range=1.0,
        K1=SSIM_K1,
        K2=SSIM_K2,
        channel_axis=-1,
        full=True,
    )
    # positions closer than half a window to the border were filtered with padding
    half = SSIM_WINDOW // 2
    return full[half:-half, half:-half]


def ssim(pred, gt, region_mask: Optional[object] = None) -> float:
    """Single-scale SSIM averaged over channels and the region's window centres.

    Uses an 11x11 Gaussian window with sigma 1.5, ``K1 = 0.01``, ``K2 = 0.03``
    and a dynamic range of 1. Only windows lying fully inside the image are
    evaluated; a region contributes the windows whose centre it contains.
    """
    smap = ssim_map(pred, gt)
    half = SSIM_WINDOW // 2
    region = _region(region_mask, as_image_array(pred).shape)
    centres = region[half:-half, half:-half]
    if not centres.any():
        raise ValueError("ssim: no window centre lies in the region")
    return float(np.mean(smap[centres]))


def rmse(pred, gt, region_mask: Optional[object] = None, space: str = "rgb") -> float:
    """Root mean square error on the 0-255 scale, or mean absolute LAB error.

    Parameters
    ----------
    pred, gt : ImageTensor or ndarray of shape (H, W, C)
        Images to compare.
    region_mask : ShadowMask or bool ndarray of shape (H, W), optional
        Pixels to include. Defaults to the whole image.
    space : {"rgb", "lab"}, default="rgb"
        ``"rgb"`` returns ``sqrt(mean((255 * diff) ** 2))``. ``"lab"`` returns the
        mean absolute difference of the CIE L*a*b* values, the convention of
        the shadow removal literature.
    """
    if space not in RMSE_SPACES:
        raise ValueError(f"space must be one of {RMSE_SPACES}, got {space!r}")
    pred, gt = _pair(pred, gt)
    region = _region(region_mask, pred.shape)
    if not region.any():
        raise ValueError("rmse: the region is empty")
    if space == "rgb":
        diff = 255.0 * (pred[region] - gt[region])
        return float(np.sqrt(np.mean(np.square(diff))))
    diff = rgb_to_lab(pred)[region] - rgb_to_lab(gt)[region]
    return float(np.mean(np.abs(diff)))


def image_region_metrics(pred, gt, mask, space: str = "rgb") -> dict:
    """All metrics for every region of one image pair.

    Returns
    -------
    result : dict
        ``result[region]`` is ``{"psnr", "ssim", "rmse"}`` or ``None`` when the
        region is empty. ``ssim`` alone is ``None`` when no full window is
        centred in the region, e.g. a thin shadow along the border or an image
        smaller than 11x11. ``result["pixel_counts"]`` holds the region sizes.
    """
    pred, gt = _pair(pred, gt)
    half = SSIM_WINDOW // 2
    smap = None
    if min(pred.shape[:2]) >= SSIM_WINDOW:
        smap = ssim_map(pred, gt)
    regions = region_masks(mask, pred.shape)
    result = {"pixel_counts": {name: int(r.sum()) for name, r in regions.items()}}
    for name, region in regions.items():
        if not region.any():
            result[name] = None
            continue
        centres = region[half:-half, half:-half]
        value = None
        if smap is not None and centres.any():
            value = float(np.mean(smap[centres]))
        result[name] = {
            "psnr": psnr(pred, gt, region),
            "ssim": value,
            "rmse": rmse(pred, gt, region, space=space),
        }
    return result
