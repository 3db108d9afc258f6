"""Wavelet-conditioned shadow segmentation and removal."""

import logging
import os

__version__ = "0.1.0dev0"
logger = logging.getLogger(__name__)


# On OSX, we can get a runtime error due to multiple OpenMP libraries loaded
# simultaneously (torch and scipy each ship one). Setting the following
# environment variable allows multiple OpenMP libraries to be loaded.
os.environ.setdefault("KMP_DUPLICATE_LIB_OK", "True")

try:
    from . import datasets, harness, metrics, nn
    from .image import ImageTensor, ShadowMask, load_image, load_mask, rgb_to_lab, save_image
    from .wavelet import WaveletPyramid, haar_dwt2, haar_idwt2, wavelet_feature_stack
except ImportError as e:
    msg = """Error importing scikit-shadow: make sure torch, timm, einops, pillow and
    scikit-image are installed in the active environment."""
    raise ImportError(msg) from e

__all__ = [
    "datasets",
    "harness",
    "metrics",
    "nn",
    "ImageTensor",
    "ShadowMask",
    "WaveletPyramid",
    "haar_dwt2",
    "haar_idwt2",
    "load_image",
    "load_mask",
    "rgb_to_lab",
    "save_image",
    "wavelet_feature_stack",
]
