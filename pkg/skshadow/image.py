"""Canonical image and mask containers, PNG I/O and color conversion.

Pixel values live in ``[0, 1]`` as float64 everywhere in the library; 8-bit
quantization only happens at file boundaries.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike
from PIL import Image, UnidentifiedImageError
from skimage.color import rgb2lab

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.5

# Pillow modes mapped to (bit depth, channel count) for error reporting.
_PIL_MODE_PROPERTIES = {
    "1": (1, 1),
    "L": (8, 1),
    "P": (8, 1),
    "LA": (8, 2),
    "RGB": (8, 3),
    "RGBA": (8, 4),
    "I;16": (16, 1),
    "I;16B": (16, 1),
    "I;16L": (16, 1),
    "I": (32, 1),
    "F": (32, 1),
}


class ImageDecodeError(ValueError):
    """Raised when a raster file is not an 8-bit, 1- or 3-channel PNG."""


@dataclass
class ImageTensor:
    """An ``H x W x C`` raster with values in ``[0, 1]``.

    Parameters
    ----------
    data : array-like of shape (height, width, channels) or (height, width)
        Pixel values. A 2D array is promoted to a single channel image.
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3:
            raise ValueError(f"ImageTensor data must be 3D (H, W, C), got shape {data.shape}")
        if data.shape[2] not in (1, 3):
            raise ValueError(f"ImageTensor must have 1 or 3 channels, got {data.shape[2]}")
        if data.shape[0] < 2 or data.shape[1] < 2:
            raise ValueError(f"ImageTensor must be at least 2x2, got {data.shape[:2]}")
        if not np.all(np.isfinite(data)):
            raise ValueError("ImageTensor values must be finite")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError(
                f"ImageTensor values must lie in [0, 1], got [{data.min()}, {data.max()}]"
            )
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def copy(self) -> "ImageTensor":
        return ImageTensor(self.data.copy())


@dataclass
class ShadowMask:
    """An ``H x W`` shadow map with values in ``[0, 1]``.

    Ground-truth masks are binary, predicted masks are soft. Pixels with a value
    greater or equal to ``threshold`` belong to the shadow region.

    Parameters
    ----------
    data : array-like of shape (height, width)
        Mask values.
    threshold : float, default=0.5
        Binarization threshold, in the open interval ``(0, 1)``.
    """

    data: np.ndarray
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 3 and data.shape[2] == 1:
            data = data[:, :, 0]
        if data.ndim != 2:
            raise ValueError(f"ShadowMask data must be 2D (H, W), got shape {data.shape}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if not np.all(np.isfinite(data)) or data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("ShadowMask values must be finite and lie in [0, 1]")
        self.data = data

    @property
    def shape(self):
        return self.data.shape

    def binarize(self) -> np.ndarray:
        """Boolean shadow region, ``data >= threshold``."""
        return self.data >= self.threshold

    def check_matches(self, img: ImageTensor) -> None:
        """Raise if the spatial dimensions differ from ``img``."""
        if self.data.shape != img.data.shape[:2]:
            raise ValueError(
                f"Mask dimensions {self.data.shape} do not match image dimensions "
                f"{img.data.shape[:2]}"
            )


def as_image_array(img) -> np.ndarray:
    """Return the ``H x W x C`` float array behind an image-like input."""
    if isinstance(img, ImageTensor):
        return img.data
    data = np.asarray(img, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, np.newaxis]
    return data


def _read_png(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Image file not found: {path}")
    try:
        pil_img = Image.open(path)
        pil_img.load()
    except UnidentifiedImageError as e:
        raise ImageDecodeError(f"{path}: not a decodable raster file") from e
    if pil_img.format != "PNG":
        raise ImageDecodeError(f"{path}: format {pil_img.format} is not supported, expected PNG")
    return pil_img


def _check_mode(path, pil_img: Image.Image, allowed_channels) -> None:
    bits, channels = _PIL_MODE_PROPERTIES.get(pil_img.mode, (None, None))
    if bits is None:
        raise ImageDecodeError(f"{path}: unsupported pixel mode {pil_img.mode!r}")
    if bits != 8:
        raise ImageDecodeError(f"{path}: unsupported bit depth {bits}, expected 8")
    if pil_img.mode == "P":
        raise ImageDecodeError(f"{path}: unsupported palette color type, expected L or RGB")
    if channels not in allowed_channels:
        raise ImageDecodeError(
            f"{path}: unsupported channel count {channels}, expected one of {allowed_channels}"
        )


def load_image(path) -> ImageTensor:
    """Load an 8-bit, 1- or 3-channel PNG as an :class:`ImageTensor`.

    Parameters
    ----------
    path : str or Path
        Path of the PNG file.

    Returns
    -------
    img : ImageTensor
        Values are exactly ``raw / 255`` in R, G, B channel order.

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ImageDecodeError
        If the file is not a PNG, or its bit depth or channel count is unsupported.
    """
    pil_img = _read_png(path)
    _check_mode(path, pil_img, (1, 3))
    raw = np.asarray(pil_img, dtype=np.uint8)
    return ImageTensor(raw.astype(np.float64) / 255.0)


def load_mask(path, threshold: float = DEFAULT_THRESHOLD) -> ShadowMask:
    """Load a single-channel 8-bit PNG mask.

    Values above 127 are foreground once binarized at the default threshold.
    """
    pil_img = _read_png(path)
    _check_mode(path, pil_img, (1,))
    raw = np.asarray(pil_img, dtype=np.uint8)
    return ShadowMask(raw.astype(np.float64) / 255.0, threshold=threshold)


def _to_uint8(data: np.ndarray) -> np.ndarray:
    return np.round(np.clip(data, 0.0, 1.0) * 255.0).astype(np.uint8)


def _write_png(arr: np.ndarray, path) -> None:
    path = Path(path)
    try:
        Image.fromarray(arr).save(path, format="PNG")
    except (OSError, ValueError) as e:
        raise OSError(f"Cannot write image to {path}: {e}") from e
    logger.debug(f"Wrote {arr.shape} raster to {path}")


def save_image(img, path) -> None:
    """Write an image as an 8-bit PNG, storing ``round(value * 255)``.

    Parameters
    ----------
    img : ImageTensor or array-like of shape (H, W, C)
        Image to write.
    path : str or Path
        Destination. The parent directory must exist and be writable.
    """
    data = as_image_array(img)
    arr = _to_uint8(data)
    if arr.shape[2] == 1:
        arr = arr[:, :, 0]
    _write_png(arr, path)


def save_mask(mask, path) -> None:
    """Write a mask as a single-channel 8-bit PNG."""
    data = mask.data if isinstance(mask, ShadowMask) else np.asarray(mask, dtype=np.float64)
    _write_png(_to_uint8(data), path)


def rgb_to_lab(img) -> np.ndarray:
    """Convert an sRGB image to CIE L*a*b* under the D65 white point.

    Parameters
    ----------
    img : ImageTensor or array-like of shape (H, W, 3)
        sRGB image with values in ``[0, 1]``.

    Returns
    -------
    lab : ndarray of shape (H, W, 3)
        ``L`` lies in ``[0, 100]``.
    """
    data = as_image_array(img)
    if data.shape[-1] != 3:
        raise ValueError(f"rgb_to_lab requires a 3-channel image, got {data.shape[-1]} channel(s)")
    return rgb2lab(data, illuminant="D65", observer="2")


def gray_to_rgb(data: ArrayLike) -> np.ndarray:
    """Repeat a single-channel array into three channels."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, np.newaxis]
    if data.shape[2] == 3:
        return data
    return np.repeat(data, 3, axis=2)
