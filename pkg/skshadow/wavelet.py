"""Orthonormal 2-D Haar transform and multi-level pyramids.

The same kernel serves numpy arrays laid out as ``(H, W)`` or ``(H, W, C)`` and
torch tensors laid out as ``(N, C, H, W)``; only the spatial axes differ.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .image import as_image_array

logger = logging.getLogger(__name__)

SUBBANDS = ("LL", "LH", "HL", "HH")
DETAIL_BANDS = ("LH", "HL", "HH")


def _take(x, axis: int, start: int):
    """Every second element of ``x`` along ``axis`` starting at ``start``."""
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, None, 2)
    return x[tuple(index)]


def _haar_step(x, axes=(0, 1)):
    """One level of the orthonormal Haar analysis along two spatial axes.

    Works unchanged on numpy arrays and torch tensors.

    Returns
    -------
    LL, LH, HL, HH : array-like
        Each with both spatial axes halved.
    """
    row_axis, col_axis = axes
    top = _take(x, row_axis, 0)
    bottom = _take(x, row_axis, 1)
    a = _take(top, col_axis, 0)
    b = _take(top, col_axis, 1)
    c = _take(bottom, col_axis, 0)
    d = _take(bottom, col_axis, 1)
    ll = (a + b + c + d) / 2
    lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2
    hh = (a - b - c + d) / 2
    return ll, lh, hl, hh


def _interleave(even, odd, axis: int):
    out_shape = list(even.shape)
    out_shape[axis] *= 2
    out = np.empty(out_shape, dtype=np.result_type(even, odd))
    index = [slice(None)] * even.ndim
    index[axis] = slice(0, None, 2)
    out[tuple(index)] = even
    index[axis] = slice(1, None, 2)
    out[tuple(index)] = odd
    return out


def _haar_step_inverse(ll, lh, hl, hh, axes=(0, 1)):
    row_axis, col_axis = axes
    a = (ll + lh + hl + hh) / 2
    b = (ll - lh + hl - hh) / 2
    c = (ll + lh - hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    top = _interleave(a, b, col_axis)
    bottom = _interleave(c, d, col_axis)
    return _interleave(top, bottom, row_axis)


def pad_to_multiple(x: np.ndarray, multiple: int, axes=(0, 1)) -> np.ndarray:
    """Symmetrically pad the trailing edge of ``axes`` up to a multiple of ``multiple``."""
    pad_width = [(0, 0)] * x.ndim
    for axis in axes:
        pad_width[axis] = (0, (-x.shape[axis]) % multiple)
    if all(after == 0 for _, after in pad_width):
        return x
    return np.pad(x, pad_width, mode="symmetric")


def crop_to_shape(x: np.ndarray, shape, axes=(0, 1)) -> np.ndarray:
    """Crop ``axes`` of ``x`` to the leading ``shape`` entries."""
    index = [slice(None)] * x.ndim
    for axis, size in zip(axes, shape):
        index[axis] = slice(0, size)
    return x[tuple(index)]


@dataclass
class WaveletPyramid:
    """Subband sets of a multi-level Haar decomposition.

    Parameters
    ----------
    levels : list of dict
        ``levels[l]`` maps each of ``"LL"``, ``"LH"``, ``"HL"`` and ``"HH"`` to the
        subband array of level ``l + 1``. Deeper levels decompose the previous
        level's ``LL``.
    base_shape : tuple of int
        Shape of the input before padding.
    padded_shape : tuple of int
        Shape of the input after padding to a multiple of ``2 ** n_levels``.
    """

    levels: List[dict]
    base_shape: Tuple[int, ...]
    padded_shape: Tuple[int, ...] = field(default=None)

    def __post_init__(self):
        if self.padded_shape is None:
            self.padded_shape = tuple(self.base_shape)
        self.base_shape = tuple(self.base_shape)
        self.padded_shape = tuple(self.padded_shape)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def coefficients(self) -> List[np.ndarray]:
        """Non-redundant coefficients: deepest ``LL`` plus every detail band."""
        coeffs = [self.levels[-1]["LL"]]
        for level in self.levels:
            coeffs.extend(level[band] for band in DETAIL_BANDS)
        return coeffs

    def energy(self) -> float:
        """Sum of squared non-redundant coefficients."""
        return float(sum(np.sum(np.square(c)) for c in self.coefficients()))

    def check(self) -> None:
        """Raise ``ValueError`` when subband shapes are inconsistent."""
        if self.n_levels == 0:
            raise ValueError("WaveletPyramid has no levels")
        rows, cols = self.padded_shape[0], self.padded_shape[1]
        for depth, level in enumerate(self.levels, start=1):
            missing = set(SUBBANDS) - set(level)
            if missing:
                raise ValueError(f"Level {depth} is missing subbands {sorted(missing)}")
            expected = (rows // 2**depth, cols // 2**depth)
            for band in SUBBANDS:
                shape = np.shape(level[band])
                if shape[:2] != expected or shape[2:] != tuple(self.padded_shape[2:]):
                    raise ValueError(
                        f"Subband {band} at level {depth} has shape {shape}, expected "
                        f"{expected + tuple(self.padded_shape[2:])}"
                    )


def haar_dwt2(img, levels: int) -> WaveletPyramid:
    """Multi-level orthonormal Haar decomposition.

    Parameters
    ----------
    img : array-like of shape (H, W) or (H, W, C), or ImageTensor
        Input raster. Channels are transformed independently.
    levels : int
        Number of decomposition levels, at least 1.

    Returns
    -------
    pyramid : WaveletPyramid
        Per 2x2 block ``[[a, b], [c, d]]``: ``LL = (a+b+c+d)/2``,
        ``LH = (a-b+c-d)/2``, ``HL = (a+b-c-d)/2`` and ``HH = (a-b-c+d)/2``.

    Notes
    -----
    Inputs whose spatial dimensions are not a multiple of ``2 ** levels`` are
    symmetrically padded on the bottom and right. The inverse crops the padding.
    """
    if isinstance(levels, bool) or not isinstance(levels, (int, np.integer)) or levels <= 0:
        raise ValueError(f"levels must be a positive integer, got {levels!r}")
    x = np.asarray(getattr(img, "data", img), dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ValueError(f"haar_dwt2 expects a (H, W) or (H, W, C) array, got shape {x.shape}")
    if x.size == 0:
        raise ValueError("haar_dwt2 received an empty input")

    base_shape = x.shape
    x = pad_to_multiple(x, 2**levels)
    padded_shape = x.shape
    if padded_shape != base_shape:
        logger.debug(f"Padded {base_shape} to {padded_shape} for {levels} Haar levels")

    subbands = []
    current = x
    for _ in range(levels):
        ll, lh, hl, hh = _haar_step(current)
        subbands.append({"LL": ll, "LH": lh, "HL": hl, "HH": hh})
        current = ll
    return WaveletPyramid(levels=subbands, base_shape=base_shape, padded_shape=padded_shape)


def haar_idwt2(pyr: WaveletPyramid) -> np.ndarray:
    """Invert :func:`haar_dwt2`, cropping any padding the forward pass added.

    Reconstruction starts from the deepest ``LL`` so the intermediate ``LL`` of
    shallower levels is not consulted.
    """
    pyr.check()
    current = np.asarray(pyr.levels[-1]["LL"], dtype=np.float64)
    for level in reversed(pyr.levels):
        current = _haar_step_inverse(current, level["LH"], level["HL"], level["HH"])
    return crop_to_shape(current, pyr.base_shape[:2])


def wavelet_feature_stack(img, levels: int) -> List[np.ndarray]:
    """Per-level detail bands stacked along the channel axis.

    Parameters
    ----------
    img : ImageTensor or array-like of shape (H, W, C)
        Input image.
    levels : int
        Number of pyramid levels.

    Returns
    -------
    features : list of ndarray
        ``features[l]`` has shape ``(H / 2**(l+1), W / 2**(l+1), 3 * C)`` and holds
        ``[LH, HL, HH]`` in that order, each band contributing ``C`` channels.
    """
    data = as_image_array(img)
    pyr = haar_dwt2(data, levels)
    return [np.concatenate([level[band] for band in DETAIL_BANDS], axis=-1) for level in pyr.levels]


def rescale_band(band: np.ndarray) -> np.ndarray:
    """Affinely map a subband to ``[0, 1]`` for visual inspection."""
    lo, hi = float(np.min(band)), float(np.max(band))
    if hi - lo < 1e-12:
        return np.zeros_like(band, dtype=np.float64)
    return (band - lo) / (hi - lo)
