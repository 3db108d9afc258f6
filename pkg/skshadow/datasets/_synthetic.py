"""Synthetic paired shadow data with exactly known construction laws."""

import logging
from dataclasses import dataclass
from numbers import Integral, Real
from typing import Iterator, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.ndimage import gaussian_filter, zoom
from skimage.draw import ellipse, polygon
from sklearn.utils._param_validation import Interval

from .._utils import ConfigMixin
from ..image import ImageTensor, ShadowMask

logger = logging.getLogger(__name__)

GENERATOR_VERSION = 1
MIN_AREA, MAX_AREA = 0.05, 0.40
_MAX_SHAPE_ATTEMPTS = 100
SHAPES = ("ellipse", "polygon")


@dataclass
class SampleTriplet:
    """A shadow image, its binary mask and the shadow-free target.

    Parameters
    ----------
    name : str
        Sample identifier, the file stem on disk.
    shadow_img : ImageTensor
        Image with the shadow.
    mask : ShadowMask
        Binary shadow mask.
    free_img : ImageTensor
        Shadow-free ground truth.
    """

    name: str
    shadow_img: ImageTensor
    mask: ShadowMask
    free_img: ImageTensor

    def __post_init__(self):
        if self.shadow_img.shape != self.free_img.shape:
            raise ValueError(
                f"{self.name}: shadow image {self.shadow_img.shape} and shadow-free image "
                f"{self.free_img.shape} differ in shape"
            )
        self.mask.check_matches(self.shadow_img)


@dataclass
class SynthConfig(ConfigMixin):
    """Settings of the synthetic triplet generator.

    Parameters
    ----------
    size : int, default=64
        Side of the square images.
    count : int, default=100
        Number of triplets.
    seed : int, default=0
        Root seed; sample ``i`` draws from ``default_rng([seed, i])``.
    darken_range : tuple of float, default=(0.3, 0.7)
        Range of the darkening strength ``d``, inside ``(0, 1)``.
    soft_edge_sigma : float, default=1.5
        Gaussian width of the soft shadow edge, in pixels.
    shapes : tuple of str, default=("ellipse", "polygon")
        Shadow shapes to draw from.
    tint : bool, default=False
        Scale the darkening per channel, stronger in red than in blue.
    n_jobs : int, default=None
        Workers for :class:`joblib.Parallel`.
    """

    size: int = 64
    count: int = 100
    seed: int = 0
    darken_range: Tuple[float, float] = (0.3, 0.7)
    soft_edge_sigma: float = 1.5
    shapes: Tuple[str, ...] = SHAPES
    tint: bool = False
    n_jobs: Optional[int] = None

    _parameter_constraints = {
        "size": [Interval(Integral, 16, None, closed="left")],
        "count": [Interval(Integral, 1, None, closed="left")],
        "seed": [Interval(Integral, 0, None, closed="left")],
        "darken_range": ["array-like"],
        "soft_edge_sigma": [Interval(Real, 0.0, None, closed="left")],
        "shapes": ["array-like"],
        "tint": ["boolean"],
        "n_jobs": [Integral, None],
    }

    def _check_invariants(self):
        self.darken_range = tuple(float(d) for d in self.darken_range)
        self.shapes = tuple(self.shapes)
        if len(self.darken_range) != 2:
            raise ValueError(f"darken_range must have two entries, got {self.darken_range}")
        lo, hi = self.darken_range
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError(
                f"darken_range must satisfy 0 < low <= high < 1, got {self.darken_range}"
            )
        unknown = set(self.shapes) - set(SHAPES)
        if not self.shapes or unknown:
            raise ValueError(f"shapes must be a nonempty subset of {SHAPES}, got {self.shapes}")


def make_background(size: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth random scene: low-frequency noise, a gradient and textured rectangles."""
    coarse = rng.uniform(0.15, 0.95, size=(6, 6, 3))
    noise = zoom(coarse, (size / 6, size / 6, 1), order=3, mode="reflect")[:size, :size]
    noise = gaussian_filter(noise, sigma=(size / 16, size / 16, 0))

    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * xx + np.sin(angle) * yy
    ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-12)
    gradient = ramp[:, :, None] * rng.uniform(-0.25, 0.25, size=3)

    img = noise + gradient
    for _ in range(rng.integers(1, 4)):
        h, w = rng.integers(size // 8, size // 3, size=2)
        top, left = rng.integers(0, size - h), rng.integers(0, size - w)
        color = rng.uniform(0.2, 0.9, size=3)
        texture = gaussian_filter(rng.normal(0, 0.04, size=(h, w)), sigma=0.7)
        img[top : top + h, left : left + w] = color + texture[:, :, None]
    return np.clip(img, 0.0, 1.0)


def _draw_shape(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    binary = np.zeros((size, size), dtype=bool)
    center_r, center_c = rng.uniform(0.25, 0.75, size=2) * size
    if kind == "ellipse":
        r_radius, c_radius = rng.uniform(0.1, 0.4, size=2) * size
        rotation = rng.uniform(-np.pi, np.pi)
        rr, cc = ellipse(
            center_r, center_c, r_radius, c_radius, shape=binary.shape, rotation=rotation
        )
    else:
        n_vertices = rng.integers(3, 8)
        angles = np.sort(rng.uniform(0, 2 * np.pi, size=n_vertices))
        radii = rng.uniform(0.15, 0.45, size=n_vertices) * size
        rr, cc = polygon(
            center_r + radii * np.sin(angles), center_c + radii * np.cos(angles), shape=binary.shape
        )
    binary[rr, cc] = True
    return binary


def make_shadow_mask(size: int, shapes, rng: np.random.Generator) -> np.ndarray:
    """Random ellipse or polygon covering between 5% and 40% of the pixels."""
    for _ in range(_MAX_SHAPE_ATTEMPTS):
        binary = _draw_shape(shapes[rng.integers(len(shapes))], size, rng)
        if MIN_AREA <= binary.mean() <= MAX_AREA:
            return binary
    # disc of 20% area
    radius = np.sqrt(0.2 * size * size / np.pi)
    binary = np.zeros((size, size), dtype=bool)
    rr, cc = ellipse(size / 2, size / 2, radius, radius, shape=binary.shape)
    binary[rr, cc] = True
    return binary


def soften_mask(binary: np.ndarray, sigma: float) -> np.ndarray:
    """Soft shadow map supported inside ``binary``; zero wherever ``binary`` is."""
    binary_f = binary.astype(np.float64)
    if sigma == 0:
        return binary_f
    return binary_f * gaussian_filter(binary_f, sigma=sigma)


def darken(free: np.ndarray, soft_mask: np.ndarray, strength: float, tint=None) -> np.ndarray:
    """Multiplicative shadow, ``free * (1 - strength * soft_mask * tint)``.

    Parameters
    ----------
    free : ndarray of shape (H, W, C)
        Shadow-free image.
    soft_mask : ndarray of shape (H, W)
        Shadow intensity in ``[0, 1]``.
    strength : float
        Darkening ``d`` in ``[0, 1)``.
    tint : ndarray of shape (C,), optional
        Per-channel factors in ``[0, 1]``; defaults to ones.
    """
    factor = strength * soft_mask[:, :, None]
    if tint is not None:
        factor = factor * np.asarray(tint, dtype=np.float64)
    return free * (1.0 - factor)


def make_triplet(cfg: SynthConfig, index: int) -> SampleTriplet:
    """Generate sample ``index``; a pure function of ``(cfg, index)``."""
    rng = np.random.default_rng([cfg.seed, index])
    free = make_background(cfg.size, rng)
    binary = make_shadow_mask(cfg.size, cfg.shapes, rng)
    soft = soften_mask(binary, cfg.soft_edge_sigma)
    strength = rng.uniform(*cfg.darken_range)
    # red darkens most, blue least
    tint = np.sort(rng.uniform(0.7, 1.0, size=3))[::-1] if cfg.tint else None
    shadow = darken(free, soft, strength, tint)
    return SampleTriplet(
        name=f"{index:05d}",
        shadow_img=ImageTensor(shadow),
        mask=ShadowMask(binary.astype(np.float64)),
        free_img=ImageTensor(free),
    )


def synthesize(cfg: SynthConfig) -> Iterator[SampleTriplet]:
    """Stream ``cfg.count`` synthetic triplets in index order.

    Samples are generated in parallel with :class:`joblib.Parallel`; each uses
    its own random stream so the output is independent of ``n_jobs``.

    Parameters
    ----------
    cfg : SynthConfig
        Generator settings.

    Yields
    ------
    triplet : SampleTriplet
        Shadow image, binary mask and shadow-free target. The shadow image
        equals the target wherever the mask is zero and never exceeds it.
    """
    logger.info(f"Synthesizing {cfg.count} triplets of size {cfg.size} with seed {cfg.seed}")
    results = Parallel(n_jobs=cfg.n_jobs, return_as="generator")(
        delayed(make_triplet)(cfg, index) for index in range(cfg.count)
    )
    yield from results
