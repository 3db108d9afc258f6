"""Three-stage inference: mask, then prior, then shadow-free image."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..image import ImageTensor, ShadowMask, as_image_array, gray_to_rgb, load_image, save_image
from ..nn import MaskedAutoencoder, ShadowRemover, ShadowSegmenter
from ..nn import _mae, _removal, _segmenter
from ..wavelet import crop_to_shape, pad_to_multiple
from ._checkpoint import load_model

logger = logging.getLogger(__name__)

STAGES = ("segment", "prior", "removal")
PathOrModel = Union[str, Path, ShadowSegmenter, MaskedAutoencoder, ShadowRemover]


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and the cause is chained."""

    def __init__(self, stage: str, error: Exception):
        super().__init__(f"{stage}: {type(error).__name__}: {error}")
        self.stage = stage


@dataclass
class PipelineResult:
    """Intermediates and output of :func:`pipeline_infer`.

    Attributes
    ----------
    image : ImageTensor
        The input image.
    mask : ShadowMask
        Predicted (or supplied) shadow mask.
    prior : ImageTensor or None
        Contextual prior; ``None`` when the remover uses no prior.
    output : ImageTensor
        Shadow-free estimate.
    """

    image: ImageTensor
    mask: ShadowMask
    prior: Optional[ImageTensor]
    output: ImageTensor


def _resolve(model, task, cls, device):
    if isinstance(model, cls):
        return model
    return load_model(model, task=task, device=device)


def _multiple(*models) -> int:
    sizes = []
    for model in models:
        if model is None:
            continue
        cfg = model.cfg
        sizes.append(cfg.patch_size if isinstance(model, MaskedAutoencoder) else cfg.divisor)
    return math.lcm(*sizes) if sizes else 1


def pipeline_infer(
    image,
    segmenter: Optional[PathOrModel] = None,
    prior: Optional[PathOrModel] = None,
    removal: PathOrModel = None,
    mask: Optional[ShadowMask] = None,
    device: str = "cpu",
) -> PipelineResult:
    """Run segmentation, prior generation and removal on one image.

    Inputs of any size are padded on their trailing edges to a multiple of every
    network's stride and the outputs are cropped back.

    Parameters
    ----------
    image : ImageTensor, ndarray or path
        Shadowed image. Gray images are expanded to RGB.
    segmenter, prior, removal : model or checkpoint path
        Trained networks. ``segmenter`` may be omitted when ``mask`` is given and
        ``prior`` when the remover uses no prior.
    mask : ShadowMask, optional
        Skip segmentation and use this mask.
    device : str, default="cpu"
        Device for networks loaded from checkpoints.

    Returns
    -------
    result : PipelineResult

    Raises
    ------
    PipelineStageError
        If a stage fails; the message starts with ``segment``, ``prior`` or
        ``removal``.
    """
    if isinstance(image, (str, Path)):
        image = load_image(image)
    data = as_image_array(image)
    if data.shape[2] == 1:
        data = gray_to_rgb(data[:, :, 0])
    shape = data.shape[:2]

    removal_model = _resolve(removal, "removal", ShadowRemover, device)
    seg_model = None
    if mask is None:
        if segmenter is None:
            raise ValueError("pipeline_infer needs a segmenter when no mask is given")
        seg_model = _resolve(segmenter, "seg", ShadowSegmenter, device)
    prior_model = None
    if removal_model.cfg.use_prior:
        if prior is None:
            raise ValueError("The removal model uses priors but no prior model was given")
        prior_model = _resolve(prior, "mae", MaskedAutoencoder, device)

    multiple = _multiple(seg_model, prior_model, removal_model)
    padded = ImageTensor(pad_to_multiple(data, multiple))
    if multiple > 1 and padded.shape != data.shape:
        logger.debug(f"Padded {data.shape[:2]} to {padded.shape[:2]}")

    try:
        if mask is None:
            mask_padded = _segmenter.predict_mask(padded, seg_model)
        else:
            if not isinstance(mask, ShadowMask):
                mask = ShadowMask(mask)
            mask.check_matches(ImageTensor(data))
            mask_padded = ShadowMask(pad_to_multiple(mask.data, multiple), mask.threshold)
    except Exception as exc:
        raise PipelineStageError("segment", exc) from exc

    prior_padded = None
    try:
        if prior_model is not None:
            prior_padded = _mae.generate_prior(padded, mask_padded, prior_model)
    except Exception as exc:
        raise PipelineStageError("prior", exc) from exc

    try:
        output_padded = _removal.remove_shadow(padded, mask_padded, removal_model, prior_padded)
    except Exception as exc:
        raise PipelineStageError("removal", exc) from exc

    def crop(img):
        return ImageTensor(crop_to_shape(img.data, shape))

    return PipelineResult(
        image=ImageTensor(data),
        mask=ShadowMask(crop_to_shape(mask_padded.data, shape), mask_padded.threshold),
        prior=None if prior_padded is None else crop(prior_padded),
        output=crop(output_padded),
    )


def panel(result: PipelineResult) -> np.ndarray:
    """Input, mask, prior and output side by side, ``H x 4W x 3``.

    A missing prior is drawn as the input image.
    """
    mask_rgb = gray_to_rgb(result.mask.data)
    prior = result.image if result.prior is None else result.prior
    tiles = [result.image.data, mask_rgb, prior.data, result.output.data]
    return np.concatenate(tiles, axis=1)


def save_panel(result: PipelineResult, path) -> Path:
    """Write the four-panel PNG of a pipeline result."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_image(ImageTensor(panel(result)), path)
    logger.info(f"Wrote panel {path}")
    return path
