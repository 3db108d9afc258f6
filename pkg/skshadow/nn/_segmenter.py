"""Shadow mask prediction with wavelet features injected into each encoder stage."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from numbers import Integral
from typing import List, Optional

import torch
from sklearn.utils._param_validation import Interval
from torch import nn

from .._utils import ConfigMixin
from ..image import ShadowMask, as_image_array
from ..wavelet import _haar_step
from ._layers import (
    ConvBlock,
    activation,
    check_divisible,
    image_to_tensor,
    module_device_dtype,
    tensor_to_array,
)

logger = logging.getLogger(__name__)

PROB_EPS = 1e-6


@dataclass
class SegmenterConfig(ConfigMixin):
    """Architecture of a :class:`ShadowSegmenter`.

    Parameters
    ----------
    base_channels : int, default=16
        Channels at full resolution; stage ``l`` has ``base_channels * 2**l``.
    depth : int, default=3
        Number of stride-2 encoder stages, at least 2.
    wavelet_levels : int, default=None
        Haar pyramid depth. Defaults to, and must equal, ``depth``.
    adapter_channels : int, default=8
        Hidden width of each wavelet projection.
    in_channels : int, default=3
        Image channels.
    use_wavelet : bool, default=True
        Whether wavelet features are injected. ``False`` is the plain backbone.
    test_mode : bool, default=False
        Replace nonlinearities with identity.
    """

    base_channels: int = 16
    depth: int = 3
    wavelet_levels: Optional[int] = None
    adapter_channels: int = 8
    in_channels: int = 3
    use_wavelet: bool = True
    test_mode: bool = False

    _parameter_constraints = {
        "base_channels": [Interval(Integral, 1, None, closed="left")],
        "depth": [Interval(Integral, 2, None, closed="left")],
        "wavelet_levels": [Interval(Integral, 1, None, closed="left"), None],
        "adapter_channels": [Interval(Integral, 1, None, closed="left")],
        "in_channels": [Interval(Integral, 1, None, closed="left")],
        "use_wavelet": ["boolean"],
        "test_mode": ["boolean"],
    }

    def _check_invariants(self):
        if self.wavelet_levels is None:
            self.wavelet_levels = self.depth
        if self.wavelet_levels != self.depth:
            raise ValueError(
                f"wavelet_levels ({self.wavelet_levels}) must equal depth ({self.depth})"
            )

    @property
    def divisor(self) -> int:
        return 2**self.depth

    def stage_channels(self, stage: int) -> int:
        return self.base_channels * 2**stage


class BaseAdapter(nn.Module, ABC):
    """Interface for modules that add side features to backbone features.

    Implementations must return a tensor with exactly the shape of
    ``backbone_features``; injection never reshapes.
    """

    @abstractmethod
    def inject(
        self, stage_index: int, backbone_features: torch.Tensor, wavelet_features: torch.Tensor
    ) -> torch.Tensor:
        """Return ``backbone_features`` enriched with ``wavelet_features``."""


class WaveletAdapter(BaseAdapter):
    """Per-stage 1x1 projections of Haar detail bands, added to the features.

    The last projection of every stage is zero-initialized so a freshly built
    adapter is an exact identity.

    Parameters
    ----------
    cfg : SegmenterConfig
        Segmenter architecture.
    """

    def __init__(self, cfg: SegmenterConfig):
        super().__init__()
        wave_channels = 3 * cfg.in_channels
        self.projections = nn.ModuleList()
        for stage in range(1, cfg.depth + 1):
            proj = nn.Sequential(
                nn.Conv2d(wave_channels, cfg.adapter_channels, 1, bias=False),
                activation(cfg.test_mode),
                nn.Conv2d(cfg.adapter_channels, cfg.stage_channels(stage), 1, bias=False),
            )
            nn.init.zeros_(proj[-1].weight)
            self.projections.append(proj)

    def inject(self, stage_index, backbone_features, wavelet_features):
        if backbone_features.shape[-2:] != wavelet_features.shape[-2:]:
            raise ValueError(
                f"Stage {stage_index}: wavelet features {tuple(wavelet_features.shape[-2:])} do "
                f"not match backbone features {tuple(backbone_features.shape[-2:])}"
            )
        return backbone_features + self.projections[stage_index - 1](wavelet_features)

    def forward(self, stage_index, backbone_features, wavelet_features):
        return self.inject(stage_index, backbone_features, wavelet_features)


def wavelet_features_torch(x: torch.Tensor, levels: int) -> List[torch.Tensor]:
    """Detail bands of an ``N x C x H x W`` batch, one ``N x 3C`` tensor per level.

    Band-major channel order ``[LH, HL, HH]`` as in
    :func:`skshadow.wavelet.wavelet_feature_stack`.
    """
    feats = []
    current = x
    for _ in range(levels):
        ll, lh, hl, hh = _haar_step(current, axes=(-2, -1))
        feats.append(torch.cat([lh, hl, hh], dim=1))
        current = ll
    return feats


class ShadowSegmenter(nn.Module):
    """Encoder-decoder mask predictor with skip connections and an adapter.

    Parameters
    ----------
    cfg : SegmenterConfig
        Architecture.
    adapter : BaseAdapter, optional
        Side-feature adapter. Defaults to a :class:`WaveletAdapter`.
    """

    def __init__(self, cfg: SegmenterConfig, adapter: Optional[BaseAdapter] = None):
        super().__init__()
        self.cfg = cfg
        c0 = cfg.base_channels
        self.stem = ConvBlock(cfg.in_channels, c0, cfg.test_mode)

        self.downs = nn.ModuleList()
        self.enc_blocks = nn.ModuleList()
        for stage in range(1, cfg.depth + 1):
            c_in, c_out = cfg.stage_channels(stage - 1), cfg.stage_channels(stage)
            self.downs.append(nn.Conv2d(c_in, c_out, 3, stride=2, padding=1))
            self.enc_blocks.append(ConvBlock(c_out, c_out, cfg.test_mode))

        self.ups = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        for stage in range(cfg.depth, 0, -1):
            c_in, c_out = cfg.stage_channels(stage), cfg.stage_channels(stage - 1)
            self.ups.append(nn.ConvTranspose2d(c_in, c_out, 2, stride=2))
            self.dec_blocks.append(ConvBlock(2 * c_out, c_out, cfg.test_mode))

        self.head = nn.Conv2d(c0, 1, 1)
        self.adapter = adapter if adapter is not None else WaveletAdapter(cfg)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """Return shadow probabilities of shape ``N x 1 x H x W``."""
        check_divisible(x.shape[-2:], self.cfg.divisor, "ShadowSegmenter")
        waves = wavelet_features_torch(x, self.cfg.wavelet_levels) if self.cfg.use_wavelet else None

        feats = self.stem(x)
        skips = [feats]
        for stage, (down, block) in enumerate(zip(self.downs, self.enc_blocks), start=1):
            feats = down(feats)
            if waves is not None:
                feats = self.adapter.inject(stage, feats, waves[stage - 1])
            feats = block(feats)
            skips.append(feats)

        skips.pop()
        for up, block in zip(self.ups, self.dec_blocks):
            feats = up(feats)
            feats = block(torch.cat([feats, skips.pop()], dim=1))

        probs = torch.sigmoid(self.head(feats))
        return probs.clamp(PROB_EPS, 1.0 - PROB_EPS)


def adapter_inject(
    stage: int, feats: torch.Tensor, wave_feats: torch.Tensor, adapter: BaseAdapter
) -> torch.Tensor:
    """Inject stage-matched wavelet features through ``adapter``."""
    return adapter.inject(stage, feats, wave_feats)


def predict_mask(img, model: ShadowSegmenter, threshold: float = 0.5) -> ShadowMask:
    """Predict a soft shadow mask for one image.

    Parameters
    ----------
    img : ImageTensor or array-like of shape (H, W, C)
        Input image; ``H`` and ``W`` must be divisible by ``2 ** depth``.
    model : ShadowSegmenter
        Trained segmenter.
    threshold : float, default=0.5
        Binarization threshold carried by the returned mask.

    Returns
    -------
    mask : ShadowMask
        Values strictly inside ``(0, 1)``.
    """
    check_divisible(as_image_array(img).shape, model.cfg.divisor, "predict_mask")
    device, dtype = module_device_dtype(model)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        probs = model(image_to_tensor(img, device=device, dtype=dtype))
    model.train(was_training)
    return ShadowMask(tensor_to_array(probs)[:, :, 0], threshold=threshold)


def _as_prob_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    data = getattr(x, "data", x)
    return torch.as_tensor(data, dtype=torch.float64)


def segmentation_loss(pred, gt, smooth: float = 1.0) -> torch.Tensor:
    """Balanced binary cross-entropy plus ``1 - soft IoU``.

    The cross-entropy term weights the mean over shadow pixels and the mean
    over non-shadow pixels by one half each; if one class is absent the other
    class mean is used alone. Both terms pool over the whole batch.

    Parameters
    ----------
    pred : Tensor or ShadowMask
        Predicted probabilities, any shape.
    gt : Tensor or ShadowMask
        Binary ground truth with the shape of ``pred``.
    smooth : float, default=1.0
        Additive smoothing of the soft IoU ratio.

    Returns
    -------
    loss : Tensor
        Nonnegative scalar.
    """
    pred = _as_prob_tensor(pred)
    gt = _as_prob_tensor(gt).to(dtype=pred.dtype, device=pred.device)
    if pred.shape != gt.shape:
        raise ValueError(f"Shape mismatch: pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}")

    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    pos = gt >= 0.5
    neg = ~pos
    terms = []
    if pos.any():
        terms.append(-torch.log(p[pos]).mean())
    if neg.any():
        terms.append(-torch.log(1.0 - p[neg]).mean())
    bce = terms[0] if len(terms) == 1 else 0.5 * (terms[0] + terms[1])

    intersection = (p * gt).sum()
    union = (p + gt - p * gt).sum()
    iou = (intersection + smooth) / (union + smooth)
    return bce + (1.0 - iou)
