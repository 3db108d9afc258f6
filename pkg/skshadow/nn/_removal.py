"""Residual shadow removal network with a mask-guided interaction bottleneck."""

import logging
import math
from dataclasses import dataclass
from numbers import Integral, Real
from typing import Optional

import numpy as np
import torch
import torch.nn.functional as F
from sklearn.utils._param_validation import Interval
from torch import nn

from .._utils import ConfigMixin
from ..image import ImageTensor, ShadowMask, as_image_array
from ._ffc import FfcBlock, FfcConfig
from ._layers import (
    ResBlock,
    check_divisible,
    image_to_tensor,
    mask_to_tensor,
    module_device_dtype,
    tensor_to_array,
)

logger = logging.getLogger(__name__)

CHARBONNIER_EPS = 1e-3

REMOVAL_VARIANTS = {
    "baseline": dict(use_prior=False, use_ffc=False),
    "prior": dict(use_prior=True, use_ffc=False),
    "prior_ffc": dict(use_prior=True, use_ffc=True),
}


@dataclass
class RemovalConfig(ConfigMixin):
    """Architecture of a :class:`ShadowRemover`.

    Parameters
    ----------
    base_channels : int, default=32
        Channels at full resolution; the bottleneck has ``base_channels * 2**depth``.
    depth : int, default=2
        Number of down/up sampling stages.
    sim_ffc_blocks : int, default=2
        FFC blocks following the mask-guided aggregation when ``use_ffc``.
    use_prior : bool, default=True
        Whether the contextual prior is concatenated to the input.
    use_ffc : bool, default=True
        Whether FFC blocks augment the interaction module.
    global_ratio : float, default=0.5
        Global channel fraction of the FFC blocks.
    input_channels : int, default=None
        Defaults to 7 with a prior (image, mask, prior) and 4 without.
    test_mode : bool, default=False
        Replace nonlinearities with identity.
    """

    base_channels: int = 32
    depth: int = 2
    sim_ffc_blocks: int = 2
    use_prior: bool = True
    use_ffc: bool = True
    global_ratio: float = 0.5
    input_channels: Optional[int] = None
    test_mode: bool = False

    _parameter_constraints = {
        "base_channels": [Interval(Integral, 1, None, closed="left")],
        "depth": [Interval(Integral, 1, None, closed="left")],
        "sim_ffc_blocks": [Interval(Integral, 0, None, closed="left")],
        "use_prior": ["boolean"],
        "use_ffc": ["boolean"],
        "global_ratio": [Interval(Real, 0.0, 1.0, closed="both")],
        "input_channels": [Interval(Integral, 1, None, closed="left"), None],
        "test_mode": ["boolean"],
    }

    def _check_invariants(self):
        expected = 7 if self.use_prior else 4
        if self.input_channels is None:
            self.input_channels = expected
        if self.input_channels != expected:
            raise ValueError(
                f"input_channels={self.input_channels} is inconsistent with "
                f"use_prior={self.use_prior}; expected {expected}"
            )
        if self.use_ffc and self.sim_ffc_blocks < 1:
            raise ValueError("sim_ffc_blocks must be at least 1 when use_ffc is True")

    @classmethod
    def from_variant(cls, variant: str, **kwargs) -> "RemovalConfig":
        """Build the configuration of a named ablation variant."""
        if variant not in REMOVAL_VARIANTS:
            raise ValueError(
                f"Unknown removal variant {variant!r}; choose from {sorted(REMOVAL_VARIANTS)}"
            )
        return cls(**{**kwargs, **REMOVAL_VARIANTS[variant]})

    @property
    def divisor(self) -> int:
        return 2**self.depth

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * 2**self.depth


class SimBlock(nn.Module):
    """Mask-guided interaction between shadow and non-shadow positions.

    Every bottleneck position attends to every other position. The attention
    logits get a learnable bonus ``sigma * X`` where ``X[i, j]`` is the soft
    probability that ``i`` and ``j`` lie in different regions, so information
    flows preferentially across the shadow boundary. The aggregated values
    enter the features through a zero-initialized per-channel gate, followed
    by ``sim_ffc_blocks`` FFC blocks when ``use_ffc``.

    Parameters
    ----------
    channels : int
        Feature channels.
    cfg : RemovalConfig
        Removal configuration providing the FFC settings.
    """

    def __init__(self, channels: int, cfg: RemovalConfig):
        super().__init__()
        self.channels = channels
        self.norm = nn.GroupNorm(1, channels)
        self.q = nn.Conv2d(channels, channels, 1)
        self.k = nn.Conv2d(channels, channels, 1)
        self.v = nn.Conv2d(channels, channels, 1)
        self.out_proj = nn.Conv2d(channels, channels, 1)
        self.sigma = nn.Parameter(torch.ones(1))
        self.gate = nn.Parameter(torch.zeros(1, channels, 1, 1))
        if cfg.use_ffc:
            ffc_cfg = FfcConfig(channels=channels, global_ratio=cfg.global_ratio)
            self.ffc = nn.ModuleList(
                [FfcBlock(ffc_cfg, test_mode=cfg.test_mode) for _ in range(cfg.sim_ffc_blocks)]
            )
        else:
            self.ffc = nn.ModuleList()

    def forward(self, feats: torch.Tensor, mask_small: torch.Tensor) -> torch.Tensor:
        if mask_small.shape[-2:] != feats.shape[-2:]:
            raise ValueError(
                f"mask_small {tuple(mask_small.shape[-2:])} does not match features "
                f"{tuple(feats.shape[-2:])}"
            )
        n, c, h, w = feats.shape
        x = self.norm(feats)
        q = self.q(x).flatten(2).transpose(1, 2)
        k = self.k(x).flatten(2)
        v = self.v(x).flatten(2).transpose(1, 2)
        m = mask_small.reshape(n, h * w, 1).to(feats.dtype)
        cross = m * (1 - m).transpose(1, 2) + (1 - m) * m.transpose(1, 2)

        logits = torch.bmm(q, k) / math.sqrt(c) + self.sigma * cross
        attn = torch.softmax(logits, dim=-1)
        agg = torch.bmm(attn, v).transpose(1, 2).reshape(n, c, h, w)
        out = feats + self.gate * self.out_proj(agg)
        for block in self.ffc:
            out = block(out)
        return out


class ShadowRemover(nn.Module):
    """Encoder, mask-guided bottleneck and decoder predicting a residual.

    The input is the channel concatenation of the image, the mask and, when
    ``use_prior``, the contextual prior. The output is
    ``clamp(image + residual, 0, 1)``; the residual head is zero-initialized.

    Parameters
    ----------
    cfg : RemovalConfig
        Architecture.
    """

    def __init__(self, cfg: RemovalConfig):
        super().__init__()
        self.cfg = cfg
        c0 = cfg.base_channels
        self.stem = nn.Conv2d(cfg.input_channels, c0, 3, padding=1)

        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        for stage in range(cfg.depth):
            ch = c0 * 2**stage
            self.enc_blocks.append(ResBlock(ch, cfg.test_mode))
            self.downs.append(nn.Conv2d(ch, 2 * ch, 4, stride=2, padding=1))

        bottleneck = cfg.bottleneck_channels
        self.bottleneck = ResBlock(bottleneck, cfg.test_mode)
        self.sim = SimBlock(bottleneck, cfg)

        self.ups = nn.ModuleList()
        self.fuses = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        for stage in range(cfg.depth - 1, -1, -1):
            ch = c0 * 2**stage
            self.ups.append(nn.ConvTranspose2d(2 * ch, ch, 2, stride=2))
            self.fuses.append(nn.Conv2d(2 * ch, ch, 1))
            self.dec_blocks.append(ResBlock(ch, cfg.test_mode))

        self.head = nn.Conv2d(c0, 3, 3, padding=1)
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def residual(
        self, img: torch.Tensor, mask: torch.Tensor, prior: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        """Correction added to ``img``, ``N x 3 x H x W``; zero while the head is zero."""
        check_divisible(img.shape[-2:], self.cfg.divisor, "ShadowRemover")
        if mask.shape[-2:] != img.shape[-2:]:
            raise ValueError(
                f"Mask {tuple(mask.shape[-2:])} does not match image {tuple(img.shape[-2:])}"
            )
        inputs = [img, mask]
        if self.cfg.use_prior:
            if prior is None:
                raise ValueError("A prior image is required when use_prior is True")
            if prior.shape != img.shape:
                raise ValueError(
                    f"Prior {tuple(prior.shape)} does not match image {tuple(img.shape)}"
                )
            inputs.append(prior)

        feats = self.stem(torch.cat(inputs, dim=1))
        skips = []
        for block, down in zip(self.enc_blocks, self.downs):
            feats = block(feats)
            skips.append(feats)
            feats = down(feats)

        mask_small = F.avg_pool2d(mask, kernel_size=self.cfg.divisor)
        feats = self.sim(self.bottleneck(feats), mask_small)

        for up, fuse, block in zip(self.ups, self.fuses, self.dec_blocks):
            feats = up(feats)
            feats = block(fuse(torch.cat([feats, skips.pop()], dim=1)))

        return self.head(feats)

    def forward(
        self, img: torch.Tensor, mask: torch.Tensor, prior: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        """Return the shadow-free estimate, ``N x 3 x H x W``."""
        return torch.clamp(img + self.residual(img, mask, prior), 0.0, 1.0)


def sim_forward(feats: torch.Tensor, mask_small: torch.Tensor, sim: SimBlock) -> torch.Tensor:
    """Run a :class:`SimBlock` on bottleneck features and a downsampled mask."""
    return sim(feats, mask_small)


def remove_shadow(
    img, mask, model: ShadowRemover, prior: Optional[ImageTensor] = None
) -> ImageTensor:
    """Remove the shadow from one image.

    Parameters
    ----------
    img : ImageTensor
        Shadowed image, spatial dims divisible by ``2 ** depth``.
    mask : ShadowMask
        Shadow mask of the same size; soft values are used as they are.
    model : ShadowRemover
        Trained removal network.
    prior : ImageTensor, optional
        Contextual prior; required exactly when ``model.cfg.use_prior``.

    Returns
    -------
    free : ImageTensor
        Shadow-free estimate.
    """
    data = as_image_array(img)
    mask_data = mask.data if isinstance(mask, ShadowMask) else mask
    if model.cfg.use_prior and prior is None:
        raise ValueError("remove_shadow requires a prior when the model uses priors")
    device, dtype = module_device_dtype(model)
    prior_t = None
    if model.cfg.use_prior:
        prior_data = as_image_array(prior)
        if prior_data.shape != data.shape:
            raise ValueError(f"Prior shape {prior_data.shape} does not match image {data.shape}")
        prior_t = image_to_tensor(prior_data, device, dtype)

    was_training = model.training
    model.eval()
    with torch.no_grad():
        residual = model.residual(
            image_to_tensor(data, device, dtype), mask_to_tensor(mask_data, device, dtype), prior_t
        )
    model.train(was_training)
    # the residual is added in float64 so a zero head returns the input bit-exactly
    return ImageTensor(np.clip(data + tensor_to_array(residual), 0.0, 1.0))


def removal_loss(pred: torch.Tensor, gt: torch.Tensor, eps: float = CHARBONNIER_EPS):
    """Charbonnier loss, ``mean(sqrt(diff**2 + eps**2) - eps)``.

    Exactly zero when ``pred == gt``.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"Shape mismatch: pred {tuple(pred.shape)} vs gt {tuple(gt.shape)}")
    eps_t = torch.tensor(eps, dtype=pred.dtype, device=pred.device)
    diff = pred - gt
    return (torch.sqrt(diff * diff + eps_t * eps_t) - eps_t).mean()
