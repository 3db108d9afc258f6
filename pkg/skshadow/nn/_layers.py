"""Building blocks shared by the segmentation, prior and removal networks."""

import numpy as np
import torch
from torch import nn

from ..image import as_image_array


def activation(test_mode: bool = False) -> nn.Module:
    """GELU, or identity when ``test_mode`` is set."""
    return nn.Identity() if test_mode else nn.GELU()


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by a single-group norm and GELU.

    Group normalization with one group normalizes each sample independently, so
    the output never depends on the batch composition.
    """

    def __init__(self, in_channels: int, out_channels: int, test_mode: bool = False):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            nn.GroupNorm(1, out_channels),
            activation(test_mode),
            nn.Conv2d(out_channels, out_channels, 3, padding=1),
            nn.GroupNorm(1, out_channels),
            activation(test_mode),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.body(x)


class ResBlock(nn.Module):
    """Residual pair of 3x3 convolutions, ``x + conv(act(conv(x)))``."""

    def __init__(self, channels: int, test_mode: bool = False):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = activation(test_mode)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))


def module_device_dtype(module: nn.Module):
    """Device and floating dtype of a module's first parameter."""
    param = next(module.parameters())
    return param.device, param.dtype


def image_to_tensor(img, device=None, dtype=torch.float32) -> torch.Tensor:
    """Convert an ``H x W x C`` image into a ``1 x C x H x W`` tensor."""
    data = as_image_array(img)
    tensor = torch.from_numpy(np.ascontiguousarray(data.transpose(2, 0, 1)))
    return tensor.unsqueeze(0).to(device=device, dtype=dtype)


def mask_to_tensor(mask, device=None, dtype=torch.float32) -> torch.Tensor:
    """Convert an ``H x W`` mask into a ``1 x 1 x H x W`` tensor."""
    data = np.asarray(getattr(mask, "data", mask), dtype=np.float64)
    tensor = torch.from_numpy(np.ascontiguousarray(data))
    return tensor[None, None].to(device=device, dtype=dtype)


def tensor_to_array(tensor: torch.Tensor) -> np.ndarray:
    """Convert a ``1 x C x H x W`` tensor into an ``H x W x C`` float64 array."""
    if tensor.ndim != 4 or tensor.shape[0] != 1:
        raise ValueError(f"Expected a single-sample NCHW tensor, got shape {tuple(tensor.shape)}")
    return tensor[0].detach().cpu().double().numpy().transpose(1, 2, 0)


def check_divisible(shape, divisor: int, what: str) -> None:
    """Raise ``ValueError`` unless both spatial dims are multiples of ``divisor``."""
    height, width = shape[0], shape[1]
    if height % divisor or width % divisor:
        raise ValueError(
            f"{what} requires spatial dimensions divisible by {divisor}, got {height}x{width}"
        )
