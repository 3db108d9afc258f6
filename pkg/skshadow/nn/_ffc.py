"""Fast Fourier convolution blocks with a local and a spectral branch."""

from dataclasses import dataclass
from numbers import Integral, Real

import torch
from sklearn.utils._param_validation import Interval
from torch import nn

from .._utils import ConfigMixin
from ._layers import activation


@dataclass
class FfcConfig(ConfigMixin):
    """Channel split and kernel size of an :class:`FfcBlock`.

    Parameters
    ----------
    channels : int
        Total number of channels, at least 2.
    global_ratio : float, default=0.5
        Fraction of channels routed through the global (spectral) branch. The
        global branch holds ``round(global_ratio * channels)`` channels.
    spatial_kernel : int, default=3
        Odd kernel size of the spatial cross-path convolutions.
    """

    channels: int
    global_ratio: float = 0.5
    spatial_kernel: int = 3

    _parameter_constraints = {
        "channels": [Interval(Integral, 2, None, closed="left")],
        "global_ratio": [Interval(Real, 0.0, 1.0, closed="both")],
        "spatial_kernel": [Interval(Integral, 1, None, closed="left")],
    }

    def _check_invariants(self):
        if self.spatial_kernel % 2 == 0:
            raise ValueError(f"spatial_kernel must be odd, got {self.spatial_kernel}")
        if self.global_ratio > 0 and self.global_channels < 1:
            raise ValueError(
                f"global_ratio={self.global_ratio} leaves no global channel out of "
                f"{self.channels}"
            )

    @property
    def global_channels(self) -> int:
        return int(round(self.global_ratio * self.channels))

    @property
    def local_channels(self) -> int:
        return self.channels - self.global_channels


class _SpectralNorm(nn.Module):
    """Per-sample, per-channel RMS normalization with a learnable gain.

    No centering and no bias: a spectrum with a single nonzero bin keeps that
    support after normalization.
    """

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        rms = torch.sqrt(x.pow(2).mean(dim=(-2, -1), keepdim=True) + self.eps)
        return x / rms * self.weight.view(1, -1, 1, 1)


class SpectralTransform(nn.Module):
    """Global branch: learned per-frequency-bin mixing in the Fourier domain.

    The real FFT over ``(H, W)`` yields ``H x (W // 2 + 1)`` complex bins per
    channel. Real and imaginary parts are stacked into ``2 * channels`` real
    channels, mixed by a bias-free 1x1 convolution, normalized, passed through
    a nonlinearity and transformed back. The forward transform is unnormalized
    and the inverse scales by ``1 / (H * W)``.

    Parameters
    ----------
    channels : int
        Number of input and output channels.
    test_mode : bool, default=False
        Replace the nonlinearity with identity.
    """

    def __init__(self, channels: int, test_mode: bool = False):
        super().__init__()
        self.channels = channels
        self.conv = nn.Conv2d(2 * channels, 2 * channels, kernel_size=1, bias=False)
        self.norm = _SpectralNorm(2 * channels)
        self.act = activation(test_mode)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        height, width = x.shape[-2:]
        if height < 2 or width < 2:
            raise ValueError(f"SpectralTransform requires H, W >= 2, got {height}x{width}")
        if x.shape[1] != self.channels:
            raise ValueError(f"Expected {self.channels} channels, got {x.shape[1]}")

        spec = torch.fft.rfft2(x, dim=(-2, -1), norm="backward")
        stacked = torch.cat([spec.real, spec.imag], dim=1)
        stacked = self.act(self.norm(self.conv(stacked)))
        real, imag = torch.chunk(stacked, 2, dim=1)
        return torch.fft.irfft2(torch.complex(real, imag), s=(height, width), dim=(-2, -1))


class FfcBlock(nn.Module):
    """Residual fast Fourier convolution block, ``x + F(x)``.

    Channels split into a local part (the first ``C - Cg``) and a global part
    (the last ``Cg``). Four cross paths are summed per destination:
    local-to-local, local-to-global and global-to-local are spatial
    convolutions with reflect padding, global-to-global is a
    :class:`SpectralTransform`. The concatenated result is instance normalized
    and activated before the residual sum.

    Parameters
    ----------
    cfg : FfcConfig
        Channel split configuration.
    test_mode : bool, default=False
        Replace nonlinearities with identity.
    """

    def __init__(self, cfg: FfcConfig, test_mode: bool = False):
        super().__init__()
        self.cfg = cfg
        c_local, c_global = cfg.local_channels, cfg.global_channels
        conv_kwargs = dict(
            kernel_size=cfg.spatial_kernel,
            padding=cfg.spatial_kernel // 2,
            padding_mode="reflect",
            bias=False,
        )

        self.l2l = nn.Conv2d(c_local, c_local, **conv_kwargs) if c_local else None
        self.l2g = nn.Conv2d(c_local, c_global, **conv_kwargs) if c_local and c_global else None
        self.g2l = nn.Conv2d(c_global, c_local, **conv_kwargs) if c_local and c_global else None
        self.g2g = SpectralTransform(c_global, test_mode=test_mode) if c_global else None
        self.norm = nn.InstanceNorm2d(cfg.channels, affine=True)
        self.act = activation(test_mode)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.channels:
            raise ValueError(
                f"FfcBlock configured for {self.cfg.channels} channels, got input of shape "
                f"{tuple(x.shape)}"
            )
        c_local = self.cfg.local_channels
        x_l, x_g = x[:, :c_local], x[:, c_local:]

        outs = []
        if c_local:
            out_l = self.l2l(x_l)
            if self.g2l is not None:
                out_l = out_l + self.g2l(x_g)
            outs.append(out_l)
        if self.g2g is not None:
            out_g = self.g2g(x_g)
            if self.l2g is not None:
                out_g = out_g + self.l2g(x_l)
            outs.append(out_g)

        fx = self.act(self.norm(torch.cat(outs, dim=1)))
        return x + fx


def spectral_transform(x: torch.Tensor, module: SpectralTransform) -> torch.Tensor:
    """Apply a :class:`SpectralTransform` to an ``N x Cg x H x W`` tensor."""
    return module(x)


def ffc_block(x: torch.Tensor, cfg: FfcConfig, module: FfcBlock) -> torch.Tensor:
    """Apply an :class:`FfcBlock` after checking the input against ``cfg``."""
    if x.shape[1] != cfg.channels:
        raise ValueError(f"Input has {x.shape[1]} channels but cfg.channels={cfg.channels}")
    if module.cfg.channels != cfg.channels:
        raise ValueError(
            f"Module was built for {module.cfg.channels} channels, cfg has {cfg.channels}"
        )
    return module(x)


def zero_parameters_(module: nn.Module) -> nn.Module:
    """Set every parameter of ``module`` to zero in place."""
    with torch.no_grad():
        for param in module.parameters():
            param.zero_()
    return module

