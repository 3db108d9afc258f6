import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose, assert_array_equal
from sklearn.utils._param_validation import InvalidParameterError

from skshadow.nn import FfcBlock, FfcConfig, SpectralTransform, ffc_block, spectral_transform
from skshadow.nn._ffc import zero_parameters_


@pytest.mark.parametrize(
    "params, error",
    [
        (dict(channels=1), InvalidParameterError),
        (dict(channels=4, global_ratio=1.5), InvalidParameterError),
        (dict(channels=4, spatial_kernel=2), ValueError),
        (dict(channels=4, global_ratio=0.1), ValueError),
    ],
)
def test_config_validation(params, error):
    with pytest.raises(error):
        FfcConfig(**params)


@pytest.mark.parametrize("ratio, n_global", [(0.0, 0), (0.5, 4), (0.25, 2), (1.0, 8)])
def test_channel_split(ratio, n_global):
    cfg = FfcConfig(channels=8, global_ratio=ratio)
    assert cfg.global_channels == n_global
    assert cfg.local_channels == 8 - n_global


@pytest.mark.parametrize("shape", [(1, 2, 4, 4), (3, 5, 7, 6), (2, 1, 2, 9)])
def test_spectral_transform_shape(shape):
    torch.manual_seed(0)
    module = SpectralTransform(shape[1])
    out = spectral_transform(torch.randn(shape), module)
    assert out.shape == shape


def test_spectral_transform_dc_only_input_stays_constant():
    torch.manual_seed(0)
    module = SpectralTransform(3, test_mode=True).double()
    x = torch.tensor([0.3, -1.2, 2.0], dtype=torch.float64).view(1, 3, 1, 1).expand(2, 3, 6, 5)
    out = spectral_transform(x.contiguous(), module).detach().numpy()

    for n in range(2):
        for c in range(3):
            assert_allclose(out[n, c], out[n, c, 0, 0], atol=1e-12)


def test_spectral_transform_rejects_tiny_inputs():
    module = SpectralTransform(2)
    with pytest.raises(ValueError, match="H, W >= 2"):
        module(torch.zeros(1, 2, 1, 4))
    with pytest.raises(ValueError, match="Expected 2 channels"):
        module(torch.zeros(1, 3, 4, 4))


def test_spectral_transform_gradcheck():
    torch.manual_seed(0)
    module = SpectralTransform(2).double()
    x = torch.randn(1, 2, 4, 4, dtype=torch.float64, requires_grad=True)
    params = tuple(module.parameters())

    def func(inp, *weights):
        return spectral_transform(inp, module)

    assert torch.autograd.gradcheck(func, (x, *params), eps=1e-5, atol=1e-6, rtol=1e-3)


@pytest.mark.parametrize("ratio", [0.0, 0.5, 1.0])
def test_ffc_block_shape(ratio):
    torch.manual_seed(0)
    cfg = FfcConfig(channels=32, global_ratio=ratio)
    out = ffc_block(torch.randn(2, 32, 16, 16), cfg, FfcBlock(cfg))
    assert out.shape == (2, 32, 16, 16)


def test_ffc_block_zero_parameters_is_identity():
    torch.manual_seed(0)
    cfg = FfcConfig(channels=6)
    module = zero_parameters_(FfcBlock(cfg))
    x = torch.randn(2, 6, 8, 8)
    with torch.no_grad():
        out = ffc_block(x, cfg, module)
    assert_array_equal(out.numpy(), x.numpy())


def test_ffc_block_channel_mismatch():
    cfg = FfcConfig(channels=4)
    module = FfcBlock(cfg)
    with pytest.raises(ValueError, match="cfg.channels=4"):
        ffc_block(torch.zeros(1, 6, 4, 4), cfg, module)
    with pytest.raises(ValueError, match="configured for 4 channels"):
        module(torch.zeros(1, 6, 4, 4))
    with pytest.raises(ValueError, match="built for 4 channels"):
        ffc_block(torch.zeros(1, 8, 4, 4), FfcConfig(channels=8), module)


def test_ffc_block_finite_on_large_inputs():
    torch.manual_seed(0)
    cfg = FfcConfig(channels=4)
    x = torch.empty(2, 4, 16, 16).uniform_(-10, 10)
    assert torch.isfinite(ffc_block(x, cfg, FfcBlock(cfg))).all()


def test_ffc_block_gradcheck():
    torch.manual_seed(0)
    cfg = FfcConfig(channels=4)
    module = FfcBlock(cfg).double()
    x = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
    params = tuple(module.parameters())

    def func(inp, *weights):
        return ffc_block(inp, cfg, module)

    assert torch.autograd.gradcheck(func, (x, *params), eps=1e-5, atol=1e-6, rtol=1e-3)


def test_ffc_block_batch_independent():
    torch.manual_seed(0)
    cfg = FfcConfig(channels=4)
    module = FfcBlock(cfg)
    x = torch.randn(3, 4, 8, 8)
    single = ffc_block(x[1:2], cfg, module)
    batched = ffc_block(x, cfg, module)[1:2]
    assert np.allclose(single.detach().numpy(), batched.detach().numpy(), atol=1e-6)
