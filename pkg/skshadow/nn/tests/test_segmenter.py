import math

import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose, assert_array_equal

from skshadow.image import ImageTensor, ShadowMask
from skshadow.nn import (
    SegmenterConfig,
    ShadowSegmenter,
    WaveletAdapter,
    adapter_inject,
    predict_mask,
    segmentation_loss,
    wavelet_features_torch,
)
from skshadow.nn._layers import image_to_tensor
from skshadow.wavelet import wavelet_feature_stack


def _image(size=32, seed=0):
    return ImageTensor(np.random.default_rng(seed).uniform(size=(size, size, 3)))


def test_config_defaults_and_invariants():
    cfg = SegmenterConfig()
    assert cfg.wavelet_levels == cfg.depth == 3
    assert cfg.divisor == 8
    assert [cfg.stage_channels(s) for s in range(4)] == [16, 32, 64, 128]

    with pytest.raises(ValueError, match="must equal depth"):
        SegmenterConfig(depth=3, wavelet_levels=2)
    with pytest.raises(ValueError):
        SegmenterConfig(depth=1)


def test_round_trip_through_dict():
    cfg = SegmenterConfig(base_channels=4, use_wavelet=False)
    assert SegmenterConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="Unknown"):
        SegmenterConfig.from_dict({"width": 3})


def test_torch_features_match_numpy_stack():
    img = _image(16)
    torch_feats = wavelet_features_torch(image_to_tensor(img, dtype=torch.float64), 2)
    numpy_feats = wavelet_feature_stack(img, 2)
    for t, n in zip(torch_feats, numpy_feats):
        assert_allclose(t[0].numpy().transpose(1, 2, 0), n, atol=1e-12)


def test_predict_mask_shape_range_and_determinism():
    torch.manual_seed(0)
    model = ShadowSegmenter(SegmenterConfig(base_channels=4))
    img = ImageTensor(np.random.default_rng(0).uniform(size=(64, 64, 3)))

    first = predict_mask(img, model)
    second = predict_mask(img, model)

    assert isinstance(first, ShadowMask)
    assert first.shape == (64, 64)
    assert np.all((first.data > 0) & (first.data < 1))
    assert_array_equal(first.data, second.data)


def test_predict_mask_rejects_indivisible_dims():
    model = ShadowSegmenter(SegmenterConfig(base_channels=4))
    with pytest.raises(ValueError, match="divisible by 8"):
        predict_mask(ImageTensor(np.zeros((20, 24, 3))), model)


def test_adapter_zero_init_is_identity():
    cfg = SegmenterConfig(base_channels=16)
    adapter = WaveletAdapter(cfg)
    feats = torch.randn(2, 32, 32, 32)
    wave = torch.randn(2, 9, 32, 32)
    out = adapter_inject(1, feats, wave, adapter)
    assert out.shape == feats.shape
    assert_array_equal(out.detach().numpy(), feats.numpy())


def test_adapter_constant_image_is_identity_for_any_params():
    torch.manual_seed(0)
    cfg = SegmenterConfig(base_channels=4)
    adapter = WaveletAdapter(cfg)
    for proj in adapter.projections:
        torch.nn.init.normal_(proj[-1].weight)
    x = torch.full((1, 3, 16, 16), 0.25)
    waves = wavelet_features_torch(x, cfg.depth)
    feats = torch.randn(1, cfg.stage_channels(1), 8, 8)
    assert_array_equal(adapter_inject(1, feats, waves[0], adapter).detach().numpy(), feats.numpy())


def test_adapter_spatial_mismatch():
    adapter = WaveletAdapter(SegmenterConfig(base_channels=4))
    with pytest.raises(ValueError, match="do not match"):
        adapter_inject(1, torch.zeros(1, 8, 8, 8), torch.zeros(1, 9, 4, 4), adapter)


def test_zero_init_adapter_leaves_segmenter_unchanged():
    torch.manual_seed(0)
    cfg = SegmenterConfig(base_channels=4)
    model = ShadowSegmenter(cfg)
    x = image_to_tensor(_image(32))
    with torch.no_grad():
        with_adapter = model(x)
        model.cfg.use_wavelet = False
        without_adapter = model(x)
    assert_array_equal(with_adapter.numpy(), without_adapter.numpy())


def test_plain_segmenter_produces_valid_masks():
    torch.manual_seed(0)
    model = ShadowSegmenter(SegmenterConfig(base_channels=4, use_wavelet=False))
    mask = predict_mask(_image(32), model)
    assert np.all((mask.data > 0) & (mask.data < 1))


def test_loss_of_perfect_prediction_is_small():
    gt = torch.zeros(4, 4, dtype=torch.float64)
    gt[:, :2] = 1.0
    loss = segmentation_loss(gt.clone(), gt)
    assert 0.0 <= float(loss) <= 2e-5


def test_loss_of_uninformative_prediction():
    gt = torch.zeros(4, 4, dtype=torch.float64)
    gt[:2] = 1.0
    pred = torch.full((4, 4), 0.5, dtype=torch.float64)
    # soft IoU is (4 + 1) / (12 + 1) for 8 shadow pixels at probability 0.5
    assert_allclose(float(segmentation_loss(pred, gt)), math.log(2) + 8 / 13, rtol=1e-12)


def test_loss_single_class_and_mask_inputs():
    gt = ShadowMask(np.zeros((4, 4)))
    pred = ShadowMask(np.full((4, 4), 0.25))
    # no shadow pixels: only the non-shadow cross-entropy term remains
    expected = -math.log(0.75) + 1 - 1 / (4 + 1)
    assert_allclose(float(segmentation_loss(pred, gt)), expected, rtol=1e-12)


def test_loss_shape_mismatch():
    with pytest.raises(ValueError, match="Shape mismatch"):
        segmentation_loss(torch.zeros(4, 4), torch.zeros(4, 5))


def test_loss_gradcheck():
    rng = np.random.default_rng(0)
    gt = torch.from_numpy((rng.uniform(size=(4, 4)) > 0.5).astype(np.float64))
    pred = torch.from_numpy(rng.uniform(0.1, 0.9, size=(4, 4))).requires_grad_(True)
    assert torch.autograd.gradcheck(
        lambda p: segmentation_loss(p, gt), (pred,), eps=1e-5, atol=1e-6, rtol=1e-3
    )


def test_loss_decreases_with_training():
    torch.manual_seed(0)
    model = ShadowSegmenter(SegmenterConfig(base_channels=4))
    x = torch.rand(2, 3, 16, 16)
    gt = torch.zeros(2, 1, 16, 16)
    gt[:, :, 4:12, 4:12] = 1.0
    x[:, :, 4:12, 4:12] *= 0.3
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-2)
    losses = []
    for _ in range(30):
        loss = segmentation_loss(model(x), gt)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        losses.append(float(loss))
    assert losses[-1] < losses[0]
