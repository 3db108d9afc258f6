import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose, assert_array_equal

from skshadow.image import ImageTensor, ShadowMask
from skshadow.nn import (
    REMOVAL_VARIANTS,
    RemovalConfig,
    ShadowRemover,
    SimBlock,
    removal_loss,
    remove_shadow,
    sim_forward,
)

TINY = dict(base_channels=4, depth=2, sim_ffc_blocks=1)


def _inputs(size=16, seed=0):
    rng = np.random.default_rng(seed)
    img = ImageTensor(rng.uniform(0.2, 0.8, size=(size, size, 3)))
    mask = np.zeros((size, size))
    mask[size // 4 : size // 2, size // 4 :] = 1.0
    prior = ImageTensor(rng.uniform(0.2, 0.8, size=(size, size, 3)))
    return img, ShadowMask(mask), prior


@pytest.mark.parametrize("variant", sorted(REMOVAL_VARIANTS))
def test_variants(variant):
    cfg = RemovalConfig.from_variant(variant, **TINY)
    assert cfg.use_prior == REMOVAL_VARIANTS[variant]["use_prior"]
    assert cfg.use_ffc == REMOVAL_VARIANTS[variant]["use_ffc"]
    assert cfg.input_channels == (7 if cfg.use_prior else 4)


def test_config_invariants():
    with pytest.raises(ValueError, match="inconsistent"):
        RemovalConfig(use_prior=False, input_channels=7)
    with pytest.raises(ValueError, match="sim_ffc_blocks"):
        RemovalConfig(use_ffc=True, sim_ffc_blocks=0)
    with pytest.raises(ValueError, match="Unknown removal variant"):
        RemovalConfig.from_variant("full")
    assert RemovalConfig(base_channels=8, depth=3).bottleneck_channels == 64


@pytest.mark.parametrize("variant", sorted(REMOVAL_VARIANTS))
def test_zero_head_is_identity(variant):
    torch.manual_seed(0)
    model = ShadowRemover(RemovalConfig.from_variant(variant, **TINY))
    img, mask, prior = _inputs()
    out = remove_shadow(img, mask, model, prior if model.cfg.use_prior else None)
    assert_array_equal(out.data, img.data)


@pytest.mark.parametrize("use_prior", [False, True])
@pytest.mark.parametrize("size, seed", [(16, 1), (32, 2)])
def test_zero_head_identity_is_bitwise_for_float32_models(use_prior, size, seed):
    torch.manual_seed(seed)
    model = ShadowRemover(RemovalConfig(use_prior=use_prior, use_ffc=True, **TINY))
    assert next(model.parameters()).dtype == torch.float32

    rng = np.random.default_rng(seed)
    data = rng.uniform(size=(size, size, 3))
    data[0, 0] = [0.0, 1.0, 1 / 3]
    img = ImageTensor(data)
    mask = ShadowMask(rng.uniform(size=(size, size)))
    prior = ImageTensor(rng.uniform(size=(size, size, 3))) if use_prior else None

    out = remove_shadow(img, mask, model, prior)
    assert out.data.dtype == np.float64
    assert_array_equal(out.data, img.data)


def test_output_shape_range_and_determinism():
    torch.manual_seed(0)
    model = ShadowRemover(RemovalConfig(**TINY))
    torch.nn.init.normal_(model.head.weight, std=0.5)
    img, mask, prior = _inputs(64)

    first = remove_shadow(img, mask, model, prior)
    second = remove_shadow(img, mask, model, prior)

    assert first.shape == (64, 64, 3)
    assert first.data.min() >= 0.0 and first.data.max() <= 1.0
    assert_array_equal(first.data, second.data)


def test_remove_shadow_errors():
    torch.manual_seed(0)
    model = ShadowRemover(RemovalConfig(**TINY))
    img, mask, prior = _inputs()
    with pytest.raises(ValueError, match="requires a prior"):
        remove_shadow(img, mask, model)
    with pytest.raises(ValueError, match="Prior shape"):
        remove_shadow(img, mask, model, ImageTensor(np.zeros((8, 16, 3))))
    with pytest.raises(ValueError, match="Mask"):
        remove_shadow(img, ShadowMask(np.zeros((16, 8))), model, prior)
    with pytest.raises(ValueError, match="divisible by 4"):
        remove_shadow(
            ImageTensor(np.zeros((10, 10, 3))),
            ShadowMask(np.zeros((10, 10))),
            model,
            ImageTensor(np.zeros((10, 10, 3))),
        )


def test_sim_zero_gate_identity():
    torch.manual_seed(0)
    cfg = RemovalConfig(use_ffc=False, **{k: v for k, v in TINY.items() if k != "sim_ffc_blocks"})
    sim = SimBlock(16, cfg)
    feats = torch.randn(2, 16, 4, 4)
    out = sim_forward(feats, torch.zeros(2, 1, 4, 4), sim)
    assert_array_equal(out.detach().numpy(), feats.numpy())


def test_sim_shape_preservation():
    torch.manual_seed(0)
    sim = SimBlock(128, RemovalConfig(**TINY))
    feats = torch.randn(2, 128, 16, 16)
    mask_small = torch.rand(2, 1, 16, 16)
    assert sim_forward(feats, mask_small, sim).shape == (2, 128, 16, 16)


def test_sim_mask_mismatch():
    sim = SimBlock(8, RemovalConfig(**TINY))
    with pytest.raises(ValueError, match="mask_small"):
        sim_forward(torch.zeros(1, 8, 4, 4), torch.zeros(1, 1, 2, 2), sim)


def test_sim_gradcheck():
    torch.manual_seed(0)
    sim = SimBlock(4, RemovalConfig(**TINY)).double()
    with torch.no_grad():
        sim.gate.normal_()
    feats = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
    mask_small = torch.rand(1, 1, 4, 4, dtype=torch.float64)
    assert torch.autograd.gradcheck(
        lambda x: sim_forward(x, mask_small, sim), (feats,), eps=1e-5, atol=1e-6, rtol=1e-3
    )


def test_end_to_end_gradcheck():
    torch.manual_seed(0)
    model = ShadowRemover(RemovalConfig(**TINY)).double()
    with torch.no_grad():
        model.head.weight.normal_(std=1e-2)
        model.sim.gate.normal_(std=0.1)
    img, mask, prior = _inputs(16)
    x = torch.from_numpy(img.data.transpose(2, 0, 1)[None].copy()).requires_grad_(True)
    m = torch.from_numpy(mask.data[None, None].copy())
    p = torch.from_numpy(prior.data.transpose(2, 0, 1)[None].copy())
    gt = torch.full_like(p, 0.5)
    head = model.head.weight

    def func(inp, w):
        return removal_loss(model(inp, m, p), gt)

    assert torch.autograd.gradcheck(func, (x, head), eps=1e-5, atol=1e-6, rtol=1e-3)


def test_charbonnier_closed_forms():
    gt = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    assert float(removal_loss(gt.clone(), gt)) == 0.0

    pred = gt + 0.1
    assert_allclose(float(removal_loss(pred, gt)), np.sqrt(0.01 + 1e-6) - 1e-3, rtol=1e-9)
    assert_allclose(float(removal_loss(pred, gt)), 0.0990050, atol=5e-8)
    assert float(removal_loss(pred, gt)) == float(removal_loss(gt, pred))


def test_charbonnier_shape_mismatch():
    with pytest.raises(ValueError, match="Shape mismatch"):
        removal_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


def test_training_improves_over_input():
    torch.manual_seed(0)
    model = ShadowRemover(RemovalConfig.from_variant("baseline", base_channels=8, depth=2))
    free = torch.rand(2, 3, 16, 16) * 0.5 + 0.4
    mask = torch.zeros(2, 1, 16, 16)
    mask[:, :, 4:12, 4:12] = 1.0
    shadow = free * (1 - 0.5 * mask)
    optimizer = torch.optim.Adam(model.parameters(), lr=2e-3)

    initial = float(removal_loss(model(shadow, mask), free))
    for _ in range(60):
        loss = removal_loss(model(shadow, mask), free)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    assert float(removal_loss(model(shadow, mask), free)) < initial
