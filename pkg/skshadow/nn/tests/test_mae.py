import numpy as np
import pytest
import torch
from numpy.testing import assert_allclose, assert_array_equal

from skshadow.image import ImageTensor, ShadowMask
from skshadow.nn import (
    MaeConfig,
    MaskedAutoencoder,
    generate_prior,
    hidden_patch_mask,
    mae_loss,
    mae_train_step,
    patchify,
    patchify_batch,
    random_masking,
    unpatchify,
    unpatchify_batch,
)
from skshadow.nn._mae import get_2d_sincos_pos_embed

TINY = dict(
    patch_size=4,
    encoder_dim=16,
    encoder_layers=1,
    encoder_heads=2,
    decoder_dim=8,
    decoder_layers=1,
    decoder_heads=2,
)


def _tiny_model(seed=0):
    torch.manual_seed(seed)
    return MaskedAutoencoder(MaeConfig(**TINY))


def test_config_invariants():
    with pytest.raises(ValueError, match="divisible by 4"):
        MaeConfig(encoder_dim=18, encoder_heads=2)
    with pytest.raises(ValueError, match="encoder_heads"):
        MaeConfig(encoder_dim=64, encoder_heads=3)
    with pytest.raises(ValueError):
        MaeConfig(train_mask_ratio=1.0)
    assert MaeConfig().patch_dim == 192


def test_patchify_shape_and_round_trip():
    data = np.random.default_rng(0).uniform(size=(64, 64, 3))
    patches = patchify(ImageTensor(data), 8)
    assert patches.shape == (64, 192)
    assert_array_equal(unpatchify(patches, 8, 64, 64), data)


def test_patchify_matches_naive_loop():
    data = np.arange(16 * 16, dtype=float).reshape(16, 16, 1) / 255.0
    patches = patchify(data, 8)
    assert_array_equal(patches[0], data[:8, :8, 0].ravel())

    expected = []
    for gy in range(2):
        for gx in range(2):
            rows = []
            for y in range(8):
                for x in range(8):
                    rows.append(data[gy * 8 + y, gx * 8 + x, 0])
            expected.append(rows)
    assert_array_equal(patches, np.array(expected))


def test_patchify_rejects_indivisible():
    with pytest.raises(ValueError, match="divisible by 8"):
        patchify(np.zeros((12, 16, 3)), 8)


def test_batch_patchify_matches_single_image():
    data = np.random.default_rng(1).uniform(size=(16, 24, 3))
    batch = torch.from_numpy(data.transpose(2, 0, 1)[None].copy())
    assert_array_equal(patchify_batch(batch, 8)[0].numpy(), patchify(data, 8))
    assert_array_equal(unpatchify_batch(patchify_batch(batch, 8), 8, 16, 24).numpy(), batch.numpy())


def test_pos_embed_layout():
    pos = get_2d_sincos_pos_embed(16, 2, 3)
    assert pos.shape == (7, 16)
    assert_array_equal(pos[0], 0.0)
    # the first patch sits at the origin: sin terms 0, cos terms 1
    assert_allclose(pos[1], np.tile(np.r_[np.zeros(4), np.ones(4)], 2))


def test_random_masking_counts():
    generator = torch.Generator().manual_seed(0)
    ids_shuffle, len_keep = random_masking(3, 64, 0.75, generator=generator)
    assert len_keep == 16
    assert ids_shuffle.shape == (3, 64)
    for row in ids_shuffle:
        assert sorted(row.tolist()) == list(range(64))


def test_forward_hides_exactly_the_requested_patches():
    model = MaskedAutoencoder(MaeConfig())
    imgs = torch.rand(2, 3, 64, 64)
    ids_shuffle, len_keep = random_masking(2, 64, 0.75, torch.Generator().manual_seed(0))
    pred, hidden = model(imgs, ids_shuffle, len_keep)

    assert pred.shape == (2, 64, 192)
    assert hidden.sum(dim=1).tolist() == [48.0, 48.0]
    for n in range(2):
        visible = set(ids_shuffle[n, :len_keep].tolist())
        assert {i for i in range(64) if hidden[n, i] == 0} == visible


def test_train_step_loss_finite_positive_and_decreasing():
    model = _tiny_model()
    generator = torch.Generator().manual_seed(0)
    imgs = torch.rand(4, 3, 16, 16)
    optimizer = torch.optim.Adam(model.parameters(), lr=1e-2)

    losses = [float(mae_train_step(model, imgs, optimizer, generator)) for _ in range(40)]
    assert np.isfinite(losses).all()
    assert losses[0] > 0
    assert np.mean(losses[-5:]) < losses[0]


def test_train_step_rejects_empty_batch():
    model = _tiny_model()
    with pytest.raises(ValueError, match="nonempty"):
        mae_train_step(model, torch.zeros(0, 3, 16, 16))
    with pytest.raises(ValueError, match="nonempty"):
        mae_train_step(model, torch.zeros(3, 16, 16))


def test_mae_loss_only_counts_hidden_patches():
    pred = torch.zeros(1, 2, 3)
    target = torch.tensor([[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]])
    assert float(mae_loss(pred, target, torch.tensor([[0.0, 1.0]]))) == 4.0
    assert float(mae_loss(pred, target, torch.tensor([[1.0, 0.0]]))) == 1.0


def test_decoder_gradcheck():
    model = _tiny_model().double()
    imgs = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    ids_shuffle = torch.tensor([[2, 0, 3, 1]])
    weight = model.decoder_pred.weight

    def func(w):
        pred, hidden = model(imgs, ids_shuffle, 2)
        return mae_loss(pred, patchify_batch(imgs, 4), hidden)

    assert torch.autograd.gradcheck(func, (weight,), eps=1e-5, atol=1e-6, rtol=1e-3)


def test_hidden_patch_mask_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(10):
        mask = ShadowMask(rng.uniform(size=(16, 24)) ** 8)
        grid = hidden_patch_mask(mask, 4)
        expected = np.zeros((4, 6), dtype=bool)
        for y in range(16):
            for x in range(24):
                if mask.data[y, x] >= mask.threshold:
                    expected[y // 4, x // 4] = True
        assert_array_equal(grid, expected)


def test_prior_zero_mask_is_identity():
    model = _tiny_model()
    img = ImageTensor(np.random.default_rng(0).uniform(size=(16, 16, 3)))
    prior = generate_prior(img, ShadowMask(np.zeros((16, 16))), model)
    assert_array_equal(prior.data, img.data)


def test_prior_full_mask_is_clamped():
    model = _tiny_model()
    img = ImageTensor(np.random.default_rng(0).uniform(size=(16, 16, 3)))
    prior = generate_prior(img, ShadowMask(np.ones((16, 16))), model)
    assert prior.shape == img.shape
    assert prior.data.min() >= 0.0 and prior.data.max() <= 1.0


def test_prior_changes_only_the_hidden_patch():
    model = _tiny_model()
    img = ImageTensor(np.random.default_rng(0).uniform(size=(16, 16, 3)))
    mask = np.zeros((16, 16))
    mask[5, 9] = 1.0
    prior = generate_prior(img, ShadowMask(mask), model)

    inside = np.zeros((16, 16), dtype=bool)
    inside[4:8, 8:12] = True
    assert_array_equal(prior.data[~inside], img.data[~inside])
    assert not np.array_equal(prior.data[inside], img.data[inside])


def test_prior_is_deterministic():
    model = _tiny_model()
    img = ImageTensor(np.random.default_rng(0).uniform(size=(16, 16, 3)))
    mask = ShadowMask((np.random.default_rng(1).uniform(size=(16, 16)) > 0.8).astype(float))
    assert_array_equal(
        generate_prior(img, mask, model).data, generate_prior(img, mask, model).data
    )


def test_prior_dimension_mismatch():
    model = _tiny_model()
    with pytest.raises(ValueError, match="do not match"):
        generate_prior(ImageTensor(np.zeros((16, 16, 3))), ShadowMask(np.zeros((16, 12))), model)
