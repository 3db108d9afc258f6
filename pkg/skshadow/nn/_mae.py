"""Masked autoencoder producing a contextual prior for shadowed regions."""

import logging
from dataclasses import dataclass
from functools import lru_cache
from numbers import Integral, Real
from typing import Optional, Tuple

import numpy as np
import torch
from einops import rearrange
from sklearn.utils._param_validation import Interval
from timm.models.vision_transformer import Block
from torch import nn

from .._utils import ConfigMixin
from ..image import ImageTensor, ShadowMask, as_image_array
from ._layers import check_divisible, image_to_tensor, module_device_dtype, tensor_to_array

logger = logging.getLogger(__name__)


@dataclass
class MaeConfig(ConfigMixin):
    """Architecture and pretraining settings of a :class:`MaskedAutoencoder`.

    Parameters
    ----------
    patch_size : int, default=8
        Side of the square patches.
    encoder_dim, decoder_dim : int, default=64 and 48
        Token widths. Both must be divisible by 4 for the 2-D sin-cos embedding.
    encoder_layers, decoder_layers : int, default=4 and 2
        Transformer blocks per stack.
    encoder_heads, decoder_heads : int, default=4
        Attention heads per stack.
    train_mask_ratio : float, default=0.75
        Fraction of patches hidden during pretraining, in ``(0, 1)``.
    in_channels : int, default=3
        Image channels.
    mlp_ratio : float, default=4.0
        Hidden width multiplier of the transformer MLPs.
    """

    patch_size: int = 8
    encoder_dim: int = 64
    encoder_layers: int = 4
    encoder_heads: int = 4
    decoder_dim: int = 48
    decoder_layers: int = 2
    decoder_heads: int = 4
    train_mask_ratio: float = 0.75
    in_channels: int = 3
    mlp_ratio: float = 4.0

    _parameter_constraints = {
        "patch_size": [Interval(Integral, 1, None, closed="left")],
        "encoder_dim": [Interval(Integral, 4, None, closed="left")],
        "encoder_layers": [Interval(Integral, 1, None, closed="left")],
        "encoder_heads": [Interval(Integral, 1, None, closed="left")],
        "decoder_dim": [Interval(Integral, 4, None, closed="left")],
        "decoder_layers": [Interval(Integral, 1, None, closed="left")],
        "decoder_heads": [Interval(Integral, 1, None, closed="left")],
        "train_mask_ratio": [Interval(Real, 0.0, 1.0, closed="neither")],
        "in_channels": [Interval(Integral, 1, None, closed="left")],
        "mlp_ratio": [Interval(Real, 0.0, None, closed="neither")],
    }

    def _check_invariants(self):
        for name, dim, heads in (
            ("encoder", self.encoder_dim, self.encoder_heads),
            ("decoder", self.decoder_dim, self.decoder_heads),
        ):
            if dim % 4:
                raise ValueError(f"{name}_dim must be divisible by 4, got {dim}")
            if dim % heads:
                raise ValueError(f"{name}_dim ({dim}) must be divisible by {name}_heads ({heads})")

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.in_channels


def _get_1d_sincos(embed_dim: int, pos: np.ndarray) -> np.ndarray:
    omega = np.arange(embed_dim // 2, dtype=np.float64) / (embed_dim / 2.0)
    omega = 1.0 / 10000**omega
    out = np.einsum("m,d->md", pos.reshape(-1).astype(np.float64), omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


@lru_cache(maxsize=32)
def get_2d_sincos_pos_embed(embed_dim: int, grid_h: int, grid_w: int) -> np.ndarray:
    """Fixed sin-cos position embeddings for a ``grid_h x grid_w`` patch grid.

    Returns
    -------
    embed : ndarray of shape (1 + grid_h * grid_w, embed_dim)
        Row 0 is the all-zero class-token embedding; the rest follow row-major
        patch order.
    """
    grid_y, grid_x = np.meshgrid(
        np.arange(grid_h, dtype=np.float64), np.arange(grid_w, dtype=np.float64), indexing="ij"
    )
    emb_h = _get_1d_sincos(embed_dim // 2, grid_y)
    emb_w = _get_1d_sincos(embed_dim // 2, grid_x)
    pos = np.concatenate([emb_h, emb_w], axis=1)
    pos = np.concatenate([np.zeros((1, embed_dim)), pos], axis=0)
    pos.setflags(write=False)
    return pos


def patchify(img, p: int) -> np.ndarray:
    """Split an image into flattened, row-major ``p x p`` patches.

    Parameters
    ----------
    img : ImageTensor or array-like of shape (H, W, C)
        Input image.
    p : int
        Patch side; must divide ``H`` and ``W``.

    Returns
    -------
    patches : ndarray of shape (H * W / p**2, p * p * C)
        Patch ``k`` covers grid cell ``(k // (W / p), k % (W / p))``; within a
        patch, pixels are row-major with channels last.
    """
    data = as_image_array(img)
    check_divisible(data.shape, p, "patchify")
    return rearrange(data, "(h p1) (w p2) c -> (h w) (p1 p2 c)", p1=p, p2=p)


def unpatchify(patches: np.ndarray, p: int, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`patchify`, returning an ``H x W x C`` array."""
    check_divisible((height, width), p, "unpatchify")
    return rearrange(
        np.asarray(patches), "(h w) (p1 p2 c) -> (h p1) (w p2) c", h=height // p, p1=p, p2=p
    )


def patchify_batch(imgs: torch.Tensor, p: int) -> torch.Tensor:
    """Patchify an ``N x C x H x W`` batch into ``N x L x (p * p * C)``."""
    check_divisible(imgs.shape[-2:], p, "patchify_batch")
    return rearrange(imgs, "n c (h p1) (w p2) -> n (h w) (p1 p2 c)", p1=p, p2=p)


def unpatchify_batch(patches: torch.Tensor, p: int, height: int, width: int) -> torch.Tensor:
    """Inverse of :func:`patchify_batch`."""
    return rearrange(patches, "n (h w) (p1 p2 c) -> n c (h p1) (w p2)", h=height // p, p1=p, p2=p)


class MaskedAutoencoder(nn.Module):
    """Asymmetric ViT encoder-decoder reconstructing hidden patches.

    The encoder only sees visible patches. The decoder receives encoded
    visible tokens plus a shared mask token at every hidden position and
    predicts the pixels of every patch.

    Parameters
    ----------
    cfg : MaeConfig
        Architecture.
    """

    def __init__(self, cfg: MaeConfig):
        super().__init__()
        self.cfg = cfg
        self.patch_embed = nn.Linear(cfg.patch_dim, cfg.encoder_dim)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, cfg.encoder_dim))
        self.blocks = nn.ModuleList(
            [
                Block(cfg.encoder_dim, cfg.encoder_heads, cfg.mlp_ratio, qkv_bias=True)
                for _ in range(cfg.encoder_layers)
            ]
        )
        self.norm = nn.LayerNorm(cfg.encoder_dim)

        self.decoder_embed = nn.Linear(cfg.encoder_dim, cfg.decoder_dim)
        self.mask_token = nn.Parameter(torch.zeros(1, 1, cfg.decoder_dim))
        self.decoder_blocks = nn.ModuleList(
            [
                Block(cfg.decoder_dim, cfg.decoder_heads, cfg.mlp_ratio, qkv_bias=True)
                for _ in range(cfg.decoder_layers)
            ]
        )
        self.decoder_norm = nn.LayerNorm(cfg.decoder_dim)
        self.decoder_pred = nn.Linear(cfg.decoder_dim, cfg.patch_dim)
        self.initialize_weights()

    def initialize_weights(self):
        torch.nn.init.normal_(self.cls_token, std=0.02)
        torch.nn.init.normal_(self.mask_token, std=0.02)
        self.apply(self._init_weights)

    def _init_weights(self, m):
        if isinstance(m, nn.Linear):
            torch.nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.constant_(m.bias, 0)
        elif isinstance(m, nn.LayerNorm):
            nn.init.constant_(m.bias, 0)
            nn.init.constant_(m.weight, 1.0)

    def _pos_embed(self, dim: int, grid: Tuple[int, int], like: torch.Tensor) -> torch.Tensor:
        pos = get_2d_sincos_pos_embed(dim, grid[0], grid[1])
        return torch.from_numpy(np.array(pos)).to(device=like.device, dtype=like.dtype)[None]

    def forward_encoder(self, patches: torch.Tensor, ids_keep: torch.Tensor, grid):
        """Encode the visible patches selected by ``ids_keep`` (``N x L_keep``)."""
        x = self.patch_embed(patches)
        pos = self._pos_embed(self.cfg.encoder_dim, grid, x)
        x = x + pos[:, 1:, :]
        x = torch.gather(x, dim=1, index=ids_keep.unsqueeze(-1).expand(-1, -1, x.shape[-1]))
        cls_tokens = (self.cls_token + pos[:, :1, :]).expand(x.shape[0], -1, -1)
        x = torch.cat((cls_tokens, x), dim=1)
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)

    def forward_decoder(self, latent: torch.Tensor, ids_restore: torch.Tensor, grid):
        """Predict all ``L`` patches from the encoded visible tokens."""
        x = self.decoder_embed(latent)
        n_hidden = ids_restore.shape[1] + 1 - x.shape[1]
        mask_tokens = self.mask_token.expand(x.shape[0], n_hidden, -1)
        x_ = torch.cat([x[:, 1:, :], mask_tokens], dim=1)
        x_ = torch.gather(x_, dim=1, index=ids_restore.unsqueeze(-1).expand(-1, -1, x.shape[2]))
        x = torch.cat([x[:, :1, :], x_], dim=1)
        x = x + self._pos_embed(self.cfg.decoder_dim, grid, x)
        for blk in self.decoder_blocks:
            x = blk(x)
        x = self.decoder_pred(self.decoder_norm(x))
        return x[:, 1:, :]

    def forward(self, imgs: torch.Tensor, ids_shuffle: torch.Tensor, len_keep: int):
        """Reconstruct all patches given a per-sample patch permutation.

        Parameters
        ----------
        imgs : Tensor of shape (N, C, H, W)
            Input batch.
        ids_shuffle : LongTensor of shape (N, L)
            Visible patches first, then hidden ones.
        len_keep : int
            Number of visible patches per sample.

        Returns
        -------
        pred : Tensor of shape (N, L, p * p * C)
            Reconstructed patches in row-major order.
        hidden : Tensor of shape (N, L)
            1 for hidden patches, 0 for visible ones.
        """
        p = self.cfg.patch_size
        check_divisible(imgs.shape[-2:], p, "MaskedAutoencoder")
        grid = (imgs.shape[-2] // p, imgs.shape[-1] // p)
        patches = patchify_batch(imgs, p)
        n, length = patches.shape[:2]

        ids_restore = torch.argsort(ids_shuffle, dim=1)
        latent = self.forward_encoder(patches, ids_shuffle[:, :len_keep], grid)
        pred = self.forward_decoder(latent, ids_restore, grid)

        hidden = torch.ones(n, length, device=imgs.device, dtype=imgs.dtype)
        hidden[:, :len_keep] = 0
        hidden = torch.gather(hidden, dim=1, index=ids_restore)
        return pred, hidden


def random_masking(
    n: int, length: int, mask_ratio: float, generator: Optional[torch.Generator] = None, device=None
):
    """Per-sample random patch permutation hiding ``mask_ratio`` of the patches.

    Returns
    -------
    ids_shuffle : LongTensor of shape (n, length)
        Ascending noise order; the first ``len_keep`` entries are visible.
    len_keep : int
        ``int(length * (1 - mask_ratio))``.
    """
    len_keep = int(length * (1 - mask_ratio))
    noise = torch.rand(n, length, generator=generator)
    ids_shuffle = torch.argsort(noise, dim=1)
    return ids_shuffle.to(device), len_keep


def mae_loss(pred: torch.Tensor, target: torch.Tensor, hidden: torch.Tensor) -> torch.Tensor:
    """Mean squared error over hidden patches only."""
    per_patch = ((pred - target) ** 2).mean(dim=-1)
    return (per_patch * hidden).sum() / hidden.sum()


def mae_train_step(
    model: MaskedAutoencoder,
    imgs: torch.Tensor,
    optimizer: Optional[torch.optim.Optimizer] = None,
    generator: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """One self-supervised step on a batch of shadow-free images.

    Parameters
    ----------
    model : MaskedAutoencoder
        Model to train.
    imgs : Tensor of shape (N, C, H, W)
        Shadow-free images.
    optimizer : torch.optim.Optimizer, optional
        When given, gradients are back-propagated and one step is taken.
    generator : torch.Generator, optional
        Source of the random patch permutation.

    Returns
    -------
    loss : Tensor
        Hidden-patch reconstruction error.
    """
    if imgs.ndim != 4 or imgs.shape[0] == 0:
        raise ValueError(
            f"mae_train_step needs a nonempty N x C x H x W batch, got {tuple(imgs.shape)}"
        )
    p = model.cfg.patch_size
    check_divisible(imgs.shape[-2:], p, "mae_train_step")
    length = (imgs.shape[-2] // p) * (imgs.shape[-1] // p)
    ids_shuffle, len_keep = random_masking(
        imgs.shape[0], length, model.cfg.train_mask_ratio, generator=generator, device=imgs.device
    )
    pred, hidden = model(imgs, ids_shuffle, len_keep)
    loss = mae_loss(pred, patchify_batch(imgs, p), hidden)
    if optimizer is not None:
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
    return loss


def hidden_patch_mask(mask, p: int) -> np.ndarray:
    """Patches touching the binarized mask, as a ``(H / p) x (W / p)`` bool grid."""
    if not isinstance(mask, ShadowMask):
        mask = ShadowMask(mask)
    check_divisible(mask.shape, p, "hidden_patch_mask")
    binary = mask.binarize()
    grid = rearrange(binary, "(h p1) (w p2) -> h w (p1 p2)", p1=p, p2=p)
    return grid.any(axis=-1)


def generate_prior(img, mask, model: MaskedAutoencoder) -> ImageTensor:
    """Fill every patch that overlaps the shadow with the decoder's reconstruction.

    Parameters
    ----------
    img : ImageTensor
        Shadowed image.
    mask : ShadowMask
        Shadow mask; a patch is hidden if any of its pixels is at or above the
        mask threshold.
    model : MaskedAutoencoder
        Pretrained autoencoder.

    Returns
    -------
    prior : ImageTensor
        Original pixels in visible patches, clamped reconstructions in hidden
        patches.
    """
    data = as_image_array(img)
    if not isinstance(mask, ShadowMask):
        mask = ShadowMask(mask)
    if mask.shape != data.shape[:2]:
        raise ValueError(f"Mask dimensions {mask.shape} do not match image {data.shape[:2]}")
    p = model.cfg.patch_size
    check_divisible(data.shape, p, "generate_prior")

    hidden_grid = hidden_patch_mask(mask, p)
    if not hidden_grid.any():
        return ImageTensor(data.copy())

    hidden_flat = torch.from_numpy(hidden_grid.reshape(-1).astype(np.int64))
    ids_shuffle = torch.argsort(hidden_flat, stable=True)[None]
    len_keep = int((hidden_flat == 0).sum())

    device, dtype = module_device_dtype(model)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        pred, _ = model(image_to_tensor(data, device, dtype), ids_shuffle.to(device), len_keep)
        recon = unpatchify_batch(pred, p, data.shape[0], data.shape[1]).clamp(0.0, 1.0)
    model.train(was_training)

    hidden_pixels = hidden_grid.repeat(p, axis=0).repeat(p, axis=1)[:, :, None]
    prior = np.where(hidden_pixels, tensor_to_array(recon), data)
    logger.debug(f"Reconstructed {int(hidden_grid.sum())} of {hidden_grid.size} patches")
    return ImageTensor(prior)
