"""Neural networks: FFC blocks, the shadow segmenter, the MAE prior and the remover."""

from ._ffc import FfcBlock, FfcConfig, SpectralTransform, ffc_block, spectral_transform
from ._mae import (
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
from ._removal import (
    REMOVAL_VARIANTS,
    RemovalConfig,
    ShadowRemover,
    SimBlock,
    removal_loss,
    remove_shadow,
    sim_forward,
)
from ._segmenter import (
    BaseAdapter,
    SegmenterConfig,
    ShadowSegmenter,
    WaveletAdapter,
    adapter_inject,
    predict_mask,
    segmentation_loss,
    wavelet_features_torch,
)

__all__ = [
    "BaseAdapter",
    "FfcBlock",
    "FfcConfig",
    "MaeConfig",
    "MaskedAutoencoder",
    "REMOVAL_VARIANTS",
    "RemovalConfig",
    "SegmenterConfig",
    "ShadowRemover",
    "ShadowSegmenter",
    "SimBlock",
    "SpectralTransform",
    "WaveletAdapter",
    "adapter_inject",
    "ffc_block",
    "generate_prior",
    "hidden_patch_mask",
    "mae_loss",
    "mae_train_step",
    "patchify",
    "patchify_batch",
    "predict_mask",
    "random_masking",
    "removal_loss",
    "remove_shadow",
    "segmentation_loss",
    "sim_forward",
    "spectral_transform",
    "unpatchify",
    "unpatchify_batch",
    "wavelet_features_torch",
]
