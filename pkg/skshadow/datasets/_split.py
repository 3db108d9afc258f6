"""Train/test splitting and the torch view of a triplet collection."""

from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import torch
from sklearn.model_selection import train_test_split
from torch.utils.data import Dataset

from ..image import ImageTensor, ShadowMask
from ._synthetic import SampleTriplet


def split(
    stream: Iterable[SampleTriplet], train_fraction: float, seed: int
) -> Tuple[List[SampleTriplet], List[SampleTriplet]]:
    """Seeded, disjoint and exhaustive train/test partition.

    Parameters
    ----------
    stream : iterable of SampleTriplet
        Samples to split; consumed entirely.
    train_fraction : float
        Fraction of samples in the training set, in ``(0, 1)``. The training
        set holds ``round(train_fraction * n)`` samples, at least one, and at
        least one sample is left for testing.
    seed : int
        Shuffle seed.

    Returns
    -------
    train, test : list of SampleTriplet
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    samples = list(stream)
    n_samples = len(samples)
    if n_samples < 2:
        raise ValueError(f"Cannot split fewer than 2 samples, got {n_samples}")

    n_train = min(max(int(round(train_fraction * n_samples)), 1), n_samples - 1)
    indices = np.arange(n_samples, dtype=int)
    indices_train, indices_test = train_test_split(
        indices, train_size=n_train, shuffle=True, random_state=seed
    )
    return [samples[i] for i in indices_train], [samples[i] for i in indices_test]


class TripletDataset(Dataset):
    """Torch dataset over in-memory triplets.

    Each item is a dict of ``float32`` tensors: ``shadow`` and ``free`` of shape
    ``C x H x W``, ``mask`` of shape ``1 x H x W``, ``prior`` of shape
    ``C x H x W`` when priors are given, plus the sample ``name``.

    Parameters
    ----------
    triplets : sequence of SampleTriplet
        Samples.
    hflip : bool, default=False
        Flip each item horizontally with probability one half.
    masks : sequence of ShadowMask, optional
        Masks replacing the ground truth masks, e.g. segmenter predictions.
    priors : sequence of ImageTensor, optional
        Contextual priors, one per triplet.
    """

    def __init__(
        self,
        triplets: Sequence[SampleTriplet],
        hflip: bool = False,
        masks: Optional[Sequence[ShadowMask]] = None,
        priors: Optional[Sequence[ImageTensor]] = None,
    ):
        self.triplets = list(triplets)
        self.hflip = hflip
        for name, extra in (("masks", masks), ("priors", priors)):
            if extra is not None and len(extra) != len(self.triplets):
                raise ValueError(
                    f"Got {len(extra)} {name} for {len(self.triplets)} triplets"
                )
        self.masks = None if masks is None else list(masks)
        self.priors = None if priors is None else list(priors)

    def __len__(self):
        return len(self.triplets)

    def __getitem__(self, index):
        triplet = self.triplets[index]
        mask = triplet.mask if self.masks is None else self.masks[index]
        item = {
            "shadow": _chw(triplet.shadow_img.data),
            "mask": torch.from_numpy(np.asarray(mask.data)[None].copy()).float(),
            "free": _chw(triplet.free_img.data),
        }
        if self.priors is not None:
            item["prior"] = _chw(self.priors[index].data)
        if self.hflip and torch.rand(1).item() < 0.5:
            item = {key: value.flip(-1) for key, value in item.items()}
        item["name"] = triplet.name
        return item


def _chw(data: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(data.transpose(2, 0, 1).copy()).float()
