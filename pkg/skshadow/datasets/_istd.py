"""Reading and writing datasets in the ISTD three-folder layout.

A dataset root holds ``A/`` (shadow images), ``B/`` (masks) and ``C/``
(shadow-free images) with identically named PNG files, plus an optional
``manifest.json`` written by :func:`write_istd_layout`.
"""

import json
import logging
from pathlib import Path
from typing import Iterable, Iterator, List

import numpy as np

from .._utils import atomic_write_json
from ..image import ShadowMask, load_image, load_mask, save_image, save_mask
from ._synthetic import GENERATOR_VERSION, SampleTriplet

logger = logging.getLogger(__name__)

SHADOW_DIR, MASK_DIR, FREE_DIR = "A", "B", "C"
MANIFEST_NAME = "manifest.json"


class DatasetLayoutError(ValueError):
    """Raised when a dataset directory does not follow the ISTD layout."""


def _stems(folder: Path) -> set:
    return {p.stem for p in folder.iterdir() if p.is_file() and p.suffix.lower() == ".png"}


def list_istd_names(root) -> List[str]:
    """Sorted sample names of an ISTD-layout directory.

    Raises
    ------
    DatasetLayoutError
        If a sub-directory is missing or a name is not present in all three.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetLayoutError(f"Dataset root {root} is not a directory")
    folders = {key: root / key for key in (SHADOW_DIR, MASK_DIR, FREE_DIR)}
    missing = [key for key, folder in folders.items() if not folder.is_dir()]
    if missing:
        raise DatasetLayoutError(f"Dataset root {root} is missing sub-directories {missing}")

    stems = {key: _stems(folder) for key, folder in folders.items()}
    all_names = set.union(*stems.values())
    orphans = sorted(
        f"{name} (missing in {[key for key in stems if name not in stems[key]]})"
        for name in all_names
        if any(name not in s for s in stems.values())
    )
    if orphans:
        raise DatasetLayoutError(f"Unmatched files in {root}: {', '.join(orphans)}")
    return sorted(all_names)


def load_triplet(root, name: str) -> SampleTriplet:
    """Load one named triplet; masks are binarized at 0.5."""
    root = Path(root)
    shadow = load_image(root / SHADOW_DIR / f"{name}.png")
    mask = load_mask(root / MASK_DIR / f"{name}.png")
    free = load_image(root / FREE_DIR / f"{name}.png")
    if shadow.shape != free.shape or mask.shape != shadow.shape[:2]:
        raise DatasetLayoutError(
            f"Triplet {name!r} has mismatched dimensions: shadow {shadow.shape}, "
            f"mask {mask.shape}, shadow-free {free.shape}"
        )
    binary = ShadowMask(mask.binarize().astype(np.float64))
    return SampleTriplet(name=name, shadow_img=shadow, mask=binary, free_img=free)


def load_istd_layout(root) -> Iterator[SampleTriplet]:
    """Stream the triplets of an ISTD-layout directory in lexicographic order.

    The directory structure is validated before the first triplet is yielded;
    images are decoded lazily.

    Parameters
    ----------
    root : str or Path
        Dataset root with ``A``, ``B`` and ``C`` sub-directories.

    Returns
    -------
    triplets : iterator of SampleTriplet
        One triplet per file name.
    """
    names = list_istd_names(root)
    logger.debug(f"Found {len(names)} triplets in {root}")
    return (load_triplet(root, name) for name in names)


def write_istd_layout(triplets: Iterable[SampleTriplet], root, manifest: dict = None) -> Path:
    """Write triplets as ``A/``, ``B/``, ``C/`` PNG folders plus ``manifest.json``.

    Parameters
    ----------
    triplets : iterable of SampleTriplet
        Samples to write, named by ``triplet.name``.
    root : str or Path
        Output directory, created if needed.
    manifest : dict, optional
        Extra manifest fields such as ``size`` and ``seed``.

    Returns
    -------
    root : Path
        The dataset root.
    """
    root = Path(root)
    for key in (SHADOW_DIR, MASK_DIR, FREE_DIR):
        (root / key).mkdir(parents=True, exist_ok=True)

    count = 0
    for triplet in triplets:
        save_image(triplet.shadow_img, root / SHADOW_DIR / f"{triplet.name}.png")
        save_mask(triplet.mask, root / MASK_DIR / f"{triplet.name}.png")
        save_image(triplet.free_img, root / FREE_DIR / f"{triplet.name}.png")
        count += 1

    data = {"count": count, "generator_version": GENERATOR_VERSION}
    data.update(manifest or {})
    atomic_write_json(root / MANIFEST_NAME, data)
    logger.info(f"Wrote {count} triplets to {root}")
    return root


def read_manifest(root) -> dict:
    """Return the dataset manifest, or an empty dict if there is none."""
    path = Path(root) / MANIFEST_NAME
    if not path.is_file():
        return {}
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
