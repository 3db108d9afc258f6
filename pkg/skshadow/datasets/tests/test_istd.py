import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from skshadow.datasets import (
    GENERATOR_VERSION,
    DatasetLayoutError,
    SynthConfig,
    list_istd_names,
    load_istd_layout,
    read_manifest,
    synthesize,
    write_istd_layout,
)
from skshadow.image import ImageTensor, save_image, save_mask


def _write_sample(root, name, size=(8, 8), dirs="ABC"):
    rng = np.random.default_rng(sum(map(ord, name)))
    for key in dirs:
        (root / key).mkdir(parents=True, exist_ok=True)
        if key == "B":
            save_mask((rng.uniform(size=size) > 0.5).astype(float), root / key / f"{name}.png")
        else:
            save_image(ImageTensor(rng.uniform(size=(*size, 3))), root / key / f"{name}.png")


def test_round_trip_within_quantization(tmp_path):
    cfg = SynthConfig(size=32, count=8, seed=4)
    root = write_istd_layout(synthesize(cfg), tmp_path / "data", {"size": 32, "seed": 4})
    loaded = list(load_istd_layout(root))
    assert len(loaded) == 8

    for original, restored in zip(synthesize(cfg), loaded):
        assert original.name == restored.name
        assert np.abs(original.shadow_img.data - restored.shadow_img.data).max() <= 1 / 510
        assert np.abs(original.free_img.data - restored.free_img.data).max() <= 1 / 510
        assert_array_equal(original.mask.data, restored.mask.data)


def test_manifest(tmp_path):
    cfg = SynthConfig(size=16, count=3, seed=9)
    write_istd_layout(synthesize(cfg), tmp_path, {"size": 16, "seed": 9})
    manifest = read_manifest(tmp_path)
    assert manifest == {"count": 3, "generator_version": GENERATOR_VERSION, "size": 16, "seed": 9}
    with open(tmp_path / "manifest.json") as fh:
        assert json.load(fh) == manifest
    assert read_manifest(tmp_path / "A") == {}


def test_single_triplet_named_by_stem(tmp_path):
    _write_sample(tmp_path, "x")
    (triplet,) = load_istd_layout(tmp_path)
    assert triplet.name == "x"
    assert triplet.shadow_img.shape == (8, 8, 3)
    assert set(np.unique(triplet.mask.data)) <= {0.0, 1.0}


def test_names_are_sorted(tmp_path):
    for name in ["c", "a", "b"]:
        _write_sample(tmp_path, name)
    assert list_istd_names(tmp_path) == ["a", "b", "c"]
    assert [t.name for t in load_istd_layout(tmp_path)] == ["a", "b", "c"]


def test_non_png_files_are_ignored(tmp_path):
    _write_sample(tmp_path, "x")
    (tmp_path / "A" / "notes.txt").write_text("ignored")
    assert list_istd_names(tmp_path) == ["x"]


def test_missing_root(tmp_path):
    with pytest.raises(DatasetLayoutError, match="not a directory"):
        list_istd_names(tmp_path / "absent")


def test_missing_subdirectory(tmp_path):
    _write_sample(tmp_path, "x", dirs="AC")
    with pytest.raises(DatasetLayoutError, match=r"missing sub-directories \['B'\]"):
        load_istd_layout(tmp_path)


def test_orphan_is_named(tmp_path):
    _write_sample(tmp_path, "x", dirs="AB")
    (tmp_path / "C").mkdir()
    with pytest.raises(DatasetLayoutError, match=r"x \(missing in \['C'\]\)"):
        load_istd_layout(tmp_path)


def test_layout_error_is_a_value_error(tmp_path):
    with pytest.raises(ValueError):
        list_istd_names(tmp_path)


def test_dimension_mismatch(tmp_path):
    _write_sample(tmp_path, "x", dirs="AB")
    _write_sample(tmp_path, "x", size=(8, 10), dirs="C")
    with pytest.raises(DatasetLayoutError, match="mismatched dimensions"):
        list(load_istd_layout(tmp_path))
