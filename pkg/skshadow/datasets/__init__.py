from ._istd import (
    DatasetLayoutError,
    list_istd_names,
    load_istd_layout,
    load_triplet,
    read_manifest,
    write_istd_layout,
)
from ._split import TripletDataset, split
from ._synthetic import (
    GENERATOR_VERSION,
    SampleTriplet,
    SynthConfig,
    darken,
    make_background,
    make_shadow_mask,
    make_triplet,
    soften_mask,
    synthesize,
)

__all__ = [
    "DatasetLayoutError",
    "GENERATOR_VERSION",
    "SampleTriplet",
    "SynthConfig",
    "TripletDataset",
    "darken",
    "list_istd_names",
    "load_istd_layout",
    "load_triplet",
    "make_background",
    "make_shadow_mask",
    "make_triplet",
    "read_manifest",
    "soften_mask",
    "split",
    "synthesize",
    "write_istd_layout",
]
