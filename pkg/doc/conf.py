"""Sphinx configuration for the scikit-shadow documentation."""

import os
import re
import sys
from datetime import date

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
import skshadow  # noqa: E402

project = "scikit-shadow"
copyright = f"2024-{date.today().year}, scikit-shadow Developers"
version = release = skshadow.__version__

needs_sphinx = "6.0"
root_doc = "index"
extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.intersphinx",
    "sphinx.ext.viewcode",
    "numpydoc",
]
templates_path = ["_templates"]
exclude_patterns = ["_build"]
default_role = "literal"

html_theme = "pydata_sphinx_theme"
html_show_sourcelink = False
html_theme_options = {"show_toc_level": 1}

autosummary_generate = True
autodoc_typehints = "none"
autodoc_member_order = "groupwise"

numpydoc_class_members_toctree = False
numpydoc_attributes_as_param_list = True
numpydoc_xref_param_type = True
numpydoc_xref_aliases = {
    "Path": "pathlib.Path",
    "ImageTensor": "skshadow.ImageTensor",
    "ShadowMask": "skshadow.ShadowMask",
    "WaveletPyramid": "skshadow.WaveletPyramid",
    "SampleTriplet": "skshadow.datasets.SampleTriplet",
    "SynthConfig": "skshadow.datasets.SynthConfig",
    "RunConfig": "skshadow.harness.RunConfig",
    "RunManifest": "skshadow.harness.RunManifest",
    "RegionMetricsReport": "skshadow.metrics.RegionMetricsReport",
    "Tensor": "torch.Tensor",
    "DataFrame": "pandas.DataFrame",
}
# shape letters and prose words inside ``Parameters`` type fields
numpydoc_xref_ignore = {"of", "or", "shape", "optional", "default", "N", "C", "H", "W"}

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "sklearn": ("https://scikit-learn.org/stable", None),
    "pandas": ("https://pandas.pydata.org/docs", None),
    "torch": ("https://pytorch.org/docs/stable", None),
    "skimage": ("https://scikit-image.org/docs/stable", None),
}


def qualify_torch_types(app, what, name, obj, options, lines):
    """Point bare ``torch`` and ``np`` type names in docstrings at their packages."""
    content = "\n".join(lines)
    content = re.sub(r"`torch.Tensor`", r":class:`torch.Tensor`", content)
    content = re.sub(r"`~?np\.(\w+)", r"`numpy.\1", content)
    lines[:] = content.split("\n")


def setup(app):
    app.connect("autodoc-process-docstring", qualify_torch_types)
