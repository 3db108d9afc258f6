"""Shared helpers for configuration objects and on-disk artifacts."""

import json
import os
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Dict

from sklearn.utils._param_validation import validate_parameter_constraints

OUTPUT_ROOT_ENV = "SKSHADOW_OUTPUT_ROOT"


class ConfigMixin:
    """Mixin giving dataclass configs scikit-learn style parameter validation.

    Subclasses declare ``_parameter_constraints`` the same way estimators do and
    may override ``_check_invariants`` for cross-field rules.
    """

    _parameter_constraints: dict = {}

    def __post_init__(self):
        self._validate_params()
        self._check_invariants()

    def _validate_params(self):
        validate_parameter_constraints(
            self._parameter_constraints,
            {f.name: getattr(self, f.name) for f in fields(self)},
            caller_name=type(self).__name__,
        )

    def _check_invariants(self):
        pass

    def to_dict(self) -> Dict[str, Any]:
        """Return the configuration as a JSON-serializable dictionary."""
        out = asdict(self)
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        return out

    @classmethod
    def from_dict(cls, params: Dict[str, Any]):
        """Build a configuration from a dictionary, rejecting unknown keys."""
        names = {f.name for f in fields(cls)}
        unknown = set(params) - names
        if unknown:
            raise ValueError(f"Unknown {cls.__name__} parameters: {sorted(unknown)}")
        return cls(**params)


def atomic_write_json(path, data) -> Path:
    """Write JSON to ``path`` through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.with_name(path.name + ".tmp")
    with open(tmp_path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=False)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp_path, path)
    return path


def resolve_output_dir(path) -> Path:
    """Resolve a relative output directory against ``$SKSHADOW_OUTPUT_ROOT``."""
    path = Path(path)
    root = os.getenv(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path
