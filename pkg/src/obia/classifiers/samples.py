from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Feature matrix with one class name per row."""

    features: np.ndarray
    labels: np.ndarray
    schema: tuple[str, ...]

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.labels, dtype=object)
        schema = tuple(self.schema)
        if x.ndim != 2 or x.shape[1] != len(schema):
            raise ValueError(f"feature matrix {x.shape} does not match schema of {len(schema)} features")
        if y.shape != (x.shape[0],):
            raise ValueError(f"{y.shape[0]} labels for {x.shape[0]} rows")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "schema", schema)

    def __len__(self):
        return self.features.shape[0]

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels.tolist())))
