"""Per-dimension affine normalization to [-1, 1], fitted on dataset ranges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Array = np.ndarray


@dataclass
class Normalizer:
    """Maps x -> (x - center) / halfrange per dimension.

    Constant dimensions get halfrange 1 so they map to 0 and denormalize back
    to the constant exactly.
    """

    center: Array
    halfrange: Array

    @classmethod
    def fit(cls, data: Array) -> "Normalizer":
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        lo = data.min(axis=0)
        hi = data.max(axis=0)
        center = 0.5 * (hi + lo)
        halfrange = 0.5 * (hi - lo)
        halfrange[halfrange == 0.0] = 1.0
        return cls(center, halfrange)

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def normalize(self, x: Array) -> Array:
        return (np.asarray(x, dtype=np.float64) - self.center) / self.halfrange

    def denormalize(self, u: Array) -> Array:
        return np.asarray(u, dtype=np.float64) * self.halfrange + self.center

    def normalize_chunk(self, chunk: Array) -> Array:
        """Normalize an (L, d) action chunk and flatten it row-major."""
        return self.normalize(np.atleast_2d(chunk)).ravel()

    def denormalize_chunk(self, flat: Array, chunk_len: int) -> Array:
        return self.denormalize(np.asarray(flat).reshape(chunk_len, self.dim))

    def to_dict(self) -> dict:
        return {"center": self.center.tolist(), "halfrange": self.halfrange.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["center"], dtype=np.float64),
                   np.asarray(d["halfrange"], dtype=np.float64))
