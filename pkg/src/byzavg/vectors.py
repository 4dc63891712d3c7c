"""Vector families, diameters, and means.

Every guarantee in this package is stated in terms of two diameter notions
over a family of d-dimensional vectors (one vector per node): the maximum
pairwise distance, and the per-coordinate max-minus-min spread.  This module
is the measurement layer; everything here is a pure function over immutable
inputs.

The infinite norm order is passed as ``math.inf`` (equivalently ``numpy.inf``),
which is an exact distinguished value, never approximated by a large float.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "VectorFamily",
    "diameter_l2",
    "diameter_lr",
    "diameter_cw",
    "diameter_cw_norm",
    "family_mean",
    "pairwise_distances",
]


@dataclass(frozen=True)
class VectorFamily:
    """An ordered family of real vectors, one per node.

    Attributes:
        vectors: array of shape ``(m, dim)``; row ``j`` is node ``j``'s vector.

    Invariants enforced at construction: the family is non-empty, all rows
    share the same length, and every entry is finite.
    """

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ConfigurationError(
                f"vector family must be a non-empty (m, d) array, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("vector family entries must be finite")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, j: int) -> np.ndarray:
        return self.vectors[j]


def _as_matrix(family) -> np.ndarray:
    """Accept a VectorFamily or a raw (m, d) / (m,) array."""
    if isinstance(family, VectorFamily):
        return family.vectors
    arr = np.asarray(family, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return arr


def pairwise_distances(family, r: float = 2.0) -> np.ndarray:
    """All pairwise l_r distances as an (m, m) symmetric matrix."""
    arr = _as_matrix(family)
    diff = arr[:, None, :] - arr[None, :, :]
    if r == 2.0:
        return np.sqrt(np.maximum(np.einsum("ijk,ijk->ij", diff, diff), 0.0))
    if math.isinf(r):
        return np.abs(diff).max(axis=2)
    return (np.abs(diff) ** r).sum(axis=2) ** (1.0 / r)


def diameter_l2(family) -> float:
    """Maximum pairwise Euclidean distance; 0 for a singleton family."""
    arr = _as_matrix(family)
    if arr.shape[0] == 1:
        return 0.0
    return float(pairwise_distances(arr).max())


def diameter_lr(family, r: float) -> float:
    """Maximum pairwise l_r distance (the Delta_r of the sandwich bound)."""
    if r < 1:
        raise ConfigurationError(f"norm order must satisfy r >= 1, got {r}")
    arr = _as_matrix(family)
    if arr.shape[0] == 1:
        return 0.0
    return float(pairwise_distances(arr, r).max())


def diameter_cw(family) -> np.ndarray:
    """Per-coordinate max-minus-min over the family, as a length-d vector."""
    arr = _as_matrix(family)
    return arr.max(axis=0) - arr.min(axis=0)


def diameter_cw_norm(family, r: float = 2.0) -> float:
    """l_r norm of the coordinate-wise diameter vector.

    ``r`` must be >= 1; pass ``math.inf`` for the max-coordinate diameter.
    """
    if r < 1:
        raise ConfigurationError(f"norm order must satisfy r >= 1, got {r}")
    spread = diameter_cw(family)
    if math.isinf(r):
        return float(spread.max())
    if r == 2.0:
        return float(np.sqrt((spread * spread).sum()))
    if r == 1.0:
        return float(spread.sum())
    return float((spread**r).sum() ** (1.0 / r))


def family_mean(family) -> np.ndarray:
    """Coordinate-wise arithmetic mean of the family."""
    return _as_matrix(family).mean(axis=0)
