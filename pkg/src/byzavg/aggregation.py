"""Per-round robust aggregation rules.

Three rules are provided:

* :func:`mda_aggregate`: find the (q-f)-subfamily of the collected inputs
  with minimal pairwise-distance diameter and return its average.  Subset
  enumeration is exponential in q, so inputs are capped at
  ``MAX_MDA_INPUTS`` vectors.
* :func:`trimmed_mean`: per coordinate, discard the f smallest and f
  largest collected values and average the rest.
* :func:`own_filter_average`: drop the f collected vectors farthest from
  the caller's own vector and average the remainder (linear in q).

The ``*Rule`` classes wrap these functions behind the uniform interface the
round simulator drives.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, islice
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .vectors import pairwise_distances

__all__ = [
    "CollectedInputs",
    "MdaResult",
    "RuleOutput",
    "FIRST_LEX",
    "AVERAGE_MINIMA",
    "TIE_MODES",
    "MAX_MDA_INPUTS",
    "mda_aggregate",
    "trimmed_mean",
    "trimmed_mean_with_sources",
    "own_filter_average",
    "MdaRule",
    "TrimmedMeanRule",
    "OwnFilterRule",
]

#: Tie-breaking modes for minimal-diameter subset selection.
FIRST_LEX = "first-lexicographic"
AVERAGE_MINIMA = "average-over-minima"
TIE_MODES = (FIRST_LEX, AVERAGE_MINIMA)

#: Hard cap on collected inputs: subset enumeration grows exponentially.
MAX_MDA_INPUTS = 24

#: Two subset diameters are considered tied within this relative tolerance.
TIE_RTOL = 1e-9
TIE_ATOL = 1e-12

_SUBSET_CACHE_LIMIT = 200_000
_CHUNK = 65_536


@dataclass(frozen=True)
class CollectedInputs:
    """The vectors a node gathered in one round.

    Attributes:
        values: array of shape ``(m, d)``, one row per collected vector.
        source_ids: optional originating node ids aligned with ``values``;
            must be distinct when present.
    """

    values: np.ndarray
    source_ids: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ConfigurationError("collected inputs must be a non-empty (m, d) array")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("collected inputs must be finite")
        object.__setattr__(self, "values", arr)
        if self.source_ids is not None:
            ids = tuple(int(i) for i in self.source_ids)
            if len(ids) != arr.shape[0]:
                raise ConfigurationError("source_ids must align with values")
            if len(set(ids)) != len(ids):
                raise ConfigurationError("source_ids must be distinct")
            object.__setattr__(self, "source_ids", ids)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MdaResult:
    """Outcome of a minimal-diameter aggregation.

    ``selected`` is the lexicographically-first minimal subset (positions
    into the collected values); ``achieved_diameter`` is its diameter;
    ``tie_count`` is the number of subsets attaining the minimum within
    tolerance.  In average-over-minima mode ``output`` is the mean of all
    tied subsets' means, otherwise the mean of ``selected``.
    """

    output: np.ndarray
    selected: tuple[int, ...]
    achieved_diameter: float
    tie_count: int


@lru_cache(maxsize=64)
def _subset_array(m: int, k: int) -> Optional[np.ndarray]:
    """All k-subsets of range(m) as an (S, k) array, or None when too many."""
    from math import comb

    if comb(m, k) > _SUBSET_CACHE_LIMIT:
        return None
    return np.array(list(combinations(range(m), k)), dtype=np.intp)


def _iter_subset_chunks(m: int, k: int):
    cached = _subset_array(m, k)
    if cached is not None:
        yield cached
        return
    it = combinations(range(m), k)
    while True:
        chunk = list(islice(it, _CHUNK))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.intp)


def _exact_mean(block: np.ndarray) -> np.ndarray:
    """Row mean, but bit-exact when all rows are identical.

    Averaging k identical floats can be off by an ulp; an agreeing
    subfamily must aggregate to exactly its common value or agreement
    would not be a fixed point.
    """
    if np.all(block == block[0]):
        return block[0].copy()
    return block.mean(axis=0)


def mda_aggregate(z: CollectedInputs, f: int, tie_mode: str = FIRST_LEX) -> MdaResult:
    """Average of the minimal-diameter (q-f)-subfamily of the inputs.

    Enumerates every subset of size ``q - f``, finds the minimal diameter,
    and averages.  Ties (within ``TIE_RTOL``) are resolved per ``tie_mode``:
    ``FIRST_LEX`` keeps the subset with the smallest sorted index tuple;
    ``AVERAGE_MINIMA`` averages the means of all tied subsets.

    Raises:
        ConfigurationError: if ``q <= f``, ``f < 0``, the tie mode is
            unknown, or more than ``MAX_MDA_INPUTS`` vectors are supplied.
    """
    if tie_mode not in TIE_MODES:
        raise ConfigurationError(f"unknown tie mode {tie_mode!r}; expected one of {TIE_MODES}")
    if f < 0:
        raise ConfigurationError(f"f must be non-negative, got {f}")
    q = len(z)
    if q <= f:
        raise ConfigurationError(f"need more than f collected inputs, got q={q} with f={f}")
    if q > MAX_MDA_INPUTS:
        raise ConfigurationError(
            f"minimal-diameter search over {q} inputs exceeds the cap of "
            f"{MAX_MDA_INPUTS}; subset enumeration is exponential in q"
        )
    k = q - f
    if np.all(z.values == z.values[0]):
        from math import comb

        return MdaResult(z.values[0].copy(), tuple(range(k)), 0.0, comb(q, k))
    if f == 0:
        all_idx = tuple(range(q))
        return MdaResult(_exact_mean(z.values), all_idx, _subset_diameter(z.values), 1)

    dist = pairwise_distances(z.values)

    # Pass 1: global minimum diameter.  Pass 2: every subset within the tie
    # tolerance of it.  Enumeration is lexicographic, so the first tied
    # subset is the lexicographic minimum.
    best = np.inf
    for subs in _iter_subset_chunks(q, k):
        diams = dist[subs[:, :, None], subs[:, None, :]].max(axis=(1, 2))
        best = min(best, float(diams.min()))

    tol = best * (1.0 + TIE_RTOL) + TIE_ATOL
    tie_count = 0
    selected: Optional[tuple[int, ...]] = None
    achieved = best
    mean_accum = np.zeros(z.dim)
    for subs in _iter_subset_chunks(q, k):
        diams = dist[subs[:, :, None], subs[:, None, :]].max(axis=(1, 2))
        keep = diams <= tol
        tied = subs[keep]
        if not len(tied):
            continue
        if selected is None:
            selected = tuple(int(i) for i in tied[0])
            achieved = float(dist[np.ix_(tied[0], tied[0])].max())
        tie_count += int(tied.shape[0])
        if tie_mode == AVERAGE_MINIMA:
            means = z.values[tied].mean(axis=1)
            zero_diam = diams[keep] == 0.0
            if zero_diam.any():
                # An agreeing subfamily aggregates to exactly its value.
                means[zero_diam] = z.values[tied[zero_diam, 0]]
            mean_accum += means.sum(axis=0)

    assert selected is not None
    if tie_mode == AVERAGE_MINIMA:
        output = mean_accum / tie_count
    else:
        output = _exact_mean(z.values[list(selected)])
    return MdaResult(output, selected, achieved, tie_count)


def _subset_diameter(values: np.ndarray) -> float:
    if values.shape[0] == 1:
        return 0.0
    return float(pairwise_distances(values).max())


def trimmed_mean(z: CollectedInputs, f: int) -> np.ndarray:
    """Coordinate-wise trimmed mean: drop f smallest and f largest, average.

    Each coordinate is treated independently; the average runs over the
    remaining ``m - 2f`` values.

    Raises:
        ConfigurationError: if fewer than ``2f + 1`` inputs were collected.
    """
    if f < 0:
        raise ConfigurationError(f"f must be non-negative, got {f}")
    m = len(z)
    if m <= 2 * f:
        raise ConfigurationError(f"trimmed mean needs at least 2f+1 inputs, got m={m}, f={f}")
    if f == 0:
        return _exact_mean(z.values)
    ordered = np.sort(z.values, axis=0)
    kept = ordered[f : m - f]
    # Coordinates whose kept values all agree must pass through bit-exactly
    # (agreement is a fixed point); averaging identical floats may round.
    return np.where(kept[0] == kept[-1], kept[0], kept.mean(axis=0))


def trimmed_mean_with_sources(z: CollectedInputs, f: int) -> tuple[np.ndarray, tuple[frozenset, ...]]:
    """Trimmed mean plus, per coordinate, the set of retained source ids.

    When equal values straddle a trim boundary, trimming is by
    (value, source id) order, so the retained sets are deterministic.
    Falls back to positional indices when ``source_ids`` is absent.
    """
    if f < 0:
        raise ConfigurationError(f"f must be non-negative, got {f}")
    m = len(z)
    if m <= 2 * f:
        raise ConfigurationError(f"trimmed mean needs at least 2f+1 inputs, got m={m}, f={f}")
    ids = np.array(z.source_ids if z.source_ids is not None else range(m), dtype=np.intp)
    out = np.empty(z.dim)
    retained: list[frozenset] = []
    for i in range(z.dim):
        order = np.lexsort((ids, z.values[:, i]))
        kept = order[f : m - f]
        col = z.values[kept, i]
        out[i] = col[0] if col[0] == col[-1] else col.mean()
        retained.append(frozenset(int(s) for s in ids[kept]))
    return out, tuple(retained)


def own_filter_average(z: CollectedInputs, own: np.ndarray, f: int) -> np.ndarray:
    """Mean of the inputs after dropping the f vectors farthest from ``own``.

    Distance ties are broken by source index (smaller ids are kept first),
    keeping the result deterministic.  Runs in O(d q) plus the sort on q
    scalars.

    Raises:
        ConfigurationError: if ``m <= f`` or ``own`` has the wrong length.
    """
    if f < 0:
        raise ConfigurationError(f"f must be non-negative, got {f}")
    m = len(z)
    if m <= f:
        raise ConfigurationError(f"own-filter needs more than f inputs, got m={m}, f={f}")
    own = np.asarray(own, dtype=float).reshape(-1)
    if own.shape[0] != z.dim:
        raise ConfigurationError(f"own vector has dim {own.shape[0]}, inputs have dim {z.dim}")
    if f == 0:
        return _exact_mean(z.values)
    diff = z.values - own[None, :]
    dist = np.sqrt(np.maximum(np.einsum("ij,ij->i", diff, diff), 0.0))
    ids = np.array(z.source_ids if z.source_ids is not None else range(m), dtype=np.intp)
    order = np.lexsort((ids, dist))
    kept = order[: m - f]
    return _exact_mean(z.values[kept])


@dataclass(frozen=True)
class RuleOutput:
    """What one application of an aggregation rule produced.

    ``selected`` and ``retained_sources`` are populated only by the rules
    that have them (subset selection, per-coordinate trimming with source
    recording).
    """

    vector: np.ndarray
    selected: Optional[tuple[int, ...]] = None
    achieved_diameter: Optional[float] = None
    tie_count: Optional[int] = None
    retained_sources: Optional[tuple[frozenset, ...]] = None


class MdaRule:
    """Minimal-diameter averaging as a simulator rule."""

    uses_own_vector = False

    def __init__(self, f: int, tie_mode: str = FIRST_LEX):
        if tie_mode not in TIE_MODES:
            raise ConfigurationError(f"unknown tie mode {tie_mode!r}")
        self.f = f
        self.tie_mode = tie_mode

    def apply(self, z: CollectedInputs, own: np.ndarray) -> RuleOutput:
        res = mda_aggregate(z, self.f, self.tie_mode)
        return RuleOutput(
            vector=res.output,
            selected=res.selected,
            achieved_diameter=res.achieved_diameter,
            tie_count=res.tie_count,
        )

    def __repr__(self):
        return f"MdaRule(f={self.f}, tie_mode={self.tie_mode!r})"


class TrimmedMeanRule:
    """Coordinate-wise trimmed mean as a simulator rule.

    With ``record_sources`` the per-coordinate retained source-id sets are
    attached to each output (needed by the retained-set difference bound).
    """

    uses_own_vector = False

    def __init__(self, f: int, record_sources: bool = False):
        self.f = f
        self.record_sources = record_sources

    def apply(self, z: CollectedInputs, own: np.ndarray) -> RuleOutput:
        if self.record_sources:
            vec, retained = trimmed_mean_with_sources(z, self.f)
            return RuleOutput(vector=vec, retained_sources=retained)
        return RuleOutput(vector=trimmed_mean(z, self.f))

    def __repr__(self):
        return f"TrimmedMeanRule(f={self.f})"


class OwnFilterRule:
    """Own-vector dissimilarity filter as a simulator rule."""

    uses_own_vector = True

    def __init__(self, f: int):
        self.f = f

    def apply(self, z: CollectedInputs, own: np.ndarray) -> RuleOutput:
        return RuleOutput(vector=own_filter_average(z, own, self.f))

    def __repr__(self):
        return f"OwnFilterRule(f={self.f})"
