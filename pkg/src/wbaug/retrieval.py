"""Exact nearest-neighbor search over compact features and transform blending.

The index is an exhaustive L2 scan: the training sets involved hold a few
thousand 55-dimensional entries, so exactness is cheap and retrieval results
are reproducible (ties break toward the smaller record id).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidStateError
from .mapping import ColorTransform


class FeatureIndex:
    """Immutable feature table sorted by record id."""

    def __init__(self, ids, features):
        ids = [str(i) for i in ids]
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != len(ids):
            raise InvalidInputError("need one feature row per record id")
        if len(set(ids)) != len(ids):
            raise InvalidInputError("record ids must be unique")
        if not np.isfinite(feats).all():
            raise InvalidInputError("features contain non-finite values")
        order = sorted(range(len(ids)), key=lambda i: ids[i])
        self._ids = tuple(ids[i] for i in order)
        self._features = np.ascontiguousarray(feats[order])

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def ids(self) -> tuple:
        return self._ids

    @property
    def dim(self) -> int:
        return self._features.shape[1]


@dataclass(frozen=True)
class NeighborSet:
    """k retrieved record ids with their distances, sorted non-decreasing."""

    ids: tuple
    distances: np.ndarray


def knn_query(index: FeatureIndex, feature: np.ndarray, k: int) -> NeighborSet:
    """Exact k nearest neighbors by Euclidean distance; ties by smaller id."""
    if len(index) == 0:
        raise InvalidStateError("feature index is empty")
    if not 1 <= k <= len(index):
        raise InvalidInputError(f"k must be in [1, {len(index)}], got {k}")
    v = np.asarray(feature, dtype=np.float64).ravel()
    if v.shape[0] != index.dim:
        raise InvalidInputError(
            f"query has dimension {v.shape[0]}, index holds {index.dim}"
        )
    diff = index._features - v
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    # rows are id-sorted, so a stable sort breaks distance ties by smaller id
    order = np.argsort(dist, kind="stable")[:k]
    return NeighborSet(
        ids=tuple(index._ids[i] for i in order),
        distances=dist[order].copy(),
    )


def rbf_weights(distances, sigma: float) -> np.ndarray:
    """Gaussian weights over neighbor distances, normalized to sum to 1.

    weight_j proportional to exp(-d_j^2 / (2 sigma^2)); computed with
    max-exponent subtraction so the nearest neighbor's weight never underflows.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size < 1:
        raise InvalidInputError("need at least one distance")
    if not np.isfinite(d).all() or (d < 0).any():
        raise InvalidInputError("distances must be finite and non-negative")
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    z = -(d * d) / (2.0 * sigma * sigma)
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def blend_matrices(weights: np.ndarray, matrices: np.ndarray) -> np.ndarray:
    """Weighted entrywise sum of k stacked 3x9 matrices."""
    w = np.asarray(weights, dtype=np.float64).ravel()
    mats = np.asarray(matrices, dtype=np.float64)
    if mats.shape != (w.size, 3, 9):
        raise InvalidInputError(
            f"expected {w.size} stacked 3x9 matrices, got shape {mats.shape}"
        )
    return np.einsum("j,jrc->rc", w, mats)


def blend_transforms(weights, transforms) -> ColorTransform:
    """Convex combination of retrieved transforms; all tags must agree."""
    transforms = list(transforms)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if len(transforms) != w.size or not transforms:
        raise InvalidInputError("need one weight per transform (at least one)")
    tags = {t.setting for t in transforms}
    if len(tags) != 1:
        raise InvalidInputError(f"cannot blend transforms with mixed tags: {sorted(str(t) for t in tags)}")
    blended = blend_matrices(w, np.stack([t.matrix for t in transforms]))
    return ColorTransform(blended, transforms[0].setting)
