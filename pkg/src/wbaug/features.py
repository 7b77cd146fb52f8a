"""Color-distribution features: log-chroma histogram and its PCA compression.

The histogram describes *which colors* an image contains, not where: it is
exactly invariant to pixel order and pixel duplication. Retrieval compares
images through a 55-dimensional PCA projection of the histogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .color import ImageBuffer
from .errors import DegenerateInputError, InvalidInputError

#: Compact feature dimensionality.
FEATURE_DIM = 55

#: How the two chroma axes are formed from the channel ratios. Recorded in
#: model files; models built with a different convention are not comparable.
CHROMA_CONVENTION = "u=log(c/next),v=log(c/prev),order=RGB"

# Bin weights are quantized to this fixed-point scale before accumulation so
# every bin sum is an exact integer in float64: accumulation order (and hence
# pixel order) cannot perturb the histogram bitwise.
_WEIGHT_SCALE = float(1 << 24)

# Pixels are processed in fixed-size blocks through reused scratch buffers;
# large fresh allocations are expensive on this class of host, and integer
# bin sums make the blocking invisible in the result.
_BLOCK = 1 << 20


@dataclass(frozen=True)
class HistogramParams:
    """Histogram geometry; stored in the model file."""

    bins: int = 60
    lower: float = -3.2
    upper: float = 3.2
    black_level: float = 1.0 / 512.0

    def __post_init__(self):
        if self.bins < 2:
            raise InvalidInputError(f"need at least 2 bins per axis, got {self.bins}")
        if not (self.lower < self.upper):
            raise InvalidInputError("histogram bounds must satisfy lower < upper")
        if not (0.0 < self.black_level < 1.0):
            raise InvalidInputError("black level must lie in (0, 1)")

    @property
    def dim(self) -> int:
        return 3 * self.bins * self.bins


def compute_histogram(image, params: HistogramParams = HistogramParams()) -> np.ndarray:
    """Intensity-weighted log-chroma histogram, shape (bins, bins, 3).

    Per channel layer c the coordinates are u = log(c/next), v = log(c/prev)
    in cyclic R->G->B order, binned over [lower, upper] with out-of-range
    values clamped to the edge bins, weighted by pixel intensity
    sqrt(R^2+G^2+B^2), and the whole tensor normalized to unit L2 norm.

    Channels are clamped below at the black level before the logs. Raises
    DegenerateInputError if no pixel has all channels above the black level.
    """
    if isinstance(image, ImageBuffer):
        pixels = image.flat()
    else:
        pixels = np.asarray(image, dtype=np.float64)
        if pixels.ndim != 2 or pixels.shape[1] != 3:
            raise InvalidInputError(f"expected (n, 3) pixels, got shape {pixels.shape}")
        if not np.isfinite(pixels).all():
            raise InvalidInputError("pixels contain non-finite values")

    eps = params.black_level
    m = params.bins
    scale = m / (params.upper - params.lower)
    n = pixels.shape[0]
    block = min(n, _BLOCK)

    clamped = np.empty((block, 3))
    logs = np.empty((block, 3))
    weights = np.empty(block)
    axis = np.empty(block)
    iu = np.empty(block, dtype=np.int64)
    iv = np.empty(block, dtype=np.int64)
    counts = np.zeros((3, m * m))
    usable = False

    for start in range(0, n, block):
        px = pixels[start : start + block]
        b = px.shape[0]
        cl, lg, w = clamped[:b], logs[:b], weights[:b]
        usable = usable or bool((px > eps).all(axis=1).any())
        np.maximum(px, eps, out=cl)
        np.log(cl, out=lg)
        np.einsum("ij,ij->i", cl, cl, out=w)
        np.sqrt(w, out=w)
        w *= _WEIGHT_SCALE
        np.rint(w, out=w)
        for c in range(3):
            for target, other in ((iu[:b], (c + 1) % 3), (iv[:b], (c + 2) % 3)):
                a = axis[:b]
                np.subtract(lg[:, c], lg[:, other], out=a)
                a -= params.lower
                a *= scale
                np.floor(a, out=a)
                np.clip(a, 0, m - 1, out=a)
                target[:] = a  # cast into the reused integer buffer
            iu[:b] *= m
            iu[:b] += iv[:b]
            counts[c] += np.bincount(iu[:b], weights=w, minlength=m * m)

    if not usable:
        raise DegenerateInputError(
            "all pixels fall below the black level in some channel; "
            "the image carries no usable chroma"
        )
    hist = counts.reshape(3, m, m).transpose(1, 2, 0).copy()
    hist /= np.linalg.norm(hist.ravel())
    return hist


@dataclass(frozen=True)
class PcaModel:
    """Orthonormal projection onto the leading principal components.

    coeff: (D, out_dim) with orthonormal columns, ordered by non-increasing
    explained variance; bias: (D,) training mean; explained: (out_dim,).
    """

    coeff: np.ndarray
    bias: np.ndarray
    explained: np.ndarray

    def __post_init__(self):
        coeff = np.ascontiguousarray(self.coeff, dtype=np.float64)
        bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        explained = np.ascontiguousarray(self.explained, dtype=np.float64)
        if coeff.ndim != 2 or bias.ndim != 1 or coeff.shape[0] != bias.shape[0]:
            raise InvalidInputError("inconsistent PCA dimensions")
        if explained.shape != (coeff.shape[1],):
            raise InvalidInputError("explained variances must match component count")
        object.__setattr__(self, "coeff", coeff)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "explained", explained)

    @property
    def input_dim(self) -> int:
        return self.coeff.shape[0]

    @property
    def out_dim(self) -> int:
        return self.coeff.shape[1]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # Deterministic sign convention: the largest-magnitude entry of each
    # column is positive.
    idx = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[idx, np.arange(components.shape[1])])
    signs[signs == 0] = 1.0
    return components * signs


def fit_pca(features: np.ndarray, out_dim: int = FEATURE_DIM) -> PcaModel:
    """Fit PCA on an (N, D) matrix of vectorized histograms.

    N > D uses an eigendecomposition of the D x D covariance; otherwise an
    economy SVD of the centered data (the dual-sized computation), which
    keeps the components orthonormal to machine precision regardless of the
    spectrum's decay. Covariance normalization is 1/(N-1).
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError(f"expected an (N, D) matrix, got shape {x.shape}")
    n, d = x.shape
    if out_dim < 1 or out_dim > d:
        raise InvalidInputError(f"out_dim must be in [1, {d}], got {out_dim}")
    if n < max(out_dim, 2):
        raise InvalidInputError(
            f"need at least {max(out_dim, 2)} samples to fit {out_dim} components, got {n}"
        )
    if not np.isfinite(x).all():
        raise InvalidInputError("features contain non-finite values")

    bias = x.mean(axis=0)
    centered = x - bias
    if float(np.abs(centered).max(initial=0.0)) == 0.0:
        raise DegenerateInputError("features have zero variance; PCA is undefined")

    if n > d:
        cov = (centered.T @ centered) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        components = eigvecs[:, ::-1][:, :out_dim]
        explained = eigvals[::-1][:out_dim]
    else:
        _, singular, vt = np.linalg.svd(centered, full_matrices=False)
        components = vt[:out_dim].T
        explained = (singular[:out_dim] ** 2) / (n - 1)

    return PcaModel(_fix_signs(components), bias, np.maximum(explained, 0.0))


def project(pca: PcaModel, histogram: np.ndarray) -> np.ndarray:
    """Zero-center a (vectorized) histogram and project it; returns (out_dim,)."""
    vec = np.asarray(histogram, dtype=np.float64).ravel()
    if vec.shape[0] != pca.input_dim:
        raise InvalidInputError(
            f"histogram has {vec.shape[0]} values, PCA expects {pca.input_dim}"
        )
    return pca.coeff.T @ (vec - pca.bias)
