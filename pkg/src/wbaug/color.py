"""Pixel container, polynomial color kernel, gamut clamp, and sRGB transfer.

All pixel math is float64 in [0, 1]; 8/16-bit conversion happens at the
I/O boundary (see imageio).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

#: Term order of the polynomial lift. Model files record this string so
#: stored matrices are self-describing.
KERNEL_TERMS = ("R", "G", "B", "RG", "RB", "GB", "R2", "G2", "B2")
KERNEL_ORDER = ",".join(KERNEL_TERMS)


@dataclass(frozen=True)
class ImageBuffer:
    """Interleaved RGB raster: float64 array of shape (height, width, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidInputError(
                f"image must have shape (height, width, 3), got {px.shape}"
            )
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError("image must be at least 1x1")
        if not np.isfinite(px).all():
            raise InvalidInputError("image contains non-finite values")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def _wrap(cls, pixels: np.ndarray) -> "ImageBuffer":
        # for pipeline-internal outputs that are finite by construction
        # (clamped kernel results); skips the validation pass
        obj = object.__new__(cls)
        object.__setattr__(obj, "pixels", pixels)
        return obj

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def pixel_count(self) -> int:
        return self.pixels.shape[0] * self.pixels.shape[1]

    def flat(self) -> np.ndarray:
        """(n, 3) view of the pixels in row-major order."""
        return self.pixels.reshape(-1, 3)

    def colors(self) -> np.ndarray:
        """3 x n color matrix (copies; rows are R, G, B)."""
        return np.ascontiguousarray(self.flat().T)


def kernel_phi(color) -> np.ndarray:
    """Lift one RGB color to the 9-term polynomial vector.

    Output order is [R, G, B, RG, RB, GB, R^2, G^2, B^2].
    """
    c = np.asarray(color, dtype=np.float64)
    if c.shape != (3,):
        raise InvalidInputError(f"expected a single RGB color, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise InvalidInputError("color contains non-finite values")
    r, g, b = c
    return np.array([r, g, b, r * g, r * b, g * b, r * r, g * g, b * b])


def kernel_matrix(colors: np.ndarray) -> np.ndarray:
    """Lift a 3 x n color matrix to the 9 x n kernelized matrix."""
    c = np.asarray(colors, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != 3:
        raise InvalidInputError(f"expected a 3 x n color matrix, got shape {c.shape}")
    if not np.isfinite(c).all():
        raise InvalidInputError("colors contain non-finite values")
    r, g, b = c[0], c[1], c[2]
    return np.stack([r, g, b, r * g, r * b, g * b, r * r, g * g, b * b])


def clamp_gamut(color):
    """Clamp each channel to [0, 1]. Idempotent; accepts scalars or arrays."""
    return np.clip(np.asarray(color, dtype=np.float64), 0.0, 1.0)


def _check_unit_range(x: np.ndarray, what: str) -> None:
    if not np.isfinite(x).all():
        raise InvalidInputError(f"{what} contains non-finite values")
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise InvalidInputError(f"{what} must lie in [0, 1]")


def srgb_decode(value):
    """sRGB-encoded [0,1] -> linear [0,1] (IEC 61966-2-1 piecewise EOTF)."""
    x = np.asarray(value, dtype=np.float64)
    _check_unit_range(x, "sRGB value")
    out = np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)
    return float(out) if np.isscalar(value) else out


def srgb_encode(value):
    """Linear [0,1] -> sRGB-encoded [0,1]; inverse of srgb_decode."""
    x = np.asarray(value, dtype=np.float64)
    _check_unit_range(x, "linear value")
    out = np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1.0 / 2.4) - 0.055)
    out = np.where(x == 1.0, 1.0, out)  # 1.055 - 0.055 is not exactly 1.0
    # the power branch can undershoot 0 by one ulp near the knee
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.isscalar(value) else out
