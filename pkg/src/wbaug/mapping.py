"""Polynomial color transforms: fitting (least squares) and application.

A transform is a 3x9 matrix taking kernel-lifted source colors to target
colors. Fitting minimizes the Frobenius norm of (M phi(source) - target);
application is per-pixel and gamut-clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numba
import numpy as np
import scipy.linalg

from .color import ImageBuffer, kernel_matrix
from .errors import DegenerateInputError, InvalidInputError

#: Condition-number gate on the 9x9 normal equations. Above this the solver
#: switches to an SVD least-squares path, which also detects rank deficiency.
CONDITION_LIMIT = 1e12

#: Fitting subsamples down to this many pixel pairs with a uniform stride.
MAX_FIT_PIXELS = 65536


class Style(Enum):
    """Photo-finishing style of a rendition."""

    ADOBE_STANDARD = "AS"
    CAMERA_STANDARD = "CS"

    def __str__(self) -> str:
        return self.value


#: Order used to serialize style tags (also their sort order).
STYLE_CODES = {Style.ADOBE_STANDARD: 0, Style.CAMERA_STANDARD: 1}
STYLE_FROM_CODE = {code: style for style, code in STYLE_CODES.items()}

#: Canonical color temperatures of the augmentation set, in Kelvin.
CANONICAL_TEMPERATURES = (2850, 3800, 5500, 6500, 7500)


@dataclass(frozen=True, order=False)
class WbSetting:
    """One white-balance rendition target: color temperature + style."""

    temperature: int
    style: Style

    def __post_init__(self):
        if not isinstance(self.style, Style):
            raise InvalidInputError(f"unknown style {self.style!r}")
        if int(self.temperature) <= 0:
            raise InvalidInputError(f"temperature must be positive Kelvin, got {self.temperature}")
        object.__setattr__(self, "temperature", int(self.temperature))

    @property
    def name(self) -> str:
        return f"{self.temperature}K_{self.style.value}"

    def __str__(self) -> str:
        return self.name

    def sort_key(self):
        return (self.temperature, STYLE_CODES[self.style])

    @classmethod
    def parse(cls, text: str) -> "WbSetting":
        """Parse names like ``2850K_AS``."""
        token = text.strip()
        try:
            temp_part, style_part = token.split("_", 1)
            if not temp_part.endswith("K"):
                raise ValueError
            temperature = int(temp_part[:-1])
            style = Style(style_part)
        except ValueError:
            raise InvalidInputError(
                f"cannot parse setting {text!r}; expected e.g. '2850K_AS'"
            ) from None
        return cls(temperature, style)


#: The ten-rendition vocabulary used throughout the docs and defaults.
CANONICAL_SETTINGS = tuple(
    sorted(
        (WbSetting(t, s) for t in CANONICAL_TEMPERATURES for s in Style),
        key=WbSetting.sort_key,
    )
)


@dataclass(frozen=True)
class ColorTransform:
    """3x9 matrix over the polynomial kernel, tagged with its rendition target."""

    matrix: np.ndarray
    setting: WbSetting | None = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 9):
            raise InvalidInputError(f"transform matrix must be 3x9, got {m.shape}")
        if not np.isfinite(m).all():
            raise InvalidInputError("transform matrix contains non-finite entries")
        object.__setattr__(self, "matrix", m)


@numba.njit(cache=True, fastmath=False)
def _apply_polynomial(pix, mat, out):  # pragma: no cover - compiled
    # Per-pixel fused lift/multiply/clamp. Each pixel's arithmetic is a fixed
    # expression, so results are bitwise independent of pixel position.
    n = pix.shape[0]
    m00 = mat[0, 0]; m01 = mat[0, 1]; m02 = mat[0, 2]
    m03 = mat[0, 3]; m04 = mat[0, 4]; m05 = mat[0, 5]
    m06 = mat[0, 6]; m07 = mat[0, 7]; m08 = mat[0, 8]
    m10 = mat[1, 0]; m11 = mat[1, 1]; m12 = mat[1, 2]
    m13 = mat[1, 3]; m14 = mat[1, 4]; m15 = mat[1, 5]
    m16 = mat[1, 6]; m17 = mat[1, 7]; m18 = mat[1, 8]
    m20 = mat[2, 0]; m21 = mat[2, 1]; m22 = mat[2, 2]
    m23 = mat[2, 3]; m24 = mat[2, 4]; m25 = mat[2, 5]
    m26 = mat[2, 6]; m27 = mat[2, 7]; m28 = mat[2, 8]
    for i in range(n):
        r = pix[i, 0]
        g = pix[i, 1]
        b = pix[i, 2]
        rg = r * g; rb = r * b; gb = g * b
        rr = r * r; gg = g * g; bb = b * b
        x = m00 * r + m01 * g + m02 * b + m03 * rg + m04 * rb + m05 * gb + m06 * rr + m07 * gg + m08 * bb
        y = m10 * r + m11 * g + m12 * b + m13 * rg + m14 * rb + m15 * gb + m16 * rr + m17 * gg + m18 * bb
        z = m20 * r + m21 * g + m22 * b + m23 * rg + m24 * rb + m25 * gb + m26 * rr + m27 * gg + m28 * bb
        out[i, 0] = min(1.0, max(0.0, x))
        out[i, 1] = min(1.0, max(0.0, y))
        out[i, 2] = min(1.0, max(0.0, z))


def apply_matrix(matrix: np.ndarray, pixels: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """Apply a raw 3x9 matrix to (n, 3) pixels; returns clamped (n, 3).

    Pass a preallocated C-contiguous float64 `out` of the same shape to skip
    the allocation (batch callers reuse buffers).
    """
    mat = np.ascontiguousarray(matrix, dtype=np.float64)
    if mat.shape != (3, 9):
        raise InvalidInputError(f"transform matrix must be 3x9, got {mat.shape}")
    if not np.isfinite(mat).all():
        raise InvalidInputError("transform matrix contains non-finite entries")
    pix = np.ascontiguousarray(pixels, dtype=np.float64)
    if pix.ndim != 2 or pix.shape[1] != 3:
        raise InvalidInputError(f"pixels must have shape (n, 3), got {pix.shape}")
    if out is None:
        out = np.empty_like(pix)
    elif (
        out.shape != pix.shape
        or out.dtype != np.float64
        or not out.flags["C_CONTIGUOUS"]
    ):
        raise InvalidInputError("out buffer must be C-contiguous float64 of pixel shape")
    _apply_polynomial(pix, mat, out)
    return out


def apply_transform(transform: ColorTransform, image: ImageBuffer) -> ImageBuffer:
    """Re-render an image through a fitted transform (per-pixel, clamped)."""
    out = apply_matrix(transform.matrix, image.flat())
    return ImageBuffer._wrap(out.reshape(image.pixels.shape))


def _subsample(colors: np.ndarray, max_pixels: int) -> np.ndarray:
    n = colors.shape[1]
    if n <= max_pixels:
        return colors
    stride = -(-n // max_pixels)  # ceil division keeps count <= max_pixels
    return colors[:, ::stride]


def fit_transform(
    source: np.ndarray,
    target: np.ndarray,
    setting: WbSetting | None = None,
    max_pixels: int = MAX_FIT_PIXELS,
) -> ColorTransform:
    """Least-squares fit of the 3x9 transform mapping source onto target.

    source, target: 3 x n color matrices with identical n >= 9. The solver
    uses 9x9 normal equations with a Cholesky factorization; if their
    condition estimate exceeds CONDITION_LIMIT it falls back to an SVD
    least-squares solve, which reports rank deficiency as a degenerate input.
    """
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] != 3 or tgt.shape != src.shape:
        raise InvalidInputError(
            f"source/target must be matching 3 x n matrices, got {src.shape} and {tgt.shape}"
        )
    if src.shape[1] < 9:
        raise InvalidInputError(f"need at least 9 pixel pairs, got {src.shape[1]}")
    if max_pixels < 9:
        raise InvalidInputError("max_pixels must be at least 9")
    if not (np.isfinite(src).all() and np.isfinite(tgt).all()):
        raise InvalidInputError("source/target contain non-finite values")

    src_s = _subsample(src, max_pixels)
    tgt_s = _subsample(tgt, max_pixels)
    phi = kernel_matrix(src_s)

    gram = phi @ phi.T
    rhs = tgt_s @ phi.T
    cond = np.linalg.cond(gram)
    if math.isfinite(cond) and cond <= CONDITION_LIMIT:
        try:
            chol = scipy.linalg.cho_factor(gram, lower=True)
            mat = scipy.linalg.cho_solve(chol, rhs.T).T
            return ColorTransform(mat, setting)
        except scipy.linalg.LinAlgError:
            pass  # not positive definite after all; use the rank-revealing path

    solution, _, rank, _ = np.linalg.lstsq(phi.T, tgt_s.T, rcond=None)
    if rank < 9:
        raise DegenerateInputError(
            f"kernelized source colors have rank {rank} < 9 "
            "(the image's colors span too small a set to determine a transform)"
        )
    return ColorTransform(solution.T, setting)


def fit_residual(transform: ColorTransform, source: np.ndarray, target: np.ndarray) -> float:
    """Mean absolute per-channel error of the clamped transform over all pixels."""
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if src.ndim != 2 or src.shape[0] != 3 or tgt.shape != src.shape:
        raise InvalidInputError("source/target must be matching 3 x n matrices")
    reproduced = apply_matrix(transform.matrix, np.ascontiguousarray(src.T))
    return float(np.mean(np.abs(reproduced - tgt.T)))
