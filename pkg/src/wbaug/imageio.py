"""File-boundary image handling: 8/16-bit PNG and PPM, in and out.

Pixels cross the boundary as value/maxval on the way in and with
round-half-up quantization on the way out. Alpha channels are stripped and
single-channel files are promoted to RGB on ingest. Files are written
atomically (temp file + rename) so batch runs never leave partial outputs.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .color import ImageBuffer
from .errors import InvalidInputError

SUPPORTED_EXTENSIONS = (".png", ".ppm", ".pnm")


@dataclass(frozen=True)
class LoadedImage:
    image: ImageBuffer
    bit_depth: int  # 8 or 16
    extension: str  # lowercase, with dot


def _normalize_raster(raw: np.ndarray, source: str) -> tuple[np.ndarray, int]:
    if raw.dtype == np.uint8:
        depth, maxval = 8, 255.0
    elif raw.dtype == np.uint16:
        depth, maxval = 16, 65535.0
    else:
        raise InvalidInputError(f"{source}: unsupported sample type {raw.dtype}")
    if raw.ndim == 2:
        raw = np.stack([raw, raw, raw], axis=-1)
    elif raw.ndim == 3 and raw.shape[2] == 4:
        raw = raw[:, :, :3]
    elif raw.ndim != 3 or raw.shape[2] != 3:
        raise InvalidInputError(f"{source}: unsupported channel layout {raw.shape}")
    rgb = raw[:, :, ::-1]  # OpenCV decodes BGR
    return rgb.astype(np.float64) / maxval, depth


def load_image(path) -> LoadedImage:
    path = Path(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputError(f"{path}: cannot be read as an image")
    pixels, depth = _normalize_raster(raw, str(path))
    return LoadedImage(ImageBuffer(pixels), depth, path.suffix.lower())


def decode_image(data: bytes, source: str = "<bytes>") -> LoadedImage:
    raw = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise InvalidInputError(f"{source}: cannot be decoded as an image")
    pixels, depth = _normalize_raster(raw, source)
    return LoadedImage(ImageBuffer(pixels), depth, "")


def to_uint8(image: ImageBuffer) -> np.ndarray:
    # round half up, per the boundary conversion rule
    return np.floor(np.clip(image.pixels, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def to_uint16(image: ImageBuffer) -> np.ndarray:
    return np.floor(np.clip(image.pixels, 0.0, 1.0) * 65535.0 + 0.5).astype(np.uint16)


def encode_image(image: ImageBuffer, extension: str = ".png", bit_depth: int = 8) -> bytes:
    """Encode to PNG/PPM bytes. One encoder serves the CLI, batch runner,
    and service, so identical pixels always yield identical bytes."""
    ext = extension.lower()
    if ext not in SUPPORTED_EXTENSIONS:
        raise InvalidInputError(f"unsupported output format {extension!r}")
    if bit_depth == 8:
        data = to_uint8(image)
    elif bit_depth == 16:
        data = to_uint16(image)
    else:
        raise InvalidInputError(f"bit depth must be 8 or 16, got {bit_depth}")
    ok, buf = cv2.imencode(ext, data[:, :, ::-1])
    if not ok:
        raise InvalidInputError(f"encoding to {extension} failed")
    return buf.tobytes()


def write_bytes_atomic(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def save_image(image: ImageBuffer, path, bit_depth: int = 8) -> None:
    path = Path(path)
    write_bytes_atomic(path, encode_image(image, path.suffix.lower(), bit_depth))
