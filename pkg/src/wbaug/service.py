"""HTTP service wrapping the engine for long-running, multi-client use.

A model is loaded once from a server-local path and then served to any
number of clients; handles are independent (two loads of the same file give
two handles) and models are immutable, so concurrent requests need no
locking beyond the handle registry itself.

Images cross the wire base64-encoded, either as PNG/PPM files ("image mode",
responses re-encoded with the same encoder the CLI uses, so bytes match CLI
output files exactly) or as raw pixel buffers ("array mode", 8-bit responses
matching the file outputs after the boundary conversion rule).
"""

from __future__ import annotations

import base64
import binascii
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .color import ImageBuffer
from .errors import (
    DegenerateInputError,
    GrayscaleImageError,
    InvalidInputError,
    ModelFormatError,
    UnsupportedVersionError,
)
from . import imageio
from .pipeline import augment, correct
from .store import load_model, model_info


# --------------------------------------------------------------------------
# request/response models


class HealthResponse(BaseModel):
    status: str = "ok"
    version: str = __version__


class LoadModelRequest(BaseModel):
    path: str = Field(description="Server-local path of a WBM1 model file")


class ModelInfoResponse(BaseModel):
    model_id: str
    format_version: int
    direction: str
    records: int
    settings: list[str]
    histogram_bins: int
    histogram_bounds: list[float]
    black_level: float
    feature_dim: int
    default_k: int
    default_sigma: float
    max_fit_pixels: int
    kernel_order: str
    chroma_convention: str
    mean_fit_residual: float
    checksum: str


class PixelArray(BaseModel):
    """Raw H x W x 3 pixel buffer, base64 of the native little-endian bytes."""

    data_b64: str
    width: int = Field(ge=1)
    height: int = Field(ge=1)
    dtype: str = Field(default="uint8", pattern="^(uint8|float64)$")


class AugmentRequest(BaseModel):
    image_b64: str | None = None   # PNG/PPM bytes; exclusive with pixels
    pixels: PixelArray | None = None
    settings: list[str] | None = None
    k: int | None = None
    sigma: float | None = None
    grayscale_screen: bool = True
    output_format: str = Field(default="png", pattern="^(png|ppm)$")


class CorrectRequest(BaseModel):
    image_b64: str | None = None
    pixels: PixelArray | None = None
    k: int | None = None
    sigma: float | None = None
    output_format: str = Field(default="png", pattern="^(png|ppm)$")


class AugmentResponse(BaseModel):
    outputs: dict[str, str] | None = None  # setting name -> base64 payload
    skipped: str | None = None
    width: int | None = None   # set in array mode
    height: int | None = None


class CorrectResponse(BaseModel):
    output: str | None = None
    skipped: str | None = None
    width: int | None = None
    height: int | None = None


# --------------------------------------------------------------------------
# helpers


def _http_error(status: int, code: str, message: str) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message})


def _decode_b64(text: str, what: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except (binascii.Error, ValueError):
        raise _http_error(422, "invalid_input", f"{what} is not valid base64")


def _request_image(image_b64, pixels) -> tuple[ImageBuffer, int]:
    """Returns (image, bit_depth); bit depth drives image-mode re-encoding."""
    if (image_b64 is None) == (pixels is None):
        raise _http_error(
            422, "invalid_input", "provide exactly one of image_b64 or pixels"
        )
    if image_b64 is not None:
        data = _decode_b64(image_b64, "image_b64")
        try:
            loaded = imageio.decode_image(data, "request image")
        except InvalidInputError as exc:
            raise _http_error(422, "invalid_input", str(exc))
        return loaded.image, loaded.bit_depth
    raw = _decode_b64(pixels.data_b64, "pixels.data_b64")
    dtype = np.uint8 if pixels.dtype == "uint8" else np.float64
    expected = pixels.width * pixels.height * 3 * np.dtype(dtype).itemsize
    if len(raw) != expected:
        raise _http_error(
            422,
            "invalid_input",
            f"pixel buffer holds {len(raw)} bytes, expected {expected}",
        )
    arr = np.frombuffer(raw, dtype=dtype).reshape(pixels.height, pixels.width, 3)
    if dtype is np.uint8:
        arr = arr.astype(np.float64) / 255.0
    try:
        return ImageBuffer(arr), 8
    except InvalidInputError as exc:
        raise _http_error(422, "invalid_input", str(exc))


def _encode_output(image: ImageBuffer, array_mode: bool, output_format: str, bit_depth: int) -> str:
    if array_mode:
        return base64.b64encode(imageio.to_uint8(image).tobytes()).decode("ascii")
    data = imageio.encode_image(image, "." + output_format, bit_depth)
    return base64.b64encode(data).decode("ascii")


# --------------------------------------------------------------------------
# application


def create_app() -> FastAPI:
    from ._alloc import tune_for_large_buffers

    tune_for_large_buffers()
    app = FastAPI(title="wbaug", version=__version__)
    models: dict = {}
    registry_lock = threading.Lock()

    def get_model(model_id: str):
        with registry_lock:
            model = models.get(model_id)
        if model is None:
            raise _http_error(404, "unknown_model", f"no loaded model {model_id!r}")
        return model

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.post("/v1/models", response_model=ModelInfoResponse)
    def load(request: LoadModelRequest):
        try:
            model = load_model(request.path)
        except UnsupportedVersionError as exc:
            raise _http_error(400, "unsupported_version", str(exc))
        except ModelFormatError as exc:
            raise _http_error(400, "corrupt_model", str(exc))
        except InvalidInputError as exc:
            raise _http_error(404, "file_not_found", str(exc))
        model_id = uuid.uuid4().hex
        with registry_lock:
            models[model_id] = model
        return ModelInfoResponse(model_id=model_id, **model_info(model))

    @app.get("/v1/models/{model_id}", response_model=ModelInfoResponse)
    def info(model_id: str):
        model = get_model(model_id)
        return ModelInfoResponse(model_id=model_id, **model_info(model))

    @app.delete("/v1/models/{model_id}", status_code=204)
    def close(model_id: str):
        with registry_lock:
            if models.pop(model_id, None) is None:
                raise _http_error(404, "unknown_model", f"no loaded model {model_id!r}")

    @app.post("/v1/models/{model_id}/augment", response_model=AugmentResponse)
    def augment_endpoint(model_id: str, request: AugmentRequest):
        model = get_model(model_id)
        image, bit_depth = _request_image(request.image_b64, request.pixels)
        array_mode = request.pixels is not None
        try:
            rendered = augment(
                model,
                image,
                settings=request.settings,
                k=request.k,
                sigma=request.sigma,
                grayscale_screen=request.grayscale_screen,
            )
        except GrayscaleImageError as exc:
            return AugmentResponse(skipped=str(exc))
        except InvalidInputError as exc:
            raise _http_error(422, "invalid_input", str(exc))
        except DegenerateInputError as exc:
            raise _http_error(422, "degenerate_input", str(exc))
        outputs = {
            setting.name: _encode_output(img, array_mode, request.output_format, bit_depth)
            for setting, img in rendered.items()
        }
        return AugmentResponse(
            outputs=outputs,
            width=image.width if array_mode else None,
            height=image.height if array_mode else None,
        )

    @app.post("/v1/models/{model_id}/correct", response_model=CorrectResponse)
    def correct_endpoint(model_id: str, request: CorrectRequest):
        model = get_model(model_id)
        image, bit_depth = _request_image(request.image_b64, request.pixels)
        array_mode = request.pixels is not None
        try:
            result = correct(model, image, k=request.k, sigma=request.sigma)
        except InvalidInputError as exc:
            raise _http_error(422, "invalid_input", str(exc))
        except DegenerateInputError as exc:
            raise _http_error(422, "degenerate_input", str(exc))
        return CorrectResponse(
            output=_encode_output(result, array_mode, request.output_format, bit_depth),
            width=image.width if array_mode else None,
            height=image.height if array_mode else None,
        )

    return app


app = create_app()
