"""End-to-end white-balance error emulation and correction.

augment() renders an image as if it had been shot with each requested
white-balance setting; correct() removes an unknown cast. Both share one
retrieval pass: histogram -> PCA projection -> k nearest training records ->
Gaussian distance weights -> blended transform(s) -> per-pixel application.

run_batch() drives either mode over a list of files with a bounded worker
pool, isolates per-image failures, and writes a run manifest last.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .color import ImageBuffer
from .errors import GrayscaleImageError, InvalidInputError, WbaugError
from .features import compute_histogram, project
from .mapping import WbSetting, apply_matrix
from .retrieval import blend_matrices, knn_query, rbf_weights
from .store import Direction, WbModel, load_model

#: Environment variable overriding the batch worker count.
WORKERS_ENV = "WBAUG_WORKERS"

GRAYSCALE_THRESHOLD = 1.0 / 255.0


def mean_channel_difference(image: ImageBuffer) -> float:
    """Mean absolute inter-channel difference over all pixels and pairs."""
    px = image.flat()
    n = px.shape[0]
    block = 1 << 20
    scratch = np.empty(min(n, block))
    total = 0.0
    for start in range(0, n, block):
        chunk = px[start : start + block]
        b = chunk.shape[0]
        s = scratch[:b]
        for i, j in ((0, 1), (0, 2), (1, 2)):
            np.subtract(chunk[:, i], chunk[:, j], out=s)
            np.abs(s, out=s)
            total += float(s.sum())
    return total / (3.0 * n)


def detect_grayscale(image: ImageBuffer) -> bool:
    """True iff the mean absolute inter-channel difference is below 1/255."""
    return mean_channel_difference(image) < GRAYSCALE_THRESHOLD


def _normalize_settings(model: WbModel, settings) -> list:
    if settings is None:
        return list(model.settings)
    known = set(model.settings)
    chosen = []
    for item in settings:
        setting = WbSetting.parse(item) if isinstance(item, str) else item
        if setting not in known:
            raise InvalidInputError(
                f"setting {setting.name} is not in the model vocabulary "
                f"({', '.join(model.setting_names())})"
            )
        if setting not in chosen:
            chosen.append(setting)
    if not chosen:
        raise InvalidInputError("no settings requested")
    return sorted(chosen, key=WbSetting.sort_key)


def _retrieve(model: WbModel, image: ImageBuffer, k, sigma):
    k = model.default_k if k is None else int(k)
    sigma = model.default_sigma if sigma is None else float(sigma)
    histogram = compute_histogram(image, model.hist_params)
    feature = project(model.pca, histogram)
    neighbors = knn_query(model.index, feature, k)
    weights = rbf_weights(neighbors.distances, sigma)
    return neighbors, weights


def augment(
    model: WbModel,
    image: ImageBuffer,
    settings=None,
    k: int | None = None,
    sigma: float | None = None,
    grayscale_screen: bool = True,
) -> dict:
    """Emulate white-balance errors; returns {WbSetting: ImageBuffer}.

    Retrieval runs once and is reused for every requested setting. Grayscale
    inputs are refused (GrayscaleImageError) unless the screen is disabled.
    """
    if model.direction is not Direction.EMULATION:
        raise InvalidInputError(
            "augment needs an emulation-direction model; this one corrects"
        )
    chosen = _normalize_settings(model, settings)
    if grayscale_screen:
        mean_diff = mean_channel_difference(image)
        if mean_diff < GRAYSCALE_THRESHOLD:
            raise GrayscaleImageError(mean_diff)

    neighbors, weights = _retrieve(model, image, k, sigma)
    records = [model.record(i) for i in neighbors.ids]
    pixels = image.flat()
    outputs = {}
    for setting in chosen:
        stacked = np.stack([rec.transforms[setting].matrix for rec in records])
        blended = blend_matrices(weights, stacked)
        out = apply_matrix(blended, pixels)
        outputs[setting] = ImageBuffer._wrap(out.reshape(image.pixels.shape))
    return outputs


def correct(
    model: WbModel,
    image: ImageBuffer,
    k: int | None = None,
    sigma: float | None = None,
    grayscale_screen: bool = False,
) -> ImageBuffer:
    """Undo an unknown white-balance cast; returns a single image.

    Correction records each hold one cast->correct transform; the retrieved
    neighbors may come from different rendition settings, so their matrices
    are blended directly.
    """
    if model.direction is not Direction.CORRECTION:
        raise InvalidInputError(
            "correct needs a correction-direction model; this one emulates"
        )
    if grayscale_screen:
        mean_diff = mean_channel_difference(image)
        if mean_diff < GRAYSCALE_THRESHOLD:
            raise GrayscaleImageError(mean_diff)
    neighbors, weights = _retrieve(model, image, k, sigma)
    stacked = np.stack(
        [model.record(i).single_transform().matrix for i in neighbors.ids]
    )
    blended = blend_matrices(weights, stacked)
    out = apply_matrix(blended, image.flat())
    return ImageBuffer._wrap(out.reshape(image.pixels.shape))


# --------------------------------------------------------------------------
# batch runs


@dataclass(frozen=True)
class AugmentationRequest:
    """One batch run: which model, which inputs, where outputs go."""

    model_path: str
    inputs: tuple
    output_dir: str
    mode: str = "augment"             # "augment" | "correct"
    settings: tuple | None = None     # names; None = whole vocabulary
    k: int | None = None
    sigma: float | None = None
    grayscale_screen: bool | None = None  # None = mode default
    name_pattern: str = "{stem}_{setting}{ext}"

    def screen_enabled(self) -> bool:
        if self.grayscale_screen is not None:
            return self.grayscale_screen
        return self.mode == "augment"


@dataclass
class RunManifest:
    model_checksum: str
    direction: str
    parameters: dict
    results: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "model_checksum": self.model_checksum,
                "direction": self.direction,
                "parameters": self.parameters,
                "results": self.results,
            },
            indent=2,
        )


def batch_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "")
    if value:
        try:
            workers = int(value)
        except ValueError:
            raise InvalidInputError(f"{WORKERS_ENV} must be an integer, got {value!r}")
        if workers < 1:
            raise InvalidInputError(f"{WORKERS_ENV} must be positive, got {workers}")
        return workers
    return min(4, os.cpu_count() or 1)


def _process_one(model: WbModel, request: AugmentationRequest, input_path: str) -> dict:
    out_dir = Path(request.output_dir)
    try:
        loaded = imageio.load_image(input_path)
        stem = Path(input_path).stem
        ext = loaded.extension or ".png"
        outputs = {}
        if request.mode == "augment":
            rendered = augment(
                model,
                loaded.image,
                settings=request.settings,
                k=request.k,
                sigma=request.sigma,
                grayscale_screen=request.screen_enabled(),
            )
            for setting, img in rendered.items():
                name = request.name_pattern.format(
                    stem=stem, setting=setting.name, ext=ext
                )
                imageio.save_image(img, out_dir / name, loaded.bit_depth)
                outputs[setting.name] = name
        else:
            result = correct(
                model,
                loaded.image,
                k=request.k,
                sigma=request.sigma,
                grayscale_screen=request.screen_enabled(),
            )
            name = request.name_pattern.format(stem=stem, setting="corrected", ext=ext)
            imageio.save_image(result, out_dir / name, loaded.bit_depth)
            outputs["corrected"] = name
    except GrayscaleImageError as exc:
        return {"input": str(input_path), "status": "skipped", "reason": str(exc)}
    except (WbaugError, OSError) as exc:
        return {"input": str(input_path), "status": "failed", "reason": str(exc)}
    return {"input": str(input_path), "status": "ok", "outputs": outputs}


def run_batch(request: AugmentationRequest, model: WbModel | None = None) -> RunManifest:
    """Process every input independently; failures never abort the batch.

    The model is shared read-only across a bounded thread pool; outputs are
    written atomically and the manifest is written last. The manifest
    accounts for every input exactly once, in input order.
    """
    if request.mode not in ("augment", "correct"):
        raise InvalidInputError(f"mode must be 'augment' or 'correct', got {request.mode!r}")
    if model is None:
        model = load_model(request.model_path)  # unloadable model fails the run up front
    wanted_direction = (
        Direction.EMULATION if request.mode == "augment" else Direction.CORRECTION
    )
    if model.direction is not wanted_direction:
        raise InvalidInputError(
            f"{request.mode} needs a {wanted_direction}-direction model, "
            f"got {model.direction}"
        )
    if request.settings is not None:
        _normalize_settings(model, request.settings)  # fail fast on bad names

    out_dir = Path(request.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    manifest = RunManifest(
        model_checksum=model.checksum(),
        direction=str(model.direction),
        parameters={
            "mode": request.mode,
            "k": request.k if request.k is not None else model.default_k,
            "sigma": request.sigma if request.sigma is not None else model.default_sigma,
            "settings": (
                sorted(request.settings)
                if request.settings is not None
                else model.setting_names()
            ),
            "grayscale_screen": request.screen_enabled(),
        },
    )
    inputs = list(request.inputs)
    if inputs:
        with ThreadPoolExecutor(max_workers=batch_workers()) as pool:
            manifest.results = list(
                pool.map(lambda p: _process_one(model, request, p), inputs)
            )
    imageio.write_bytes_atomic(
        out_dir / "run_manifest.json", manifest.to_json().encode("utf-8")
    )
    return manifest
