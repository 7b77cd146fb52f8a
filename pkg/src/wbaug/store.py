"""Model building from paired datasets, plus the WBM1 model container.

A model bundles, for every accepted training exemplar, a compact color
feature and fitted color transforms, together with the PCA that produced the
features and the parameters needed to reproduce them at query time.

Manifest format (plain text, one group per line)::

    # comment lines and blank lines are ignored
    correct.png;2850K_AS=warm_as.png;2850K_CS=warm_cs.png;...

Relative paths resolve against the manifest's directory. The path strings as
written are also what record ids are hashed from, so a dataset directory can
move without changing the model bytes.

WBM1 container layout (little-endian; strings are u16 length + UTF-8):

    ====================  =======================================
    magic                 4 bytes ``WBM1``
    version               u32 (currently 1)
    direction             u8 (0 emulation, 1 correction)
    histogram bins        u32
    axis lower, upper     f64, f64
    black level           f64
    default k             u32
    default sigma         f64
    max fit pixels        u32
    kernel order          string
    chroma convention     string
    setting count S       u32, then S x (u32 temperature, u8 style code)
    histogram dim D       u32
    feature dim F         u32
    pca bias              D f64
    pca coeff             D*F f64 (row-major D x F)
    explained variances   F f64
    record count R        u32, then R records:
      id                  string
      source path         string
      transform count T   u32, then T x (u32 setting index, string target
                          path, 27 f64 row-major matrix, f64 fit residual)
      feature             F f64
    checksum              8 bytes (SHA-256 prefix of everything before)
    ====================  =======================================
"""

from __future__ import annotations

import hashlib
import io
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import imageio
from .errors import (
    CorruptModelError,
    InvalidInputError,
    UnsupportedVersionError,
    WbaugError,
)
from .color import KERNEL_ORDER
from .features import (
    CHROMA_CONVENTION,
    FEATURE_DIM,
    HistogramParams,
    PcaModel,
    compute_histogram,
    fit_pca,
    project,
)
from .mapping import (
    MAX_FIT_PIXELS,
    STYLE_CODES,
    STYLE_FROM_CODE,
    ColorTransform,
    WbSetting,
    fit_residual,
    fit_transform,
)
from .retrieval import FeatureIndex

MAGIC = b"WBM1"
FORMAT_VERSION = 1
DEFAULT_K = 25
DEFAULT_SIGMA = 0.25


class Direction(Enum):
    """Which way the stored transforms point."""

    EMULATION = 0   # correct -> cast: synthesize white-balance errors
    CORRECTION = 1  # cast -> correct: undo white-balance errors

    def __str__(self) -> str:
        return self.name.lower()


def record_id_for(path_text: str) -> str:
    """Stable id from the path string as written in the manifest."""
    return hashlib.sha256(path_text.encode("utf-8")).hexdigest()[:32]


@dataclass(frozen=True)
class TrainingRecord:
    record_id: str
    source: str                       # feature image path (as written)
    feature: np.ndarray               # (F,)
    transforms: dict                  # WbSetting -> ColorTransform
    residuals: dict                   # WbSetting -> mean abs fit error
    targets: dict                     # WbSetting -> target image path

    def single_transform(self) -> ColorTransform:
        if len(self.transforms) != 1:
            raise InvalidInputError(
                f"record {self.record_id} holds {len(self.transforms)} transforms, expected 1"
            )
        return next(iter(self.transforms.values()))


@dataclass(frozen=True)
class ManifestGroup:
    correct: str                      # path as written
    variants: dict                    # WbSetting -> path as written
    line_no: int
    base_dir: Path

    def resolve(self, path_text: str) -> Path:
        p = Path(path_text)
        return p if p.is_absolute() else self.base_dir / p


class WbModel:
    """Immutable trained model. Shareable across threads."""

    def __init__(
        self,
        direction: Direction,
        records,
        pca: PcaModel,
        hist_params: HistogramParams,
        settings,
        default_k: int = DEFAULT_K,
        default_sigma: float = DEFAULT_SIGMA,
        max_fit_pixels: int = MAX_FIT_PIXELS,
    ):
        records = sorted(records, key=lambda r: r.record_id)
        settings = tuple(sorted(settings, key=WbSetting.sort_key))
        if not settings:
            raise InvalidInputError("model needs at least one setting")
        seen = set()
        for rec in records:
            if rec.record_id in seen:
                raise InvalidInputError(f"duplicate record id {rec.record_id}")
            seen.add(rec.record_id)
            if not set(rec.transforms).issubset(settings):
                raise InvalidInputError(
                    f"record {rec.record_id} carries settings outside the model vocabulary"
                )
            if rec.feature.shape != (pca.out_dim,):
                raise InvalidInputError("record feature dimension does not match the PCA")
        self.direction = direction
        self.records = tuple(records)
        self.pca = pca
        self.hist_params = hist_params
        self.settings = settings
        self.default_k = int(default_k)
        self.default_sigma = float(default_sigma)
        self.max_fit_pixels = int(max_fit_pixels)
        self.version = FORMAT_VERSION
        self._by_id = {rec.record_id: rec for rec in self.records}
        self._index = None
        self._checksum = None

    def __len__(self) -> int:
        return len(self.records)

    def record(self, record_id: str) -> TrainingRecord:
        return self._by_id[record_id]

    @property
    def index(self) -> FeatureIndex:
        if self._index is None:
            self._index = FeatureIndex(
                [rec.record_id for rec in self.records],
                np.stack([rec.feature for rec in self.records]),
            )
        return self._index

    def setting_names(self) -> list:
        return [s.name for s in self.settings]

    def mean_residual(self) -> float:
        values = [res for rec in self.records for res in rec.residuals.values()]
        return float(np.mean(values))

    def checksum(self) -> str:
        if self._checksum is None:
            self._checksum = serialize_model(self)[-8:].hex()
        return self._checksum


# --------------------------------------------------------------------------
# manifest parsing


def parse_manifest_line(line: str, line_no: int, base_dir: Path) -> ManifestGroup:
    tokens = [t.strip() for t in line.split(";")]
    if len(tokens) < 2:
        raise InvalidInputError(
            f"line {line_no}: expected 'correct;SETTING=path;...', got {line!r}"
        )
    correct, pairs = tokens[0], tokens[1:]
    if not correct:
        raise InvalidInputError(f"line {line_no}: empty correct-image path")
    variants = {}
    for pair in pairs:
        if "=" not in pair:
            raise InvalidInputError(f"line {line_no}: malformed variant {pair!r}")
        name, path_text = pair.split("=", 1)
        setting = WbSetting.parse(name)
        if setting in variants:
            raise InvalidInputError(f"line {line_no}: duplicate setting {setting.name}")
        if not path_text.strip():
            raise InvalidInputError(f"line {line_no}: empty path for {setting.name}")
        variants[setting] = path_text.strip()
    return ManifestGroup(correct, variants, line_no, base_dir)


def read_manifest(path) -> list:
    """Parse a dataset manifest; malformed lines raise InvalidInputError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read manifest {path}: {exc}") from exc
    groups = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        groups.append(parse_manifest_line(stripped, line_no, path.parent))
    if not groups:
        raise InvalidInputError(f"manifest {path} lists no groups")
    return groups


# --------------------------------------------------------------------------
# building


@dataclass
class _PendingRecord:
    record_id: str
    source: str
    histogram: np.ndarray
    transforms: dict
    residuals: dict
    targets: dict


@dataclass
class BuildReport:
    direction: Direction
    accepted_groups: int = 0
    rejected_groups: list = field(default_factory=list)  # (path, reason)
    record_count: int = 0
    setting_residuals: dict = field(default_factory=dict)  # name -> mean
    mean_residual: float = float("nan")

    def format(self) -> str:
        lines = [
            f"direction: {self.direction}",
            f"groups accepted: {self.accepted_groups}",
            f"groups rejected: {len(self.rejected_groups)}",
        ]
        for path, reason in self.rejected_groups:
            lines.append(f"  rejected {path}: {reason}")
        lines.append(f"records: {self.record_count}")
        lines.append(f"mean fit residual: {self.mean_residual:.6g}")
        lines.append("per-setting mean fit residual:")
        for name in sorted(self.setting_residuals):
            lines.append(f"  {name}: {self.setting_residuals[name]:.6g}")
        return "\n".join(lines)


def _ingest_emulation(group: ManifestGroup, params, max_fit_pixels) -> list:
    correct = imageio.load_image(group.resolve(group.correct)).image
    histogram = compute_histogram(correct, params)
    source_cols = correct.colors()
    transforms, residuals, targets = {}, {}, {}
    for setting in sorted(group.variants, key=WbSetting.sort_key):
        variant_path = group.variants[setting]
        variant = imageio.load_image(group.resolve(variant_path)).image
        if variant.pixels.shape != correct.pixels.shape:
            raise InvalidInputError(
                f"{variant_path}: dimensions differ from the correct image"
            )
        target_cols = variant.colors()
        transform = fit_transform(source_cols, target_cols, setting, max_fit_pixels)
        transforms[setting] = transform
        residuals[setting] = fit_residual(transform, source_cols, target_cols)
        targets[setting] = variant_path
    return [
        _PendingRecord(
            record_id=record_id_for(group.correct),
            source=group.correct,
            histogram=histogram,
            transforms=transforms,
            residuals=residuals,
            targets=targets,
        )
    ]


def _ingest_correction(group: ManifestGroup, params, max_fit_pixels) -> list:
    correct = imageio.load_image(group.resolve(group.correct)).image
    target_cols = correct.colors()
    records = []
    for setting in sorted(group.variants, key=WbSetting.sort_key):
        variant_path = group.variants[setting]
        cast = imageio.load_image(group.resolve(variant_path)).image
        if cast.pixels.shape != correct.pixels.shape:
            raise InvalidInputError(
                f"{variant_path}: dimensions differ from the correct image"
            )
        source_cols = cast.colors()
        transform = fit_transform(source_cols, target_cols, setting, max_fit_pixels)
        records.append(
            _PendingRecord(
                record_id=record_id_for(variant_path),
                source=variant_path,
                histogram=compute_histogram(cast, params),
                transforms={setting: transform},
                residuals={setting: fit_residual(transform, source_cols, target_cols)},
                targets={setting: group.correct},
            )
        )
    return records


def ingest_group(
    group: ManifestGroup,
    direction: Direction = Direction.EMULATION,
    params: HistogramParams = HistogramParams(),
    max_fit_pixels: int = MAX_FIT_PIXELS,
) -> list:
    """Turn one manifest group into pending records (feature still a full
    histogram; PCA projection happens at model assembly)."""
    if direction is Direction.EMULATION:
        return _ingest_emulation(group, params, max_fit_pixels)
    return _ingest_correction(group, params, max_fit_pixels)


def build_model(
    groups,
    direction: Direction = Direction.EMULATION,
    hist_params: HistogramParams = HistogramParams(),
    default_k: int = DEFAULT_K,
    default_sigma: float = DEFAULT_SIGMA,
    max_fit_pixels: int = MAX_FIT_PIXELS,
    out_dim: int = FEATURE_DIM,
):
    """Build a model from manifest groups; returns (model, report).

    Faulty groups are rejected with a diagnostic and never influence the PCA
    or the index. The result is a pure function of the manifest contents:
    records are canonicalized by id before the PCA is fitted, so a permuted
    manifest produces byte-identical model files.
    """
    groups = list(groups)
    if not groups:
        raise InvalidInputError("no groups to build from")

    report = BuildReport(direction=direction)
    seen_groups = set()
    deduped = []
    for group in groups:
        if group.correct in seen_groups:
            report.rejected_groups.append(
                (group.correct, "duplicate group (same correct-image path)")
            )
            continue
        seen_groups.add(group.correct)
        deduped.append(group)

    # the model vocabulary is the union over (deduplicated) groups; groups
    # not covering it are rejected, so every record shares the vocabulary
    vocabulary = set()
    for group in deduped:
        vocabulary.update(group.variants)
    vocabulary = tuple(sorted(vocabulary, key=WbSetting.sort_key))

    pending = []
    eligible = []
    for group in deduped:
        if tuple(sorted(group.variants, key=WbSetting.sort_key)) != vocabulary:
            report.rejected_groups.append(
                (group.correct, "settings differ from the manifest vocabulary")
            )
            continue
        eligible.append(group)

    def _ingest_or_error(group):
        try:
            return ingest_group(group, direction, hist_params, max_fit_pixels)
        except WbaugError as exc:
            return exc

    # groups are independent; the pool only affects wall time, results are
    # collected in manifest order
    with ThreadPoolExecutor(max_workers=min(4, os.cpu_count() or 1)) as pool:
        outcomes = list(pool.map(_ingest_or_error, eligible))
    for group, outcome in zip(eligible, outcomes):
        if isinstance(outcome, WbaugError):
            report.rejected_groups.append((group.correct, str(outcome)))
        else:
            pending.extend(outcome)
            report.accepted_groups += 1

    min_records = out_dim + 1  # a 55-dim fit needs 56 nonzero-variance samples
    if len(pending) < min_records:
        raise InvalidInputError(
            f"only {len(pending)} usable records from {report.accepted_groups} accepted "
            f"groups; PCA needs at least {min_records}"
        )

    pending.sort(key=lambda rec: rec.record_id)
    features = np.stack([rec.histogram.ravel() for rec in pending])
    pca = fit_pca(features, out_dim)
    records = [
        TrainingRecord(
            record_id=rec.record_id,
            source=rec.source,
            feature=project(pca, rec.histogram),
            transforms=rec.transforms,
            residuals=rec.residuals,
            targets=rec.targets,
        )
        for rec in pending
    ]

    model = WbModel(
        direction=direction,
        records=records,
        pca=pca,
        hist_params=hist_params,
        settings=vocabulary,
        default_k=default_k,
        default_sigma=default_sigma,
        max_fit_pixels=max_fit_pixels,
    )

    report.record_count = len(records)
    per_setting = {}
    for rec in records:
        for setting, residual in rec.residuals.items():
            per_setting.setdefault(setting.name, []).append(residual)
    report.setting_residuals = {
        name: float(np.mean(vals)) for name, vals in per_setting.items()
    }
    report.mean_residual = model.mean_residual()
    return model, report


# --------------------------------------------------------------------------
# serialization


def _pack_str(out: io.BytesIO, text: str) -> None:
    data = text.encode("utf-8")
    if len(data) > 0xFFFF:
        raise InvalidInputError("string too long for the model container")
    out.write(struct.pack("<H", len(data)))
    out.write(data)


def serialize_model(model: WbModel) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    out.write(struct.pack("<B", model.direction.value))
    hp = model.hist_params
    out.write(struct.pack("<Iddd", hp.bins, hp.lower, hp.upper, hp.black_level))
    out.write(struct.pack("<Id", model.default_k, model.default_sigma))
    out.write(struct.pack("<I", model.max_fit_pixels))
    _pack_str(out, KERNEL_ORDER)
    _pack_str(out, CHROMA_CONVENTION)
    out.write(struct.pack("<I", len(model.settings)))
    setting_index = {}
    for i, setting in enumerate(model.settings):
        setting_index[setting] = i
        out.write(struct.pack("<IB", setting.temperature, STYLE_CODES[setting.style]))
    pca = model.pca
    out.write(struct.pack("<II", pca.input_dim, pca.out_dim))
    out.write(pca.bias.tobytes())
    out.write(np.ascontiguousarray(pca.coeff).tobytes())
    out.write(pca.explained.tobytes())
    out.write(struct.pack("<I", len(model.records)))
    for rec in model.records:
        _pack_str(out, rec.record_id)
        _pack_str(out, rec.source)
        out.write(struct.pack("<I", len(rec.transforms)))
        for setting in sorted(rec.transforms, key=WbSetting.sort_key):
            transform = rec.transforms[setting]
            out.write(struct.pack("<I", setting_index[setting]))
            _pack_str(out, rec.targets[setting])
            out.write(np.ascontiguousarray(transform.matrix).tobytes())
            out.write(struct.pack("<d", rec.residuals[setting]))
        out.write(np.ascontiguousarray(rec.feature).tobytes())
    body = out.getvalue()
    return body + hashlib.sha256(body).digest()[:8]


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.data):
            raise CorruptModelError("model file is truncated")
        chunk = self.data[self.pos : self.pos + count]
        self.pos += count
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (length,) = self.unpack("<H")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptModelError("model file holds an invalid string") from exc

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").copy()


def deserialize_model(data: bytes) -> WbModel:
    if len(data) < len(MAGIC) + 4 + 8:
        raise CorruptModelError("file is too short to be a model container")
    if data[: len(MAGIC)] != MAGIC:
        raise CorruptModelError("bad magic bytes; not a model container")
    (version,) = struct.unpack_from("<I", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"model format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    body, stored = data[:-8], data[-8:]
    if hashlib.sha256(body).digest()[:8] != stored:
        raise CorruptModelError("checksum mismatch; the model file is corrupt")

    cur = _Cursor(body)
    cur.take(len(MAGIC) + 4)
    try:
        (direction_code,) = cur.unpack("<B")
        direction = Direction(direction_code)
        bins, lower, upper, black_level = cur.unpack("<Iddd")
        default_k, default_sigma = cur.unpack("<Id")
        (max_fit_pixels,) = cur.unpack("<I")
        kernel_order = cur.string()
        chroma = cur.string()
        if kernel_order != KERNEL_ORDER or chroma != CHROMA_CONVENTION:
            raise UnsupportedVersionError(
                "model was built with a different kernel or chroma convention"
            )
        (setting_count,) = cur.unpack("<I")
        settings = []
        for _ in range(setting_count):
            temperature, style_code = cur.unpack("<IB")
            settings.append(WbSetting(temperature, STYLE_FROM_CODE[style_code]))
        input_dim, out_dim = cur.unpack("<II")
        bias = cur.f64(input_dim)
        coeff = cur.f64(input_dim * out_dim).reshape(input_dim, out_dim)
        explained = cur.f64(out_dim)
        pca = PcaModel(coeff, bias, explained)
        (record_count,) = cur.unpack("<I")
        records = []
        for _ in range(record_count):
            record_id = cur.string()
            source = cur.string()
            (transform_count,) = cur.unpack("<I")
            transforms, residuals, targets = {}, {}, {}
            for _ in range(transform_count):
                (setting_idx,) = cur.unpack("<I")
                setting = settings[setting_idx]
                target = cur.string()
                matrix = cur.f64(27).reshape(3, 9)
                (residual,) = cur.unpack("<d")
                transforms[setting] = ColorTransform(matrix, setting)
                residuals[setting] = residual
                targets[setting] = target
            feature = cur.f64(out_dim)
            records.append(
                TrainingRecord(record_id, source, feature, transforms, residuals, targets)
            )
    except (ValueError, KeyError, IndexError, struct.error) as exc:
        raise CorruptModelError(f"model file cannot be parsed: {exc}") from exc
    if cur.pos != len(body):
        raise CorruptModelError("model file carries trailing bytes")

    model = WbModel(
        direction=direction,
        records=records,
        pca=pca,
        hist_params=HistogramParams(bins, lower, upper, black_level),
        settings=settings,
        default_k=default_k,
        default_sigma=default_sigma,
        max_fit_pixels=max_fit_pixels,
    )
    model._checksum = stored.hex()
    return model


def save_model(model: WbModel, path) -> None:
    imageio.write_bytes_atomic(Path(path), serialize_model(model))


def load_model(path) -> WbModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise InvalidInputError(f"cannot read model file {path}: {exc}") from exc
    return deserialize_model(data)


def model_info(model: WbModel) -> dict:
    """Single source of the info fields shown by the CLI and the service."""
    return {
        "format_version": model.version,
        "direction": str(model.direction),
        "records": len(model),
        "settings": model.setting_names(),
        "histogram_bins": model.hist_params.bins,
        "histogram_bounds": [model.hist_params.lower, model.hist_params.upper],
        "black_level": model.hist_params.black_level,
        "feature_dim": model.pca.out_dim,
        "default_k": model.default_k,
        "default_sigma": model.default_sigma,
        "max_fit_pixels": model.max_fit_pixels,
        "kernel_order": KERNEL_ORDER,
        "chroma_convention": CHROMA_CONVENTION,
        "mean_fit_residual": model.mean_residual(),
        "checksum": model.checksum(),
    }
