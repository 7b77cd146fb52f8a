"""Synthetic paired-dataset generator.

Emulates a simplified camera rendering chain (decode to linear, per-channel
white-balance gains, monotone tone curve, re-encode) to produce ground-truth
(correct, cast) image pairs. This gives the test suite and the README demo a
dataset with known behavior; it does not try to model any real camera's ISP.

The gain table and tone curves are synthetic test constants spanning warm to
cool casts; they are configurable through a small plain-text file::

    # temperature gains: kelvin r g b   (g must be 1; green-normalized)
    gain 2850 0.60 1.00 1.70
    # styles: identity or gamma <exponent>
    style AS identity
    style CS gamma 0.85
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imageio
from .color import ImageBuffer, srgb_decode, srgb_encode
from .errors import InvalidInputError
from .mapping import Style, WbSetting
from .pipeline import detect_grayscale


@dataclass(frozen=True)
class ToneCurve:
    """Monotone [0,1] -> [0,1] curve with f(0)=0 and f(1)=1."""

    kind: str = "identity"  # "identity" | "gamma"
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "gamma"):
            raise InvalidInputError(f"unknown tone curve {self.kind!r}")
        if self.kind == "gamma" and not self.exponent > 0:
            raise InvalidInputError("gamma exponent must be positive")

    def apply(self, values: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return values
        return values ** self.exponent

    def describe(self) -> str:
        return "identity" if self.kind == "identity" else f"gamma {self.exponent:g}"


#: Green-normalized per-channel gains, monotone warm (low K) to cool (high K).
DEFAULT_GAINS = {
    2850: (0.60, 1.00, 1.70),
    3800: (0.80, 1.00, 1.30),
    5500: (1.00, 1.00, 1.00),
    6500: (1.12, 1.00, 0.88),
    7500: (1.25, 1.00, 0.75),
}

DEFAULT_STYLES = {
    Style.ADOBE_STANDARD: ToneCurve("identity"),
    Style.CAMERA_STANDARD: ToneCurve("gamma", 0.85),
}


@dataclass(frozen=True)
class CameraEmulation:
    gains: dict = field(default_factory=lambda: dict(DEFAULT_GAINS))
    styles: dict = field(default_factory=lambda: dict(DEFAULT_STYLES))

    def __post_init__(self):
        if not self.gains or not self.styles:
            raise InvalidInputError("emulation needs at least one gain and one style")
        for kelvin, gain in self.gains.items():
            r, g, b = gain
            if g != 1.0:
                raise InvalidInputError(f"{kelvin}K: gains must be green-normalized")
            if min(r, g, b) <= 0:
                raise InvalidInputError(f"{kelvin}K: gains must be positive")

    def settings(self) -> list:
        return sorted(
            (WbSetting(t, s) for t in self.gains for s in self.styles),
            key=WbSetting.sort_key,
        )


def render_pair(
    base: ImageBuffer,
    temperature: int,
    style: Style,
    emulation: CameraEmulation = CameraEmulation(),
):
    """Render (correct, cast) for one temperature and style.

    cast  = encode(curve(clamp(gains * decode(base))))
    correct = encode(curve(decode(base)))
    """
    if temperature not in emulation.gains:
        raise InvalidInputError(f"no gains for {temperature}K")
    if style not in emulation.styles:
        raise InvalidInputError(f"no tone curve for style {style}")
    curve = emulation.styles[style]
    linear = srgb_decode(base.pixels)
    gains = np.asarray(emulation.gains[temperature], dtype=np.float64)
    cast_linear = np.clip(linear * gains, 0.0, 1.0)
    cast = srgb_encode(curve.apply(cast_linear))
    correct = srgb_encode(curve.apply(linear))
    return ImageBuffer(correct), ImageBuffer(cast)


def render_correct(base: ImageBuffer) -> ImageBuffer:
    """The identity-path correct reference used as the group anchor."""
    return ImageBuffer(srgb_encode(srgb_decode(base.pixels)))


def make_manifest(base_paths, out_dir, emulation: CameraEmulation = CameraEmulation()):
    """Render every (base, temperature, style) pair and write a manifest.

    Each base contributes one group: one identity-path correct image plus one
    cast per setting (60 bases x 10 settings -> 660 files). Grayscale bases
    are excluded, mirroring how grayscale inputs are screened downstream.
    Returns (manifest_path, skipped) where skipped lists (path, reason).
    """
    base_paths = [Path(p) for p in base_paths]
    if not base_paths:
        raise InvalidInputError("no base images given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    skipped = []
    for base_path in base_paths:
        base = imageio.load_image(base_path).image
        if detect_grayscale(base):
            skipped.append((str(base_path), "grayscale base image excluded"))
            continue
        stem = base_path.stem
        correct_name = f"{stem}_correct.png"
        imageio.save_image(render_correct(base), out_dir / correct_name)
        parts = [correct_name]
        for setting in emulation.settings():
            _, cast = render_pair(base, setting.temperature, setting.style, emulation)
            cast_name = f"{stem}_{setting.name}.png"
            imageio.save_image(cast, out_dir / cast_name)
            parts.append(f"{setting.name}={cast_name}")
        lines.append(";".join(parts))

    if not lines:
        raise InvalidInputError("every base image was excluded as grayscale")
    manifest_path = out_dir / "manifest.txt"
    imageio.write_bytes_atomic(
        manifest_path, ("\n".join(lines) + "\n").encode("utf-8")
    )
    return manifest_path, skipped


# --------------------------------------------------------------------------
# emulation config file


def load_emulation(path) -> CameraEmulation:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidInputError(f"cannot read emulation config {path}: {exc}") from exc
    gains = {}
    styles = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        try:
            if fields[0] == "gain" and len(fields) == 5:
                gains[int(fields[1])] = (float(fields[2]), float(fields[3]), float(fields[4]))
            elif fields[0] == "style" and fields[2] == "identity" and len(fields) == 3:
                styles[Style(fields[1])] = ToneCurve("identity")
            elif fields[0] == "style" and fields[2] == "gamma" and len(fields) == 4:
                styles[Style(fields[1])] = ToneCurve("gamma", float(fields[3]))
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise InvalidInputError(
                f"{path}:{line_no}: cannot parse emulation line {raw!r}"
            ) from None
    return CameraEmulation(gains, styles)


def write_emulation(emulation: CameraEmulation, path) -> None:
    lines = ["# temperature gains: kelvin r g b"]
    for kelvin in sorted(emulation.gains):
        r, g, b = emulation.gains[kelvin]
        lines.append(f"gain {kelvin} {r:g} {g:g} {b:g}")
    lines.append("# styles: identity or gamma <exponent>")
    for style in sorted(emulation.styles, key=lambda s: s.value):
        lines.append(f"style {style.value} {emulation.styles[style].describe()}")
    imageio.write_bytes_atomic(Path(path), ("\n".join(lines) + "\n").encode("utf-8"))


def write_default_emulation(path) -> None:
    write_emulation(CameraEmulation(), path)


# --------------------------------------------------------------------------
# synthetic base images


def _shared_palette() -> np.ndarray:
    # Six strongly chromatic colors shared by every generated scene. Shared
    # chroma keeps same-setting renditions of different scenes close in
    # feature space, which is the regime the retrieval machinery assumes.
    hues = np.array([0.25, 1.25, 2.25, 3.25, 4.25, 5.25])
    sat = np.array([0.85, 0.7, 0.9, 0.75, 0.8, 0.88])
    k = (np.array([5.0, 3.0, 1.0]) + hues[:, None]) % 6.0
    rgb = 1.0 - sat[:, None] * np.clip(np.minimum(k, 4.0 - k), 0.0, 1.0)
    return np.clip(rgb, 0.08, 1.0)


_PALETTE = _shared_palette()


def random_base_image(rng: np.random.Generator, width: int = 96, height: int = 64) -> ImageBuffer:
    """One synthetic scene: a Voronoi mosaic of the shared palette.

    Cells take bright or dim exposure in pairs (three brightness groups per
    scene), so scenes differ in which colors will saturate under strong
    white-balance gains. That exposure signature is what makes per-scene
    transforms differ and what nearest-neighbor retrieval can recover.
    """
    n = len(_PALETTE)
    ss = 2  # supersample and box-filter so region borders blend colors
    big_w, big_h = width * ss, height * ss
    sites = rng.uniform(0, 1, size=(n, 2))
    ys, xs = np.mgrid[0:big_h, 0:big_w]
    coords = np.stack([xs / (big_w - 1), ys / (big_h - 1)], axis=-1)
    d2 = ((coords[:, :, None, :] - sites) ** 2).sum(axis=-1)
    cell = d2.argmin(axis=-1)
    bits = rng.random(3) < 0.5
    bright = np.repeat(bits, 2)
    v0 = np.where(
        bright, rng.uniform(0.66, 0.75, size=n), rng.uniform(0.28, 0.38, size=n)
    )
    gx = rng.uniform(-0.08, 0.08, size=n)
    gy = rng.uniform(-0.08, 0.08, size=n)
    val = np.clip(
        v0[cell] + gx[cell] * coords[..., 0] + gy[cell] * coords[..., 1], 0.22, 0.98
    )
    img = _PALETTE[cell] * val[..., None]
    img = img.reshape(height, ss, width, ss, 3).mean(axis=(1, 3))
    img = img + rng.normal(0.0, 0.014, size=img.shape)
    return ImageBuffer(np.clip(img, 0.01, 0.99))


def generate_bases(out_dir, count: int, width: int = 96, height: int = 64, seed: int = 0) -> list:
    """Write deterministic synthetic base images; returns their paths."""
    if count < 1:
        raise InvalidInputError("need at least one base image")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        rng = np.random.default_rng((seed, i))
        img = random_base_image(rng, width, height)
        path = out_dir / f"base_{i:04d}.png"
        imageio.save_image(img, path)
        paths.append(path)
    return paths
