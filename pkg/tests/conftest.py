"""Shared fixtures: one synthetic dataset and the models built from it.

Everything here is deterministic (fixed seeds, fixed parameters); several
tests assert byte-identical behavior across repeated runs.
"""

import numpy as np
import pytest

from wbaug import imageio, store, synth

DATASET_SEED = 1
TRAIN_GROUPS = 60
HELD_OUT = 20


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """60 training groups + 20 held-out bases rendered by the camera emulation."""
    root = tmp_path_factory.mktemp("dataset")
    bases = synth.generate_bases(root / "bases", TRAIN_GROUPS + HELD_OUT, seed=DATASET_SEED)
    manifest_path, skipped = synth.make_manifest(
        bases[:TRAIN_GROUPS], root / "train", synth.CameraEmulation()
    )
    assert not skipped
    return {
        "root": root,
        "manifest": manifest_path,
        "train_bases": bases[:TRAIN_GROUPS],
        "held_out_bases": bases[TRAIN_GROUPS:],
        "emulation": synth.CameraEmulation(),
    }


@pytest.fixture(scope="session")
def emulation_build(dataset):
    groups = store.read_manifest(dataset["manifest"])
    return store.build_model(groups, store.Direction.EMULATION)


@pytest.fixture(scope="session")
def emulation_model(emulation_build):
    return emulation_build[0]


@pytest.fixture(scope="session")
def emulation_report(emulation_build):
    return emulation_build[1]


@pytest.fixture(scope="session")
def correction_build(dataset):
    groups = store.read_manifest(dataset["manifest"])
    return store.build_model(groups, store.Direction.CORRECTION)


@pytest.fixture(scope="session")
def correction_model(correction_build):
    return correction_build[0]


@pytest.fixture(scope="session")
def correction_report(correction_build):
    return correction_build[1]


@pytest.fixture(scope="session")
def emulation_model_file(emulation_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "emulation.wbm"
    store.save_model(emulation_model, path)
    return path


@pytest.fixture(scope="session")
def correction_model_file(correction_model, tmp_path_factory):
    path = tmp_path_factory.mktemp("models") / "correction.wbm"
    store.save_model(correction_model, path)
    return path


@pytest.fixture(scope="session")
def held_out_renditions(dataset):
    """Oracle renditions of the held-out bases, kept in memory."""
    emulation = dataset["emulation"]
    rendered = []
    for path in dataset["held_out_bases"]:
        base = imageio.load_image(path).image
        reference = synth.render_correct(base)
        casts = {}
        for setting in emulation.settings():
            _, cast = synth.render_pair(base, setting.temperature, setting.style, emulation)
            casts[setting] = cast
        rendered.append({"path": path, "reference": reference, "casts": casts})
    return rendered


@pytest.fixture(scope="session", autouse=True)
def warm_pixel_kernel():
    # compile the jitted pixel kernel once, outside any timed region
    from wbaug.mapping import apply_matrix

    apply_matrix(np.eye(3, 9), np.full((4, 3), 0.5))


def mean_abs_error(a, b) -> float:
    return float(np.mean(np.abs(a.pixels - b.pixels)))


@pytest.fixture(scope="session")
def grayscale_image():
    rng = np.random.default_rng(5)
    mono = rng.random((32, 48, 1))
    from wbaug.color import ImageBuffer

    return ImageBuffer(np.repeat(mono, 3, axis=2))
