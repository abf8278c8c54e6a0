"""Session fixtures: one surrogate checkpoint, converted once."""

import os

import numpy as np
import pytest
from PIL import Image

from wconvert import convert as convert_op
from wconvert import synthesize


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "reference.pth"
    synthesize(str(path))
    return str(path)


@pytest.fixture(scope="session")
def converted_dir(checkpoint, tmp_path_factory):
    out = tmp_path_factory.mktemp("converted")
    convert_op(checkpoint, str(out))
    return str(out)


def write_png(path, arr):
    """Save a (H, W, 3) float array in [0, 1] as PNG."""
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="RGB").save(path)


@pytest.fixture(scope="session")
def images_dir(tmp_path_factory):
    """Two 64x64 fixture inputs: a textured image and an all-zero image."""
    d = tmp_path_factory.mktemp("images")
    rng = np.random.default_rng(11)
    yy, xx = np.meshgrid(np.linspace(0, 1, 64), np.linspace(0, 1, 64),
                         indexing="ij")
    img = np.stack([xx, yy, 0.5 + 0.4 * np.sin(7 * xx + 5 * yy)], axis=2)
    img += 0.05 * rng.standard_normal((64, 64, 3))
    write_png(os.path.join(d, "textured.png"), img)
    write_png(os.path.join(d, "zeros.png"), np.zeros((64, 64, 3)))
    return str(d)
