"""Shared test fixtures: surrogate VGG-19 weights.

Pretrained checkpoints are not available in CI, so the suite runs against
surrogate weights drawn per layer from a deterministic rule: each layer's
generator is seeded with (WEIGHT_SEED, crc32(layer_name)), conv kernels are
He-scaled normals, biases 0.05-scaled normals (the final decoder conv gets a
+0.5 bias offset so untrained decodes land mid-range).  The weight-converter
component reproduces the same rule, which is what the committed golden
fixtures pin down.
"""

import json
import os
import zlib

import numpy as np
import pytest

from substyle import sswt

WEIGHT_SEED = 1337

VGG_BLOCKS = (2, 2, 4, 4, 4)
VGG_WIDTH = (64, 128, 256, 512, 512)

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), "fixtures")


def layer_rng(name: str, seed: int = WEIGHT_SEED) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def conv_records(name: str, cin: int, cout: int, seed: int = WEIGHT_SEED):
    rng = layer_rng(name, seed)
    w = (rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / (cin * 9)))
    b = rng.standard_normal(cout) * 0.05
    if name == "dconv1_1":
        b = b + 0.5
    return [
        sswt.Record(name=name, kind=sswt.KIND_CONV, data=w.astype(np.float32)),
        sswt.Record(name=f"{name}.bias", kind=sswt.KIND_CONV,
                    data=b.astype(np.float32)),
    ]


def _conv_plan(level: int):
    """Encoder layer plan up to pool `level`: conv entries and pool markers."""
    plan = []
    cin = 3
    for b in range(1, level + 1):
        width = VGG_WIDTH[b - 1]
        for i in range(1, VGG_BLOCKS[b - 1] + 1):
            plan.append(("conv", b, i, cin, width))
            cin = width
        plan.append(("pool", b))
    return plan


def encoder_records(level: int, seed: int = WEIGHT_SEED):
    recs = []
    for item in _conv_plan(level):
        if item[0] == "pool":
            recs.append(sswt.Record(name=f"pool{item[1]}",
                                    kind=sswt.KIND_MAXPOOL, data=None))
        else:
            _, b, i, cin, cout = item
            recs += conv_records(f"conv{b}_{i}", cin, cout, seed)
            recs.append(sswt.Record(name=f"relu{b}_{i}",
                                    kind=sswt.KIND_RELU, data=None))
    return recs


def decoder_records(level: int, seed: int = WEIGHT_SEED):
    plan = _conv_plan(level)
    recs = []
    for pos, item in enumerate(reversed(plan)):
        if item[0] == "pool":
            recs.append(sswt.Record(name=f"up{item[1]}",
                                    kind=sswt.KIND_UPSAMPLE, data=None))
        else:
            _, b, i, cin, cout = item
            recs += conv_records(f"dconv{b}_{i}", cout, cin, seed)
            if pos != len(plan) - 1:  # mirrored conv1_1 is the linear output
                recs.append(sswt.Record(name=f"drelu{b}_{i}",
                                        kind=sswt.KIND_RELU, data=None))
    return recs


def write_weight_bank(dirpath, seed: int = WEIGHT_SEED):
    os.makedirs(dirpath, exist_ok=True)
    for level in range(1, 6):
        sswt.write_records(os.path.join(dirpath, f"enc{level}.sswt"),
                           encoder_records(level, seed))
        sswt.write_records(os.path.join(dirpath, f"dec{level}.sswt"),
                           decoder_records(level, seed))
    with open(os.path.join(dirpath, "weights_manifest.json"), "w") as fh:
        json.dump({"preprocess": "rgb01", "source": "surrogate",
                   "seed": seed}, fh, indent=2, sort_keys=True)
    return dirpath


@pytest.fixture(scope="session")
def weights_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights")
    return write_weight_bank(str(path))


@pytest.fixture(scope="session")
def bank(weights_dir):
    from substyle import WeightBank
    return WeightBank(weights_dir)


def make_test_image(size: int = 64, seed: int = 7) -> np.ndarray:
    """Smooth synthetic RGB image: color gradients plus soft blobs."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(0, 1, size), np.linspace(0, 1, size),
                         indexing="ij")
    img = np.stack([xx, yy, 0.5 + 0.5 * np.sin(6.0 * xx * yy)], axis=2)
    for _ in range(4):
        cy, cx = rng.uniform(0, 1, 2)
        r2 = (yy - cy) ** 2 + (xx - cx) ** 2
        img += rng.uniform(-0.4, 0.4, 3) * np.exp(-r2 / 0.02)[:, :, None]
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def amari_index(p: np.ndarray) -> float:
    """Amari separation error of a permutation-scaling candidate matrix.

    Zero iff p is a scaled permutation; the usual ICA benchmark, normalized
    to [0, 1] by the 2k(k-1) worst case.
    """
    p = np.abs(np.asarray(p, dtype=np.float64))
    k = p.shape[0]
    rows = (p / p.max(axis=1, keepdims=True)).sum(axis=1) - 1.0
    cols = (p / p.max(axis=0, keepdims=True)).sum(axis=0) - 1.0
    return float((rows.sum() + cols.sum()) / (2.0 * k * (k - 1)))
