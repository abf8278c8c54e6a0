"""Surrogate checkpoint synthesis.

The published pretrained archives are not redistributable and are unreachable
from CI, so the toolchain ships a synthesizer that fills the reference
architecture with weights drawn from a fixed per-layer rule:

  * generator seeded with (seed, crc32(layer_name)),
  * conv kernels He-scaled standard normals, biases 0.05-scaled normals,
  * the final decoder conv gets a +0.5 bias offset so untrained decodes land
    mid-range instead of being clipped at zero.

The stylization engine's test weights follow the same rule, so converting a
surrogate checkpoint reproduces those banks byte for byte — which is exactly
what the committed golden fixtures certify.
"""

import zlib

import numpy as np
import torch

from . import arch

DEFAULT_SEED = 1337


def layer_rng(name, seed=DEFAULT_SEED):
    return np.random.default_rng([seed, zlib.crc32(name.encode())])


def surrogate_conv(name, cout, cin, seed=DEFAULT_SEED):
    """He-initialized (weight, bias) float32 pair for one conv layer."""
    rng = layer_rng(name, seed)
    w = rng.standard_normal((cout, cin, 3, 3)) * np.sqrt(2.0 / (cin * 9))
    b = rng.standard_normal(cout) * 0.05
    if name == "dconv1_1":
        b = b + 0.5
    return w.astype(np.float32), b.astype(np.float32)


def build_state(seed=DEFAULT_SEED):
    """Full surrogate state dict keyed like the reference checkpoint."""
    state = {}
    for prefix, layers in ((arch.ENCODER_PREFIX, arch.encoder_layers(5)),
                           (arch.DECODER_PREFIX, arch.decoder_layers(5))):
        for name, kind, shape in layers:
            if kind != "conv":
                continue
            w, b = surrogate_conv(name, shape[0], shape[1], seed)
            state[f"{prefix}{name}.weight"] = torch.from_numpy(w)
            state[f"{prefix}{name}.bias"] = torch.from_numpy(b)
    return state


def synthesize(path, seed=DEFAULT_SEED):
    """Write a surrogate checkpoint to `path` and return its metadata."""
    meta = {
        "source": "surrogate",
        "seed": int(seed),
        "preprocess": "rgb01",
        "generator": "wconvert.synth",
    }
    torch.save({
        "format": arch.CHECKPOINT_FORMAT,
        "meta": meta,
        "state": build_state(seed),
    }, path)
    return meta
