"""Inference-only CNN runtime for VGG-19 encoder slices and their mirrored
nearest-neighbor-upsampling decoders.

Activations are carried channel-last internally (fast im2col GEMM path on this
BLAS) while the public FeatureMap type stores channel-major (C, H, W) data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import sswt
from .errors import ConfigError, FormatError
from .image import pad_to_multiple

__all__ = [
    "VGG_CHANNELS", "FeatureMap", "Layer", "Network", "WeightBank",
    "load_network", "encode", "encode_taps", "decode",
    "conv3x3", "relu", "maxpool2x2", "upsample_nearest",
]

#: Channel width of the pooling-layer output at each encoder level.
VGG_CHANNELS = {1: 64, 2: 128, 3: 256, 4: 512, 5: 512}

_PREPROCESS_MODES = ("rgb01", "vgg_caffe")
_CAFFE_MEAN = np.array([103.939, 116.779, 123.68], dtype=np.float32)

# im2col buffer cap, in float32 elements (~128 MB)
_COL_CHUNK_ELEMS = 32 * 1024 * 1024


@dataclass
class FeatureMap:
    """Activation tensor at one encoder level, stored channel-major."""

    data: np.ndarray          # (C, H, W) float32
    level: int
    content_size: tuple[int, int] | None = None  # pre-pad (H, W) of the source image

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("feature map data must be (C, H, W)")
        if self.level not in VGG_CHANNELS:
            raise ConfigError(f"level must be in 1..5, got {self.level}")
        if self.data.shape[0] != VGG_CHANNELS[self.level]:
            raise ConfigError(
                f"level {self.level} features must have {VGG_CHANNELS[self.level]} "
                f"channels, got {self.data.shape[0]}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("non-finite activations")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def as_matrix(self) -> np.ndarray:
        """View as the C x N matrix used by the feature transforms."""
        return self.data.reshape(self.channels, self.height * self.width)

    def with_matrix(self, mat: np.ndarray) -> "FeatureMap":
        """Same geometry, new values from a C x N matrix."""
        data = np.ascontiguousarray(mat, dtype=np.float32).reshape(self.data.shape)
        return FeatureMap(data=data, level=self.level, content_size=self.content_size)


@dataclass
class Layer:
    name: str
    kind: int  # sswt.KIND_*
    weight: np.ndarray | None = None  # (out, in, 3, 3) float32
    bias: np.ndarray | None = None    # (out,) float32
    _gemm_weight: np.ndarray | None = field(default=None, repr=False)

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def gemm_weight(self) -> np.ndarray:
        # (9*in, out) layout matching the im2col patch order (ky, kx, cin)
        if self._gemm_weight is None:
            w = self.weight
            self._gemm_weight = np.ascontiguousarray(
                w.transpose(2, 3, 1, 0).reshape(9 * w.shape[1], w.shape[0])
            )
        return self._gemm_weight


@dataclass
class Network:
    layers: list[Layer]
    preprocess: str = "rgb01"

    @property
    def pool_count(self) -> int:
        return sum(1 for l in self.layers if l.kind == sswt.KIND_MAXPOOL)

    @property
    def upsample_count(self) -> int:
        return sum(1 for l in self.layers if l.kind == sswt.KIND_UPSAMPLE)

    @property
    def input_channels(self) -> int:
        for l in self.layers:
            if l.kind == sswt.KIND_CONV:
                return l.in_channels
        raise ConfigError("network has no conv layer")

    @property
    def output_channels(self) -> int:
        for l in reversed(self.layers):
            if l.kind == sswt.KIND_CONV:
                return l.out_channels
        raise ConfigError("network has no conv layer")


def load_network(path, preprocess: str = "rgb01") -> Network:
    """Load an SSWT weight file into a Network, validating the layer chain."""
    if preprocess not in _PREPROCESS_MODES:
        raise ConfigError(f"unknown preprocessing mode {preprocess!r}")
    records = sswt.read_records(path)
    layers: list[Layer] = []
    for rec in records:
        if rec.name.endswith(".bias"):
            base = rec.name[:-5]
            if (not layers or layers[-1].kind != sswt.KIND_CONV
                    or layers[-1].name != base or layers[-1].bias is not None):
                raise FormatError(f"orphan bias record {rec.name!r}")
            if rec.data is None or rec.data.ndim != 1:
                raise FormatError(f"bias record {rec.name!r} must be rank 1")
            if rec.data.shape[0] != layers[-1].out_channels:
                raise FormatError(
                    f"shape mismatch: bias {rec.name!r} has {rec.data.shape[0]} "
                    f"entries for {layers[-1].out_channels} output channels"
                )
            layers[-1].bias = rec.data
            continue
        if rec.kind == sswt.KIND_CONV:
            if rec.data is None or rec.data.ndim != 4:
                raise FormatError(f"conv record {rec.name!r} must be rank 4")
            if rec.data.shape[2:] != (3, 3):
                raise FormatError(
                    f"shape mismatch: conv {rec.name!r} kernel is "
                    f"{rec.data.shape[2]}x{rec.data.shape[3]}, expected 3x3"
                )
            layers.append(Layer(name=rec.name, kind=rec.kind, weight=rec.data))
        elif rec.kind in (sswt.KIND_RELU, sswt.KIND_MAXPOOL, sswt.KIND_UPSAMPLE):
            if rec.data is not None:
                raise FormatError(f"unexpected payload for marker layer {rec.name!r}")
            layers.append(Layer(name=rec.name, kind=rec.kind))
        else:
            raise FormatError(f"unknown layer kind {rec.kind} for {rec.name!r}")

    channels = None
    for layer in layers:
        if layer.kind != sswt.KIND_CONV:
            continue
        if layer.bias is None:
            layer.bias = np.zeros(layer.out_channels, dtype=np.float32)
        if channels is not None and layer.in_channels != channels:
            raise FormatError(
                f"shape mismatch: {layer.name!r} expects {layer.in_channels} "
                f"input channels after a {channels}-channel layer"
            )
        channels = layer.out_channels
    if channels is None:
        raise FormatError("network has no conv layers")
    return Network(layers=layers, preprocess=preprocess)


class WeightBank:
    """Lazy cache of the per-level encoder/decoder networks in a weights dir.

    Layout: enc1..enc5.sswt, dec1..dec5.sswt, optional weights_manifest.json
    carrying the converter's preprocessing flag.
    """

    def __init__(self, weights_dir):
        self.weights_dir = str(weights_dir)
        self._cache: dict[str, Network] = {}
        self.preprocess = "rgb01"
        manifest = os.path.join(self.weights_dir, "weights_manifest.json")
        if os.path.exists(manifest):
            with open(manifest) as f:
                info = json.load(f)
            self.preprocess = info.get("preprocess", "rgb01")

    def _load(self, stem: str) -> Network:
        if stem not in self._cache:
            path = os.path.join(self.weights_dir, stem + ".sswt")
            if not os.path.exists(path):
                raise FileNotFoundError(f"missing network file {path}")
            self._cache[stem] = load_network(path, preprocess=self.preprocess)
        return self._cache[stem]

    def encoder(self, level: int) -> Network:
        # enc5 is a superset of the shallower slices; prefer it when present
        # so multi-level runs share one forward pass.
        path5 = os.path.join(self.weights_dir, "enc5.sswt")
        if os.path.exists(path5):
            net = self._load("enc5")
            if net.pool_count >= level:
                return net
        return self._load(f"enc{level}")

    def decoder(self, level: int) -> Network:
        return self._load(f"dec{level}")


# ---------------------------------------------------------------------------
# layer primitives (public API is channel-major; the forward pass runs HWC)

def conv3x3(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """3x3 convolution with 1-pixel reflection padding on a (C, H, W) tensor."""
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 3:
        raise ValueError("expected (C, H, W) input")
    if weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise ValueError("expected (out, in, 3, 3) weights")
    if x.shape[0] != weight.shape[1]:
        raise ConfigError(
            f"channel mismatch: input has {x.shape[0]}, conv expects {weight.shape[1]}"
        )
    layer = Layer(name="conv", kind=sswt.KIND_CONV, weight=np.asarray(weight, np.float32))
    layer.bias = (np.zeros(weight.shape[0], np.float32) if bias is None
                  else np.asarray(bias, np.float32))
    out = _conv_hwc(np.ascontiguousarray(x.transpose(1, 2, 0)), layer)
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def maxpool2x2(x: np.ndarray) -> np.ndarray:
    """2x2 max pooling with stride 2 on a (C, H, W) tensor."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"maxpool needs even spatial dims, got {h}x{w}")
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def upsample_nearest(x: np.ndarray) -> np.ndarray:
    """2x nearest-neighbor upsampling on a (C, H, W) tensor."""
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def _conv_hwc(x: np.ndarray, layer: Layer) -> np.ndarray:
    h, w, cin = x.shape
    cout = layer.out_channels
    w2 = layer.gemm_weight()
    xp = np.pad(x, ((1, 1), (1, 1), (0, 0)), mode="reflect")
    out = np.empty((h * w, cout), dtype=np.float32)
    chunk = max(1, min(h, _COL_CHUNK_ELEMS // max(1, w * cin * 9)))
    for r0 in range(0, h, chunk):
        r1 = min(h, r0 + chunk)
        win = sliding_window_view(xp[r0:r1 + 2], (3, 3), axis=(0, 1))
        col = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(
            (r1 - r0) * w, 9 * cin
        )
        np.matmul(col, w2, out=out[r0 * w:r1 * w])
    out += layer.bias
    return out.reshape(h, w, cout)


def _maxpool_hwc(x: np.ndarray) -> np.ndarray:
    h, w, c = x.shape
    if h % 2 or w % 2:
        raise ConfigError(f"maxpool needs even spatial dims, got {h}x{w}")
    return x.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))


def _upsample_hwc(x: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)


def _run_layers(x: np.ndarray, layers: list[Layer], stop_after_pools: int = 0,
                taps: dict[int, np.ndarray] | None = None, tap_levels=()) -> np.ndarray:
    pools = 0
    for layer in layers:
        if layer.kind == sswt.KIND_CONV:
            if x.shape[-1] != layer.in_channels:
                raise ConfigError(
                    f"channel mismatch at {layer.name!r}: input has {x.shape[-1]}, "
                    f"conv expects {layer.in_channels}"
                )
            x = _conv_hwc(x, layer)
        elif layer.kind == sswt.KIND_RELU:
            np.maximum(x, 0.0, out=x)
        elif layer.kind == sswt.KIND_MAXPOOL:
            x = _maxpool_hwc(x)
            pools += 1
            if taps is not None and pools in tap_levels:
                taps[pools] = x
            if stop_after_pools and pools >= stop_after_pools:
                return x
        elif layer.kind == sswt.KIND_UPSAMPLE:
            x = _upsample_hwc(x)
    return x


# ---------------------------------------------------------------------------
# encode / decode

def _preprocess(img: np.ndarray, mode: str) -> np.ndarray:
    x = np.ascontiguousarray(img, dtype=np.float32)
    if mode == "rgb01":
        return x
    if mode == "vgg_caffe":
        return x[:, :, ::-1] * 255.0 - _CAFFE_MEAN
    raise ConfigError(f"unknown preprocessing mode {mode!r}")


def _postprocess(x: np.ndarray, mode: str) -> np.ndarray:
    if mode == "rgb01":
        return x
    if mode == "vgg_caffe":
        return (x + _CAFFE_MEAN)[:, :, ::-1] / 255.0
    raise ConfigError(f"unknown preprocessing mode {mode!r}")


def encode(net: Network, img: np.ndarray, level: int) -> FeatureMap:
    """Run the encoder up to the given pooling layer.

    Images whose spatial dims are not divisible by 2**level are edge-replicate
    padded; the original size is recorded on the FeatureMap so decode can crop.
    """
    return encode_taps(net, img, (level,))[level]


def encode_taps(net: Network, img: np.ndarray, levels) -> dict[int, FeatureMap]:
    """Single forward pass capturing the feature map at several pooling levels."""
    levels = sorted(set(int(l) for l in levels))
    if not levels:
        raise ConfigError("no levels requested")
    if levels[0] < 1 or levels[-1] > 5:
        raise ConfigError(f"levels must be in 1..5, got {levels}")
    if net.pool_count < levels[-1]:
        raise ConfigError(
            f"network has {net.pool_count} pooling layers, level {levels[-1]} requested"
        )
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (H, W, 3) image")
    orig = (img.shape[0], img.shape[1])
    padded = pad_to_multiple(img, 2 ** levels[-1])
    content_size = None if padded.shape[:2] == orig else orig

    x = _preprocess(padded, net.preprocess)
    taps: dict[int, np.ndarray] = {}
    _run_layers(x, net.layers, stop_after_pools=levels[-1], taps=taps,
                tap_levels=set(levels))
    out = {}
    for level in levels:
        data = np.ascontiguousarray(taps[level].transpose(2, 0, 1))
        out[level] = FeatureMap(data=data, level=level, content_size=content_size)
    return out


def decode(net: Network, fmap: FeatureMap) -> np.ndarray:
    """Run a decoder on a feature map, returning a clamped [0, 1] image."""
    if net.upsample_count != fmap.level:
        raise ConfigError(
            f"level mismatch: decoder has {net.upsample_count} upsampling layers, "
            f"feature map is level {fmap.level}"
        )
    if net.input_channels != fmap.channels:
        raise ConfigError(
            f"channel mismatch: decoder expects {net.input_channels}, "
            f"feature map has {fmap.channels}"
        )
    x = np.ascontiguousarray(fmap.data.transpose(1, 2, 0))
    x = _run_layers(x, net.layers)
    img = _postprocess(x, net.preprocess)
    if fmap.content_size is not None:
        img = img[:fmap.content_size[0], :fmap.content_size[1]]
    return np.clip(img, 0.0, 1.0)
