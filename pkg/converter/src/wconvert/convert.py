"""Checkpoint-to-SSWT conversion.

Validates a reference checkpoint against the expected architecture, emits the
five encoder and five decoder SSWT files, and writes a conversion report
recording provenance, the layer mapping for every output record, and
per-tensor checksums.  Conversion is pure bookkeeping — same checkpoint in,
same bytes out.
"""

import hashlib
import json
import os

import numpy as np
import torch

from . import arch, sswt


class ConversionError(RuntimeError):
    """Checkpoint does not match the expected reference architecture."""


_KIND_CODE = {"conv": sswt.KIND_CONV, "relu": sswt.KIND_RELU,
              "pool": sswt.KIND_MAXPOOL, "up": sswt.KIND_UPSAMPLE}


def load_checkpoint(path):
    """Load and validate a reference checkpoint; returns (meta, state)."""
    try:
        ckpt = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ConversionError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(ckpt, dict) or ckpt.get("format") != arch.CHECKPOINT_FORMAT:
        raise ConversionError(f"{path} is not a {arch.CHECKPOINT_FORMAT} checkpoint")
    meta = ckpt.get("meta", {})
    if meta.get("preprocess") not in ("rgb01", "vgg_caffe"):
        raise ConversionError(f"unknown preprocess flag {meta.get('preprocess')!r}")
    state = ckpt.get("state")
    if not isinstance(state, dict):
        raise ConversionError("checkpoint has no state dict")

    expected = arch.checkpoint_keys()
    for key in state:
        if key not in expected:
            raise ConversionError(f"unknown layer {key!r} in checkpoint")
    for key in expected:
        if key not in state:
            raise ConversionError(f"missing layer {key!r} in checkpoint")

    tensors = {}
    for key, want in expected.items():
        t = state[key]
        if not torch.is_tensor(t):
            raise ConversionError(f"layer {key!r} is not a tensor")
        if tuple(t.shape) != want:
            raise ConversionError(
                f"shape mismatch for layer {key!r}: expected {want}, "
                f"found {tuple(t.shape)}")
        arr = t.detach().to(torch.float32).numpy()
        if not np.all(np.isfinite(arr)):
            raise ConversionError(f"layer {key!r} contains non-finite values")
        tensors[key] = arr
    return meta, tensors


def network_records(tensors, tower, level):
    """(name, kind_code, array) triples for one output network."""
    if tower == "enc":
        prefix, layers = arch.ENCODER_PREFIX, arch.encoder_layers(level)
    else:
        prefix, layers = arch.DECODER_PREFIX, arch.decoder_layers(level)
    records = []
    for name, kind, _shape in layers:
        if kind == "conv":
            records.append((name, sswt.KIND_CONV, tensors[f"{prefix}{name}.weight"]))
            records.append((f"{name}.bias", sswt.KIND_CONV,
                            tensors[f"{prefix}{name}.bias"]))
        else:
            records.append((name, _KIND_CODE[kind], None))
    return records


def validate_chain(records, input_channels):
    """Walk a record list checking the conv shape chain.

    Returns (output_channels, pools, upsamples).  Raises ConversionError on
    any inconsistency; this is the converter-side twin of the loader's
    validation in the stylization engine.
    """
    channels = input_channels
    pools = ups = convs = 0
    pending_bias = None
    for name, kind, arr in records:
        if name.endswith(".bias"):
            if pending_bias is None or name != pending_bias[0]:
                raise ConversionError(f"unexpected bias record {name!r}")
            if arr.shape != (pending_bias[1],):
                raise ConversionError(f"bias shape mismatch for {name!r}")
            pending_bias = None
            continue
        if pending_bias is not None:
            raise ConversionError(f"missing bias record {pending_bias[0]!r}")
        if arr is not None:
            if arr.ndim != 4 or arr.shape[2:] != (3, 3):
                raise ConversionError(f"layer {name!r} is not a 3x3 conv kernel")
            if arr.shape[1] != channels:
                raise ConversionError(
                    f"shape mismatch at {name!r}: expects {arr.shape[1]} input "
                    f"channels after a {channels}-channel layer")
            channels = arr.shape[0]
            convs += 1
            pending_bias = (f"{name}.bias", channels)
        elif kind == sswt.KIND_MAXPOOL:
            pools += 1
        elif kind == sswt.KIND_UPSAMPLE:
            ups += 1
        elif kind != sswt.KIND_RELU:
            raise ConversionError(f"unknown layer kind {kind} for {name!r}")
    if pending_bias is not None:
        raise ConversionError(f"missing bias record {pending_bias[0]!r}")
    if convs == 0:
        raise ConversionError("network has no conv layers")
    return channels, pools, ups


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


_KIND_NAME = {sswt.KIND_CONV: "conv", sswt.KIND_RELU: "relu",
              sswt.KIND_MAXPOOL: "maxpool", sswt.KIND_UPSAMPLE: "upsample"}


def _mapping_entry(name, kind, arr, source):
    entry = {"record": name, "kind": _KIND_NAME[kind], "source": source}
    if arr is None:
        entry["shape"] = None
        entry["checksum"] = None
    else:
        entry["shape"] = list(arr.shape)
        entry["checksum"] = f"{sswt.fnv1a64(np.ascontiguousarray(arr, '<f4')):016x}"
    return entry


def convert(checkpoint_path, out_dir):
    """Convert a checkpoint into 5+5 SSWT networks plus report files."""
    meta, tensors = load_checkpoint(checkpoint_path)
    os.makedirs(out_dir, exist_ok=True)

    networks = {}
    tensor_count = 0
    for level in range(1, 6):
        for tower in ("enc", "dec"):
            prefix = arch.ENCODER_PREFIX if tower == "enc" else arch.DECODER_PREFIX
            records = network_records(tensors, tower, level)
            cin = 3 if tower == "enc" else arch.VGG_WIDTH[level - 1]
            cout, pools, ups = validate_chain(records, cin)
            want_out = arch.VGG_WIDTH[level - 1] if tower == "enc" else 3
            want_pools = level if tower == "enc" else 0
            want_ups = 0 if tower == "enc" else level
            if (cout, pools, ups) != (want_out, want_pools, want_ups):
                raise ConversionError(
                    f"{tower}{level} chain ended at ({cout} ch, {pools} pools, "
                    f"{ups} upsamples); expected ({want_out}, {want_pools}, "
                    f"{want_ups})")

            fname = f"{tower}{level}.sswt"
            sswt.write(os.path.join(out_dir, fname), records)
            mapping = []
            for name, kind, arr in records:
                source = None
                if arr is not None:
                    base = name[:-5] if name.endswith(".bias") else name
                    field = "bias" if name.endswith(".bias") else "weight"
                    source = f"{prefix}{base}.{field}"
                    tensor_count += 1
                mapping.append(_mapping_entry(name, kind, arr, source))
            networks[f"{tower}{level}"] = {
                "file": fname,
                "input_channels": cin,
                "output_channels": cout,
                "pools": pools,
                "upsamples": ups,
                "mapping": mapping,
            }

    manifest = {"preprocess": meta["preprocess"],
                "source": meta.get("source", "unknown"),
                "seed": meta.get("seed")}
    with open(os.path.join(out_dir, "weights_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)

    report = {
        "format": "substyle-conversion-report",
        "version": 1,
        "source": {
            "checkpoint": os.path.basename(str(checkpoint_path)),
            "sha256": _sha256(checkpoint_path),
            "origin": meta.get("source", "unknown"),
            "seed": meta.get("seed"),
        },
        "preprocess": meta["preprocess"],
        "tensor_count": tensor_count,
        "networks": networks,
        "fixtures": [],
    }
    with open(os.path.join(out_dir, "conversion_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report
