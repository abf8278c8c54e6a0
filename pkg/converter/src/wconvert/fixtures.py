"""Golden fixture emission.

Runs the converted networks in the reference framework (torch) and saves the
feature tensor after every pooling stage as a single-record SSWT file.  These
fixtures are committed to the stylization engine's test suite, which replays
the same images through its own conv stack and compares against them — the
cross-implementation parity check.  Decoder reconstruction PSNR per level is
recorded alongside so the engine can assert non-regression.
"""

import hashlib
import json
import os

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from . import arch, sswt
from .convert import ConversionError, load_checkpoint

_IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")
_CAFFE_MEAN = (103.939, 116.779, 123.68)


def load_image(path):
    """Image file -> (H, W, 3) float32 RGB in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32)
    return arr / 255.0


def _to_input(img, preprocess):
    x = torch.from_numpy(np.ascontiguousarray(img.transpose(2, 0, 1)))[None]
    if preprocess == "vgg_caffe":
        x = x.flip(1) * 255.0
        x = x - torch.tensor(_CAFFE_MEAN).view(1, 3, 1, 1)
    return x


def _from_output(x, preprocess):
    if preprocess == "vgg_caffe":
        x = (x + torch.tensor(_CAFFE_MEAN).view(1, 3, 1, 1)).flip(1) / 255.0
    out = x[0].clamp(0.0, 1.0).numpy().transpose(1, 2, 0)
    return np.ascontiguousarray(out)


def _conv(t, tensors, key):
    w = torch.from_numpy(tensors[f"{key}.weight"])
    b = torch.from_numpy(tensors[f"{key}.bias"])
    return F.conv2d(F.pad(t, (1, 1, 1, 1), mode="reflect"), w, b)


def reference_features(tensors, img, preprocess):
    """Feature maps after each pooling stage, {level: (C, H, W) float32}."""
    with torch.no_grad():
        t = _to_input(img, preprocess)
        feats = {}
        for item in arch.conv_plan(5):
            if item[0] == "pool":
                t = F.max_pool2d(t, 2)
                feats[item[1]] = t[0].numpy().copy()
            else:
                _, b, i, _cin, _cout = item
                t = F.relu(_conv(t, tensors, f"{arch.ENCODER_PREFIX}conv{b}_{i}"))
    return feats


def reference_decode(tensors, feature, level, preprocess):
    """Run the mirrored decoder on a (C, H, W) feature map -> (H', W', 3)."""
    plan = arch.conv_plan(level)
    with torch.no_grad():
        t = torch.from_numpy(feature)[None]
        for pos, item in enumerate(reversed(plan)):
            if item[0] == "pool":
                t = F.interpolate(t, scale_factor=2, mode="nearest")
            else:
                _, b, i, _cin, _cout = item
                t = _conv(t, tensors, f"{arch.DECODER_PREFIX}dconv{b}_{i}")
                if pos != len(plan) - 1:
                    t = F.relu(t)
        return _from_output(t, preprocess)


def _psnr(a, b):
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def emit_fixtures(checkpoint_path, images_dir, out_dir):
    """Emit per-level feature fixtures for every image in `images_dir`.

    Writes one single-record SSWT per (image, level), a fixtures manifest
    naming files, shapes, checksums and decode PSNRs, and a conversion report.
    The manifest's flat "image"/"features"/"decode_psnr" keys alias the first
    image in sorted order — the committed golden set has exactly one.
    """
    meta, tensors = load_checkpoint(checkpoint_path)
    preprocess = meta["preprocess"]
    names = sorted(f for f in os.listdir(images_dir)
                   if f.lower().endswith(_IMAGE_EXTS))
    if not names:
        raise ConversionError(f"no images found in {images_dir}")
    os.makedirs(out_dir, exist_ok=True)
    torch.set_num_threads(1)

    images = {}
    fixture_mapping = []
    for fname in names:
        img = load_image(os.path.join(images_dir, fname))
        h, w = img.shape[:2]
        if h % 32 or w % 32:
            raise ConversionError(
                f"fixture image {fname!r} is {h}x{w}; dimensions must be "
                f"multiples of 32 so all five taps are well-defined")
        stem = os.path.splitext(fname)[0]
        feats = reference_features(tensors, img, preprocess)
        features = {}
        decode_psnr = {}
        for level in range(1, 6):
            feat = np.ascontiguousarray(feats[level], dtype=np.float32)
            out_name = f"{stem}_l{level}.sswt"
            sswt.write(os.path.join(out_dir, out_name),
                       [("feature", sswt.KIND_CONV, feat)])
            checksum = f"{sswt.fnv1a64(feat.tobytes()):016x}"
            features[str(level)] = {"file": out_name,
                                    "shape": list(feat.shape),
                                    "checksum": checksum}
            recon = reference_decode(tensors, feat, level, preprocess)
            decode_psnr[str(level)] = _psnr(img, recon)
            fixture_mapping.append({"file": out_name, "record": "feature",
                                    "kind": "conv", "shape": list(feat.shape),
                                    "checksum": checksum,
                                    "source": f"{fname}@level{level}"})
        images[fname] = {"size": [h, w], "features": features,
                         "decode_psnr": decode_psnr}

    first = names[0]
    manifest = {
        "format": "substyle-fixtures",
        "version": 1,
        "preprocess": preprocess,
        "source": meta.get("source", "unknown"),
        "image": first,
        "features": images[first]["features"],
        "decode_psnr": images[first]["decode_psnr"],
        "images": images,
    }
    with open(os.path.join(out_dir, "fixtures_manifest.json"), "w") as fh:
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
        "preprocess": preprocess,
        "tensor_count": len(fixture_mapping),
        "mapping": fixture_mapping,
        "fixtures": [entry["file"] for entry in fixture_mapping],
    }
    with open(os.path.join(out_dir, "conversion_report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return manifest
