"""Image I/O and pixel helpers.

Images are float32 arrays of shape (H, W, 3), RGB, values in [0, 1].
"""

from __future__ import annotations

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigError

MIN_SIDE = 32


def load_image(path, max_size: int = 0) -> np.ndarray:
    """Read a PNG/JPEG file as float32 RGB in [0, 1].

    When max_size > 0 the image is downscaled so its long side does not
    exceed it (aspect ratio preserved, Lanczos resampling).
    """
    with PILImage.open(path) as img:
        img = img.convert("RGB")
        if max_size > 0 and max(img.size) > max_size:
            scale = max_size / max(img.size)
            new_size = (max(1, round(img.width * scale)),
                        max(1, round(img.height * scale)))
            img = img.resize(new_size, PILImage.Resampling.LANCZOS)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.shape[0] < MIN_SIDE or arr.shape[1] < MIN_SIDE:
        raise ConfigError(
            f"image {path} is {arr.shape[1]}x{arr.shape[0]}; "
            f"minimum supported size is {MIN_SIDE}x{MIN_SIDE}"
        )
    return arr


def save_image(path, img: np.ndarray) -> None:
    """Write a float [0, 1] RGB array as PNG (8-bit, deterministic bytes)."""
    data = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def save_mask(path, mask: np.ndarray) -> None:
    """Write a boolean mask as a black/white PNG."""
    data = np.where(mask, np.uint8(255), np.uint8(0))
    PILImage.fromarray(data, mode="L").save(path, format="PNG")


def pad_to_multiple(img: np.ndarray, multiple: int) -> np.ndarray:
    """Edge-replicate pad spatial dims up to the next multiple."""
    h, w = img.shape[:2]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return img
    pad = ((0, ph), (0, pw)) + ((0, 0),) * (img.ndim - 2)
    return np.pad(img, pad, mode="edge")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB between two [0, 1] images."""
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
