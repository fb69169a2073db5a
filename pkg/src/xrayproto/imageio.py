"""Image loading and saving.

PNG/JPEG goes through Pillow; .npy files are accepted directly so synthetic
fixtures can round-trip float pixels without quantization. Loading failures
raise IOError so callers can decide between aborting and skip-with-warning.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .types import ImageTensor

_PIL_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp")


def load_image(path: str) -> ImageTensor:
    if not os.path.isfile(path):
        raise IOError(f"image not found: {path}")
    suffix = os.path.splitext(path)[1].lower()
    try:
        if suffix == ".npy":
            pixels = np.load(path)
        else:
            with Image.open(path) as img:
                pixels = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    except IOError:
        raise
    except Exception as exc:
        raise IOError(f"cannot read image {path}: {exc}") from exc
    try:
        return ImageTensor(pixels)
    except ValueError as exc:
        raise IOError(f"invalid image data in {path}: {exc}") from exc


def save_image(image: ImageTensor, path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".npy":
        np.save(path, image.pixels)
        return
    if suffix not in _PIL_SUFFIXES:
        raise ValueError(f"unsupported image suffix {suffix!r}")
    quantized = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)
