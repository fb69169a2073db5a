"""Core domain types shared across the pipeline.

All pixel data is float64 in [0, 1], HWC layout. Masks are uint8 in {0, 1}.
The wrappers validate their invariants once at construction; the arrays
inside are treated as immutable afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

Box = tuple[float, float, float, float]

# Reserved pseudo-class the classifier uses for rejected regions.
BACKGROUND_NAME = "background"


def normalize_class_name(name: str) -> str:
    """Canonical class-name form: lowercase, inner whitespace collapsed."""
    return " ".join(name.split()).lower()


def as_pixels(array) -> np.ndarray:
    """Coerce an array-like to a float64 HxWx3 pixel array."""
    pixels = np.asarray(array, dtype=np.float64)
    if pixels.ndim == 2:
        pixels = np.repeat(pixels[:, :, None], 3, axis=2)
    return pixels


@dataclass(frozen=True)
class ImageTensor:
    """An RGB image with values in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        pixels = as_pixels(self.pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"expected HxWx3 pixels, got shape {pixels.shape}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        if not np.all(np.isfinite(pixels)):
            raise ValueError("image contains non-finite values")
        if pixels.min() < 0.0 or pixels.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """A foreground mask over an image, same spatial dims, values in {0, 1}."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2:
            raise ValueError(f"expected HxW mask, got shape {values.shape}")
        if not np.isin(values, (0, 1)).all():
            raise ValueError("mask values must be strictly 0 or 1")
        object.__setattr__(self, "values", values.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def foreground_fraction(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class PatchGrid:
    """Per-patch embeddings of one image: H' x W' cells of dimension D."""

    features: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 3:
            raise ValueError(f"expected H'xW'xD features, got shape {features.shape}")
        if min(features.shape) < 1:
            raise ValueError("grid dims and feature dim must be positive")
        if not np.all(np.isfinite(features)):
            raise ValueError("grid features contain non-finite values")
        object.__setattr__(self, "features", features)

    @property
    def grid_h(self) -> int:
        return self.features.shape[0]

    @property
    def grid_w(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]


@dataclass(frozen=True)
class Proposal:
    """A region proposal: pooled feature plus pixel-space box (x1, y1, x2, y2)."""

    feature: np.ndarray
    box: Box
    objectness: Optional[float] = None

    def __post_init__(self):
        feature = np.asarray(self.feature, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(feature)):
            raise ValueError("proposal feature contains non-finite values")
        if float(np.dot(feature, feature)) == 0.0:
            raise ValueError("proposal feature must have nonzero norm")
        box = tuple(float(v) for v in self.box)
        x1, y1, x2, y2 = box
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"proposal box must be well-ordered, got {box}")
        if self.objectness is not None and not 0.0 <= self.objectness <= 1.0:
            raise ValueError("objectness must lie in [0, 1]")
        object.__setattr__(self, "feature", feature)
        object.__setattr__(self, "box", box)

    @property
    def dim(self) -> int:
        return self.feature.shape[0]


@dataclass(frozen=True)
class GallerySample:
    """One visual sample of a class, either real X-ray or web-synthetic."""

    image: ImageTensor
    class_name: str
    provenance: str  # "in_house" | "web_synthetic"
    source_id: str
    box: Optional[Box] = None  # annotated box in image pixels, when known

    def __post_init__(self):
        if not self.class_name:
            raise ValueError("class_name must be non-empty")
        if self.provenance not in ("in_house", "web_synthetic"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.box is not None:
            x1, y1, x2, y2 = self.box
            if not (x2 > x1 and y2 > y1):
                raise ValueError(f"sample box must be well-ordered, got {self.box}")
