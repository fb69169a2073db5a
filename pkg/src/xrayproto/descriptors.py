"""Visual class descriptors: prototypes pooled from gallery samples.

Each gallery image yields one positive prototype (mean of the patch-grid
cells under the object mask) and, when any cell is background, one negative
prototype (mean of the complement cells). A class descriptor is the stack of
the member positives plus their mean; the negatives from every class pool
into a shared background descriptor that lets the classifier reject empty
regions. Stores persist to JSON (exact via shortest-round-trip floats) or
NPZ (exact binary) and refuse to mix incompatible backends.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .acquisition import Gallery
from .backends import FeatureExtractor, Segmenter
from .errors import (
    DescriptorBuildError,
    EmptyBackgroundError,
    EmptyForegroundError,
    EmptyStoreError,
    StoreCompatibilityError,
    StoreCorruptError,
    StoreVersionError,
)
from .types import BACKGROUND_NAME, Box, GallerySample, ImageTensor, PatchGrid

STORE_VERSION = 1


# ---------------------------------------------------------------------------
# prototype math
# ---------------------------------------------------------------------------


def resize_mask(mask: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    """Downsample a pixel mask onto the patch grid.

    A grid cell counts as foreground when at least half of its pixels are,
    under the same floor partition the pooling kernel uses.
    """
    fractions = _kernels.block_fraction(mask, grid_h, grid_w)
    return (fractions >= 0.5).astype(np.uint8)


def positive_prototype(grid: PatchGrid, cell_mask: np.ndarray) -> np.ndarray:
    """Mean feature of the foreground cells."""
    cell_mask = np.asarray(cell_mask)
    if cell_mask.shape != (grid.grid_h, grid.grid_w):
        raise ValueError(
            f"cell mask {cell_mask.shape} does not match grid "
            f"{(grid.grid_h, grid.grid_w)}"
        )
    selected = grid.features[cell_mask == 1]
    if selected.shape[0] == 0:
        raise EmptyForegroundError("no foreground cells under the mask")
    return selected.mean(axis=0)


def negative_prototype(grid: PatchGrid, cell_mask: np.ndarray) -> np.ndarray:
    """Mean feature of the background (complement) cells."""
    cell_mask = np.asarray(cell_mask)
    if cell_mask.shape != (grid.grid_h, grid.grid_w):
        raise ValueError(
            f"cell mask {cell_mask.shape} does not match grid "
            f"{(grid.grid_h, grid.grid_w)}"
        )
    selected = grid.features[cell_mask == 0]
    if selected.shape[0] == 0:
        raise EmptyBackgroundError("mask covers every cell; no background left")
    return selected.mean(axis=0)


def crop_to_box(
    image: ImageTensor,
    box: Box,
    margin: float = 0.1,
) -> ImageTensor:
    """Crop to a box expanded by ``margin`` of its size per side, clipped."""
    x1, y1, x2, y2 = box
    mx, my = margin * (x2 - x1), margin * (y2 - y1)
    r0 = max(int(np.floor(y1 - my)), 0)
    r1 = min(int(np.ceil(y2 + my)), image.height)
    c0 = max(int(np.floor(x1 - mx)), 0)
    c1 = min(int(np.ceil(x2 + mx)), image.width)
    if r1 <= r0 or c1 <= c0:
        raise ValueError(f"box {box} does not intersect the image")
    return ImageTensor(image.pixels[r0:r1, c0:c1, :])


# ---------------------------------------------------------------------------
# descriptor containers
# ---------------------------------------------------------------------------


@dataclass
class ClassDescriptor:
    """One class's visual identity: member prototypes plus their mean."""

    class_name: str
    mean: np.ndarray
    members: np.ndarray
    k_used: int = 0

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.members = np.asarray(self.members, dtype=np.float64)
        if self.members.ndim != 2:
            raise ValueError("members must be a (count, dim) matrix")
        if self.k_used == 0:
            self.k_used = self.members.shape[0]

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def vectors(self) -> np.ndarray:
        """Mean first, then every member: the full descriptor stack."""
        return np.concatenate([self.mean[None, :], self.members], axis=0)

    def validate(self, atol: float = 1e-6) -> None:
        if self.members.shape[0] < 1:
            raise ValueError(f"descriptor for {self.class_name!r} has no members")
        if self.members.shape[1] != self.dim:
            raise ValueError("member dim does not match mean dim")
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.members)):
            raise ValueError("descriptor contains non-finite values")
        norms = np.linalg.norm(self.vectors(), axis=1)
        if np.any(norms == 0.0):
            raise ValueError("descriptor contains a zero vector")
        gap = np.max(np.abs(self.mean - self.members.mean(axis=0)))
        if gap > atol:
            raise ValueError(
                f"descriptor mean for {self.class_name!r} drifts from its "
                f"members' average by {gap:g}"
            )


@dataclass
class BackgroundDescriptor:
    """Pooled negatives from all classes; empty disables background scoring."""

    members: np.ndarray

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.float64)
        if members.size == 0:
            members = members.reshape(0, members.shape[-1] if members.ndim == 2 else 0)
        if members.ndim != 2:
            raise ValueError("background members must be a (count, dim) matrix")
        self.members = members

    @property
    def enabled(self) -> bool:
        return self.members.shape[0] > 0

    def vectors(self) -> np.ndarray:
        # Pure ensemble: no derived mean row, so every background vector
        # matters only by direction and rescaling one never moves the score.
        return self.members


@dataclass
class StoreMetadata:
    extractor_id: str
    segmenter_id: str
    built_at: Optional[str] = None
    config_hash: Optional[str] = None


@dataclass
class DescriptorStore:
    """Everything the classifier needs: per-class descriptors + background."""

    dim: int
    metadata: StoreMetadata
    background: BackgroundDescriptor
    classes: dict[str, ClassDescriptor] = field(default_factory=dict)
    version: int = STORE_VERSION

    def class_names(self) -> list[str]:
        return list(self.classes)

    def validate(self) -> None:
        for name, desc in self.classes.items():
            if name == BACKGROUND_NAME:
                raise ValueError('"background" cannot appear as a stored class')
            if name != desc.class_name:
                raise ValueError(f"key {name!r} != descriptor name {desc.class_name!r}")
            desc.validate()
            if desc.dim != self.dim:
                raise ValueError(
                    f"class {name!r} dim {desc.dim} != store dim {self.dim}"
                )
        if self.background.enabled and self.background.members.shape[1] != self.dim:
            raise ValueError("background dim does not match store dim")


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------


def sample_prototypes(
    sample: GallerySample,
    segmenter: Segmenter,
    extractor: FeatureExtractor,
    *,
    crop_margin: float = 0.1,
    crop_enabled: bool = True,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """(positive, negative-or-None) prototypes for one gallery sample.

    Samples with an annotated box are cropped to it (plus margin) first so
    cluttered scans contribute the object region, not the whole bag. A
    sample whose mask covers the entire grid yields no negative.
    """
    image = sample.image
    if crop_enabled and sample.box is not None:
        image = crop_to_box(image, sample.box, margin=crop_margin)
    mask = segmenter.segment(image)
    grid = extractor.extract_grid(image)
    cells = resize_mask(mask.values, grid.grid_h, grid.grid_w)
    positive = positive_prototype(grid, cells)
    try:
        negative = negative_prototype(grid, cells)
    except EmptyBackgroundError:
        negative = None
    return positive, negative


def build_class_descriptor(
    class_name: str,
    samples: list[GallerySample],
    segmenter: Segmenter,
    extractor: FeatureExtractor,
    *,
    crop_margin: float = 0.1,
    crop_enabled: bool = True,
) -> tuple[ClassDescriptor, list[np.ndarray]]:
    """Descriptor plus this class's negative prototypes.

    Samples that fail (empty or zero-norm foreground) are skipped; the class
    fails only when every sample does.
    """
    positives: list[np.ndarray] = []
    negatives: list[np.ndarray] = []
    for sample in samples:
        try:
            positive, negative = sample_prototypes(
                sample,
                segmenter,
                extractor,
                crop_margin=crop_margin,
                crop_enabled=crop_enabled,
            )
        except (EmptyForegroundError, ValueError):
            continue
        if float(np.dot(positive, positive)) == 0.0:
            continue
        positives.append(positive)
        if negative is not None and float(np.dot(negative, negative)) != 0.0:
            negatives.append(negative)
    if not positives:
        raise DescriptorBuildError(
            f"no usable sample for class {class_name!r}", [class_name]
        )
    members = np.stack(positives)
    descriptor = ClassDescriptor(
        class_name=class_name,
        mean=members.mean(axis=0),
        members=members,
        k_used=members.shape[0],
    )
    descriptor.validate()
    return descriptor, negatives


def build_store(
    gallery: Gallery,
    segmenter: Segmenter,
    extractor: FeatureExtractor,
    *,
    allow_partial: bool = False,
    crop_margin: float = 0.1,
    crop_enabled: bool = True,
    built_at: Optional[str] = None,
    config_hash: Optional[str] = None,
) -> DescriptorStore:
    """Build a descriptor store for every class the gallery could source.

    Per-class failures abort the build unless ``allow_partial``; either way
    the background pools the negatives of every class that succeeded, in
    class order then sample order.
    """
    classes: dict[str, ClassDescriptor] = {}
    background_members: list[np.ndarray] = []
    failed: list[str] = []
    for name, samples in gallery.samples_by_class.items():
        try:
            descriptor, negatives = build_class_descriptor(
                name,
                samples,
                segmenter,
                extractor,
                crop_margin=crop_margin,
                crop_enabled=crop_enabled,
            )
        except DescriptorBuildError:
            failed.append(name)
            continue
        classes[name] = descriptor
        background_members.extend(negatives)
    if failed and not allow_partial:
        raise DescriptorBuildError(
            f"descriptor build failed for {len(failed)} class(es)", failed
        )
    if not classes:
        raise EmptyStoreError("no class descriptor could be built")
    dim = extractor.dim
    background = BackgroundDescriptor(
        np.stack(background_members)
        if background_members
        else np.zeros((0, dim), dtype=np.float64)
    )
    store = DescriptorStore(
        dim=dim,
        metadata=StoreMetadata(
            extractor_id=extractor.backend_id,
            segmenter_id=segmenter.backend_id,
            built_at=built_at,
            config_hash=config_hash,
        ),
        background=background,
        classes=classes,
    )
    store.validate()
    return store


def extend_store(
    store: DescriptorStore,
    gallery: Gallery,
    segmenter: Segmenter,
    extractor: FeatureExtractor,
    *,
    allow_partial: bool = False,
    crop_margin: float = 0.1,
    crop_enabled: bool = True,
) -> DescriptorStore:
    """New store with the gallery's classes appended to an existing one.

    The incoming backends must match the ones the store was built with, and
    new class names must not collide with stored ones. The original store is
    left untouched.
    """
    if extractor.backend_id != store.metadata.extractor_id:
        raise StoreCompatibilityError(
            f"extractor {extractor.backend_id!r} does not match store's "
            f"{store.metadata.extractor_id!r}"
        )
    if segmenter.backend_id != store.metadata.segmenter_id:
        raise StoreCompatibilityError(
            f"segmenter {segmenter.backend_id!r} does not match store's "
            f"{store.metadata.segmenter_id!r}"
        )
    overlap = sorted(set(gallery.samples_by_class) & set(store.classes))
    if overlap:
        raise StoreCompatibilityError(f"classes already stored: {overlap}")

    classes = dict(store.classes)
    background_members = [
        store.background.members[i] for i in range(store.background.members.shape[0])
    ]
    failed: list[str] = []
    for name, samples in gallery.samples_by_class.items():
        try:
            descriptor, negatives = build_class_descriptor(
                name,
                samples,
                segmenter,
                extractor,
                crop_margin=crop_margin,
                crop_enabled=crop_enabled,
            )
        except DescriptorBuildError:
            failed.append(name)
            continue
        classes[name] = descriptor
        background_members.extend(negatives)
    if failed and not allow_partial:
        raise DescriptorBuildError(
            f"descriptor extension failed for {len(failed)} class(es)", failed
        )
    background = BackgroundDescriptor(
        np.stack(background_members)
        if background_members
        else np.zeros((0, store.dim), dtype=np.float64)
    )
    extended = DescriptorStore(
        dim=store.dim,
        metadata=replace(store.metadata),
        background=background,
        classes=classes,
    )
    extended.validate()
    return extended


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_store(store: DescriptorStore, path: str) -> None:
    """Write a store to .json (portable) or .npz (exact binary).

    JSON serializes floats via Python's shortest-round-trip repr, so both
    formats reload bit-identically.
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".json":
        _save_store_json(store, path)
    elif suffix == ".npz":
        _save_store_npz(store, path)
    else:
        raise ValueError(f"unsupported store suffix {suffix!r} (use .json or .npz)")


def load_store(path: str) -> DescriptorStore:
    suffix = os.path.splitext(path)[1].lower()
    if suffix == ".json":
        return _load_store_json(path)
    if suffix == ".npz":
        return _load_store_npz(path)
    raise ValueError(f"unsupported store suffix {suffix!r} (use .json or .npz)")


def _metadata_payload(store: DescriptorStore) -> dict:
    return {
        "extractor_id": store.metadata.extractor_id,
        "segmenter_id": store.metadata.segmenter_id,
        "built_at": store.metadata.built_at,
        "config_hash": store.metadata.config_hash,
    }


def _metadata_from_payload(payload: dict) -> StoreMetadata:
    return StoreMetadata(
        extractor_id=payload.get("extractor_id", ""),
        segmenter_id=payload.get("segmenter_id", ""),
        built_at=payload.get("built_at"),
        config_hash=payload.get("config_hash"),
    )


def _save_store_json(store: DescriptorStore, path: str) -> None:
    payload = {
        "version": store.version,
        "dim": store.dim,
        "metadata": _metadata_payload(store),
        "background": {"members": store.background.members.tolist()},
        "classes": {
            name: {
                "mean": desc.mean.tolist(),
                "members": desc.members.tolist(),
                "k_used": desc.k_used,
            }
            for name, desc in store.classes.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def _load_store_json(path: str) -> DescriptorStore:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise StoreCorruptError(f"store {path} is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise StoreCorruptError(f"store {path} has no top-level object")
    version = payload.get("version")
    if version != STORE_VERSION:
        raise StoreVersionError(
            f"store {path} has version {version!r}, expected {STORE_VERSION}"
        )
    try:
        dim = int(payload["dim"])
        metadata = _metadata_from_payload(payload.get("metadata", {}))
        bg_members = np.asarray(
            payload["background"]["members"], dtype=np.float64
        ).reshape(-1, dim)
        classes = {}
        for name, entry in payload["classes"].items():
            classes[name] = ClassDescriptor(
                class_name=name,
                mean=np.asarray(entry["mean"], dtype=np.float64),
                members=np.asarray(entry["members"], dtype=np.float64),
                k_used=int(entry.get("k_used", 0)),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise StoreCorruptError(f"store {path} is malformed: {exc}") from exc
    store = DescriptorStore(
        dim=dim,
        metadata=metadata,
        background=BackgroundDescriptor(bg_members),
        classes=classes,
    )
    _check_dims(store, path)
    return store


def _save_store_npz(store: DescriptorStore, path: str) -> None:
    meta = {
        "version": store.version,
        "dim": store.dim,
        "metadata": _metadata_payload(store),
        "class_order": list(store.classes),
        "k_used": {name: desc.k_used for name, desc in store.classes.items()},
    }
    arrays = {"background_members": store.background.members}
    for i, (name, desc) in enumerate(store.classes.items()):
        arrays[f"class_{i}_mean"] = desc.mean
        arrays[f"class_{i}_members"] = desc.members
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
             **arrays)


def _load_store_npz(path: str) -> DescriptorStore:
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"].tobytes()).decode("utf-8"))
            version = meta.get("version")
            if version != STORE_VERSION:
                raise StoreVersionError(
                    f"store {path} has version {version!r}, expected {STORE_VERSION}"
                )
            dim = int(meta["dim"])
            classes = {}
            for i, name in enumerate(meta["class_order"]):
                classes[name] = ClassDescriptor(
                    class_name=name,
                    mean=np.array(data[f"class_{i}_mean"], dtype=np.float64),
                    members=np.array(data[f"class_{i}_members"], dtype=np.float64),
                    k_used=int(meta["k_used"][name]),
                )
            background = BackgroundDescriptor(
                np.array(data["background_members"], dtype=np.float64).reshape(-1, dim)
            )
    except StoreVersionError:
        raise
    except Exception as exc:
        raise StoreCorruptError(f"store {path} is malformed: {exc}") from exc
    store = DescriptorStore(
        dim=dim,
        metadata=_metadata_from_payload(meta.get("metadata", {})),
        background=background,
        classes=classes,
    )
    _check_dims(store, path)
    return store


def _check_dims(store: DescriptorStore, path: str) -> None:
    for name, desc in store.classes.items():
        if desc.dim != store.dim or desc.members.shape[1] != store.dim:
            raise StoreCorruptError(
                f"store {path}: class {name!r} dim does not match store dim "
                f"{store.dim}"
            )
    if store.background.enabled and store.background.members.shape[1] != store.dim:
        raise StoreCorruptError(f"store {path}: background dim mismatch")
