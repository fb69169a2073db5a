"""Pluggable model backends and the offline stub suite.

The pipeline is written against small Protocols so real segmenters,
feature extractors, LLM material oracles, detector proposal heads and
RGB relevance filters can be dropped in. The stubs implement the same
contracts with cheap deterministic image statistics, which keeps the
entire pipeline runnable (and testable) without weights or network.

Every backend exposes a stable ``backend_id`` string that includes its
semantically relevant parameters; descriptor stores record these ids and
refuse to mix incompatible ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

from . import _kernels
from .types import BinaryMask, ImageTensor, PatchGrid, Proposal, normalize_class_name


@runtime_checkable
class Segmenter(Protocol):
    """Foreground/background segmentation of a single object image."""

    backend_id: str

    def segment(self, image: ImageTensor) -> BinaryMask: ...


@runtime_checkable
class FeatureExtractor(Protocol):
    """Dense patch-grid embedding of an image."""

    backend_id: str
    dim: int

    def extract_grid(self, image: ImageTensor) -> PatchGrid: ...


@runtime_checkable
class MaterialOracle(Protocol):
    """Maps class names to material names; may omit classes it cannot place."""

    backend_id: str

    def assign(self, class_names: list[str]) -> dict[str, object]: ...


@runtime_checkable
class ProposalSource(Protocol):
    """Produces class-agnostic region proposals with pooled features."""

    backend_id: str

    def propose(self, image: ImageTensor) -> list[Proposal]: ...


@runtime_checkable
class RgbFilter(Protocol):
    """Scores how confidently an RGB image shows the intended object."""

    backend_id: str

    def confidence(self, image: ImageTensor) -> float: ...


# ---------------------------------------------------------------------------
# stubs
# ---------------------------------------------------------------------------


class StubSegmenter:
    """Thresholds brightness: anything darker than near-white is foreground.

    Both the synthetic X-ray fixtures and the transferred web images sit on
    white backgrounds, so this is exact on them.
    """

    def __init__(self, cutoff: float = 0.9):
        if not 0.0 < cutoff <= 1.0:
            raise ValueError("cutoff must lie in (0, 1]")
        self.cutoff = float(cutoff)
        self.backend_id = f"stub-segmenter/cutoff={self.cutoff:g}"

    def segment(self, image: ImageTensor) -> BinaryMask:
        brightness = image.pixels.mean(axis=2)
        return BinaryMask((brightness < self.cutoff).astype(np.uint8))


class StubExtractor:
    """Patch color statistics as an 8-d embedding.

    Channels: mean RGB, per-channel std, and the patch center in normalized
    image coordinates. ``dim`` above 8 zero-pads, which is how tests fabricate
    dimension mismatches.
    """

    def __init__(self, patch: int = 8, dim: int = 8):
        if patch < 1:
            raise ValueError("patch must be >= 1")
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.patch = int(patch)
        self.dim = int(dim)
        self.backend_id = f"stub-extractor/patch={self.patch}/dim={self.dim}"

    def extract_grid(self, image: ImageTensor) -> PatchGrid:
        stats = _kernels.patch_color_stats(image.pixels, self.patch)
        if self.dim > 8:
            pad = np.zeros(stats.shape[:2] + (self.dim - 8,), dtype=np.float64)
            stats = np.concatenate([stats, pad], axis=2)
        return PatchGrid(stats)


_DEFAULT_MATERIAL_TABLE = {
    "gun": "metal",
    "knife": "metal",
    "fork": "metal",
    "hammer": "metal",
    "wrench": "metal",
    "boot": "leather",
    "belt": "leather",
    "violin": "wood",
    "apple": "organic",
    "banana": "organic",
    "tablet": "inorganic",
    "phone": "inorganic",
    "bottle": "inorganic",
}


class StubMaterialOracle:
    """Table lookup standing in for an LLM material query.

    Unknown classes get ``default_material``; with ``default_material=None``
    they are omitted from the result, which exercises the caller's repair
    path the way a real model's partial answer would.
    """

    def __init__(self, table: Optional[dict[str, str]] = None,
                 default_material: Optional[str] = "inorganic"):
        self.table = dict(_DEFAULT_MATERIAL_TABLE if table is None else table)
        self.default_material = default_material
        self.backend_id = "stub-material-oracle"

    def assign(self, class_names: list[str]) -> dict[str, object]:
        out: dict[str, object] = {}
        for name in class_names:
            key = normalize_class_name(name)
            if key in self.table:
                out[name] = self.table[key]
            elif self.default_material is not None:
                out[name] = self.default_material
        return out


class ScriptedMaterialOracle:
    """Returns a fixed payload verbatim, malformed entries included."""

    def __init__(self, payload: dict[str, object]):
        self.payload = dict(payload)
        self.backend_id = "scripted-material-oracle"

    def assign(self, class_names: list[str]) -> dict[str, object]:
        return dict(self.payload)


class GridProposalSource:
    """Sliding-window proposals pooled from the extractor's patch grid.

    Window positions step by ``stride``; the final row/column snaps to the
    image edge so coverage is complete. The pooled feature is the mean of
    the grid cells whose centers fall inside the window. No suppression or
    scoring is applied; every window becomes a proposal.
    """

    def __init__(self, extractor: FeatureExtractor, window: int = 32, stride: int = 32):
        if window < 1 or stride < 1:
            raise ValueError("window and stride must be >= 1")
        self.extractor = extractor
        self.window = int(window)
        self.stride = int(stride)
        self.backend_id = (
            f"grid-proposals/window={self.window}/stride={self.stride}"
            f"@{extractor.backend_id}"
        )

    @staticmethod
    def _positions(extent: int, window: int, stride: int) -> list[int]:
        last = extent - window
        positions = list(range(0, last + 1, stride))
        if positions[-1] != last:
            positions.append(last)
        return positions

    def propose(self, image: ImageTensor) -> list[Proposal]:
        height, width = image.height, image.width
        if self.window > min(height, width):
            raise ValueError(
                f"window {self.window} exceeds image extent {min(height, width)}"
            )
        grid = self.extractor.extract_grid(image)
        # Cell centers in pixel space; the stub extractor's ceil-division
        # patching makes edge cells smaller, so centers are computed from
        # the actual covered ranges.
        patch = getattr(self.extractor, "patch", None)
        if patch is None:
            # Generic fallback: assume cells evenly partition the image.
            row_centers = (np.arange(grid.grid_h) + 0.5) * height / grid.grid_h
            col_centers = (np.arange(grid.grid_w) + 0.5) * width / grid.grid_w
        else:
            row_centers = np.array(
                [(i * patch + min((i + 1) * patch, height)) / 2.0
                 for i in range(grid.grid_h)]
            )
            col_centers = np.array(
                [(j * patch + min((j + 1) * patch, width)) / 2.0
                 for j in range(grid.grid_w)]
            )
        proposals = []
        for y1 in self._positions(height, self.window, self.stride):
            rows = np.nonzero(
                (row_centers >= y1) & (row_centers < y1 + self.window)
            )[0]
            if rows.size == 0:
                rows = np.array([np.argmin(np.abs(row_centers - (y1 + self.window / 2)))])
            for x1 in self._positions(width, self.window, self.stride):
                cols = np.nonzero(
                    (col_centers >= x1) & (col_centers < x1 + self.window)
                )[0]
                if cols.size == 0:
                    cols = np.array(
                        [np.argmin(np.abs(col_centers - (x1 + self.window / 2)))]
                    )
                cells = grid.features[np.ix_(rows, cols)].reshape(-1, grid.dim)
                feature = cells.mean(axis=0)
                if float(np.dot(feature, feature)) == 0.0:
                    # All-zero pooled feature cannot be scored by cosine.
                    continue
                proposals.append(
                    Proposal(
                        feature=feature,
                        box=(float(x1), float(y1),
                             float(x1 + self.window), float(y1 + self.window)),
                    )
                )
        return proposals


class StubRgbFilter:
    """Confidence = foreground fraction under the stub segmenter.

    A stand-in for CLIP-style relevance scoring: web images that mostly show
    the object segment large, off-topic or busy ones segment small.
    """

    def __init__(self, segmenter: Optional[Segmenter] = None):
        self.segmenter = segmenter if segmenter is not None else StubSegmenter()
        self.backend_id = f"stub-rgb-filter@{self.segmenter.backend_id}"

    def confidence(self, image: ImageTensor) -> float:
        return self.segmenter.segment(image).foreground_fraction()


# ---------------------------------------------------------------------------
# bundle and registry
# ---------------------------------------------------------------------------


@dataclass
class BackendBundle:
    segmenter: Segmenter
    extractor: FeatureExtractor
    material_oracle: MaterialOracle
    proposal_source: ProposalSource
    rgb_filter: RgbFilter


SEGMENTERS: dict[str, Callable[..., Segmenter]] = {"stub": StubSegmenter}
EXTRACTORS: dict[str, Callable[..., FeatureExtractor]] = {"stub": StubExtractor}
MATERIAL_ORACLES: dict[str, Callable[..., MaterialOracle]] = {
    "stub": StubMaterialOracle,
}
RGB_FILTERS: dict[str, Callable[..., RgbFilter]] = {"stub": StubRgbFilter}


def _pick(registry: dict, kind: str, name: str):
    if name not in registry:
        known = ", ".join(sorted(registry))
        raise ValueError(f"unknown {kind} backend {name!r} (have: {known})")
    return registry[name]


def build_bundle(
    segmenter: str = "stub",
    extractor: str = "stub",
    material_oracle: str = "stub",
    proposal_source: str = "grid",
    rgb_filter: str = "stub",
    *,
    segmenter_cutoff: float = 0.9,
    patch_size: int = 8,
    feature_dim: int = 8,
    window: int = 32,
    stride: int = 32,
) -> BackendBundle:
    """Assemble a bundle from registry names plus stub parameters."""
    seg = _pick(SEGMENTERS, "segmenter", segmenter)(cutoff=segmenter_cutoff)
    ext = _pick(EXTRACTORS, "extractor", extractor)(patch=patch_size, dim=feature_dim)
    oracle = _pick(MATERIAL_ORACLES, "material_oracle", material_oracle)()
    if proposal_source != "grid":
        raise ValueError(f"unknown proposal_source backend {proposal_source!r}")
    proposals = GridProposalSource(ext, window=window, stride=stride)
    rgb = _pick(RGB_FILTERS, "rgb_filter", rgb_filter)(segmenter=seg)
    return BackendBundle(
        segmenter=seg,
        extractor=ext,
        material_oracle=oracle,
        proposal_source=proposals,
        rgb_filter=rgb,
    )
