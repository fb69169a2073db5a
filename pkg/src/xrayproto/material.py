"""Material appearance: learning pseudo-colors and transferring them.

X-ray scanners pseudo-color objects by material, not by surface texture.
To make web RGB photos look like scanner output we learn, per material, the
average foreground color of real X-ray crops, then paint segmented web
objects flat with that color. When no real X-ray data exists at all, a
small fixed palette over three coarse material groups stands in.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .backends import MaterialOracle, Segmenter
from .errors import DegenerateMaterialError, MaterialOracleError
from .types import BinaryMask, ImageTensor, normalize_class_name

Color = tuple[float, float, float]

DEFAULT_MATERIAL_NAME = "inorganic"

# Palette used when no X-ray imagery is available to learn from: warm orange
# for organics, green for inorganics, blue for metals, matching scanner
# conventions.
DEFAULT_FALLBACK_COLORS: dict[str, Color] = {
    "organic": (0.95, 0.55, 0.15),
    "inorganic": (0.20, 0.70, 0.30),
    "metal": (0.15, 0.35, 0.80),
}

# Collapses fine-grained material names onto the fallback palette's three
# coarse groups. Anything unrecognized counts as inorganic.
COARSE_MATERIAL_MAP: dict[str, str] = {
    "metal": "metal",
    "steel": "metal",
    "iron": "metal",
    "aluminum": "metal",
    "organic": "organic",
    "wood": "organic",
    "leather": "organic",
    "food": "organic",
    "fabric": "organic",
    "paper": "organic",
    "rubber": "organic",
    "inorganic": "inorganic",
    "plastic": "inorganic",
    "glass": "inorganic",
    "ceramic": "inorganic",
    "electronics": "inorganic",
}


@dataclass(frozen=True)
class MaterialAppearance:
    """A material's learned pseudo-color and how many images informed it."""

    name: str
    color: Color
    support: int = 0

    def __post_init__(self):
        color = tuple(float(c) for c in self.color)
        if len(color) != 3 or any(not 0.0 <= c <= 1.0 for c in color):
            raise ValueError(f"color must be three values in [0, 1], got {self.color}")
        if self.support < 0:
            raise ValueError("support must be >= 0")
        object.__setattr__(self, "color", color)


@dataclass
class MaterialDatabase:
    """Materials with appearances plus the class-to-material assignment."""

    materials: dict[str, MaterialAppearance]
    assignments: dict[str, str] = field(default_factory=dict)
    version: int = 1

    def __post_init__(self):
        if not self.materials:
            raise ValueError("a material database needs at least one material")
        for cls, mat in self.assignments.items():
            if mat not in self.materials:
                raise ValueError(f"class {cls!r} assigned to unknown material {mat!r}")

    @property
    def default_material(self) -> str:
        """Repair target for broken assignments: inorganic when present,
        otherwise the lexicographically first material."""
        if DEFAULT_MATERIAL_NAME in self.materials:
            return DEFAULT_MATERIAL_NAME
        return min(self.materials)

    def clusters(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {name: [] for name in self.materials}
        for cls in sorted(self.assignments):
            out[self.assignments[cls]].append(cls)
        return out

    def lookup(self, class_name: str) -> MaterialAppearance:
        material = self.assignments[class_name]  # KeyError for unknown class
        return self.materials[material]


def parse_assignments(
    raw: dict[str, object],
    class_names: list[str],
    *,
    default_material: str = DEFAULT_MATERIAL_NAME,
) -> dict[str, str]:
    """Validate an oracle payload into a total class-to-material map.

    Classes the oracle omitted fall back to ``default_material``; entries
    that are not non-empty strings mean the payload itself is broken, so the
    whole response is rejected with the payload attached for debugging.
    """
    bad = {
        name: raw[name]
        for name in class_names
        if name in raw and (not isinstance(raw[name], str) or not raw[name].strip())
    }
    if bad:
        raise MaterialOracleError(
            f"material oracle returned unparseable assignments for {sorted(bad)}",
            payload=raw,
        )
    out: dict[str, str] = {}
    for name in class_names:
        if name in out:
            continue
        value = raw.get(name)
        out[name] = normalize_class_name(value) if value else default_material
    return out


def cluster_materials(
    class_names: list[str],
    oracle: MaterialOracle,
    *,
    default_material: str = DEFAULT_MATERIAL_NAME,
) -> dict[str, str]:
    """Ask the oracle to place every class, repairing omissions."""
    unique = list(dict.fromkeys(class_names))
    raw = oracle.assign(unique)
    return parse_assignments(raw, unique, default_material=default_material)


def compute_appearance(
    images: list[ImageTensor],
    masks: list[BinaryMask],
    material_name: str = "",
) -> tuple[Color, int]:
    """Mean-of-means foreground color over the images that have foreground.

    Each image contributes the mean color of its masked pixels; images whose
    mask is empty are skipped. All-empty input is degenerate: there is
    nothing to learn a color from.
    """
    if len(images) != len(masks):
        raise ValueError("images and masks must pair up")
    per_image = []
    for image, mask in zip(images, masks):
        if (image.height, image.width) != (mask.height, mask.width):
            raise ValueError("image and mask dims differ")
        selected = image.pixels[mask.values == 1]
        if selected.shape[0] == 0:
            continue
        per_image.append(selected.mean(axis=0))
    if not per_image:
        raise DegenerateMaterialError(
            f"no image contributed foreground for material {material_name or '?'}"
        )
    mean = np.mean(np.stack(per_image), axis=0)
    color = tuple(float(np.clip(c, 0.0, 1.0)) for c in mean)
    return color, len(per_image)


def fallback_material_db(
    assignments: dict[str, str],
    *,
    colors: Optional[dict[str, Color]] = None,
) -> MaterialDatabase:
    """Fixed-palette database for the no-X-ray-data regime.

    Fine material names are collapsed onto the palette's coarse groups via
    COARSE_MATERIAL_MAP (unknown names count as inorganic).
    """
    palette = DEFAULT_FALLBACK_COLORS if colors is None else colors
    materials = {
        name: MaterialAppearance(name=name, color=color, support=0)
        for name, color in palette.items()
    }
    coarse = {}
    for cls, mat in assignments.items():
        mapped = COARSE_MATERIAL_MAP.get(normalize_class_name(mat), DEFAULT_MATERIAL_NAME)
        if mapped not in materials:
            mapped = min(materials)
        coarse[cls] = mapped
    return MaterialDatabase(materials=materials, assignments=coarse)


def build_material_db(
    assignments: dict[str, str],
    images_by_class: dict[str, list[ImageTensor]],
    segmenter: Segmenter,
    *,
    fallback_colors: Optional[dict[str, Color]] = None,
) -> MaterialDatabase:
    """Learn per-material appearances from real X-ray class images.

    Classes sharing a material pool their images. Materials that end up with
    no usable foreground are dropped and their classes repaired onto the
    database default. With no images at all there is nothing to learn, so
    the fixed fallback palette is used instead.
    """
    if not any(images_by_class.get(cls) for cls in assignments):
        return fallback_material_db(assignments, colors=fallback_colors)

    by_material: dict[str, list[str]] = {}
    for cls, mat in assignments.items():
        by_material.setdefault(mat, []).append(cls)

    materials: dict[str, MaterialAppearance] = {}
    dropped: list[str] = []
    for mat in sorted(by_material):
        images: list[ImageTensor] = []
        masks: list[BinaryMask] = []
        for cls in by_material[mat]:
            for image in images_by_class.get(cls, []):
                images.append(image)
                masks.append(segmenter.segment(image))
        try:
            color, support = compute_appearance(images, masks, mat)
        except DegenerateMaterialError:
            dropped.append(mat)
            continue
        materials[mat] = MaterialAppearance(name=mat, color=color, support=support)

    if not materials:
        return fallback_material_db(assignments, colors=fallback_colors)

    db = MaterialDatabase(materials=materials, assignments={})
    repaired = {}
    for cls, mat in assignments.items():
        repaired[cls] = mat if mat in materials else db.default_material
    return MaterialDatabase(materials=materials, assignments=repaired)


def assign_material(
    db: MaterialDatabase,
    class_name: str,
    oracle: Optional[MaterialOracle] = None,
) -> str:
    """Material for one class, querying the oracle for unseen classes.

    Oracle answers naming materials the database does not know (or missing
    or malformed answers) repair to the database default. The result is
    cached on the database so repeated lookups stay stable.
    """
    if class_name in db.assignments:
        return db.assignments[class_name]
    material = db.default_material
    if oracle is not None:
        raw = oracle.assign([class_name])
        value = raw.get(class_name)
        if isinstance(value, str) and value.strip():
            candidate = normalize_class_name(value)
            if candidate in db.materials:
                material = candidate
    return db.assignments.setdefault(class_name, material)


def transfer(
    image: ImageTensor,
    mask: BinaryMask,
    color: Color,
    *,
    background_fill: Optional[Color] = (1.0, 1.0, 1.0),
) -> ImageTensor:
    """Paint the masked object flat with the material color.

    Background pixels become ``background_fill`` (white by default, matching
    uncluttered scanner belts); pass (0, 0, 0) or None for the strict
    zeroed-background form.
    """
    if (image.height, image.width) != (mask.height, mask.width):
        raise ValueError("image and mask dims differ")
    fill = (0.0, 0.0, 0.0) if background_fill is None else background_fill
    out = np.empty_like(image.pixels)
    out[:, :] = np.asarray(fill, dtype=np.float64)
    out[mask.values == 1] = np.asarray(color, dtype=np.float64)
    return ImageTensor(out)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_material_db(db: MaterialDatabase, path: str) -> None:
    payload = {
        "version": db.version,
        "materials": {
            name: {"color": list(m.color), "support": m.support}
            for name, m in sorted(db.materials.items())
        },
        "clusters": db.clusters(),
        "assignments": dict(sorted(db.assignments.items())),
    }
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_material_db(path: str) -> MaterialDatabase:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != 1:
        raise ValueError(f"unsupported material database version {version!r}")
    materials = {
        name: MaterialAppearance(
            name=name,
            color=tuple(entry["color"]),
            support=int(entry.get("support", 0)),
        )
        for name, entry in payload.get("materials", {}).items()
    }
    # Clusters are stored for human inspection; assignments are the source
    # of truth on load.
    return MaterialDatabase(
        materials=materials,
        assignments=dict(payload.get("assignments", {})),
        version=1,
    )
