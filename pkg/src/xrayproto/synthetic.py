"""Deterministic micro-dataset generator for the offline benchmark.

Three object classes, each tied to a material and a dark, well-separated
pseudo-color: hammers (metal, blue), apples (organic, red), tablets
(inorganic, green). Objects are solid squares whose edges align with the
stub extractor's 4px patch grid, so gallery prototypes come out as pure
color vectors and the sliding-window features over test scenes match them
almost exactly; color is deliberately the only class signal, mirroring how
scanner pseudo-coloring works.

Geometry is chosen around the pooling math: test objects exactly fill one
32px tile of the aligned window grid (windows over objects see pure color,
windows next to them see pure white), and train crops keep a white ring
around the object so every sample also contributes background prototypes.
Web fixtures are the same squares in natural RGB colors with whole patch
cells knocked out, plus undersized images the relevance filter must drop.

Everything derives from one seeded generator, so a given (root, seed) pair
always produces byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .imageio import save_image
from .types import ImageTensor

MICRO_CLASSES = ("apple", "hammer", "tablet")

CLASS_MATERIALS = {"apple": "organic", "hammer": "metal", "tablet": "inorganic"}

# Near-primary colors: almost orthogonal to each other and at a wide angle
# from white, so window features separate cleanly from both the other
# classes and the background pool at every tile position.
CLASS_COLORS = {
    "apple": (0.85, 0.05, 0.05),
    "hammer": (0.05, 0.05, 0.85),
    "tablet": (0.05, 0.85, 0.05),
}

WEB_NATURAL_COLORS = {
    "apple": (0.85, 0.12, 0.10),
    "hammer": (0.45, 0.30, 0.20),
    "tablet": (0.20, 0.20, 0.25),
    "violin": (0.55, 0.33, 0.14),
}

# Web class with no detection annotations at all: exercises the web-only
# gallery branch and the unknown-material repair (violin -> wood).
WEB_ONLY_CLASSES = ("violin",)

# Patch size the alignment is designed for; run configs should match it.
MICRO_PATCH = 4

# Train object sizes where the 10% crop margin floors/ceils to exactly one
# 4px patch cell on every side, keeping crop cells either pure object or
# pure white for any integer placement.
TRAIN_SIZES = (32, 36, 40)


def _mask_box(size: int, top: int, left: int) -> tuple[float, float, float, float]:
    return (float(left), float(top), float(left + size), float(top + size))


def _paint_square(canvas: np.ndarray, size: int, top: int, left: int, color) -> None:
    canvas[top:top + size, left:left + size] = np.asarray(color, dtype=np.float64)


def _jitter(color, rng: np.random.Generator, amount: float = 0.02):
    jittered = np.asarray(color, dtype=np.float64) + rng.uniform(
        -amount, amount, size=3
    )
    return np.clip(jittered, 0.0, 1.0)


@dataclass
class MicroDataset:
    root: str
    index_path: str
    web_root: str
    classes: tuple[str, ...] = MICRO_CLASSES
    scene_size: int = 128
    tile: int = 32
    patch: int = MICRO_PATCH
    entries: list[dict] = field(default_factory=list)


def make_micro_dataset(
    root: str,
    *,
    seed: int = 0,
    n_train: int = 30,
    n_scenes: int = 20,
    train_size: int = 64,
    scene_size: int = 128,
    tile: int = 32,
    n_web: int = 12,
    web_hole_rate: float = 0.1,
) -> MicroDataset:
    """Write the micro-dataset under ``root`` and return its layout."""
    rng = np.random.default_rng(seed)
    os.makedirs(root, exist_ok=True)
    entries: list[dict] = []

    # Train fixtures: one centered square per image, color jittered per
    # image so the learned material appearance is a real mean, not a copy.
    for class_name in MICRO_CLASSES:
        for i in range(n_train):
            size = int(rng.choice(TRAIN_SIZES))
            top = (train_size - size) // 2 + int(rng.integers(-2, 3))
            left = (train_size - size) // 2 + int(rng.integers(-2, 3))
            canvas = np.ones((train_size, train_size, 3), dtype=np.float64)
            color = _jitter(CLASS_COLORS[class_name], rng)
            _paint_square(canvas, size, top, left, color)
            rel = os.path.join("train", class_name, f"fix_{i:03d}.png")
            save_image(ImageTensor(canvas), os.path.join(root, rel))
            entries.append(
                {
                    "image_path": rel,
                    "split": "train",
                    "objects": [
                        {
                            "class": class_name,
                            "box": list(_mask_box(size, top, left)),
                            "visible": True,
                        }
                    ],
                }
            )

    # Test scenes: each object exactly fills a distinct tile of the aligned
    # window grid, so the pooled window feature is a pure jittered color.
    grid = scene_size // tile
    class_bag = list(MICRO_CLASSES)
    rng.shuffle(class_bag)
    counter = 0
    for i in range(n_scenes):
        canvas = np.ones((scene_size, scene_size, 3), dtype=np.float64)
        n_objects = int(rng.integers(1, 4))
        tiles = rng.choice(grid * grid, size=n_objects, replace=False)
        objects = []
        for t in sorted(int(v) for v in tiles):
            class_name = class_bag[counter % len(class_bag)]
            counter += 1
            top = (t // grid) * tile
            left = (t % grid) * tile
            color = _jitter(CLASS_COLORS[class_name], rng)
            _paint_square(canvas, tile, top, left, color)
            objects.append(
                {
                    "class": class_name,
                    "box": list(_mask_box(tile, top, left)),
                    "visible": True,
                }
            )
        rel = os.path.join("scenes", f"scene_{i:03d}.png")
        save_image(ImageTensor(canvas), os.path.join(root, rel))
        entries.append({"image_path": rel, "split": "test", "objects": objects})

    index_path = os.path.join(root, "index.jsonl")
    with open(index_path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry))
            fh.write("\n")

    web_root = os.path.join(root, "web")
    _write_web_fixtures(
        web_root,
        rng,
        image_size=train_size,
        n_web=n_web,
        hole_rate=web_hole_rate,
    )

    return MicroDataset(
        root=root,
        index_path=index_path,
        web_root=web_root,
        scene_size=scene_size,
        tile=tile,
        entries=entries,
    )


def _write_web_fixtures(
    web_root: str,
    rng: np.random.Generator,
    *,
    image_size: int,
    n_web: int,
    hole_rate: float,
) -> None:
    """Natural-color web photos: large holed squares plus small rejects.

    Holes are whole 4px patch cells, which degrades the pixels without
    polluting the mask-pooled prototypes. The 48px squares hover right at
    the relevance cutoff (some pass, some fail per the seeded holes); the
    56px ones stay safely above it; the 16px ones always fail.
    """
    reject_indices = {0, 7}
    for class_name in (*MICRO_CLASSES, *WEB_ONLY_CLASSES):
        color = WEB_NATURAL_COLORS[class_name]
        folder = os.path.join(web_root, class_name)
        for i in range(n_web + len(reject_indices)):
            canvas = np.ones((image_size, image_size, 3), dtype=np.float64)
            if i in reject_indices:
                size = 16  # far below the relevance cutoff
                offset = (image_size - size) // 2
                _paint_square(canvas, size, offset, offset, color)
            else:
                size = 48 if i % 2 else 56
                offset = (image_size - size) // 2  # 8 or 4: patch aligned
                cells = size // MICRO_PATCH
                keep = rng.random((cells, cells)) >= hole_rate
                block = np.repeat(
                    np.repeat(keep, MICRO_PATCH, axis=0), MICRO_PATCH, axis=1
                )
                region = canvas[offset:offset + size, offset:offset + size]
                region[block] = np.asarray(color, dtype=np.float64)
            save_image(
                ImageTensor(canvas), os.path.join(folder, f"web_{i:02d}.png")
            )


def write_micro_config(
    path: str,
    dataset: MicroDataset,
    *,
    store_path: str = "",
    report_dir: str = "",
    k: int = 30,
    sigma: float = 0.15,
    tau: float = 0.5,
) -> str:
    """Emit a TOML run config pointing at a generated micro-dataset."""
    store = store_path or os.path.join(dataset.root, "store.json")
    reports = report_dir or os.path.join(dataset.root, "reports")
    # Paths in the file are resolved against the config's own directory,
    # so relativize them here to keep the dataset relocatable.
    parent = os.path.dirname(os.path.abspath(path))
    rel = lambda p: os.path.relpath(os.path.abspath(p), parent)
    text = "\n".join(
        [
            "[paths]",
            f'index = "{rel(dataset.index_path)}"',
            f'web_fixtures = "{rel(dataset.web_root)}"',
            f'store = "{rel(store)}"',
            f'reports = "{rel(reports)}"',
            "",
            "[backends]",
            'segmenter = "stub"',
            'extractor = "stub"',
            'material_oracle = "stub"',
            'proposal_source = "grid"',
            'rgb_filter = "stub"',
            "",
            "[options]",
            f"k = {k}",
            f"sigma = {sigma}",
            f"tau = {tau}",
            f"window = {dataset.tile}",
            f"stride = {dataset.tile}",
            f"patch_size = {dataset.patch}",
            "feature_dim = 8",
            "in_house_fraction = 1.0",
            "seed = 0",
            "",
        ]
    )
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path
