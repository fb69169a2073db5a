"""Gallery acquisition: dataset manifests, in-house retrieval, web fallback.

Per-class visual galleries come from two sources, tried in order. Classes
with annotated X-ray imagery in the training split use those crops directly.
Everything else falls back to web RGB photos that are relevance-filtered,
segmented, and repainted with the class material's X-ray pseudo-color so
they resemble scanner output. Classes that yield nothing from either source
are flagged, not silently dropped.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, runtime_checkable
from urllib.parse import urlencode

import numpy as np

from .backends import RgbFilter, Segmenter
from .errors import WebRetrievalError
from .imageio import load_image
from .material import MaterialDatabase, MaterialOracle, assign_material, transfer
from .types import (
    BACKGROUND_NAME,
    Box,
    GallerySample,
    ImageTensor,
    normalize_class_name,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# dataset manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotatedObject:
    class_name: str
    box: Box
    visible: bool = True

    def __post_init__(self):
        box = tuple(float(v) for v in self.box)
        x1, y1, x2, y2 = box
        if not (x2 > x1 and y2 > y1):
            raise ValueError(f"annotation box must be well-ordered, got {self.box}")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "class_name", normalize_class_name(self.class_name))


@dataclass(frozen=True)
class IndexEntry:
    image_path: str
    split: str
    objects: tuple[AnnotatedObject, ...]

    def classes(self, visible_only: bool = True) -> list[str]:
        names = {
            obj.class_name
            for obj in self.objects
            if obj.visible or not visible_only
        }
        return sorted(names)


@dataclass
class DatasetIndex:
    """All annotated images of a dataset, as read from a JSONL manifest."""

    entries: list[IndexEntry] = field(default_factory=list)

    @classmethod
    def from_jsonl(cls, path: str) -> "DatasetIndex":
        base_dir = os.path.dirname(os.path.abspath(path))
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
                entries.append(_entry_from_record(record, base_dir, f"{path}:{line_no}"))
        return cls(entries=entries)

    def for_split(self, split: str) -> "DatasetIndex":
        return DatasetIndex([e for e in self.entries if e.split == split])

    def vocabulary(self, split: Optional[str] = None,
                   visible_only: bool = True) -> list[str]:
        names: set[str] = set()
        for entry in self.entries:
            if split is not None and entry.split != split:
                continue
            names.update(entry.classes(visible_only=visible_only))
        return sorted(names)

    def images_for_class(self, class_name: str, split: Optional[str] = "train",
                         visible_only: bool = True) -> list[IndexEntry]:
        wanted = normalize_class_name(class_name)
        out = []
        for entry in self.entries:
            if split is not None and entry.split != split:
                continue
            for obj in entry.objects:
                if obj.class_name == wanted and (obj.visible or not visible_only):
                    out.append(entry)
                    break
        return out


def _entry_from_record(record: dict, base_dir: str, where: str) -> IndexEntry:
    try:
        image_path = record["image_path"]
        split = record.get("split", "train")
        objects = []
        for obj in record.get("objects", []):
            objects.append(
                AnnotatedObject(
                    class_name=obj["class"],
                    box=tuple(obj["box"]),
                    visible=bool(obj.get("visible", True)),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{where}: malformed manifest record: {exc}") from exc
    if not os.path.isabs(image_path):
        image_path = os.path.join(base_dir, image_path)
    return IndexEntry(image_path=image_path, split=split, objects=tuple(objects))


def restrict_index(index: DatasetIndex, class_names: list[str]) -> DatasetIndex:
    """Keep only annotations of the given classes; drop emptied images."""
    wanted = {normalize_class_name(c) for c in class_names}
    entries = []
    for entry in index.entries:
        objects = tuple(o for o in entry.objects if o.class_name in wanted)
        if objects:
            entries.append(
                IndexEntry(entry.image_path, entry.split, objects)
            )
    return DatasetIndex(entries)


def union_box(boxes: list[Box]) -> Box:
    if not boxes:
        raise ValueError("union_box needs at least one box")
    arr = np.asarray(boxes, dtype=np.float64)
    return (
        float(arr[:, 0].min()),
        float(arr[:, 1].min()),
        float(arr[:, 2].max()),
        float(arr[:, 3].max()),
    )


# ---------------------------------------------------------------------------
# in-house retrieval
# ---------------------------------------------------------------------------


def retrieve_in_house(
    index: DatasetIndex,
    class_name: str,
    *,
    split: str = "train",
    max_samples: Optional[int] = None,
    visible_only: bool = True,
) -> list[GallerySample]:
    """X-ray gallery samples for one class, in manifest order.

    Images that fail to load are skipped with a warning rather than failing
    the whole class. Each sample carries the union box of that class's
    visible annotations so later stages can crop to the object region.
    """
    wanted = normalize_class_name(class_name)
    samples: list[GallerySample] = []
    for entry in index.images_for_class(wanted, split=split, visible_only=visible_only):
        if max_samples is not None and len(samples) >= max_samples:
            break
        boxes = [
            obj.box
            for obj in entry.objects
            if obj.class_name == wanted and (obj.visible or not visible_only)
        ]
        try:
            image = load_image(entry.image_path)
        except IOError as exc:
            logger.warning("skipping unreadable gallery image: %s", exc)
            continue
        samples.append(
            GallerySample(
                image=image,
                class_name=wanted,
                provenance="in_house",
                source_id=entry.image_path,
                box=union_box(boxes),
            )
        )
    return samples


# ---------------------------------------------------------------------------
# web retrieval
# ---------------------------------------------------------------------------


@runtime_checkable
class WebClient(Protocol):
    """Fetches candidate RGB photos for a class name."""

    backend_id: str

    def search(self, class_name: str, count: int) -> list[tuple[str, ImageTensor]]: ...


class FixtureWebClient:
    """Serves web results from a local directory tree (one dir per class).

    The directory name is the normalized class name with spaces replaced by
    underscores. A missing directory yields an empty result with a warning;
    unreadable files inside an existing directory are dropped the same way.
    """

    def __init__(self, root: str):
        self.root = root
        self.backend_id = f"fixture-web-client@{root}"

    @staticmethod
    def slug(class_name: str) -> str:
        return normalize_class_name(class_name).replace(" ", "_")

    def search(self, class_name: str, count: int) -> list[tuple[str, ImageTensor]]:
        folder = os.path.join(self.root, self.slug(class_name))
        if not os.path.isdir(folder):
            logger.warning("no web fixtures for class %r under %s", class_name, self.root)
            return []
        results: list[tuple[str, ImageTensor]] = []
        for name in sorted(os.listdir(folder)):
            if len(results) >= count:
                break
            path = os.path.join(folder, name)
            if not os.path.isfile(path):
                continue
            try:
                results.append((path, load_image(path)))
            except IOError as exc:
                logger.warning("dropping unreadable web fixture: %s", exc)
        return results


# Query parameterization for image search: photos only, jpg or png, English
# results, restricted to the last seven years.
LIVE_SEARCH_PARAMS = {
    "searchType": "image",
    "imgType": "photo",
    "fileType": "jpg|png",
    "lr": "lang_en",
    "dateRestrict": "y7",
}

API_KEY_ENV = "XRAYPROTO_SEARCH_API_KEY"


class LiveWebClient:
    """Image-search client for real web acquisition.

    The API key comes from the XRAYPROTO_SEARCH_API_KEY environment variable;
    the HTTP function is injectable so the client can be exercised offline.
    Any transport or decode failure surfaces as WebRetrievalError for the
    class being fetched.
    """

    def __init__(
        self,
        endpoint: str = "https://www.googleapis.com/customsearch/v1",
        engine_id: str = "",
        api_key: Optional[str] = None,
        http_get: Optional[Callable[[str], bytes]] = None,
        query_template: str = "a photo of a {class_name}",
    ):
        self.endpoint = endpoint
        self.engine_id = engine_id
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.http_get = http_get if http_get is not None else self._default_http_get
        self.query_template = query_template
        self.backend_id = f"live-web-client@{endpoint}"

    @staticmethod
    def _default_http_get(url: str) -> bytes:  # pragma: no cover - network
        from urllib.request import urlopen

        with urlopen(url, timeout=30) as resp:
            return resp.read()

    def search_url(self, class_name: str, count: int) -> str:
        params = dict(LIVE_SEARCH_PARAMS)
        params.update(
            {
                "q": self.query_template.format(class_name=class_name),
                "num": str(count),
                "cx": self.engine_id,
                "key": self.api_key,
            }
        )
        return f"{self.endpoint}?{urlencode(params)}"

    def search(self, class_name: str, count: int) -> list[tuple[str, ImageTensor]]:
        if not self.api_key:
            raise WebRetrievalError(
                f"no API key in ${API_KEY_ENV} for web retrieval", class_name
            )
        try:
            payload = json.loads(self.http_get(self.search_url(class_name, count)))
            links = [item["link"] for item in payload.get("items", [])]
        except Exception as exc:
            raise WebRetrievalError(
                f"web search failed for {class_name!r}: {exc}", class_name
            ) from exc
        results: list[tuple[str, ImageTensor]] = []
        for link in links[:count]:
            try:
                raw = self.http_get(link)
                results.append((link, _decode_image_bytes(raw)))
            except Exception as exc:
                logger.warning("dropping web image %s: %s", link, exc)
        return results


def _decode_image_bytes(raw: bytes) -> ImageTensor:
    import io

    from PIL import Image

    with Image.open(io.BytesIO(raw)) as img:
        pixels = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return ImageTensor(pixels)


def filter_web(
    candidates: list[tuple[str, ImageTensor]],
    rgb_filter: RgbFilter,
    tau: float = 0.5,
) -> list[tuple[str, ImageTensor]]:
    """Keep candidates whose relevance confidence is strictly above tau."""
    kept = []
    for source_id, image in candidates:
        try:
            confidence = float(rgb_filter.confidence(image))
        except Exception as exc:
            logger.warning("dropping web candidate %s: filter failed: %s", source_id, exc)
            continue
        if confidence > tau:
            kept.append((source_id, image))
    return kept


# ---------------------------------------------------------------------------
# gallery assembly
# ---------------------------------------------------------------------------


@dataclass
class Gallery:
    """Per-class visual samples plus the classes nothing could be found for."""

    samples_by_class: dict[str, list[GallerySample]]
    missing_classes: list[str] = field(default_factory=list)
    k: int = 30

    def classes(self) -> list[str]:
        return list(self.samples_by_class)


def build_gallery(
    class_names: list[str],
    index: Optional[DatasetIndex],
    *,
    segmenter: Segmenter,
    rgb_filter: RgbFilter,
    material_db: MaterialDatabase,
    material_oracle: Optional[MaterialOracle] = None,
    web_client: Optional[WebClient] = None,
    k: int = 30,
    tau: float = 0.5,
    web_fetch_factor: int = 2,
    background_fill: Optional[tuple[float, float, float]] = (1.0, 1.0, 1.0),
) -> Gallery:
    """Assemble up to k samples per class, in-house first, then web.

    For web-only classes the pipeline is: fetch candidates, keep those the
    relevance filter scores strictly above tau, segment, repaint with the
    class material's pseudo-color. Classes with no usable source end up in
    ``missing_classes``. The reserved name "background" is not a class and
    is rejected outright.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    samples_by_class: dict[str, list[GallerySample]] = {}
    missing: list[str] = []
    seen: set[str] = set()
    for raw_name in class_names:
        name = normalize_class_name(raw_name)
        if name == BACKGROUND_NAME:
            raise ValueError('"background" is reserved and cannot be a gallery class')
        if name in seen:
            continue
        seen.add(name)

        samples: list[GallerySample] = []
        if index is not None:
            samples = retrieve_in_house(index, name, max_samples=k)
        if not samples and web_client is not None:
            samples = _web_samples(
                name,
                web_client=web_client,
                segmenter=segmenter,
                rgb_filter=rgb_filter,
                material_db=material_db,
                material_oracle=material_oracle,
                k=k,
                tau=tau,
                fetch_count=max(k, 1) * max(web_fetch_factor, 1),
                background_fill=background_fill,
            )
        if samples:
            samples_by_class[name] = samples[:k]
        else:
            logger.warning("no gallery source produced samples for class %r", name)
            missing.append(name)
    return Gallery(samples_by_class=samples_by_class, missing_classes=missing, k=k)


def _web_samples(
    class_name: str,
    *,
    web_client: WebClient,
    segmenter: Segmenter,
    rgb_filter: RgbFilter,
    material_db: MaterialDatabase,
    material_oracle: Optional[MaterialOracle],
    k: int,
    tau: float,
    fetch_count: int,
    background_fill: Optional[tuple[float, float, float]],
) -> list[GallerySample]:
    try:
        candidates = web_client.search(class_name, fetch_count)
    except WebRetrievalError as exc:
        logger.warning("web retrieval failed for %r: %s", class_name, exc)
        return []
    kept = filter_web(candidates, rgb_filter, tau=tau)
    if not kept:
        return []
    material = material_db.assignments.get(class_name)
    if material is None:
        material = assign_material(material_db, class_name, material_oracle)
    color = material_db.materials[material].color
    samples: list[GallerySample] = []
    for source_id, rgb in kept:
        if len(samples) >= k:
            break
        mask = segmenter.segment(rgb)
        if mask.values.sum() == 0:
            logger.warning("dropping web candidate %s: empty segmentation", source_id)
            continue
        synthetic = transfer(rgb, mask, color, background_fill=background_fill)
        samples.append(
            GallerySample(
                image=synthetic,
                class_name=class_name,
                provenance="web_synthetic",
                source_id=source_id,
            )
        )
    return samples
