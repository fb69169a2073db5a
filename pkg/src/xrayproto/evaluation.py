"""Evaluation: COCO-style AP and the cross-modality transfer protocol.

AP follows the standard COCO reference semantics, implemented from scratch:
per class and per IoU threshold (0.50:0.05:0.95), detections sorted by
descending score (ties keep input order) greedily consume the unmatched
ground-truth box with the highest IoU at or above the threshold; the
precision envelope is sampled at 101 recall points; the class AP is the
mean over thresholds, and the overall figure averages classes that have at
least one ground-truth box. No maxDets cap is applied unless asked for.

The transfer protocol splits the vocabulary by a seeded draw into classes
whose galleries come from real X-ray data and classes forced onto the web
route, builds descriptors accordingly, and evaluates on the test split.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .acquisition import (
    DatasetIndex,
    Gallery,
    WebClient,
    build_gallery,
    restrict_index,
    retrieve_in_house,
)
from .backends import BackendBundle, ProposalSource
from .classifier import (
    Detection,
    classify_proposals,
    detections_from_results,
)
from .descriptors import (
    BackgroundDescriptor,
    ClassDescriptor,
    DescriptorStore,
    StoreMetadata,
    build_store,
    crop_to_box,
    sample_prototypes,
)
from .errors import EvaluationError
from .imageio import load_image
from .material import MaterialDatabase, build_material_db, cluster_materials
from .types import Box, ImageTensor, Proposal

logger = logging.getLogger(__name__)

IOU_THRESHOLDS: tuple[float, ...] = tuple(np.round(np.linspace(0.5, 0.95, 10), 2))


# ---------------------------------------------------------------------------
# ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroundTruthObject:
    image_id: str
    class_name: str
    box: Box


@dataclass
class GroundTruthSet:
    """Boxes to match against, already filtered to what counts."""

    by_image: dict[str, list[GroundTruthObject]]
    vocabulary: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.vocabulary:
            names = {
                gt.class_name for gts in self.by_image.values() for gt in gts
            }
            self.vocabulary = sorted(names)

    @classmethod
    def from_index(
        cls,
        index: DatasetIndex,
        split: str = "test",
        visible_only: bool = True,
    ) -> "GroundTruthSet":
        by_image: dict[str, list[GroundTruthObject]] = {}
        for entry in index.entries:
            if entry.split != split:
                continue
            gts = [
                GroundTruthObject(entry.image_path, obj.class_name, obj.box)
                for obj in entry.objects
                if obj.visible or not visible_only
            ]
            by_image[entry.image_path] = gts
        return cls(by_image=by_image)

    def class_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for gts in self.by_image.values():
            for gt in gts:
                counts[gt.class_name] = counts.get(gt.class_name, 0) + 1
        return counts

    def total(self) -> int:
        return sum(len(gts) for gts in self.by_image.values())


def iou(box_a: Box, box_b: Box) -> float:
    """Intersection over union of two well-ordered boxes."""
    matrix = _kernels.pairwise_iou(
        np.array([box_a], dtype=np.float64), np.array([box_b], dtype=np.float64)
    )
    return float(matrix[0, 0])


# ---------------------------------------------------------------------------
# COCO AP
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassAP:
    ap: float
    ap50: float
    ap75: float
    num_gt: int
    num_detections: int


@dataclass
class EvalReport:
    """AP metrics, internally in [0, 1]; multiply by 100 only for display."""

    ap: float
    ap50: float
    ap75: float
    per_class: dict[str, ClassAP] = field(default_factory=dict)
    composition: str = ""
    seed: Optional[int] = None
    diagnostics: dict[str, int] = field(default_factory=dict)


def _interpolated_ap(flags: np.ndarray, npos: int) -> float:
    """101-point interpolated AP from per-detection hit flags in score order."""
    if npos <= 0:
        return 0.0
    if flags.size == 0:
        return 0.0
    tp = np.cumsum(flags.astype(np.float64))
    fp = np.cumsum((~flags).astype(np.float64))
    recall = tp / npos
    precision = tp / (tp + fp)
    # Monotone envelope from the right, then sample at fixed recall points.
    for i in range(precision.size - 2, -1, -1):
        if precision[i] < precision[i + 1]:
            precision[i] = precision[i + 1]
    points = np.linspace(0.0, 1.0, 101)
    indices = np.searchsorted(recall, points, side="left")
    sampled = np.zeros(101, dtype=np.float64)
    valid = indices < recall.size
    sampled[valid] = precision[indices[valid]]
    return float(sampled.mean())


def _score_order(detections: Sequence[Detection]) -> list[int]:
    # Stable sort: equal scores keep input (detection-index) order.
    return sorted(range(len(detections)), key=lambda i: -detections[i].score)


def coco_ap(
    detections: Sequence[Detection],
    gt: GroundTruthSet,
    *,
    iou_thresholds: Optional[Sequence[float]] = None,
    max_dets: Optional[int] = None,
) -> EvalReport:
    """COCO AP over all classes with at least one ground-truth box.

    Detections must carry the ``image_id`` they belong to. Detections whose
    class is not in the ground-truth vocabulary never match anything; they
    are excluded from every class's curve and tallied in the diagnostics.
    """
    thresholds = (
        np.asarray(IOU_THRESHOLDS, dtype=np.float64)
        if iou_thresholds is None
        else np.asarray(list(iou_thresholds), dtype=np.float64)
    )
    idx50 = _threshold_index(thresholds, 0.50)
    idx75 = _threshold_index(thresholds, 0.75)

    detections = list(detections)
    if max_dets is not None:
        detections = _cap_per_image(detections, max_dets)

    vocab = set(gt.vocabulary)
    unknown = sum(1 for d in detections if d.class_name not in vocab)
    counts = gt.class_counts()
    eval_classes = [c for c in sorted(vocab) if counts.get(c, 0) >= 1]

    per_class: dict[str, ClassAP] = {}
    for class_name in eval_classes:
        dets = [d for d in detections if d.class_name == class_name]
        order = _score_order(dets)
        flags = _match_flags(
            [dets[i] for i in order], gt, class_name, thresholds
        )
        aps = [
            _interpolated_ap(flags[t], counts[class_name])
            for t in range(thresholds.size)
        ]
        per_class[class_name] = ClassAP(
            ap=float(np.mean(aps)) if aps else 0.0,
            ap50=aps[idx50],
            ap75=aps[idx75],
            num_gt=counts[class_name],
            num_detections=len(dets),
        )

    if per_class:
        ap = float(np.mean([c.ap for c in per_class.values()]))
        ap50 = float(np.mean([c.ap50 for c in per_class.values()]))
        ap75 = float(np.mean([c.ap75 for c in per_class.values()]))
    else:
        ap = ap50 = ap75 = 0.0
    return EvalReport(
        ap=ap,
        ap50=ap50,
        ap75=ap75,
        per_class=per_class,
        diagnostics={"unknown_class_detections": unknown},
    )


def _threshold_index(thresholds: np.ndarray, value: float) -> int:
    matches = np.nonzero(np.isclose(thresholds, value, atol=1e-9))[0]
    if matches.size == 0:
        raise ValueError(f"IoU thresholds must include {value}")
    return int(matches[0])


def _cap_per_image(detections: list[Detection], max_dets: int) -> list[Detection]:
    by_image: dict[Optional[str], list[Detection]] = {}
    for det in detections:
        by_image.setdefault(det.image_id, []).append(det)
    capped: list[Detection] = []
    for dets in by_image.values():
        order = _score_order(dets)[:max_dets]
        keep = set(order)
        capped.extend(d for i, d in enumerate(dets) if i in keep)
    return capped


def _match_flags(
    dets_sorted: list[Detection],
    gt: GroundTruthSet,
    class_name: str,
    thresholds: np.ndarray,
) -> np.ndarray:
    """(num_thresholds, num_dets) booleans: detection matched at threshold."""
    flags = np.zeros((thresholds.size, len(dets_sorted)), dtype=bool)
    positions: dict[str, list[int]] = {}
    for pos, det in enumerate(dets_sorted):
        positions.setdefault(det.image_id, []).append(pos)
    for image_id, pos_list in positions.items():
        gt_boxes = [
            g.box
            for g in gt.by_image.get(image_id, [])
            if g.class_name == class_name
        ]
        if not gt_boxes:
            continue
        det_boxes = np.array(
            [dets_sorted[p].box for p in pos_list], dtype=np.float64
        )
        ious = _kernels.pairwise_iou(det_boxes, np.array(gt_boxes, dtype=np.float64))
        for t in range(thresholds.size):
            assigned = _kernels.greedy_match(ious, float(thresholds[t]))
            for row, pos in enumerate(pos_list):
                flags[t, pos] = assigned[row] >= 0
    return flags


# ---------------------------------------------------------------------------
# vocabulary splitting and the transfer protocol
# ---------------------------------------------------------------------------


def split_vocabulary(
    vocab: Sequence[str],
    in_house_fraction: float,
    seed: int,
) -> tuple[list[str], list[str]]:
    """Seeded partition into (in-house classes, web classes).

    The in-house side gets round(fraction * n) classes, rounding half up, so
    fraction 1.0 keeps everything in-domain and 0.0 forces the web route for
    all. The draw only depends on the sorted vocabulary and the seed.
    """
    if not 0.0 <= in_house_fraction <= 1.0:
        raise ValueError("in_house_fraction must lie in [0, 1]")
    ordered = sorted(dict.fromkeys(vocab))
    n = len(ordered)
    n_in_house = int(np.floor(in_house_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    permuted = [ordered[i] for i in rng.permutation(n)]
    in_house = sorted(permuted[:n_in_house])
    web = sorted(permuted[n_in_house:])
    return in_house, web


def composition_label(in_house_fraction: float) -> str:
    pct = int(round(in_house_fraction * 100))
    return f"{pct}/{100 - pct}"


def permute_store_classes(store: DescriptorStore, seed: int = 0) -> DescriptorStore:
    """Control experiment: reassign descriptors across class names.

    Every class receives a different class's descriptor (a seeded cyclic
    derangement), so any detection quality left is what geometry alone buys.
    """
    names = sorted(store.classes)
    if len(names) < 2:
        raise ValueError("need at least two classes to permute")
    rng = np.random.default_rng(seed)
    cycle = [names[i] for i in rng.permutation(len(names))]
    mapping = {
        cycle[i]: cycle[(i + 1) % len(cycle)] for i in range(len(cycle))
    }
    classes = {}
    for name in store.class_names():
        donor = store.classes[mapping[name]]
        classes[name] = ClassDescriptor(
            class_name=name,
            mean=donor.mean.copy(),
            members=donor.members.copy(),
            k_used=donor.k_used,
        )
    return DescriptorStore(
        dim=store.dim,
        metadata=replace(store.metadata),
        background=BackgroundDescriptor(store.background.members.copy()),
        classes=classes,
    )


@dataclass
class Scene:
    """A test image prepared for (repeated) classification."""

    image_id: str
    proposals: list[Proposal]


def prepare_scenes(
    index: DatasetIndex,
    proposal_source: ProposalSource,
    *,
    split: str = "test",
    jobs: int = 1,
) -> list[Scene]:
    """Load every test image and run the proposal source once.

    Unreadable images are skipped with a warning. The result order follows
    the manifest regardless of ``jobs``, so reports stay byte-identical.
    """
    entries = [e for e in index.entries if e.split == split]

    def one(entry):
        try:
            image = load_image(entry.image_path)
        except IOError as exc:
            logger.warning("skipping unreadable test image: %s", exc)
            return None
        return Scene(entry.image_path, proposal_source.propose(image))

    if jobs <= 1:
        prepared = [one(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            prepared = list(pool.map(one, entries))
    return [scene for scene in prepared if scene is not None]


def detect_scenes(
    scenes: list[Scene],
    store: DescriptorStore,
    *,
    sigma: float = 0.15,
) -> list[Detection]:
    detections: list[Detection] = []
    for scene in scenes:
        results = classify_proposals(scene.proposals, store)
        detections.extend(
            detections_from_results(
                scene.proposals, results, sigma=sigma, image_id=scene.image_id
            )
        )
    return detections


def cmte_run(
    index: DatasetIndex,
    store: DescriptorStore,
    proposal_source: ProposalSource,
    *,
    split: str = "test",
    sigma: float = 0.15,
    composition: str = "",
    seed: Optional[int] = None,
    visible_only: bool = True,
    jobs: int = 1,
    max_dets: Optional[int] = None,
) -> EvalReport:
    """Detect over the test split with a prepared store and score with AP.

    Ground-truth classes the store has no descriptor for are warned about
    and score zero (nothing can ever be predicted for them).
    """
    gt = GroundTruthSet.from_index(index, split=split, visible_only=visible_only)
    missing = sorted(set(gt.vocabulary) - set(store.classes))
    if missing:
        logger.warning(
            "no descriptor for %d ground-truth class(es): %s; they score 0",
            len(missing),
            ", ".join(missing),
        )
    scenes = prepare_scenes(index, proposal_source, split=split, jobs=jobs)
    detections = detect_scenes(scenes, store, sigma=sigma)
    report = coco_ap(detections, gt, max_dets=max_dets)
    report.composition = composition
    report.seed = seed
    report.diagnostics["num_detections"] = len(detections)
    report.diagnostics["num_images"] = len(scenes)
    return report


@dataclass
class TransferAssets:
    """Everything a composition run builds before it can detect."""

    store: DescriptorStore
    gallery: Gallery
    material_db: MaterialDatabase
    in_house_classes: tuple[str, ...]
    web_classes: tuple[str, ...]


def prepare_transfer_store(
    index: DatasetIndex,
    bundle: BackendBundle,
    *,
    web_client: Optional[WebClient] = None,
    in_house_fraction: float = 1.0,
    seed: int = 0,
    k: int = 30,
    tau: float = 0.5,
    background_fill: Optional[tuple[float, float, float]] = (1.0, 1.0, 1.0),
    material_images_per_class: int = 8,
    crop_margin: float = 0.1,
    visible_only: bool = True,
    allow_partial: bool = True,
) -> TransferAssets:
    """Build the gallery, material database and descriptor store for a run.

    The vocabulary is split by seed; classes on the web side are denied
    their in-house imagery (the index is restricted), so their galleries and
    the material appearances exercise exactly the no-X-ray-data path.
    """
    vocab = index.vocabulary(visible_only=visible_only)
    in_house_classes, web_classes = split_vocabulary(vocab, in_house_fraction, seed)
    restricted = restrict_index(index, in_house_classes) if web_classes else index

    assignments = cluster_materials(vocab, bundle.material_oracle)
    images_by_class: dict[str, list[ImageTensor]] = {}
    for class_name in in_house_classes:
        samples = retrieve_in_house(
            restricted, class_name, max_samples=material_images_per_class
        )
        images_by_class[class_name] = [
            crop_to_box(s.image, s.box, margin=crop_margin)
            if s.box is not None
            else s.image
            for s in samples
        ]
    material_db = build_material_db(
        assignments, images_by_class, bundle.segmenter
    )

    gallery = build_gallery(
        sorted(vocab),
        restricted,
        segmenter=bundle.segmenter,
        rgb_filter=bundle.rgb_filter,
        material_db=material_db,
        material_oracle=bundle.material_oracle,
        web_client=web_client,
        k=k,
        tau=tau,
        background_fill=background_fill,
    )
    store = build_store(
        gallery,
        bundle.segmenter,
        bundle.extractor,
        allow_partial=allow_partial,
        crop_margin=crop_margin,
    )
    return TransferAssets(
        store=store,
        gallery=gallery,
        material_db=material_db,
        in_house_classes=in_house_classes,
        web_classes=web_classes,
    )


def run_cmte_experiment(
    index: DatasetIndex,
    bundle: BackendBundle,
    *,
    web_client: Optional[WebClient] = None,
    in_house_fraction: float = 1.0,
    seed: int = 0,
    k: int = 30,
    sigma: float = 0.15,
    tau: float = 0.5,
    background_fill: Optional[tuple[float, float, float]] = (1.0, 1.0, 1.0),
    material_images_per_class: int = 8,
    crop_margin: float = 0.1,
    visible_only: bool = True,
    jobs: int = 1,
) -> EvalReport:
    """One full transfer-protocol run at a given gallery composition."""
    assets = prepare_transfer_store(
        index,
        bundle,
        web_client=web_client,
        in_house_fraction=in_house_fraction,
        seed=seed,
        k=k,
        tau=tau,
        background_fill=background_fill,
        material_images_per_class=material_images_per_class,
        crop_margin=crop_margin,
        visible_only=visible_only,
    )
    return cmte_run(
        index,
        assets.store,
        bundle.proposal_source,
        sigma=sigma,
        composition=composition_label(in_house_fraction),
        seed=seed,
        visible_only=visible_only,
        jobs=jobs,
    )


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


@dataclass
class CompositionRow:
    composition: str
    in_house_fraction: float
    seeds: list[int]
    mean_ap: float
    std_ap: float
    mean_ap50: float
    std_ap50: float
    mean_ap75: float
    std_ap75: float
    reports: list[EvalReport] = field(default_factory=list)


@dataclass
class SweepSummary:
    rows: list[CompositionRow] = field(default_factory=list)


def composition_sweep(
    index: DatasetIndex,
    bundle: BackendBundle,
    *,
    fractions: Sequence[float],
    seeds: Sequence[int],
    partial_path: Optional[str] = None,
    **run_kwargs,
) -> SweepSummary:
    """Full experiment per (fraction, seed) with mean/std aggregation.

    A failing run aborts the sweep; whatever finished is saved to
    ``partial_path`` (when given) before the failure propagates.
    """
    summary = SweepSummary()
    try:
        for fraction in fractions:
            reports = [
                run_cmte_experiment(
                    index,
                    bundle,
                    in_house_fraction=fraction,
                    seed=seed,
                    **run_kwargs,
                )
                for seed in seeds
            ]
            aps = np.array([r.ap for r in reports])
            ap50s = np.array([r.ap50 for r in reports])
            ap75s = np.array([r.ap75 for r in reports])
            summary.rows.append(
                CompositionRow(
                    composition=composition_label(fraction),
                    in_house_fraction=float(fraction),
                    seeds=list(seeds),
                    mean_ap=float(aps.mean()),
                    std_ap=float(aps.std()),
                    mean_ap50=float(ap50s.mean()),
                    std_ap50=float(ap50s.std()),
                    mean_ap75=float(ap75s.mean()),
                    std_ap75=float(ap75s.std()),
                    reports=reports,
                )
            )
    except Exception as exc:
        if partial_path is not None:
            write_sweep_json(summary, partial_path)
        raise EvaluationError(f"composition sweep aborted: {exc}") from exc
    return summary


@dataclass
class KSweepRow:
    k: int
    ap: float
    ap50: float
    ap75: float
    num_detections: int


def k_sweep(
    index: DatasetIndex,
    gallery: Gallery,
    bundle: BackendBundle,
    k_values: Sequence[int],
    *,
    split: str = "test",
    sigma: float = 0.15,
    crop_margin: float = 0.1,
    visible_only: bool = True,
    jobs: int = 1,
) -> list[KSweepRow]:
    """AP as a function of gallery size per class.

    Per-sample prototypes are computed once at the gallery's full size;
    truncating to the first k samples then reproduces exactly the store a
    k-sized gallery would have built. Test proposals are likewise reused.
    """
    per_class: dict[str, list[tuple[np.ndarray, Optional[np.ndarray]]]] = {}
    for name, samples in gallery.samples_by_class.items():
        pairs = []
        for sample in samples:
            try:
                pairs.append(
                    sample_prototypes(
                        sample,
                        bundle.segmenter,
                        bundle.extractor,
                        crop_margin=crop_margin,
                    )
                )
            except Exception as exc:
                logger.warning("skipping sample %s: %s", sample.source_id, exc)
        if pairs:
            per_class[name] = pairs

    gt = GroundTruthSet.from_index(index, split=split, visible_only=visible_only)
    scenes = prepare_scenes(index, bundle.proposal_source, split=split, jobs=jobs)

    rows = []
    for k in k_values:
        if k < 1:
            raise ValueError("k values must be >= 1")
        classes: dict[str, ClassDescriptor] = {}
        negatives: list[np.ndarray] = []
        for name, pairs in per_class.items():
            members = np.stack([pos for pos, _ in pairs[:k]])
            classes[name] = ClassDescriptor(
                class_name=name,
                mean=members.mean(axis=0),
                members=members,
                k_used=members.shape[0],
            )
            negatives.extend(neg for _, neg in pairs[:k] if neg is not None)
        store = DescriptorStore(
            dim=bundle.extractor.dim,
            metadata=StoreMetadata(
                extractor_id=bundle.extractor.backend_id,
                segmenter_id=bundle.segmenter.backend_id,
            ),
            background=BackgroundDescriptor(
                np.stack(negatives)
                if negatives
                else np.zeros((0, bundle.extractor.dim), dtype=np.float64)
            ),
            classes=classes,
        )
        detections = detect_scenes(scenes, store, sigma=sigma)
        report = coco_ap(detections, gt)
        rows.append(
            KSweepRow(
                k=int(k),
                ap=report.ap,
                ap50=report.ap50,
                ap75=report.ap75,
                num_detections=len(detections),
            )
        )
    return rows


@dataclass
class SigmaSweepRow:
    sigma: float
    ap: float
    ap50: float
    ap75: float
    num_detections: int


def sigma_sweep(
    index: DatasetIndex,
    store: DescriptorStore,
    proposal_source: ProposalSource,
    sigmas: Sequence[float],
    *,
    split: str = "test",
    visible_only: bool = True,
    jobs: int = 1,
) -> list[SigmaSweepRow]:
    """AP and kept-count as the contrast gate tightens.

    Detection runs once with the gate wide open (sigma 0 keeps every
    non-background prediction since the winner's margin is never negative);
    each sigma then just re-filters by the recorded delta.
    """
    gt = GroundTruthSet.from_index(index, split=split, visible_only=visible_only)
    scenes = prepare_scenes(index, proposal_source, split=split, jobs=jobs)
    baseline = detect_scenes(scenes, store, sigma=0.0)
    rows = []
    for sigma in sigmas:
        kept = [d for d in baseline if d.delta >= sigma]
        report = coco_ap(kept, gt)
        rows.append(
            SigmaSweepRow(
                sigma=float(sigma),
                ap=report.ap,
                ap50=report.ap50,
                ap75=report.ap75,
                num_detections=len(kept),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# rendering and persistence
# ---------------------------------------------------------------------------


def report_to_dict(report: EvalReport) -> dict:
    return {
        "ap": report.ap,
        "ap50": report.ap50,
        "ap75": report.ap75,
        "composition": report.composition,
        "seed": report.seed,
        "per_class": {
            name: {
                "ap": c.ap,
                "ap50": c.ap50,
                "ap75": c.ap75,
                "num_gt": c.num_gt,
                "num_detections": c.num_detections,
            }
            for name, c in report.per_class.items()
        },
        "diagnostics": dict(report.diagnostics),
    }


def render_report_text(report: EvalReport) -> str:
    """Aligned per-class table; metrics shown x100 like the usual tables."""
    lines = []
    header = f"{'class':<24} {'AP':>7} {'AP50':>7} {'AP75':>7} {'#gt':>5} {'#det':>6}"
    lines.append(header)
    lines.append("-" * len(header))
    for name in sorted(report.per_class):
        c = report.per_class[name]
        lines.append(
            f"{name:<24} {100 * c.ap:>7.1f} {100 * c.ap50:>7.1f} "
            f"{100 * c.ap75:>7.1f} {c.num_gt:>5d} {c.num_detections:>6d}"
        )
    lines.append("-" * len(header))
    label = report.composition or "overall"
    lines.append(
        f"{label:<24} {100 * report.ap:>7.1f} {100 * report.ap50:>7.1f} "
        f"{100 * report.ap75:>7.1f}"
    )
    return "\n".join(lines) + "\n"


def render_sweep_text(summary: SweepSummary) -> str:
    lines = []
    header = (
        f"{'composition':<12} {'AP':>13} {'AP50':>13} {'AP75':>13} {'seeds':>6}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for row in summary.rows:
        lines.append(
            f"{row.composition:<12} "
            f"{100 * row.mean_ap:>6.1f}±{100 * row.std_ap:<6.1f} "
            f"{100 * row.mean_ap50:>6.1f}±{100 * row.std_ap50:<6.1f} "
            f"{100 * row.mean_ap75:>6.1f}±{100 * row.std_ap75:<6.1f} "
            f"{len(row.seeds):>6d}"
        )
    return "\n".join(lines) + "\n"


def write_sweep_json(summary: SweepSummary, path: str) -> None:
    import json

    payload = {
        "rows": [
            {
                "composition": row.composition,
                "in_house_fraction": row.in_house_fraction,
                "seeds": row.seeds,
                "mean_ap": row.mean_ap,
                "std_ap": row.std_ap,
                "mean_ap50": row.mean_ap50,
                "std_ap50": row.std_ap50,
                "mean_ap75": row.mean_ap75,
                "std_ap75": row.std_ap75,
                "reports": [report_to_dict(r) for r in row.reports],
            }
            for row in summary.rows
        ]
    }
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_k_sweep_csv(rows: list[KSweepRow], path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "ap", "ap50", "ap75", "num_detections"])
        for row in rows:
            writer.writerow([row.k, row.ap, row.ap50, row.ap75, row.num_detections])


def write_sigma_sweep_csv(rows: list[SigmaSweepRow], path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "ap", "ap50", "ap75", "num_detections"])
        for row in rows:
            writer.writerow(
                [row.sigma, row.ap, row.ap50, row.ap75, row.num_detections]
            )
