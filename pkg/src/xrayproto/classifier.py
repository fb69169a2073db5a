"""Prototype classification and detection filtering.

A region proposal is scored against every stored class by the maximum
cosine similarity to that class's descriptor stack (mean plus members);
the pooled background descriptor competes as a pseudo-class so empty
regions lose. Predictions are then gated by their contrast: the winning
similarity must exceed the mean similarity to the other classes' mean
prototypes by at least sigma, which suppresses proposals that look like
everything at once.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backends import ProposalSource
from .descriptors import DescriptorStore
from .errors import EmptyStoreError, StoreCompatibilityError, ZeroVectorError
from .types import BACKGROUND_NAME, Box, ImageTensor, Proposal


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Plain cosine similarity; zero vectors have no direction to compare."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity is undefined for zero vectors")
    return float(np.dot(a, b) / (norm_a * norm_b))


@dataclass(frozen=True)
class ClassificationResult:
    """Outcome of scoring one proposal: winner plus contrast diagnostics.

    ``s1`` is the winning similarity, ``s2`` the mean similarity to the
    other classes' mean prototypes (background never participates; a
    single-class store has no others, so 0), ``delta`` their difference.
    """

    class_name: str
    s1: float
    s2: float
    delta: float
    scores: dict[str, float]

    @property
    def is_background(self) -> bool:
        return self.class_name == BACKGROUND_NAME


class _StoreMatrix:
    """Normalized descriptor stack prepared once per store for scoring."""

    def __init__(self, store: DescriptorStore):
        if not store.classes:
            raise EmptyStoreError("cannot classify against a store with no classes")
        self.dim = store.dim
        names = list(store.classes)
        blocks: list[np.ndarray] = []
        slices: list[tuple[str, int, int]] = []
        mean_rows: list[int] = []
        offset = 0
        for name in names:
            vectors = store.classes[name].vectors()
            blocks.append(vectors)
            slices.append((name, offset, offset + vectors.shape[0]))
            mean_rows.append(offset)  # row 0 of each stack is the mean
            offset += vectors.shape[0]
        self.background_slice: Optional[tuple[int, int]] = None
        if store.background.enabled:
            vectors = store.background.vectors()
            blocks.append(vectors)
            self.background_slice = (offset, offset + vectors.shape[0])
            offset += vectors.shape[0]
        matrix = np.concatenate(blocks, axis=0)
        norms = np.linalg.norm(matrix, axis=1)
        if np.any(norms == 0.0):
            raise ZeroVectorError("store contains a zero-norm prototype")
        self.names = names
        self.slices = slices
        self.mean_rows = np.array(mean_rows, dtype=np.int64)
        self.matrix = matrix / norms[:, None]

    def classify(self, feature: np.ndarray,
                 include_background: bool = True) -> ClassificationResult:
        feature = np.asarray(feature, dtype=np.float64).reshape(-1)
        if feature.shape[0] != self.dim:
            raise StoreCompatibilityError(
                f"feature dim {feature.shape[0]} != store dim {self.dim}"
            )
        norm = float(np.linalg.norm(feature))
        if norm == 0.0:
            raise ZeroVectorError("cannot classify a zero-norm feature")
        sims = self.matrix @ (feature / norm)

        scores: dict[str, float] = {}
        best_name, best_score = None, -np.inf
        for name, start, end in self.slices:
            score = float(sims[start:end].max())
            scores[name] = score
            # Exact ties resolve to the lexicographically smaller name so
            # the winner does not depend on store insertion order.
            if score > best_score or (score == best_score and
                                      best_name is not None and name < best_name):
                best_name, best_score = name, score
        if include_background and self.background_slice is not None:
            start, end = self.background_slice
            bg_score = float(sims[start:end].max())
            scores[BACKGROUND_NAME] = bg_score
            # Background must beat the best real class outright; ties go to
            # the real class.
            if bg_score > best_score:
                best_name, best_score = BACKGROUND_NAME, bg_score

        mean_sims = sims[self.mean_rows]
        if best_name == BACKGROUND_NAME:
            others = mean_sims
        else:
            winner_idx = self.names.index(best_name)
            others = np.delete(mean_sims, winner_idx)
        s2 = float(others.mean()) if others.size else 0.0
        s1 = float(best_score)
        return ClassificationResult(
            class_name=best_name,
            s1=s1,
            s2=s2,
            delta=s1 - s2,
            scores=scores,
        )


def classify_proposal(
    proposal: Proposal,
    store: DescriptorStore,
    *,
    include_background: bool = True,
) -> ClassificationResult:
    """Score one proposal against a store (reference single-call path)."""
    return _StoreMatrix(store).classify(
        proposal.feature, include_background=include_background
    )


def contrast_keep(result: ClassificationResult, sigma: float) -> bool:
    """Keep a prediction iff it is a real class with contrast >= sigma."""
    if result.is_background:
        return False
    return result.delta >= sigma


@dataclass(frozen=True)
class Detection:
    """A kept prediction in image pixel space."""

    box: Box
    class_name: str
    score: float
    s1: float
    s2: float
    delta: float
    image_id: Optional[str] = None


def classify_proposals(
    proposals: list[Proposal],
    store: DescriptorStore,
    *,
    include_background: bool = True,
) -> list[ClassificationResult]:
    matrix = _StoreMatrix(store)
    return [
        matrix.classify(p.feature, include_background=include_background)
        for p in proposals
    ]


def detections_from_results(
    proposals: list[Proposal],
    results: list[ClassificationResult],
    *,
    sigma: float = 0.15,
    image_id: Optional[str] = None,
) -> list[Detection]:
    """Apply the contrast gate and order survivors by descending score.

    The score maps the winning cosine from [-1, 1] onto [0, 1]. Sorting is
    stable, so equal scores keep proposal order.
    """
    kept = []
    for proposal, result in zip(proposals, results):
        if not contrast_keep(result, sigma):
            continue
        kept.append(
            Detection(
                box=proposal.box,
                class_name=result.class_name,
                score=(result.s1 + 1.0) / 2.0,
                s1=result.s1,
                s2=result.s2,
                delta=result.delta,
                image_id=image_id,
            )
        )
    return sorted(kept, key=lambda d: -d.score)


def detect(
    image: ImageTensor,
    store: DescriptorStore,
    proposal_source: ProposalSource,
    *,
    sigma: float = 0.15,
    include_background: bool = True,
    image_id: Optional[str] = None,
) -> list[Detection]:
    """Full single-image pipeline: propose, classify, contrast-gate, sort."""
    proposals = proposal_source.propose(image)
    results = classify_proposals(
        proposals, store, include_background=include_background
    )
    return detections_from_results(
        proposals, results, sigma=sigma, image_id=image_id
    )


# ---------------------------------------------------------------------------
# detection persistence (JSONL, one detection per line)
# ---------------------------------------------------------------------------


def write_detections(detections: list[Detection], path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for det in detections:
            fh.write(
                json.dumps(
                    {
                        "image_id": det.image_id,
                        "box": list(det.box),
                        "class": det.class_name,
                        "score": det.score,
                        "s1": det.s1,
                        "s2": det.s2,
                        "delta": det.delta,
                    }
                )
            )
            fh.write("\n")


def read_detections(path: str) -> list[Detection]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                out.append(
                    Detection(
                        box=tuple(float(v) for v in record["box"]),
                        class_name=record["class"],
                        score=float(record["score"]),
                        s1=float(record["s1"]),
                        s2=float(record["s2"]),
                        delta=float(record["delta"]),
                        image_id=record.get("image_id"),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad detection record: {exc}") from exc
    return out
