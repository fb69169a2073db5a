"""Hot numeric kernels with two interchangeable implementations.

Each kernel ships as a pure-numpy function and, when numba is importable, a
jitted twin. Dispatch happens per call: set XRAYPROTO_DISABLE_NUMBA=1 to force
the numpy path (useful for debugging and for the benchmark baseline). Within
one path results are deterministic; across paths summation order differs, so
compare with a small tolerance (~1e-12) rather than bit equality. The
mask block fractions are integer sums divided by integer areas and therefore
agree exactly on both paths.

Patch statistics use a two-pass standard deviation (mean first, then mean of
squared deviations). The one-pass E[x^2] - mu^2 form cancels catastrophically
on near-constant patches and would blow the downstream 1e-9 oracle budget.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - depends on environment
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if args and callable(args[0]):
            return args[0]
        return wrap


_DISABLE_ENV = "XRAYPROTO_DISABLE_NUMBA"


def numba_enabled() -> bool:
    if not NUMBA_AVAILABLE:
        return False
    return os.environ.get(_DISABLE_ENV, "").strip() not in ("1", "true", "yes")


def kernel_backend() -> str:
    """Name of the implementation the dispatchers will pick right now."""
    return "numba" if numba_enabled() else "numpy"


# ---------------------------------------------------------------------------
# patch color statistics
# ---------------------------------------------------------------------------

def patch_grid_shape(height: int, width: int, patch: int) -> tuple[int, int]:
    """Grid dims for ceil-division patching; edge patches may be smaller."""
    if patch < 1:
        raise ValueError("patch size must be >= 1")
    return -(-height // patch), -(-width // patch)


def patch_color_stats_numpy(pixels: np.ndarray, patch: int) -> np.ndarray:
    """Per-patch color statistics: (gh, gw, 8) float64.

    Channels: mean RGB (3), two-pass std RGB (3), then the patch center in
    normalized image coordinates (cy, cx). Edge patches shrink to the pixels
    that actually exist; statistics are taken over those pixels only.
    """
    height, width = pixels.shape[0], pixels.shape[1]
    gh, gw = patch_grid_shape(height, width, patch)
    out = np.zeros((gh, gw, 8), dtype=np.float64)
    for i in range(gh):
        r0, r1 = i * patch, min((i + 1) * patch, height)
        for j in range(gw):
            c0, c1 = j * patch, min((j + 1) * patch, width)
            block = pixels[r0:r1, c0:c1, :]
            mean = block.reshape(-1, 3).mean(axis=0)
            dev = block - mean
            std = np.sqrt((dev * dev).reshape(-1, 3).mean(axis=0))
            out[i, j, 0:3] = mean
            out[i, j, 3:6] = std
            out[i, j, 6] = (r0 + r1) / (2.0 * height)
            out[i, j, 7] = (c0 + c1) / (2.0 * width)
    return out


@njit(cache=True)
def _patch_color_stats_jit(pixels, patch):  # pragma: no cover - jitted
    height, width = pixels.shape[0], pixels.shape[1]
    gh = (height + patch - 1) // patch
    gw = (width + patch - 1) // patch
    out = np.zeros((gh, gw, 8), dtype=np.float64)
    for i in range(gh):
        r0 = i * patch
        r1 = (i + 1) * patch
        if r1 > height:
            r1 = height
        for j in range(gw):
            c0 = j * patch
            c1 = (j + 1) * patch
            if c1 > width:
                c1 = width
            count = (r1 - r0) * (c1 - c0)
            for ch in range(3):
                total = 0.0
                for r in range(r0, r1):
                    for c in range(c0, c1):
                        total += pixels[r, c, ch]
                mean = total / count
                sq = 0.0
                for r in range(r0, r1):
                    for c in range(c0, c1):
                        d = pixels[r, c, ch] - mean
                        sq += d * d
                out[i, j, ch] = mean
                out[i, j, 3 + ch] = np.sqrt(sq / count)
            out[i, j, 6] = (r0 + r1) / (2.0 * height)
            out[i, j, 7] = (c0 + c1) / (2.0 * width)
    return out


def patch_color_stats(pixels: np.ndarray, patch: int) -> np.ndarray:
    pixels = np.ascontiguousarray(pixels, dtype=np.float64)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"expected HxWx3 pixels, got {pixels.shape}")
    if patch < 1:
        raise ValueError("patch size must be >= 1")
    if numba_enabled():
        return _patch_color_stats_jit(pixels, patch)
    return patch_color_stats_numpy(pixels, patch)


# ---------------------------------------------------------------------------
# mask block fractions
# ---------------------------------------------------------------------------

def block_fraction_numpy(mask: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    """Foreground fraction of each grid cell under a floor partition.

    Cell (i, j) covers rows [i*H//gh, (i+1)*H//gh) and the analogous column
    range, so cells tile the mask exactly even when dims do not divide evenly.
    """
    height, width = mask.shape
    out = np.zeros((grid_h, grid_w), dtype=np.float64)
    for i in range(grid_h):
        r0, r1 = (i * height) // grid_h, ((i + 1) * height) // grid_h
        for j in range(grid_w):
            c0, c1 = (j * width) // grid_w, ((j + 1) * width) // grid_w
            area = (r1 - r0) * (c1 - c0)
            if area == 0:
                continue
            out[i, j] = int(mask[r0:r1, c0:c1].sum(dtype=np.int64)) / area
    return out


@njit(cache=True)
def _block_fraction_jit(mask, grid_h, grid_w):  # pragma: no cover - jitted
    height, width = mask.shape
    out = np.zeros((grid_h, grid_w), dtype=np.float64)
    for i in range(grid_h):
        r0 = (i * height) // grid_h
        r1 = ((i + 1) * height) // grid_h
        for j in range(grid_w):
            c0 = (j * width) // grid_w
            c1 = ((j + 1) * width) // grid_w
            area = (r1 - r0) * (c1 - c0)
            if area == 0:
                continue
            total = 0
            for r in range(r0, r1):
                for c in range(c0, c1):
                    total += mask[r, c]
            out[i, j] = total / area
    return out


def block_fraction(mask: np.ndarray, grid_h: int, grid_w: int) -> np.ndarray:
    mask = np.ascontiguousarray(mask, dtype=np.int64)
    if mask.ndim != 2:
        raise ValueError(f"expected HxW mask, got {mask.shape}")
    if grid_h < 1 or grid_w < 1:
        raise ValueError("grid dims must be >= 1")
    if numba_enabled():
        return _block_fraction_jit(mask, grid_h, grid_w)
    return block_fraction_numpy(mask, grid_h, grid_w)


# ---------------------------------------------------------------------------
# box IoU and greedy matching
# ---------------------------------------------------------------------------

def pairwise_iou_numpy(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """IoU matrix (len(a), len(b)) for xyxy boxes in continuous coordinates."""
    if boxes_a.size == 0 or boxes_b.size == 0:
        return np.zeros((boxes_a.shape[0], boxes_b.shape[0]), dtype=np.float64)
    x1 = np.maximum(boxes_a[:, None, 0], boxes_b[None, :, 0])
    y1 = np.maximum(boxes_a[:, None, 1], boxes_b[None, :, 1])
    x2 = np.minimum(boxes_a[:, None, 2], boxes_b[None, :, 2])
    y2 = np.minimum(boxes_a[:, None, 3], boxes_b[None, :, 3])
    inter = np.clip(x2 - x1, 0.0, None) * np.clip(y2 - y1, 0.0, None)
    area_a = (boxes_a[:, 2] - boxes_a[:, 0]) * (boxes_a[:, 3] - boxes_a[:, 1])
    area_b = (boxes_b[:, 2] - boxes_b[:, 0]) * (boxes_b[:, 3] - boxes_b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


@njit(cache=True)
def _pairwise_iou_jit(boxes_a, boxes_b):  # pragma: no cover - jitted
    na, nb = boxes_a.shape[0], boxes_b.shape[0]
    out = np.zeros((na, nb), dtype=np.float64)
    for i in range(na):
        ax1, ay1, ax2, ay2 = boxes_a[i, 0], boxes_a[i, 1], boxes_a[i, 2], boxes_a[i, 3]
        area_a = (ax2 - ax1) * (ay2 - ay1)
        for j in range(nb):
            bx1, by1 = boxes_b[j, 0], boxes_b[j, 1]
            bx2, by2 = boxes_b[j, 2], boxes_b[j, 3]
            iw = min(ax2, bx2) - max(ax1, bx1)
            if iw <= 0.0:
                continue
            ih = min(ay2, by2) - max(ay1, by1)
            if ih <= 0.0:
                continue
            inter = iw * ih
            union = area_a + (bx2 - bx1) * (by2 - by1) - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


def pairwise_iou(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    boxes_a = np.ascontiguousarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    boxes_b = np.ascontiguousarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if numba_enabled():
        return _pairwise_iou_jit(boxes_a, boxes_b)
    return pairwise_iou_numpy(boxes_a, boxes_b)


def greedy_match_numpy(ious: np.ndarray, threshold: float) -> np.ndarray:
    """Greedy one-to-one matching of detections (rows) to ground truth.

    Rows must already be in descending score order. Each detection takes the
    not-yet-matched ground truth with the highest IoU, provided that IoU
    reaches the threshold; lowest index wins exact ties. Returns the matched
    gt index per detection, -1 for unmatched.
    """
    num_det, num_gt = ious.shape
    assigned = np.full(num_det, -1, dtype=np.int64)
    taken = np.zeros(num_gt, dtype=np.bool_)
    for d in range(num_det):
        best, best_iou = -1, threshold
        for g in range(num_gt):
            if taken[g]:
                continue
            if ious[d, g] > best_iou or (best == -1 and ious[d, g] >= threshold):
                best, best_iou = g, ious[d, g]
        if best >= 0:
            assigned[d] = best
            taken[best] = True
    return assigned


@njit(cache=True)
def _greedy_match_jit(ious, threshold):  # pragma: no cover - jitted
    num_det, num_gt = ious.shape
    assigned = np.full(num_det, -1, dtype=np.int64)
    taken = np.zeros(num_gt, dtype=np.bool_)
    for d in range(num_det):
        best = -1
        best_iou = threshold
        for g in range(num_gt):
            if taken[g]:
                continue
            if ious[d, g] > best_iou or (best == -1 and ious[d, g] >= threshold):
                best = g
                best_iou = ious[d, g]
        if best >= 0:
            assigned[d] = best
            taken[best] = True
    return assigned


def greedy_match(ious: np.ndarray, threshold: float) -> np.ndarray:
    ious = np.ascontiguousarray(ious, dtype=np.float64)
    if ious.ndim != 2:
        raise ValueError(f"expected 2-d IoU matrix, got {ious.shape}")
    if ious.shape[0] == 0 or ious.shape[1] == 0:
        return np.full(ious.shape[0], -1, dtype=np.int64)
    if numba_enabled():
        return _greedy_match_jit(ious, float(threshold))
    return greedy_match_numpy(ious, float(threshold))
