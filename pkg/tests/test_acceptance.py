"""Acceptance checks for the delivered toolkit.

Each test here is one deliverable-level guarantee: pooled-prototype math
against independent oracles, AP against a brute-force matcher and hand
fixtures, the end-to-end micro-benchmark with its permuted control, the
contrast-gate monotonicity, scale invariance of the argmax, descriptor
consistency and persistence, gallery source-branch coverage, the gallery
size sweep, and the runtime budget of the whole suite. Every test prints a
short PASS line with the measured numbers so a log shows what was checked.
"""

import copy
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from xrayproto.acquisition import (
    DatasetIndex,
    FixtureWebClient,
    Gallery,
    build_gallery,
)
from xrayproto.backends import build_bundle
from xrayproto.classifier import classify_proposals, contrast_keep
from xrayproto.descriptors import (
    build_store,
    extend_store,
    load_store,
    negative_prototype,
    positive_prototype,
    save_store,
)
from xrayproto.evaluation import (
    cmte_run,
    coco_ap,
    detect_scenes,
    k_sweep,
    permute_store_classes,
    write_k_sweep_csv,
)
from xrayproto.material import (
    build_material_db,
    cluster_materials,
    compute_appearance,
    fallback_material_db,
)
from xrayproto.synthetic import MICRO_PATCH, make_micro_dataset
from xrayproto.types import BinaryMask, ImageTensor, PatchGrid, Proposal

from test_classifier import make_store
from test_evaluation import det, gt_set, oracle_coco_ap


# ---------------------------------------------------------------------------
# 1. pooled-prototype math against nested-loop oracles
# ---------------------------------------------------------------------------


def _loop_mean(rows):
    acc = [0.0] * len(rows[0])
    for row in rows:
        for i, value in enumerate(row):
            acc[i] += float(value)
    return np.array([v / len(rows) for v in acc])


def test_prototype_pooling_matches_nested_loop_oracles():
    start = time.monotonic()
    max_err = 0.0
    checked = 0
    rng = np.random.default_rng(20240817)
    for _ in range(220):
        gh, gw = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        dim = int(rng.integers(1, 9))
        grid = PatchGrid(rng.normal(size=(gh, gw, dim)))
        cells = rng.integers(0, 2, size=(gh, gw)).astype(np.uint8)
        fg = [grid.features[r, c] for r in range(gh) for c in range(gw)
              if cells[r, c] == 1]
        bg = [grid.features[r, c] for r in range(gh) for c in range(gw)
              if cells[r, c] == 0]
        if fg:
            err = np.max(np.abs(positive_prototype(grid, cells) - _loop_mean(fg)))
            max_err = max(max_err, float(err))
            checked += 1
        if bg:
            err = np.max(np.abs(negative_prototype(grid, cells) - _loop_mean(bg)))
            max_err = max(max_err, float(err))
            checked += 1

    for _ in range(120):
        n = int(rng.integers(1, 4))
        h, w = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        images, masks, per_image = [], [], []
        for _ in range(n):
            pixels = rng.random(size=(h, w, 3))
            mask = rng.integers(0, 2, size=(h, w)).astype(np.uint8)
            images.append(ImageTensor(pixels))
            masks.append(BinaryMask(mask))
            rows = [pixels[r, c] for r in range(h) for c in range(w)
                    if mask[r, c] == 1]
            if rows:
                per_image.append(_loop_mean(rows))
        if not per_image:
            continue
        color, support = compute_appearance(images, masks)
        expected = _loop_mean(per_image)
        err = np.max(np.abs(np.array(color) - expected))
        max_err = max(max_err, float(err))
        assert support == len(per_image)
        checked += 1

    elapsed = time.monotonic() - start
    assert checked >= 200
    assert max_err <= 1e-9
    assert elapsed < 10.0
    print(
        f"\nPASS prototype oracles: {checked} instances, "
        f"max abs err {max_err:.2e}, {elapsed:.2f}s"
    )


# ---------------------------------------------------------------------------
# 2. AP against a brute-force matcher and hand-computed fixtures
# ---------------------------------------------------------------------------


def test_average_precision_matches_brute_force_reference():
    start = time.monotonic()
    worst = 0.0
    for seed in range(60):
        rng = np.random.default_rng(seed)
        images = [f"img_{i}" for i in range(rng.integers(1, 6))]
        classes = ["apple", "hammer", "tablet"][: rng.integers(1, 4)]
        gt_objects = []
        for image_id in images:
            for _ in range(rng.integers(0, 4)):
                x, y = rng.uniform(0, 50, size=2)
                w, h = rng.uniform(4, 30, size=2)
                gt_objects.append(
                    (image_id, classes[rng.integers(len(classes))],
                     (x, y, x + w, y + h))
                )
        if not gt_objects:
            gt_objects.append(("img_0", classes[0], (0, 0, 10, 10)))
        gt = gt_set(gt_objects)
        detections = []
        for _ in range(rng.integers(0, 11)):
            x, y = rng.uniform(0, 50, size=2)
            w, h = rng.uniform(4, 30, size=2)
            detections.append(
                det(images[rng.integers(len(images))], (x, y, x + w, y + h),
                    class_name=classes[rng.integers(len(classes))],
                    score=float(rng.uniform(0.01, 0.99)))
            )
        got = coco_ap(detections, gt).ap
        want = oracle_coco_ap(detections, gt)
        worst = max(worst, abs(got - want))
    assert worst <= 1e-6

    # hand fixtures, exact
    gt = gt_set([("a", "apple", (0, 0, 10, 10))])
    assert coco_ap([det("a", (0, 0, 10, 10))], gt).ap == 1.0

    straddle = coco_ap([det("a", (0, 2.5, 10, 12.5))], gt)
    assert straddle.ap50 == 1.0
    assert straddle.ap75 == 0.0
    assert straddle.ap == 3 / 10

    two_gt = gt_set([
        ("a", "apple", (0, 0, 10, 10)),
        ("b", "apple", (0, 0, 10, 10)),
    ])
    assert coco_ap([det("a", (0, 0, 10, 10))], two_gt).ap50 == 51 / 101

    dup = coco_ap(
        [det("a", (0, 0, 10, 10), score=0.9),
         det("a", (0, 0, 10, 10), score=0.8)],
        gt,
    )
    assert dup.ap50 == 1.0

    two_cls = gt_set([
        ("a", "apple", (0, 0, 10, 10)),
        ("a", "hammer", (20, 20, 30, 30)),
    ])
    assert coco_ap([det("a", (0, 0, 10, 10))], two_cls).ap == 1 / 2

    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    print(
        f"\nPASS AP reference: 60 randomized cases worst err {worst:.2e}, "
        f"5 hand fixtures exact, {elapsed:.2f}s"
    )


# ---------------------------------------------------------------------------
# 3. end-to-end micro-benchmark with permuted-descriptor control
# ---------------------------------------------------------------------------


def test_micro_benchmark_end_to_end_with_permuted_control(tmp_path):
    from xrayproto.evaluation import prepare_transfer_store

    start = time.monotonic()
    dataset = make_micro_dataset(str(tmp_path / "micro"), seed=0)
    index = DatasetIndex.from_jsonl(dataset.index_path)
    bundle = build_bundle(
        patch_size=dataset.patch, window=dataset.tile, stride=dataset.tile
    )
    assets = prepare_transfer_store(
        index, bundle, web_client=FixtureWebClient(dataset.web_root)
    )
    report = cmte_run(index, assets.store, bundle.proposal_source, sigma=0.15)
    elapsed = time.monotonic() - start

    control = cmte_run(
        index,
        permute_store_classes(assets.store, seed=0),
        bundle.proposal_source,
        sigma=0.15,
    )

    assert report.ap50 >= 0.95
    assert control.ap50 < report.ap50
    assert elapsed < 60.0
    print(
        f"\nPASS micro-benchmark: AP50 {100 * report.ap50:.1f} "
        f"(permuted control {100 * control.ap50:.1f}), {elapsed:.2f}s"
    )


# ---------------------------------------------------------------------------
# 4. contrast-gate monotonicity
# ---------------------------------------------------------------------------


def kept_set(scenes, store, sigma):
    return frozenset(
        (d.image_id, d.box, d.class_name)
        for d in detect_scenes(scenes, store, sigma=sigma)
    )


def test_contrast_gate_tightens_monotonically(micro_scenes, micro_store):
    loose = kept_set(micro_scenes, micro_store, 0.0)
    middle = kept_set(micro_scenes, micro_store, 0.15)
    tight = kept_set(micro_scenes, micro_store, 0.3)
    assert tight <= middle <= loose

    grid = [round(0.05 * i, 2) for i in range(11)]
    counts = [
        len(detect_scenes(micro_scenes, micro_store, sigma=s)) for s in grid
    ]
    assert counts == sorted(counts, reverse=True)
    print(
        f"\nPASS contrast gate: kept {len(loose)} ⊇ {len(middle)} ⊇ "
        f"{len(tight)}; counts over grid {counts}"
    )


# ---------------------------------------------------------------------------
# 5. scale invariance of the argmax
# ---------------------------------------------------------------------------


def _decisions(proposals, store, sigma=0.15):
    results = classify_proposals(proposals, store)
    classes = tuple(r.class_name for r in results)
    kept = tuple(contrast_keep(r, sigma) for r in results)
    order = tuple(
        i
        for i in sorted(
            range(len(results)), key=lambda i: -results[i].s1
        )
        if kept[i]
    )
    return classes, kept, order


def test_predictions_invariant_to_vector_scale():
    lambdas = (1e-3, 1.0, 1e3)
    pairs = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        store = make_store(
            seed,
            n_classes=int(rng.integers(2, 5)),
            dim=int(rng.integers(6, 9)),
            k=int(rng.integers(1, 5)),
            background_rows=int(rng.integers(0, 6)),
        )
        proposals = [
            Proposal(feature=rng.normal(size=store.dim),
                     box=(i, i, i + 1.0, i + 1.0))
            for i in range(int(rng.integers(4, 9)))
        ]
        baseline = _decisions(proposals, store)

        for lam in lambdas:
            # scale one stored vector: a member row, a class mean, or a
            # background row, chosen per store
            scaled = copy.deepcopy(store)
            which = int(rng.integers(3))
            name = list(scaled.classes)[int(rng.integers(len(scaled.classes)))]
            if which == 0:
                row = int(rng.integers(scaled.classes[name].members.shape[0]))
                scaled.classes[name].members[row] *= lam
            elif which == 1:
                scaled.classes[name].mean *= lam
            elif scaled.background.enabled:
                row = int(rng.integers(scaled.background.members.shape[0]))
                scaled.background.members[row] *= lam
            assert _decisions(proposals, scaled) == baseline

            # scale one proposal's feature
            target = int(rng.integers(len(proposals)))
            rescaled = [
                Proposal(feature=p.feature * lam, box=p.box)
                if i == target
                else p
                for i, p in enumerate(proposals)
            ]
            assert _decisions(rescaled, store) == baseline
        pairs += 1
    print(
        f"\nPASS scale invariance: {pairs} store/proposal pairs x "
        f"lambdas {lambdas}, decisions unchanged"
    )


# ---------------------------------------------------------------------------
# 6. descriptor consistency and exact persistence
# ---------------------------------------------------------------------------


def test_descriptor_means_persistence_and_extension(
    tmp_path, micro_store, micro_assets, micro_bundle
):
    # every persisted descriptor's mean is its members' average
    worst = 0.0
    for desc in micro_store.classes.values():
        gap = float(np.max(np.abs(desc.mean - desc.members.mean(axis=0))))
        worst = max(worst, gap)
    assert worst <= 1e-6

    # round-trips are bit-exact in both formats
    for suffix in (".json", ".npz"):
        path = str(tmp_path / f"store{suffix}")
        save_store(micro_store, path)
        loaded = load_store(path)
        assert loaded.class_names() == micro_store.class_names()
        for name in micro_store.class_names():
            assert np.array_equal(
                loaded.classes[name].mean, micro_store.classes[name].mean
            )
            assert np.array_equal(
                loaded.classes[name].members, micro_store.classes[name].members
            )
        assert np.array_equal(
            loaded.background.members, micro_store.background.members
        )

    # building in two steps equals building at once
    gallery = micro_assets.gallery
    names = list(gallery.samples_by_class)
    part_a = Gallery(
        samples_by_class={n: gallery.samples_by_class[n] for n in names[:2]},
        missing_classes=[], k=gallery.k,
    )
    part_b = Gallery(
        samples_by_class={n: gallery.samples_by_class[n] for n in names[2:]},
        missing_classes=[], k=gallery.k,
    )
    segmenter, extractor = micro_bundle.segmenter, micro_bundle.extractor
    extended = extend_store(
        build_store(part_a, segmenter, extractor), part_b, segmenter, extractor
    )
    joint = build_store(gallery, segmenter, extractor)
    assert extended.class_names() == joint.class_names()
    for name in joint.class_names():
        assert np.array_equal(
            extended.classes[name].members, joint.classes[name].members
        )
        assert np.array_equal(
            extended.classes[name].mean, joint.classes[name].mean
        )
    assert np.array_equal(
        np.sort(extended.background.members, axis=0),
        np.sort(joint.background.members, axis=0),
    )
    print(
        f"\nPASS descriptor consistency: mean gap {worst:.2e}, both formats "
        f"bit-exact, two-step build equals joint build"
    )


# ---------------------------------------------------------------------------
# 7. gallery source-branch coverage and the material fallback
# ---------------------------------------------------------------------------


def test_gallery_covers_in_house_web_and_missing_branches(
    micro, micro_index, micro_bundle
):
    vocab = ["apple", "violin", "unicorn"]
    material_db = fallback_material_db(
        cluster_materials(vocab, micro_bundle.material_oracle)
    )
    gallery = build_gallery(
        vocab,
        micro_index,
        segmenter=micro_bundle.segmenter,
        rgb_filter=micro_bundle.rgb_filter,
        material_db=material_db,
        material_oracle=micro_bundle.material_oracle,
        web_client=FixtureWebClient(micro.web_root),
        k=6,
    )
    apples = gallery.samples_by_class["apple"]
    violins = gallery.samples_by_class["violin"]
    assert apples and all(s.provenance == "in_house" for s in apples)
    assert violins and all(s.provenance == "web_synthetic" for s in violins)
    assert gallery.missing_classes == ["unicorn"]

    bundle = build_bundle()
    empty_db = build_material_db({}, {}, bundle.segmenter)
    assert sorted(empty_db.materials) == ["inorganic", "metal", "organic"]
    assert all(m.support == 0 for m in empty_db.materials.values())
    print(
        f"\nPASS gallery branches: {len(apples)} in-house, {len(violins)} "
        f"web-synthetic, missing {gallery.missing_classes}; fallback "
        f"materials {sorted(empty_db.materials)}"
    )


# ---------------------------------------------------------------------------
# 8. gallery-size sweep sanity
# ---------------------------------------------------------------------------


def test_gallery_size_sweep_shape(tmp_path, micro_index, micro_bundle,
                                  micro_assets):
    k_values = [1, 2, 5, 10, 30]
    rows = k_sweep(micro_index, micro_assets.gallery, micro_bundle, k_values)
    by_k = {row.k: row for row in rows}
    assert by_k[30].ap50 >= by_k[1].ap50
    csv_path = str(tmp_path / "k_sweep.csv")
    write_k_sweep_csv(rows, csv_path)
    lines = open(csv_path).read().strip().splitlines()
    assert lines[0] == "k,ap,ap50,ap75,num_detections"
    assert len(lines) == len(k_values) + 1
    print(
        f"\nPASS gallery-size sweep: AP50 k=1 {100 * by_k[1].ap50:.1f} <= "
        f"k=30 {100 * by_k[30].ap50:.1f}, CSV emitted"
    )


# ---------------------------------------------------------------------------
# 9. the rest of the suite fits the runtime budget, offline
# ---------------------------------------------------------------------------


def test_suite_runs_fast_and_offline():
    env = dict(os.environ)
    # dead proxies turn any accidental network call into an instant error
    env["http_proxy"] = env["https_proxy"] = "http://127.0.0.1:9"
    env["HTTP_PROXY"] = env["HTTPS_PROXY"] = "http://127.0.0.1:9"
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    start = time.monotonic()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "tests", "-q", "-p",
         "no:cacheprovider", "--ignore", os.path.abspath(__file__)],
        cwd=root,
        env=env,
        capture_output=True,
        text=True,
        timeout=280,
    )
    elapsed = time.monotonic() - start
    assert proc.returncode == 0, proc.stdout[-2000:] + proc.stderr[-2000:]
    assert elapsed < 280.0
    print(f"\nPASS runtime budget: module suite re-ran in {elapsed:.1f}s offline")
