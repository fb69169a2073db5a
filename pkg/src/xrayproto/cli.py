"""Command line front end.

Subcommands cover the pipeline stages in order: make-fixtures writes the
bundled synthetic dataset, build-materials learns or falls back to the
material pseudo-color database, build-descriptors assembles the gallery and
persists the descriptor store, detect writes detections as JSONL, evaluate
scores a split, and sweep runs the composition/k/sigma studies.

Every command except make-fixtures takes --config pointing at a TOML file;
individual flags override file values. Outputs land in a run directory named
by the hash of the resolved config, so identical configs share a directory
and reruns are byte-reproducible; wall-clock timestamps are confined to the
metadata.json sidecar.

Exit codes: 0 success, 2 configuration or material-oracle errors, 3 gallery
and retrieval failures, 4 descriptor-store compatibility problems, 5
evaluation failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone

from .acquisition import DatasetIndex, FixtureWebClient, retrieve_in_house
from .backends import BackendBundle, ScriptedMaterialOracle, build_bundle
from .classifier import write_detections
from .config import RunConfig, load_config
from .descriptors import crop_to_box, load_store, save_store
from .errors import (
    ConfigError,
    DescriptorBuildError,
    EmptyStoreError,
    EvaluationError,
    GalleryError,
    MaterialOracleError,
    StoreCompatibilityError,
    StoreCorruptError,
    StoreVersionError,
    WebRetrievalError,
)
from .evaluation import (
    cmte_run,
    composition_sweep,
    detect_scenes,
    k_sweep,
    prepare_scenes,
    prepare_transfer_store,
    render_report_text,
    render_sweep_text,
    report_to_dict,
    sigma_sweep,
    write_k_sweep_csv,
    write_sigma_sweep_csv,
    write_sweep_json,
)
from .material import build_material_db, cluster_materials, save_material_db
from .synthetic import make_micro_dataset, write_micro_config
from .types import ImageTensor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GALLERY = 3
EXIT_STORE = 4
EXIT_EVAL = 5

DEFAULT_SIGMA_GRID = "0.0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5"


def _parse_floats(text: str) -> list[float]:
    return [float(item) for item in text.split(",") if item.strip()]


def _parse_ints(text: str) -> list[int]:
    return [int(item) for item in text.split(",") if item.strip()]


def _load_run_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("this command requires --config")
    overrides = {
        "jobs": args.jobs,
        "seed": getattr(args, "seed", None),
        "sigma": getattr(args, "sigma", None),
        "k": getattr(args, "k", None),
        "in_house_fraction": getattr(args, "in_house_fraction", None),
    }
    return load_config(args.config, overrides=overrides)


def _run_dir(config: RunConfig) -> str:
    path = os.path.join(config.reports, config.config_hash())
    os.makedirs(path, exist_ok=True)
    return path


def _write_metadata(run_dir: str, command: str, config: RunConfig) -> None:
    """Timestamps live here and only here; everything else is content-pure."""
    path = os.path.join(run_dir, "metadata.json")
    payload = {
        "command": command,
        "config_hash": config.config_hash(),
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _print_plan(command: str, config: RunConfig, outputs: list[str]) -> None:
    print(f"plan: {command}")
    print(f"config hash: {config.config_hash()}")
    print(f"index: {config.index or '(none)'}")
    print(f"store: {config.store or '(run dir)'}")
    for out in outputs:
        print(f"would write: {out}")


def _bundle(config: RunConfig) -> BackendBundle:
    return build_bundle(
        segmenter=config.segmenter,
        extractor=config.extractor,
        material_oracle=config.material_oracle,
        proposal_source=config.proposal_source,
        rgb_filter=config.rgb_filter,
        segmenter_cutoff=config.segmenter_cutoff,
        patch_size=config.patch_size,
        feature_dim=config.feature_dim,
        window=config.window,
        stride=config.stride,
    )


def _web_client(config: RunConfig):
    if config.web_fixtures:
        return FixtureWebClient(config.web_fixtures)
    return None


def _store_path(config: RunConfig, run_dir: str) -> str:
    return config.store or os.path.join(run_dir, "store.json")


def _load_index(config: RunConfig) -> DatasetIndex:
    config.require_paths("index")
    return DatasetIndex.from_jsonl(config.index)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_make_fixtures(args) -> int:
    dataset = make_micro_dataset(args.root, seed=args.seed)
    config_path = write_micro_config(
        os.path.join(args.root, "micro.toml"), dataset
    )
    print(f"dataset root: {dataset.root}")
    print(f"index: {dataset.index_path}")
    print(f"web fixtures: {dataset.web_root}")
    print(f"config: {config_path}")
    print(f"entries: {len(dataset.entries)}")
    return EXIT_OK


def cmd_build_materials(args) -> int:
    config = _load_run_config(args)
    run_dir_name = os.path.join(config.reports, config.config_hash())
    out_path = args.output or os.path.join(run_dir_name, "materials.json")
    if args.dry_run:
        _print_plan("build-materials", config, [out_path])
        return EXIT_OK

    run_dir = _run_dir(config)
    out_path = args.output or os.path.join(run_dir, "materials.json")
    bundle = _bundle(config)

    oracle = bundle.material_oracle
    if args.assignments:
        with open(args.assignments, "r", encoding="utf-8") as fh:
            oracle = ScriptedMaterialOracle(json.load(fh))

    images_by_class: dict[str, list[ImageTensor]] = {}
    class_names: list[str] = []
    if config.index:
        index = _load_index(config)
        class_names = index.vocabulary(visible_only=config.visible_only)
        for name in class_names:
            samples = retrieve_in_house(index, name, max_samples=8)
            images_by_class[name] = [
                crop_to_box(s.image, s.box) if s.box is not None else s.image
                for s in samples
            ]

    assignments = cluster_materials(class_names, oracle)
    db = build_material_db(assignments, images_by_class, bundle.segmenter)
    save_material_db(db, out_path)
    _write_metadata(run_dir, "build-materials", config)

    learned = any(m.support > 0 for m in db.materials.values())
    print(f"materials: {out_path} ({'learned' if learned else 'fallback'})")
    for name in sorted(db.materials):
        m = db.materials[name]
        color = ", ".join(f"{c:.4f}" for c in m.color)
        print(f"  {name:<12} color=({color}) support={m.support}")
    for class_name in sorted(db.assignments):
        print(f"  {class_name} -> {db.assignments[class_name]}")
    return EXIT_OK


def cmd_build_descriptors(args) -> int:
    config = _load_run_config(args)
    allow_partial = bool(args.allow_partial or config.allow_partial)
    run_dir_name = os.path.join(config.reports, config.config_hash())
    store_path = _store_path(config, run_dir_name)
    if args.dry_run:
        _print_plan("build-descriptors", config, [store_path])
        return EXIT_OK

    run_dir = _run_dir(config)
    store_path = _store_path(config, run_dir)
    index = _load_index(config)
    bundle = _bundle(config)

    assets = prepare_transfer_store(
        index,
        bundle,
        web_client=_web_client(config),
        in_house_fraction=config.in_house_fraction,
        seed=config.seed,
        k=config.k,
        tau=config.tau,
        background_fill=config.background_fill,
        visible_only=config.visible_only,
        allow_partial=allow_partial,
    )
    if assets.gallery.missing_classes and not allow_partial:
        raise GalleryError(
            "no gallery source for: "
            + ", ".join(assets.gallery.missing_classes),
            assets.gallery.missing_classes,
        )

    save_store(assets.store, store_path)
    _write_metadata(run_dir, "build-descriptors", config)

    print(f"store: {store_path}")
    print(
        f"classes: {len(assets.store.classes)} "
        f"(in-house split: {len(assets.in_house_classes)}, "
        f"web split: {len(assets.web_classes)})"
    )
    for name in assets.store.class_names():
        desc = assets.store.classes[name]
        samples = assets.gallery.samples_by_class.get(name, [])
        n_house = sum(1 for s in samples if s.provenance == "in_house")
        n_web = sum(1 for s in samples if s.provenance == "web_synthetic")
        print(
            f"  {name:<24} k_used={desc.k_used:<3d} "
            f"in_house={n_house:<3d} web={n_web:<3d}"
        )
    bg = assets.store.background.members.shape[0]
    print(f"background members: {bg}")
    if assets.gallery.missing_classes:
        print(
            "skipped (no gallery source): "
            + ", ".join(assets.gallery.missing_classes)
        )
    return EXIT_OK


def _load_compatible_store(config: RunConfig, bundle: BackendBundle):
    config.require_paths("store")
    store = load_store(config.store)
    if store.metadata.extractor_id != bundle.extractor.backend_id:
        raise StoreCompatibilityError(
            "store was built with extractor "
            f"{store.metadata.extractor_id!r}, run configured "
            f"{bundle.extractor.backend_id!r}"
        )
    return store


def cmd_detect(args) -> int:
    config = _load_run_config(args)
    run_dir_name = os.path.join(config.reports, config.config_hash())
    out_path = args.output or os.path.join(run_dir_name, "detections.jsonl")
    if args.dry_run:
        _print_plan("detect", config, [out_path])
        return EXIT_OK

    run_dir = _run_dir(config)
    out_path = args.output or os.path.join(run_dir, "detections.jsonl")
    bundle = _bundle(config)
    store = _load_compatible_store(config, bundle)
    index = _load_index(config)

    scenes = prepare_scenes(
        index, bundle.proposal_source, split=args.split, jobs=config.jobs
    )
    detections = detect_scenes(scenes, store, sigma=config.sigma)
    write_detections(detections, out_path)
    _write_metadata(run_dir, "detect", config)
    print(f"detections: {out_path}")
    print(f"images: {len(scenes)}, kept detections: {len(detections)}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load_run_config(args)
    run_dir_name = os.path.join(config.reports, config.config_hash())
    planned = [
        os.path.join(run_dir_name, "report.json"),
        os.path.join(run_dir_name, "report.txt"),
    ]
    if args.dry_run:
        _print_plan("evaluate", config, planned)
        return EXIT_OK

    run_dir = _run_dir(config)
    bundle = _bundle(config)
    store = _load_compatible_store(config, bundle)
    index = _load_index(config)

    report = cmte_run(
        index,
        store,
        bundle.proposal_source,
        split=args.split,
        sigma=config.sigma,
        visible_only=config.visible_only,
        jobs=config.jobs,
    )
    text = render_report_text(report)
    json_path = os.path.join(run_dir, "report.json")
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    txt_path = os.path.join(run_dir, "report.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")
    _write_metadata(run_dir, "evaluate", config)
    print(text)
    print(f"report: {json_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_run_config(args)
    run_dir_name = os.path.join(config.reports, config.config_hash())
    outputs = {
        "composition": os.path.join(run_dir_name, "composition_sweep.json"),
        "k": os.path.join(run_dir_name, "k_sweep.csv"),
        "sigma": os.path.join(run_dir_name, "sigma_sweep.csv"),
    }
    if args.dry_run:
        _print_plan(f"sweep --axis {args.axis}", config, [outputs[args.axis]])
        return EXIT_OK

    run_dir = _run_dir(config)
    index = _load_index(config)
    bundle = _bundle(config)
    _write_metadata(run_dir, f"sweep-{args.axis}", config)

    if args.axis == "composition":
        fractions = _parse_floats(args.fractions)
        seeds = _parse_ints(args.seeds)
        summary = composition_sweep(
            index,
            bundle,
            fractions=fractions,
            seeds=seeds,
            partial_path=os.path.join(run_dir, "composition_partial.json"),
            web_client=_web_client(config),
            k=config.k,
            sigma=config.sigma,
            tau=config.tau,
            background_fill=config.background_fill,
            visible_only=config.visible_only,
            jobs=config.jobs,
        )
        out = os.path.join(run_dir, "composition_sweep.json")
        write_sweep_json(summary, out)
        print(render_sweep_text(summary))
        print(f"sweep: {out}")
        return EXIT_OK

    if args.axis == "k":
        k_values = _parse_ints(args.k_values)
        assets = prepare_transfer_store(
            index,
            bundle,
            web_client=_web_client(config),
            in_house_fraction=config.in_house_fraction,
            seed=config.seed,
            k=max(k_values),
            tau=config.tau,
            background_fill=config.background_fill,
            visible_only=config.visible_only,
        )
        rows = k_sweep(
            index,
            assets.gallery,
            bundle,
            k_values,
            split=args.split,
            sigma=config.sigma,
            visible_only=config.visible_only,
            jobs=config.jobs,
        )
        out = os.path.join(run_dir, "k_sweep.csv")
        write_k_sweep_csv(rows, out)
        for row in rows:
            print(
                f"k={row.k:<4d} AP={100 * row.ap:5.1f} "
                f"AP50={100 * row.ap50:5.1f} AP75={100 * row.ap75:5.1f} "
                f"detections={row.num_detections}"
            )
        print(f"sweep: {out}")
        return EXIT_OK

    # sigma axis: reuse a persisted store when the config names one,
    # otherwise build from the index.
    sigmas = _parse_floats(args.sigmas)
    if config.store and os.path.exists(config.store):
        store = _load_compatible_store(config, bundle)
    else:
        store = prepare_transfer_store(
            index,
            bundle,
            web_client=_web_client(config),
            in_house_fraction=config.in_house_fraction,
            seed=config.seed,
            k=config.k,
            tau=config.tau,
            background_fill=config.background_fill,
            visible_only=config.visible_only,
        ).store
    rows = sigma_sweep(
        index,
        store,
        bundle.proposal_source,
        sigmas,
        split=args.split,
        visible_only=config.visible_only,
        jobs=config.jobs,
    )
    out = os.path.join(run_dir, "sigma_sweep.csv")
    write_sigma_sweep_csv(rows, out)
    for row in rows:
        print(
            f"sigma={row.sigma:<5.2f} AP={100 * row.ap:5.1f} "
            f"AP50={100 * row.ap50:5.1f} AP75={100 * row.ap75:5.1f} "
            f"detections={row.num_detections}"
        )
    print(f"sweep: {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xrayproto",
        description="Prototype-based open-vocabulary detection toolkit",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument(
            "--dry-run",
            action="store_true",
            help="validate config, print the plan, touch nothing",
        )
        p.add_argument("--jobs", type=int, default=None, help="worker threads")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("make-fixtures", help="write the synthetic micro-dataset")
    p.add_argument("--root", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_fixtures)

    p = sub.add_parser("build-materials", help="learn material pseudo-colors")
    common(p)
    p.add_argument("--output", help="where to write materials.json")
    p.add_argument(
        "--assignments",
        help="JSON file of class-to-material answers overriding the oracle",
    )
    p.set_defaults(func=cmd_build_materials)

    p = sub.add_parser(
        "build-descriptors", help="build and persist the descriptor store"
    )
    common(p)
    p.add_argument("--k", type=int, default=None, help="gallery size per class")
    p.add_argument(
        "--in-house-fraction",
        dest="in_house_fraction",
        type=float,
        default=None,
    )
    p.add_argument(
        "--allow-partial",
        action="store_true",
        help="skip classes without gallery samples instead of failing",
    )
    p.set_defaults(func=cmd_build_descriptors)

    p = sub.add_parser("detect", help="run detection and write JSONL")
    common(p)
    p.add_argument("--split", default="test")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--output", help="detections path (default: run dir)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score a split with COCO-style AP")
    common(p)
    p.add_argument("--split", default="test")
    p.add_argument("--sigma", type=float, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="composition, gallery-size or gate sweeps")
    common(p)
    p.add_argument(
        "--axis", required=True, choices=("composition", "k", "sigma")
    )
    p.add_argument("--split", default="test")
    p.add_argument("--fractions", default="1.0,0.5,0.0")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--k-values", dest="k_values", default="1,2,5,10,30")
    p.add_argument("--sigmas", default=DEFAULT_SIGMA_GRID)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MaterialOracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(
            "oracle payload: " + json.dumps(exc.payload, sort_keys=True),
            file=sys.stderr,
        )
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GalleryError, WebRetrievalError, DescriptorBuildError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GALLERY
    except (
        StoreVersionError,
        StoreCorruptError,
        StoreCompatibilityError,
        EmptyStoreError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STORE
    except EvaluationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
