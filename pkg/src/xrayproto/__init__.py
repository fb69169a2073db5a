"""Training-free adaptation of open-vocabulary detectors to X-ray imagery.

The package swaps a detector's text-embedding classifier for visual class
descriptors built from a small per-class gallery: real X-ray crops when a
class has them, web RGB images repainted with material pseudo-colors when it
does not. Detection-time classification is cosine similarity against the
descriptor stacks plus a background pool, gated by an inter-class contrast
check, and scored with a from-scratch COCO-style AP harness.
"""

from .acquisition import (
    AnnotatedObject,
    DatasetIndex,
    FixtureWebClient,
    Gallery,
    IndexEntry,
    LiveWebClient,
    WebClient,
    build_gallery,
    filter_web,
    restrict_index,
    retrieve_in_house,
)
from .backends import (
    BackendBundle,
    FeatureExtractor,
    GridProposalSource,
    MaterialOracle,
    ProposalSource,
    RgbFilter,
    ScriptedMaterialOracle,
    Segmenter,
    StubExtractor,
    StubMaterialOracle,
    StubRgbFilter,
    StubSegmenter,
    build_bundle,
)
from .classifier import (
    ClassificationResult,
    Detection,
    classify_proposal,
    classify_proposals,
    contrast_keep,
    cosine,
    detect,
    detections_from_results,
    read_detections,
    write_detections,
)
from .config import RunConfig, apply_overrides, load_config
from .descriptors import (
    BackgroundDescriptor,
    ClassDescriptor,
    DescriptorStore,
    StoreMetadata,
    build_class_descriptor,
    build_store,
    crop_to_box,
    extend_store,
    load_store,
    negative_prototype,
    positive_prototype,
    resize_mask,
    sample_prototypes,
    save_store,
)
from .errors import (
    ConfigError,
    DegenerateMaterialError,
    DescriptorBuildError,
    EmptyBackgroundError,
    EmptyForegroundError,
    EmptyStoreError,
    EvaluationError,
    GalleryError,
    MaterialOracleError,
    StoreCompatibilityError,
    StoreCorruptError,
    StoreVersionError,
    WebRetrievalError,
    XrayProtoError,
    ZeroVectorError,
)
from .evaluation import (
    EvalReport,
    GroundTruthSet,
    cmte_run,
    coco_ap,
    composition_sweep,
    iou,
    k_sweep,
    permute_store_classes,
    prepare_transfer_store,
    render_report_text,
    run_cmte_experiment,
    sigma_sweep,
    split_vocabulary,
)
from .imageio import load_image, save_image
from .material import (
    MaterialAppearance,
    MaterialDatabase,
    build_material_db,
    cluster_materials,
    compute_appearance,
    fallback_material_db,
    load_material_db,
    save_material_db,
    transfer,
)
from .types import (
    BACKGROUND_NAME,
    BinaryMask,
    GallerySample,
    ImageTensor,
    PatchGrid,
    Proposal,
    normalize_class_name,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedObject",
    "BACKGROUND_NAME",
    "BackendBundle",
    "BackgroundDescriptor",
    "BinaryMask",
    "ClassDescriptor",
    "ClassificationResult",
    "ConfigError",
    "DatasetIndex",
    "DegenerateMaterialError",
    "DescriptorBuildError",
    "DescriptorStore",
    "Detection",
    "EmptyBackgroundError",
    "EmptyForegroundError",
    "EmptyStoreError",
    "EvalReport",
    "EvaluationError",
    "FeatureExtractor",
    "FixtureWebClient",
    "Gallery",
    "GalleryError",
    "GallerySample",
    "GridProposalSource",
    "GroundTruthSet",
    "ImageTensor",
    "IndexEntry",
    "LiveWebClient",
    "MaterialAppearance",
    "MaterialDatabase",
    "MaterialOracle",
    "MaterialOracleError",
    "PatchGrid",
    "Proposal",
    "ProposalSource",
    "RgbFilter",
    "RunConfig",
    "ScriptedMaterialOracle",
    "Segmenter",
    "StoreCompatibilityError",
    "StoreCorruptError",
    "StoreMetadata",
    "StoreVersionError",
    "StubExtractor",
    "StubMaterialOracle",
    "StubRgbFilter",
    "StubSegmenter",
    "WebClient",
    "WebRetrievalError",
    "XrayProtoError",
    "ZeroVectorError",
    "apply_overrides",
    "build_bundle",
    "build_class_descriptor",
    "build_gallery",
    "build_material_db",
    "build_store",
    "classify_proposal",
    "classify_proposals",
    "cluster_materials",
    "cmte_run",
    "coco_ap",
    "composition_sweep",
    "compute_appearance",
    "contrast_keep",
    "cosine",
    "crop_to_box",
    "detect",
    "detections_from_results",
    "extend_store",
    "fallback_material_db",
    "filter_web",
    "iou",
    "k_sweep",
    "load_config",
    "load_image",
    "load_material_db",
    "load_store",
    "negative_prototype",
    "normalize_class_name",
    "permute_store_classes",
    "positive_prototype",
    "prepare_transfer_store",
    "read_detections",
    "render_report_text",
    "resize_mask",
    "restrict_index",
    "retrieve_in_house",
    "run_cmte_experiment",
    "sample_prototypes",
    "save_image",
    "save_material_db",
    "save_store",
    "sigma_sweep",
    "split_vocabulary",
    "transfer",
    "write_detections",
]
