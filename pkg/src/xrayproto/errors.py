"""Exception hierarchy for the pipeline.

Every failure mode a caller is expected to branch on gets its own type;
generic ValueError is reserved for programming errors (bad arguments).
"""


class XrayProtoError(Exception):
    """Base class for all package errors."""


class ZeroVectorError(XrayProtoError):
    """Cosine similarity requested against a zero-norm vector."""


class EmptyForegroundError(XrayProtoError):
    """Resized mask has no foreground cell; no positive prototype exists."""


class EmptyBackgroundError(XrayProtoError):
    """Resized mask complement is empty; no negative prototype exists."""


class DegenerateMaterialError(XrayProtoError):
    """Every image offered for a material appearance had an empty mask."""


class MaterialOracleError(XrayProtoError):
    """The material oracle returned output that cannot be interpreted.

    Carries the raw payload so the CLI can dump it for debugging.
    """

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class WebRetrievalError(XrayProtoError):
    """Live web retrieval failed (network, quota, API error)."""

    def __init__(self, message, class_name=""):
        super().__init__(message)
        self.class_name = class_name


class GalleryError(XrayProtoError):
    """Gallery construction failed for one or more classes."""

    def __init__(self, message, missing_classes=()):
        super().__init__(message)
        self.missing_classes = tuple(missing_classes)


class DescriptorBuildError(XrayProtoError):
    """No usable prototype survived for one or more classes."""

    def __init__(self, message, failed_classes=()):
        super().__init__(message)
        self.failed_classes = tuple(failed_classes)


class StoreVersionError(XrayProtoError):
    """Persisted descriptor store has an unsupported version."""


class StoreCorruptError(XrayProtoError):
    """Persisted descriptor store failed structural validation."""


class StoreCompatibilityError(XrayProtoError):
    """Descriptor store is incompatible with the requested operation.

    Raised on extractor/segmenter id mismatches, feature dimension
    mismatches, or overlapping class names during extension.
    """


class EmptyStoreError(XrayProtoError):
    """Classification requested against a store with no class descriptors."""


class ConfigError(XrayProtoError):
    """Run configuration is invalid or incomplete."""


class EvaluationError(XrayProtoError):
    """An evaluation run failed; partial results may have been saved."""
